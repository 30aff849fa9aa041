class SpectralError(ValueError):
    """Base class for every failure raised by the spectra app.

    Subclasses keep their diagnostics as attributes; ``as_dict`` is what the
    command line prints on stderr.
    """

    code = "spectral_error"

    def __init__(self, message, **details):
        super().__init__(message)
        self.message = message
        self.details = details

    def as_dict(self):
        return {"error": self.code, "message": self.message, **self.details}


class TruncationError(SpectralError):
    code = "truncation"


class EmptySpectrumError(SpectralError):
    code = "empty_spectrum"


class DomainError(SpectralError):
    code = "domain"


class NonConvergenceError(SpectralError):
    code = "non_convergence"

    def __init__(self, message, last_values):
        super().__init__(message, last_values=list(last_values))
        self.last_values = tuple(last_values)


class DegeneratePointError(SpectralError):
    code = "degenerate_point"

    def __init__(self, message, count, multiplicity):
        limit = count + multiplicity / 2
        super().__init__(
            message, count=count, multiplicity=multiplicity, limit=limit
        )
        self.count = count
        self.multiplicity = multiplicity
        self.limit = limit


class ResolutionError(SpectralError):
    code = "resolution"

    def __init__(self, message, estimate):
        super().__init__(message, estimate=estimate)
        self.estimate = estimate


class TopologyError(SpectralError):
    code = "topology"

    def __init__(self, message, defect):
        super().__init__(message, defect=defect)
        self.defect = defect


class RootFindingError(SpectralError):
    code = "root_finding"

    def __init__(self, message, bracket):
        super().__init__(message, bracket=list(bracket))
        self.bracket = tuple(bracket)


class SolverError(SpectralError):
    code = "solver"

    def __init__(self, message, bracket, values):
        super().__init__(message, bracket=list(bracket), values=list(values))
        self.bracket = tuple(bracket)
        self.values = tuple(values)


class UnsupportedDataError(SpectralError):
    code = "unsupported"


class InsufficientCoefficientsError(SpectralError):
    code = "insufficient_coefficients"


class SchemaError(SpectralError):
    code = "schema"


class ConfigError(SpectralError):
    code = "config"
