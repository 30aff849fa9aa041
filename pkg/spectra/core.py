import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, NamedTuple

import numpy as np
from scipy.special import expit, gamma, gammaincc

from spectra.errors import (
    DegeneratePointError,
    DomainError,
    NonConvergenceError,
    TruncationError,
)
from spectra.summation import kahan_sum

logger = logging.getLogger(__name__)

DEFAULT_TAIL_CUTOFF = 30.0
DEFAULT_TOLERANCE = 1e-10
DEFAULT_BETA_EXPONENTS = range(6, 21)

# Relative distance under which lambda counts as sitting on an eigenvalue.
COINCIDENCE_RTOL = 4 * np.finfo(float).eps


@dataclass(frozen=True, eq=False)
class Spectrum:
    eigenvalues: np.ndarray
    multiplicities: np.ndarray
    truncation_bound: float
    shape_tag: str = ""
    dimension: int | None = None

    def __post_init__(self):
        eigenvalues = np.array(self.eigenvalues, dtype=float).reshape(-1)
        multiplicities = np.array(self.multiplicities, dtype=np.int64).reshape(-1)

        if eigenvalues.shape != multiplicities.shape:
            raise ValueError("eigenvalues and multiplicities must have equal length")
        if eigenvalues.size:
            if not np.all(eigenvalues > 0):
                raise ValueError("Eigenvalues must be strictly positive")
            if np.any(np.diff(eigenvalues) < 0):
                raise ValueError("Eigenvalues must be sorted nondecreasing")
            if eigenvalues[-1] > self.truncation_bound:
                raise ValueError(
                    f"Eigenvalue {eigenvalues[-1]!r} exceeds the truncation bound "
                    f"{self.truncation_bound!r}"
                )
            if np.any(multiplicities < 1):
                raise ValueError("Multiplicities must be at least 1")

        eigenvalues.flags.writeable = False
        multiplicities.flags.writeable = False
        object.__setattr__(self, "eigenvalues", eigenvalues)
        object.__setattr__(self, "multiplicities", multiplicities)
        object.__setattr__(self, "truncation_bound", float(self.truncation_bound))

    @classmethod
    def from_entries(
        cls,
        entries: Iterable[tuple[float, int]],
        truncation_bound: float,
        shape_tag: str = "",
        dimension: int | None = None,
    ):
        entries = list(entries)
        eigenvalues = [float(value) for value, _ in entries]
        multiplicities = [int(mult) for _, mult in entries]
        return cls(eigenvalues, multiplicities, truncation_bound, shape_tag, dimension)

    def __len__(self):
        return int(self.eigenvalues.size)

    @cached_property
    def cumulative_counts(self) -> np.ndarray:
        return np.cumsum(self.multiplicities)

    @property
    def total_count(self) -> int:
        if not len(self):
            return 0
        return int(self.cumulative_counts[-1])

    @property
    def entries(self) -> list[tuple[float, int]]:
        return [
            (float(value), int(mult))
            for value, mult in zip(self.eigenvalues, self.multiplicities)
        ]

    def expanded(self) -> np.ndarray:
        return np.repeat(self.eigenvalues, self.multiplicities)

    def eigenvalue_at(self, n: int) -> float:
        """n-th eigenvalue counted with multiplicity, 1-based."""
        if n < 1:
            raise ValueError("n must be at least 1")
        if n > self.total_count:
            raise TruncationError(
                f"Only {self.total_count} eigenvalues are stored below "
                f"{self.truncation_bound}",
                n=n,
                total_count=self.total_count,
            )
        index = int(np.searchsorted(self.cumulative_counts, n, side="left"))
        return float(self.eigenvalues[index])

    def median_scale(self) -> float:
        if not len(self):
            return 1.0
        return float(np.median(self.eigenvalues))

    def truncated(self, bound: float) -> "Spectrum":
        """The same spectrum cut down to eigenvalues <= bound."""
        if bound > self.truncation_bound:
            raise TruncationError(
                f"Cannot extend a spectrum truncated at {self.truncation_bound} to {bound}",
                bound=bound,
                truncation_bound=self.truncation_bound,
            )
        keep = int(np.searchsorted(self.eigenvalues, bound, side="right"))
        return Spectrum(
            self.eigenvalues[:keep],
            self.multiplicities[:keep],
            bound,
            self.shape_tag,
            self.dimension,
        )


@dataclass(frozen=True)
class SmoothingConfig:
    beta_schedule: tuple[float, ...]
    tail_cutoff: float = DEFAULT_TAIL_CUTOFF
    tolerance: float = DEFAULT_TOLERANCE

    def __post_init__(self):
        schedule = tuple(float(beta) for beta in self.beta_schedule)
        if not schedule:
            raise ValueError("beta_schedule must not be empty")
        if schedule[0] <= 0:
            raise ValueError("beta values must be positive")
        if any(b <= a for a, b in zip(schedule, schedule[1:])):
            raise ValueError("beta_schedule must be strictly increasing")
        if self.tail_cutoff <= 0 or self.tolerance <= 0:
            raise ValueError("tail_cutoff and tolerance must be positive")
        object.__setattr__(self, "beta_schedule", schedule)

    @classmethod
    def for_spectrum(
        cls,
        spectrum: Spectrum,
        tail_cutoff: float = DEFAULT_TAIL_CUTOFF,
        tolerance: float = DEFAULT_TOLERANCE,
    ):
        scale = spectrum.median_scale()
        schedule = tuple(2.0**exponent / scale for exponent in DEFAULT_BETA_EXPONENTS)
        return cls(schedule, tail_cutoff, tolerance)


class HeatTrace(NamedTuple):
    value: float
    tail_bound: float


@dataclass(frozen=True)
class WeylMajorant:
    """Counting majorant N(lam) <= leading * lam**(D/2) + subleading * lam**((D-1)/2)."""

    dimension: int
    leading: float
    subleading: float = 0.0
    exponents: tuple[float, float] = field(init=False)

    def __post_init__(self):
        if self.leading < 0 or self.subleading < 0:
            raise ValueError("Majorant coefficients must be nonnegative")
        d = self.dimension
        object.__setattr__(self, "exponents", (d / 2, (d - 1) / 2))

    def __call__(self, lam: float) -> float:
        return sum(
            coefficient * lam**exponent
            for coefficient, exponent in zip((self.leading, self.subleading), self.exponents)
        )

    def tail_bound(self, lower: float, t: float, count: int) -> float:
        """Bound on sum of exp(-lam_n t) over lam_n > lower, given N(lower) = count.

        Stieltjes integration by parts gives
        tail = t * int_lower^inf N(lam) exp(-lam t) dlam - N(lower) exp(-lower t).
        """
        total = 0.0
        for coefficient, exponent in zip((self.leading, self.subleading), self.exponents):
            if coefficient:
                total += coefficient * _scaled_laplace_tail(exponent, lower, t)
        return max(total - count * math.exp(-lower * t), 0.0)

    def shifted_tail_bound(self, lam: float, beta: float, cutoff: float) -> float:
        """Bound on sum of mult * exp(-beta (lam_n - lam)) over lam_n > lam + cutoff/beta.

        With a = lam + cutoff/beta and (a + u)**p <= max(1, 2**(p-1)) (a**p + u**p),
        the integrated-by-parts tail is at most
        exp(-cutoff) * sum c_p max(1, 2**(p-1)) (a**p + Gamma(p+1) beta**-p).
        """
        a = lam + cutoff / beta
        total = 0.0
        for coefficient, exponent in zip((self.leading, self.subleading), self.exponents):
            if coefficient:
                spread = max(1.0, 2.0 ** (exponent - 1))
                total += coefficient * spread * (
                    a**exponent + gamma(exponent + 1) * beta ** (-exponent)
                )
        return math.exp(-cutoff) * total


def _scaled_laplace_tail(exponent: float, lower: float, t: float) -> float:
    # t * int_lower^inf lam**a * exp(-lam t) dlam = t**-a * Gamma(a+1, lower t)
    s = exponent + 1
    return float(gamma(s) * gammaincc(s, lower * t) * t ** (-exponent))


def count_direct(spectrum: Spectrum, lam: float) -> int:
    if lam > spectrum.truncation_bound:
        raise TruncationError(
            f"lambda={lam} exceeds the truncation bound {spectrum.truncation_bound}; "
            "the count would be incomplete",
            lam=lam,
            truncation_bound=spectrum.truncation_bound,
        )
    index = int(np.searchsorted(spectrum.eigenvalues, lam, side="left"))
    if index == 0:
        return 0
    return int(spectrum.cumulative_counts[index - 1])


def _check_not_degenerate(spectrum: Spectrum, lam: float):
    if not len(spectrum):
        return
    index = int(np.searchsorted(spectrum.eigenvalues, lam))
    for candidate in (index - 1, index):
        if 0 <= candidate < len(spectrum):
            value = spectrum.eigenvalues[candidate]
            if abs(value - lam) <= COINCIDENCE_RTOL * max(value, lam):
                count = count_direct(spectrum, min(lam, value))
                multiplicity = int(spectrum.multiplicities[candidate])
                raise DegeneratePointError(
                    f"lambda={lam} coincides with the eigenvalue {value} "
                    f"(multiplicity {multiplicity}); the smoothed limit is "
                    f"count + multiplicity/2",
                    count=count,
                    multiplicity=multiplicity,
                )


def _certified(spectrum: Spectrum, lam: float, beta: float, cutoff: float) -> bool:
    return lam + cutoff / beta <= spectrum.truncation_bound


def fermi_count(
    spectrum: Spectrum, lam: float, beta: float, tail_cutoff: float = DEFAULT_TAIL_CUTOFF
) -> float:
    """Fermi-smoothed staircase at a single beta; terms with beta*(lam_n - lam) > cutoff are dropped."""
    x = beta * (spectrum.eigenvalues - lam)
    keep = x <= tail_cutoff
    terms = spectrum.multiplicities[keep] * expit(-x[keep])
    return kahan_sum(terms)


def count_smoothed(spectrum: Spectrum, lam: float, cfg: SmoothingConfig) -> float:
    _check_not_degenerate(spectrum, lam)

    schedule = [
        beta
        for beta in cfg.beta_schedule
        if _certified(spectrum, lam, beta, cfg.tail_cutoff)
    ]
    if len(schedule) < len(cfg.beta_schedule):
        logger.debug(
            f"Skipped {len(cfg.beta_schedule) - len(schedule)} beta values whose "
            f"dropped tail cannot be certified below {spectrum.truncation_bound}"
        )
    if not schedule:
        raise TruncationError(
            f"No beta in the schedule certifies the tail at lambda={lam}",
            lam=lam,
            truncation_bound=spectrum.truncation_bound,
        )

    values = []
    for beta in schedule:
        values.append(fermi_count(spectrum, lam, beta, cfg.tail_cutoff))
        if len(values) > 1 and abs(values[-1] - values[-2]) <= cfg.tolerance:
            logger.debug(f"Smoothed count at lambda={lam} converged at beta={beta}")
            return values[-1]

    raise NonConvergenceError(
        f"Smoothed count at lambda={lam} did not converge within tolerance "
        f"{cfg.tolerance}",
        last_values=values[-2:],
    )


def heat_trace(
    spectrum: Spectrum, t: float, majorant: WeylMajorant | None = None
) -> HeatTrace:
    """Sum of mult * exp(-lam_n t) over stored eigenvalues.

    The tail bound covers eigenvalues above the truncation bound and needs a
    counting majorant valid beyond it; without one the tail is uncertified and
    reported as inf.
    """
    if t <= 0:
        raise DomainError(f"Heat trace needs t > 0, got {t}", t=t)
    terms = spectrum.multiplicities * np.exp(-spectrum.eigenvalues * t)
    value = kahan_sum(terms)
    if majorant is None:
        tail_bound = math.inf
    else:
        tail_bound = majorant.tail_bound(spectrum.truncation_bound, t, spectrum.total_count)
    return HeatTrace(value, tail_bound)


def laplace_forward_check(spectrum: Spectrum, t: float) -> float:
    """Relative residual of t * int_0^Lambda N(lam) exp(-lam t) dlam against the truncated trace."""
    if t <= 0:
        raise DomainError(f"Laplace check needs t > 0, got {t}", t=t)
    if not len(spectrum):
        return 0.0

    bound = spectrum.truncation_bound
    left = spectrum.eigenvalues
    right = np.append(left[1:], bound)
    # N equals cumulative_counts[i] on (lam_i, lam_{i+1}]
    pieces = (
        spectrum.cumulative_counts
        * np.exp(-left * t)
        * -np.expm1(-(right - left) * t)
    )
    integral = kahan_sum(pieces)

    trace = heat_trace(spectrum, t).value
    expected = trace - spectrum.total_count * math.exp(-bound * t)
    scale = max(abs(trace), np.finfo(float).tiny)
    return abs(integral - expected) / scale


def density_smoothed(
    spectrum: Spectrum, lam: float, cfg: SmoothingConfig, beta: float | None = None
) -> float:
    """State density mollified by the Fermi kernel derivative; kernel width is about 1/beta."""
    beta = cfg.beta_schedule[0] if beta is None else float(beta)
    if beta <= 0:
        raise ValueError("beta must be positive")
    if not _certified(spectrum, lam, beta, cfg.tail_cutoff):
        raise TruncationError(
            f"Density at lambda={lam} with beta={beta} reaches past the truncation "
            f"bound {spectrum.truncation_bound}",
            lam=lam,
            beta=beta,
        )
    x = beta * (spectrum.eigenvalues - lam)
    keep = np.abs(x) <= cfg.tail_cutoff
    terms = spectrum.multiplicities[keep] * beta * expit(x[keep]) * expit(-x[keep])
    return kahan_sum(terms)


def fit_heat_coefficients(
    spectrum: Spectrum,
    dimension: int,
    terms: int,
    t0: float | None = None,
    samples: int = 64,
) -> np.ndarray:
    """Least-squares fit of heat_trace on t**(-D/2 + j/2), j < terms, over [t0, 2 t0].

    Returns the fitted (4 pi)**(-D/2) * B_{j/2}. The default window t0 = 40/Lambda
    keeps exp(-Lambda t) below 1e-17.
    """
    if t0 is None:
        t0 = 40.0 / spectrum.truncation_bound
    ts = np.linspace(t0, 2 * t0, samples)
    traces = np.array([heat_trace(spectrum, t).value for t in ts])
    design = np.column_stack([ts ** (-dimension / 2 + j / 2) for j in range(terms)])
    solution, *_ = np.linalg.lstsq(design, traces, rcond=None)
    return solution
