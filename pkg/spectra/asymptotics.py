import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from spectra.core import Spectrum, count_direct
from spectra.errors import InsufficientCoefficientsError, SolverError
from spectra.shapes import BOUNDARY_CHOICES, DIRICHLET
from spectra.transform import (
    CountingSeries,
    HeatKernelCoefficients,
    evaluate_counting_series,
)

logger = logging.getLogger(__name__)

SOLVER_RTOL = 1e-12
MAX_BRACKET_STEPS = 60


@dataclass(frozen=True)
class SpectrumAsymptotics:
    """lam_n ~ alpha_0 n^(2/D) + alpha_1 n^(1/D) + alpha_2."""

    dimension: int
    alpha: tuple[float, float, float]

    def __post_init__(self):
        alpha = tuple(float(a) for a in self.alpha)
        if len(alpha) != 3:
            raise ValueError("Exactly three expansion coefficients are kept")
        if alpha[0] <= 0:
            raise ValueError("alpha_0 must be positive")
        object.__setattr__(self, "alpha", alpha)

    def scaled(self, radius: float):
        return SpectrumAsymptotics(self.dimension, tuple(a / radius**2 for a in self.alpha))


def expansion_coefficients(hk: HeatKernelCoefficients) -> SpectrumAsymptotics:
    if hk.max_twice < 2:
        raise InsufficientCoefficientsError(
            "The spectrum expansion needs B_0, B_1/2 and B_1",
            max_index=hk.max_index,
        )
    d = hk.dimension
    b0, b_half, b1 = (hk.coefficients[i] for i in range(3))
    g = math.gamma(d / 2 + 1)
    alpha0 = 4 * math.pi * g ** (2 / d) / b0 ** (2 / d)
    alpha1 = (
        -4
        * math.sqrt(math.pi)
        * g ** (1 + 1 / d)
        / (d * math.gamma(d / 2 + 0.5))
        * b_half
        / b0 ** (1 + 1 / d)
    )
    alpha2 = (
        d * math.gamma(d / 2) ** 2 / (4 * math.gamma(d / 2 + 0.5) ** 2) * (b_half / b0) ** 2
        - b1 / b0
    )
    return SpectrumAsymptotics(d, (alpha0, alpha1, alpha2))


def evaluate_expansion(sa: SpectrumAsymptotics, n: int) -> float:
    if n < 1:
        raise ValueError("n must be at least 1")
    return sum(a * n ** ((2 - m) / sa.dimension) for m, a in enumerate(sa.alpha))


def eigenvalue_solve(cs: CountingSeries, n: int) -> float:
    """Largest root of N(lam) = n for the truncated counting series."""
    if n < 1:
        raise ValueError("n must be at least 1")
    leading = cs.leading
    if leading.coefficient <= 0 or leading.exponent <= 0:
        raise SolverError(
            "The counting series needs a positive growing leading term",
            bracket=(),
            values=(leading.coefficient, leading.exponent),
        )

    def residual(lam):
        return evaluate_counting_series(cs, lam).value - n

    weyl = (n / leading.coefficient) ** (1 / leading.exponent)
    low, high = 0.5 * weyl, 2.0 * weyl
    for _ in range(MAX_BRACKET_STEPS):
        if residual(high) > 0:
            break
        low, high = high, 2 * high
    else:
        raise SolverError(
            f"N(lam) never exceeds n={n} below {high}",
            bracket=(low, high),
            values=(residual(low), residual(high)),
        )

    # walk down from the top so the bracket holds the largest sign change
    low = high
    for _ in range(MAX_BRACKET_STEPS):
        low, high = low / 2, low
        if residual(low) <= 0:
            break
    else:
        raise SolverError(
            f"N(lam) - n stays positive down to lam={low}",
            bracket=(low, high),
            values=(residual(low), residual(high)),
        )

    if residual(low) == 0:
        return low
    logger.debug(f"Solving N(lam) = {n} in [{low}, {high}]")
    try:
        return brentq(residual, low, high, rtol=SOLVER_RTOL, maxiter=200)
    except RuntimeError as exc:
        raise SolverError(
            f"Root refinement for n={n} failed: {exc}",
            bracket=(low, high),
            values=(residual(low), residual(high)),
        ) from exc


# Closed-form ball spectra at R = 1 with the Dirichlet sign on alpha_1;
# the Neumann or Robin spectra flip that sign.
PRINTED_BALL_SPECTRA = {
    3: (
        1.5 * (6 * math.pi**2) ** (1 / 3),
        0.375 * (6 * math.pi**2) ** (2 / 3),
        27 * math.pi**2 / 64 - 2,
    ),
    4: (8.0, 16 * math.sqrt(2) / 3, -26 / 9),
    5: (
        0.5 * (450 * math.sqrt(2) * math.pi) ** 0.4,
        15 * math.pi / 32 * (3600 * math.pi) ** 0.2,
        1125 * math.pi**2 / 1024 - 20 / 3,
    ),
}


def printed_ball_asymptotics(
    dimension: int, radius: float = 1.0, boundary_condition: str = DIRICHLET
) -> SpectrumAsymptotics:
    if dimension not in PRINTED_BALL_SPECTRA:
        raise ValueError(f"No closed-form ball spectrum for D={dimension}")
    if boundary_condition not in dict(BOUNDARY_CHOICES):
        raise ValueError(f"Unknown boundary condition {boundary_condition!r}")
    alpha0, alpha1, alpha2 = PRINTED_BALL_SPECTRA[dimension]
    if boundary_condition != DIRICHLET:
        alpha1 = -alpha1
    return SpectrumAsymptotics(dimension, (alpha0, alpha1, alpha2)).scaled(radius)


def evaluate_printed_ball_spectrum(
    dimension: int, radius: float, n: int, boundary_condition: str = DIRICHLET
) -> float:
    return evaluate_expansion(
        printed_ball_asymptotics(dimension, radius, boundary_condition), n
    )


def windowed_mean_residual(
    spectrum: Spectrum, cs: CountingSeries, start: float, stop: float, samples: int = 200
) -> float:
    """Mean of N_direct - N_series over an even grid in [start, stop]."""
    grid = np.linspace(start, stop, samples)
    residuals = [
        count_direct(spectrum, lam) - evaluate_counting_series(cs, lam).value
        for lam in grid
    ]
    return float(np.mean(residuals))


def fit_sqrt_coefficient(
    spectrum: Spectrum,
    area: float,
    lambda_min: float,
    lambda_max: float,
    samples: int = 2000,
) -> float:
    """Least-squares sqrt(lam) coefficient of N_direct(lam) - S lam/(4 pi), with a free constant."""
    grid = np.linspace(lambda_min, lambda_max, samples)
    excess = np.array(
        [count_direct(spectrum, lam) - area * lam / (4 * math.pi) for lam in grid]
    )
    design = np.column_stack((np.sqrt(grid), np.ones_like(grid)))
    solution, *_ = np.linalg.lstsq(design, excess, rcond=None)
    return float(solution[0])
