import itertools
import logging
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from django.conf import settings

from spectra.bessel import ROOT_RTOL, resolve_workers, zero_table
from spectra.core import Spectrum, WeylMajorant
from spectra.errors import EmptySpectrumError, UnsupportedDataError
from spectra.summation import kahan_sum
from spectra.transform import (
    CountingSeries,
    HeatKernelCoefficients,
    PowerTerm,
)

logger = logging.getLogger(__name__)

DIRICHLET = "dirichlet"
NEUMANN_OR_ROBIN = "neumann_or_robin"
BOUNDARY_CHOICES = [
    (DIRICHLET, "Dirichlet"),
    (NEUMANN_OR_ROBIN, "Neumann or Robin"),
]

DEFAULT_MERGE_RTOL = 1e-9


@dataclass(frozen=True)
class BoxShape:
    side_lengths: tuple[float, ...]

    def __post_init__(self):
        sides = tuple(float(side) for side in self.side_lengths)
        if not sides:
            raise ValueError("A box needs at least one side")
        if any(side <= 0 for side in sides):
            raise ValueError("Side lengths must be positive")
        object.__setattr__(self, "side_lengths", sides)

    @classmethod
    def cube(cls, dimension: int, side: float = 1.0):
        return cls((side,) * dimension)

    @property
    def dimension(self) -> int:
        return len(self.side_lengths)

    @property
    def volume(self) -> float:
        return math.prod(self.side_lengths)

    @property
    def is_uniform(self) -> bool:
        return len(set(self.side_lengths)) == 1

    @property
    def tag(self) -> str:
        sides = ",".join(repr(side) for side in self.side_lengths)
        return f"box(D={self.dimension};L={sides})"


@dataclass(frozen=True)
class Ball3DShape:
    radius: float = 1.0
    boundary_condition: str = DIRICHLET

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("Radius must be positive")
        if self.boundary_condition not in dict(BOUNDARY_CHOICES):
            raise ValueError(f"Unknown boundary condition {self.boundary_condition!r}")

    @property
    def tag(self) -> str:
        return f"ball3d(R={self.radius!r};{self.boundary_condition})"


def _require_dirichlet(boundary_condition: str, what: str):
    if boundary_condition != DIRICHLET:
        raise UnsupportedDataError(
            f"{what} is only available for the Dirichlet condition",
            boundary_condition=boundary_condition,
        )


def _lattice_sums(weights, limit, prefix):
    """All prefix + sum(w_i n_i**2) <= limit over n_i >= 1, in lexicographic order of n."""
    if not weights:
        return [prefix]
    head, rest = weights[0], weights[1:]
    sums = []
    n = 1
    while prefix + head * n * n <= limit:
        sums.extend(_lattice_sums(rest, limit, prefix + head * n * n))
        n += 1
    return sums


def _lattice_rows(weights, limit, workers):
    head, rest = weights[0], weights[1:]
    rows = []
    n = 1
    while head * n * n <= limit:
        rows.append(head * n * n)
        n += 1
    with ThreadPoolExecutor(max_workers=resolve_workers(workers)) as pool:
        chunks = pool.map(lambda prefix: _lattice_sums(rest, limit, prefix), rows)
        return [value for chunk in chunks for value in chunk]


def merge_close(values, rtol: float):
    """Group sorted values whose relative distance to the group's first member is within rtol."""
    entries = []
    for value in values:
        if entries and value - entries[-1][0] <= rtol * value:
            entries[-1][1] += 1
        else:
            entries.append([value, 1])
    return [(value, mult) for value, mult in entries]


def box_spectrum(shape: BoxShape, bound: float, workers: int | None = None) -> Spectrum:
    pi2 = math.pi**2
    first = pi2 * sum(1 / side**2 for side in shape.side_lengths)
    if bound < first:
        raise EmptySpectrumError(
            f"Bound {bound} is below the first box eigenvalue {first}",
            bound=bound,
            first_eigenvalue=first,
        )

    if shape.is_uniform:
        # lambda = pi^2 / L^2 * sum(n_i^2); merge on the exact integer key
        scale = pi2 / shape.side_lengths[0] ** 2
        limit = int(math.floor(bound / scale)) + 1
        keys = Counter(_lattice_rows([1] * shape.dimension, limit, workers))
        entries = [
            (scale * key, mult)
            for key, mult in sorted(keys.items())
            if scale * key <= bound
        ]
    else:
        weights = [pi2 / side**2 for side in shape.side_lengths]
        values = sorted(_lattice_rows(weights, bound, workers))
        rtol = getattr(settings, "WEYLKIT_MERGE_RTOL", DEFAULT_MERGE_RTOL)
        entries = merge_close(values, rtol)
        merged = len(values) - len(entries)
        if merged:
            logger.debug(f"Merged {merged} numerically coincident box eigenvalues")

    spectrum = Spectrum.from_entries(entries, bound, shape.tag, shape.dimension)
    logger.info(
        f"Generated {shape.tag} spectrum: {len(spectrum)} levels, "
        f"{spectrum.total_count} eigenvalues below {bound}"
    )
    return spectrum


def _elementary_face_sums(shape: BoxShape):
    # e_nu = sum over nu-subsets S of V / prod_{i in S} L_i
    volume = shape.volume
    return [
        sum(
            volume / math.prod(subset)
            for subset in itertools.combinations(shape.side_lengths, nu)
        )
        for nu in range(shape.dimension + 1)
    ]


def box_heat_coefficients(
    shape: BoxShape, max_k: float | None = None
) -> HeatKernelCoefficients:
    """B_{nu/2} = (-1)^nu pi^(nu/2) e_nu for nu = 0..D; zero above D/2."""
    d = shape.dimension
    max_twice = d if max_k is None else int(round(2 * max_k))
    sums = _elementary_face_sums(shape)
    coefficients = {
        nu: ((-1) ** nu * math.pi ** (nu / 2) * sums[nu] if nu <= d else 0.0)
        for nu in range(max_twice + 1)
    }
    return HeatKernelCoefficients(d, coefficients)


def box_counting_coefficients(shape: BoxShape) -> list[tuple[float, float]]:
    """Counting expansion of the box written directly as lattice volumes.

    Each coordinate face set T of size m contributes the volume of the m-ball
    quadrant in the dual lattice, halved once per dropped direction:
    (-1/2)^(D-m) * omega_m * prod_{i in T} L_i / (2 pi)^m * lam^(m/2).
    """
    d = shape.dimension
    terms = []
    for m in range(d, -1, -1):
        unit_ball = math.pi ** (m / 2) / math.gamma(1 + m / 2)
        faces = sum(
            math.prod(subset)
            for subset in itertools.combinations(shape.side_lengths, m)
        )
        coefficient = (-0.5) ** (d - m) * unit_ball * faces / (2 * math.pi) ** m
        terms.append((m / 2, coefficient))
    return terms


def _segment_heat_trace(side: float, t: float) -> float:
    # exp(-x) underflows past x ~ 745
    n_max = int(math.ceil(side / math.pi * math.sqrt(745 / t))) + 1
    n = np.arange(1, n_max + 1, dtype=float)
    return kahan_sum(np.exp(-((math.pi * n / side) ** 2) * t))


def box_heat_trace(shape: BoxShape, t: float) -> float:
    """Exact Dirichlet heat trace of the box: a product of one-dimensional theta sums."""
    if t <= 0:
        raise ValueError("t must be positive")
    return math.prod(_segment_heat_trace(side, t) for side in shape.side_lengths)


def box_weyl_majorant(shape: BoxShape) -> WeylMajorant:
    terms = dict(box_counting_coefficients(shape))
    d = shape.dimension
    return WeylMajorant(d, terms[d / 2], abs(terms[(d - 1) / 2]))


def series_majorant(cs: CountingSeries) -> WeylMajorant:
    """Counting majorant C_0 lam^(D/2) + |C_1/2| lam^((D-1)/2) from a counting series."""
    return WeylMajorant(
        cs.dimension, max(cs.power_coefficient(0), 0.0), abs(cs.power_coefficient(1))
    )


def _bessel_spectrum(x_max, radius, bound, spherical, tag, dimension, workers):
    table = zero_table(x_max, spherical, workers)
    levels = []
    for order, zeros in table.items():
        if spherical:
            mult = 2 * order + 1
        else:
            mult = 1 if order == 0 else 2
        for zero in zeros:
            value = (zero / radius) ** 2
            # a zero refined to within ROOT_RTOL of the bound still counts
            if value <= bound * (1 + 2 * ROOT_RTOL):
                levels.append((min(value, bound), order, mult))
    levels.sort()
    if not levels:
        raise EmptySpectrumError(
            f"No eigenvalues of {tag} below {bound}", bound=bound
        )
    spectrum = Spectrum.from_entries(
        ((value, mult) for value, _, mult in levels), bound, tag, dimension
    )
    logger.info(
        f"Generated {tag} spectrum: {len(spectrum)} levels, "
        f"{spectrum.total_count} eigenvalues below {bound}"
    )
    return spectrum


def ball3d_spectrum(
    shape: Ball3DShape, bound: float, workers: int | None = None
) -> Spectrum:
    """Dirichlet ball: (x_{l,k}/R)^2 with x_{l,k} the zeros of j_l, multiplicity 2l+1."""
    _require_dirichlet(shape.boundary_condition, "The ball spectrum oracle")
    if bound < (math.pi / shape.radius) ** 2:
        raise EmptySpectrumError(
            f"Bound {bound} is below the first ball eigenvalue (pi/R)^2",
            bound=bound,
            first_eigenvalue=(math.pi / shape.radius) ** 2,
        )
    x_max = shape.radius * math.sqrt(bound) * (1 + ROOT_RTOL)
    return _bessel_spectrum(x_max, shape.radius, bound, True, shape.tag, 3, workers)


def disk_spectrum(radius: float, bound: float, workers: int | None = None) -> Spectrum:
    """Dirichlet disk: (j_{m,k}/R)^2, multiplicity 1 for m = 0 and 2 otherwise."""
    if radius <= 0:
        raise ValueError("Radius must be positive")
    x_max = radius * math.sqrt(bound) * (1 + ROOT_RTOL)
    return _bessel_spectrum(
        x_max, radius, bound, False, f"disk(R={radius!r})", 2, workers
    )


def ball_heat_coefficients(
    dimension: int, radius: float, boundary_condition: str = DIRICHLET
) -> HeatKernelCoefficients:
    """B_0, B_{1/2}, B_1 of the D-ball; B_{1/2} is negative for Dirichlet and positive otherwise."""
    if dimension < 2:
        raise ValueError("Ball coefficients need D >= 2")
    if boundary_condition not in dict(BOUNDARY_CHOICES):
        raise ValueError(f"Unknown boundary condition {boundary_condition!r}")
    volume = math.pi ** (dimension / 2) * radius**dimension / math.gamma(dimension / 2 + 1)
    area = dimension * volume / radius
    sign = -1.0 if boundary_condition == DIRICHLET else 1.0
    return HeatKernelCoefficients(
        dimension,
        {
            0: volume,
            1: sign * math.sqrt(math.pi) / 2 * area,
            2: (dimension - 1) * area / (3 * radius),
        },
    )


def ball3d_heat_coefficients(shape: Ball3DShape) -> HeatKernelCoefficients:
    _require_dirichlet(shape.boundary_condition, "Ball heat-kernel coefficients")
    r = shape.radius
    return HeatKernelCoefficients(
        3,
        {
            0: 4 * math.pi * r**3 / 3,
            1: -2 * math.pi**1.5 * r**2,
            2: 8 * math.pi * r / 3,
            3: -(math.pi**1.5) / 6,
            4: -16 * math.pi / (315 * r),
        },
    )


def ball3d_counting_series(shape: Ball3DShape) -> CountingSeries:
    """Convergent part of the Dirichlet 3-ball counting function, five terms."""
    _require_dirichlet(shape.boundary_condition, "The ball counting series")
    r = shape.radius
    weights = (4 * math.pi) ** -1.5
    hk = ball3d_heat_coefficients(shape)
    printed = [
        (0, 1.5, 2 * r**3 / (9 * math.pi)),
        (1, 1.0, -(r**2) / 4),
        (2, 0.5, 2 * r / (3 * math.pi)),
        (3, 0.0, -1 / 48),
        (4, -0.5, -2 / (315 * math.pi * r)),
    ]
    return CountingSeries(
        3,
        tuple(
            PowerTerm(twice_k, exponent, coefficient, weights * hk.coefficients[twice_k])
            for twice_k, exponent, coefficient in printed
        ),
    )
