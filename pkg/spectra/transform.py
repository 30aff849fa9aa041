"""Heat-kernel coefficients to counting-function coefficients.

Indices k are half-integers and are stored doubled (``twice_k = 2k``) so that
the classification into convergent terms, Gamma-continued terms and
delta-function terms is exact integer arithmetic.
"""

import logging
import math
from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping, NamedTuple

from scipy.special import rgamma

from spectra.errors import DomainError, UnsupportedDataError
from spectra.summation import KahanSum

logger = logging.getLogger(__name__)


def twice(k: float) -> int:
    doubled = 2 * k
    if doubled != round(doubled):
        raise ValueError(f"Index {k} is not a half-integer")
    return int(round(doubled))


@dataclass(frozen=True)
class HeatKernelCoefficients:
    dimension: int
    coefficients: Mapping[int, float]

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be at least 1")
        raw = {int(key): float(value) for key, value in self.coefficients.items()}
        if not raw or min(raw) < 0:
            raise ValueError("Coefficient indices must be nonnegative half-integers")
        if raw.get(0, 0.0) <= 0:
            raise ValueError("B_0 (the volume term) must be positive")
        filled = {key: raw.get(key, 0.0) for key in range(max(raw) + 1)}
        object.__setattr__(self, "coefficients", MappingProxyType(filled))

    @classmethod
    def from_indices(cls, dimension: int, values: Mapping[float, float]):
        return cls(dimension, {twice(k): value for k, value in values.items()})

    @property
    def max_twice(self) -> int:
        return max(self.coefficients)

    @property
    def max_index(self) -> float:
        return self.max_twice / 2

    def get(self, k: float) -> float:
        return self.coefficients.get(twice(k), 0.0)

    def items(self):
        return self.coefficients.items()


class PowerTerm(NamedTuple):
    twice_k: int
    exponent: float
    coefficient: float
    weight: float


class DeltaTerm(NamedTuple):
    order: int
    weight: float
    twice_k: int


class SeriesValue(NamedTuple):
    value: float
    last_term: float


@dataclass(frozen=True)
class CountingSeries:
    """Power terms C_k * lam**(D/2 - k) plus symbolic delta^(l)(lam) terms.

    ``weight`` is (4 pi)**(-D/2) * B_k for both kinds of term. A series with
    ``derivative_order`` m > 0 is the m-th lam-derivative of a counting series.
    """

    dimension: int
    power_terms: tuple[PowerTerm, ...]
    delta_terms: tuple[DeltaTerm, ...] = ()
    derivative_order: int = 0

    def __post_init__(self):
        power = tuple(PowerTerm(*term) for term in self.power_terms)
        delta = tuple(DeltaTerm(*term) for term in self.delta_terms)
        exponents = [term.exponent for term in power]
        if any(b >= a for a, b in zip(exponents, exponents[1:])):
            raise ValueError("Power-term exponents must be strictly decreasing")
        object.__setattr__(self, "power_terms", power)
        object.__setattr__(self, "delta_terms", delta)

    def power_coefficient(self, twice_k: int) -> float:
        for term in self.power_terms:
            if term.twice_k == twice_k:
                return term.coefficient
        return 0.0

    @property
    def convergent_terms(self) -> tuple[PowerTerm, ...]:
        return tuple(t for t in self.power_terms if t.twice_k <= self.dimension)

    @property
    def continued_terms(self) -> tuple[PowerTerm, ...]:
        return tuple(t for t in self.power_terms if t.twice_k > self.dimension)

    @property
    def leading(self) -> PowerTerm:
        if not self.power_terms:
            raise ValueError("Series has no power terms")
        return self.power_terms[0]


def gamma_reciprocal_continued(x: float) -> float:
    """1/Gamma(x) on the whole real line, continued downward with 1/Gamma(x) = x/Gamma(x+1).

    Exactly zero at the poles 0, -1, -2, ...
    """
    if x <= 0 and x == math.floor(x):
        return 0.0
    factor = 1.0
    while x < 1:
        factor *= x
        x += 1
    return factor * float(rgamma(x))


def _gamma_reciprocal_twice(twice_x: int) -> float:
    if twice_x <= 0 and twice_x % 2 == 0:
        return 0.0
    return gamma_reciprocal_continued(twice_x / 2)


def _series_terms(hk: HeatKernelCoefficients, derivative_order: int):
    d = hk.dimension
    norm = (4 * math.pi) ** (-d / 2)
    power, delta = [], []
    for twice_k, value in hk.items():
        weight = norm * value
        # 2 * (1 + D/2 - k); a nonpositive even value is a pole of Gamma
        shifted = 2 + d - twice_k
        if shifted <= 0 and shifted % 2 == 0:
            delta.append(DeltaTerm(-shifted // 2 + derivative_order, weight, twice_k))
            continue
        exponent = (d - twice_k) / 2 - derivative_order
        coefficient = weight * _gamma_reciprocal_twice(shifted - 2 * derivative_order)
        power.append(PowerTerm(twice_k, exponent, coefficient, weight))
    return power, delta


def transform_coefficients(hk: HeatKernelCoefficients) -> CountingSeries:
    power, delta = _series_terms(hk, 0)
    logger.debug(
        f"Transformed {len(hk.coefficients)} heat coefficients (D={hk.dimension}) into "
        f"{len(power)} power terms and {len(delta)} delta terms"
    )
    return CountingSeries(hk.dimension, tuple(power), tuple(delta))


def evaluate_counting_series(cs: CountingSeries, lam: float) -> SeriesValue:
    """Sum of the power terms at lam > 0; delta terms are supported at 0 and drop out.

    ``last_term`` is the magnitude of the final power term, a rough indicator of
    where the asymptotic series has been cut.
    """
    if lam <= 0:
        raise DomainError(f"Counting series needs lambda > 0, got {lam}", lam=lam)
    total = KahanSum()
    last = 0.0
    for term in cs.power_terms:
        last = term.coefficient * lam**term.exponent
        total.add(last)
    return SeriesValue(total.total, abs(last))


def density_series(cs: CountingSeries) -> CountingSeries:
    order = cs.derivative_order + 1
    d = cs.dimension
    power = []
    for term in cs.power_terms:
        shifted = 2 + d - term.twice_k - 2 * order
        power.append(
            PowerTerm(
                term.twice_k,
                term.exponent - 1,
                term.weight * _gamma_reciprocal_twice(shifted),
                term.weight,
            )
        )
    delta = [DeltaTerm(term.order + 1, term.weight, term.twice_k) for term in cs.delta_terms]
    return CountingSeries(d, tuple(power), tuple(delta), order)


def tree_part(cs: CountingSeries) -> CountingSeries:
    """Convergent part of the transform: power terms with k <= D/2 + 1/2, no delta terms."""
    power = tuple(t for t in cs.power_terms if t.twice_k <= cs.dimension + 1)
    return CountingSeries(cs.dimension, power, (), cs.derivative_order)


def evaluate_heat_series(
    hk: HeatKernelCoefficients, t: float, twice_ks=None
) -> float:
    if t <= 0:
        raise DomainError(f"Heat series needs t > 0, got {t}", t=t)
    total = KahanSum()
    for twice_k, value in hk.items():
        if twice_ks is None or twice_k in twice_ks:
            total.add(value * t ** (twice_k / 2))
    return (4 * math.pi * t) ** (-hk.dimension / 2) * total.total


def inverse_check_2d_leading(
    cs: CountingSeries, hk: HeatKernelCoefficients, lam: float
) -> float:
    """Relative gap between N(lam) and K(1/lam) in two dimensions, where the leading terms coincide."""
    if cs.dimension != 2 or hk.dimension != 2:
        raise UnsupportedDataError(
            "N(lam) = K(1/lam) at leading order only holds in two dimensions",
            dimension=cs.dimension,
        )
    counting = evaluate_counting_series(cs, lam).value
    orders = {term.twice_k for term in cs.power_terms}
    heat = evaluate_heat_series(hk, 1 / lam, orders)
    return abs(counting - heat) / abs(counting)
