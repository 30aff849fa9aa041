import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from django.conf import settings
from scipy.optimize import brentq
from scipy.special import jv, spherical_jn

from spectra.errors import RootFindingError

logger = logging.getLogger(__name__)

# Consecutive zeros of J_nu are more than 3 apart for nu >= 0, so a cell of
# this width never holds two of them.
SCAN_STEP = 0.5
ROOT_XTOL = 1e-14
# relative precision callers may assume for a refined zero
ROOT_RTOL = 1e-12


def resolve_workers(workers: int | None = None) -> int:
    if workers is None:
        workers = getattr(settings, "WEYLKIT_THREADS", 0)
    if workers <= 0:
        workers = os.cpu_count() or 1
    return workers


def _zeros_of(func, lower: float, x_max: float) -> np.ndarray:
    # j_{nu,1} > nu, so the scan starts at the order itself
    if lower > x_max:
        return np.empty(0)
    steps = int(math.ceil((x_max - lower) / SCAN_STEP)) + 1
    grid = lower + SCAN_STEP * np.arange(steps + 1)
    values = func(grid)

    roots = [float(x) for x, v in zip(grid, values) if v == 0.0 and 0 < x <= x_max]
    for index in np.nonzero(values[:-1] * values[1:] < 0)[0]:
        a, b = float(grid[index]), float(grid[index + 1])
        try:
            root = brentq(func, a, b, xtol=ROOT_XTOL, maxiter=200)
        except RuntimeError as exc:
            raise RootFindingError(
                f"Bessel root refinement failed in [{a}, {b}]: {exc}", bracket=(a, b)
            ) from exc
        if root <= x_max:
            roots.append(root)
    return np.array(sorted(roots))


def spherical_bessel_zeros(l: int, x_max: float) -> np.ndarray:
    """Positive zeros of the spherical Bessel function j_l up to x_max."""
    return _zeros_of(lambda x: spherical_jn(l, x), l + 0.5, x_max)


def cylindrical_bessel_zeros(m: int, x_max: float) -> np.ndarray:
    """Positive zeros of J_m up to x_max."""
    return _zeros_of(lambda x: jv(m, x), float(m), x_max)


def zero_table(x_max: float, spherical: bool, workers: int | None = None):
    """Zeros up to x_max for every order that has one, keyed by order.

    Orders are independent, so they run on a thread pool; the result is
    assembled in order so it does not depend on scheduling.
    """
    finder = spherical_bessel_zeros if spherical else cylindrical_bessel_zeros
    orders = range(int(math.floor(x_max)) + 1)
    with ThreadPoolExecutor(max_workers=resolve_workers(workers)) as pool:
        results = list(pool.map(lambda order: finder(order, x_max), orders))

    table = {}
    for order, zeros in zip(orders, results):
        if not zeros.size:
            break
        table[order] = zeros
    logger.debug(
        f"Found {sum(z.size for z in table.values())} Bessel zeros below {x_max} "
        f"across {len(table)} orders"
    )
    return table
