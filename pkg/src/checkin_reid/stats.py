"""Small statistics kernels: Shannon entropy and Pearson correlation."""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

from .errors import UndefinedCorrelationError

_EPS = 1e-15
_TINY = 1e-300
# affine data rounds to within a few ulps of |r| = 1; snap those to exactly 1
_UNIT_SNAP = 8 * np.finfo(np.float64).eps


def entropy_bits(counts: Iterable[int]) -> float:
    """Shannon entropy (base 2) of a histogram; empty bins contribute 0."""
    counts = [c for c in counts if c > 0]
    total = sum(counts)
    if total <= 0:
        raise ValueError("entropy of an empty histogram is undefined")
    h = -math.fsum((c / total) * math.log2(c / total) for c in counts)
    return h if h > 0.0 else 0.0


def _betacf(a: float, b: float, x: float, max_iter: int = 500) -> float:
    # modified Lentz evaluation of the continued fraction for I_x(a, b)
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = _TINY if abs(d) < _TINY else d
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function ``I_x(a, b)``."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = a * math.log(x) + b * math.log1p(-x) - (math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b))
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def _moments(xs: Sequence[float], ys: Sequence[float]):
    x = [float(v) for v in xs]
    y = [float(v) for v in ys]
    if len(x) != len(y):
        raise ValueError("xs and ys must have equal length")
    if len(x) < 3:
        raise ValueError("Pearson correlation needs at least 3 points")
    n = len(x)
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    dx = [v - mx for v in x]
    dy = [v - my for v in y]
    sxx = math.fsum(v * v for v in dx)
    syy = math.fsum(v * v for v in dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError(
            f"zero variance (sum of squares x={sxx!r}, y={syy!r}); correlation undefined"
        )
    sxy = math.fsum(a * b for a, b in zip(dx, dy))
    return n, sxx, syy, sxy


def pearson(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float]:
    """Product-moment correlation and two-sided Student-t p-value.

    The p-value is ``I_{1 - r^2}((n - 2) / 2, 1 / 2)``, which equals
    ``P(|T| >= |t|)`` for ``t = r sqrt((n - 2) / (1 - r^2))`` with ``n - 2``
    degrees of freedom.
    """
    n, sxx, syy, sxy = _moments(xs, ys)
    r = sxy / (math.sqrt(sxx) * math.sqrt(syy))
    if 1.0 - abs(r) <= _UNIT_SNAP:
        r = math.copysign(1.0, r)
    one_minus_r2 = (1.0 - r) * (1.0 + r)
    if one_minus_r2 <= 0.0:
        return r, 0.0
    return r, betainc((n - 2) / 2.0, 0.5, one_minus_r2)


def pearson_permutation(
    xs: Sequence[float], ys: Sequence[float], n_permutations: int = 10_000, seed: int = 0
) -> tuple[float, float]:
    """Pearson ``r`` with a seeded two-sided permutation p-value.

    Meant for very small samples, where the t approximation is poor.
    """
    r, _ = pearson(xs, ys)
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    x = (x - x.mean()) / np.sqrt(((x - x.mean()) ** 2).sum())
    y = (y - y.mean()) / np.sqrt(((y - y.mean()) ** 2).sum())
    rng = np.random.default_rng(seed)
    perms = rng.permuted(np.tile(y, (n_permutations, 1)), axis=1)
    r_perm = perms @ x
    hits = int(np.count_nonzero(np.abs(r_perm) >= abs(r) - 1e-12))
    return r, (hits + 1) / (n_permutations + 1)
