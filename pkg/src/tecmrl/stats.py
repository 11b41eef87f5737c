"""Two-sample tests: Welch's t (with an in-house incomplete beta) and a two-proportion z."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_TINY = 1e-300


def _betacf(a: float, b: float, x: float, max_iter: int = 500, eps: float = 3e-16) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > _TINY else _TINY)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    ln_front = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf_two_sided(t: float, df: float) -> float:
    """P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    if math.isinf(t):
        return 0.0
    return betainc_reg(df / 2.0, 0.5, df / (df + t * t))


@dataclass(frozen=True)
class TestResult:
    statistic: float
    df: float
    p: float
    degenerate: bool = False


def welch_t(sample_a, sample_b) -> TestResult:
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    nan = float("nan")
    if len(a) < 2 or len(b) < 2 or not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        return TestResult(nan, nan, nan, True)
    va = a.var(ddof=1) / len(a)
    vb = b.var(ddof=1) / len(b)
    se2 = va + vb
    if se2 <= 0:
        return TestResult(nan, nan, nan, True)
    t = float((a.mean() - b.mean()) / math.sqrt(se2))
    # variance shares keep the df formula clear of underflow for tiny spreads
    wa, wb = va / se2, vb / se2
    df = float(1.0 / (wa * wa / (len(a) - 1) + wb * wb / (len(b) - 1)))
    if not (math.isfinite(t) and math.isfinite(df)):
        return TestResult(nan, nan, nan, True)
    return TestResult(t, df, t_sf_two_sided(t, df))


def two_proportion_z(k1: int, n1: int, k2: int, n2: int) -> TestResult:
    nan = float("nan")
    if n1 < 1 or n2 < 1:
        return TestResult(nan, nan, nan, True)
    pooled = (k1 + k2) / (n1 + n2)
    se = math.sqrt(pooled * (1 - pooled) * (1 / n1 + 1 / n2))
    if se == 0:
        return TestResult(nan, nan, nan, True)
    z = (k1 / n1 - k2 / n2) / se
    return TestResult(z, nan, math.erfc(abs(z) / math.sqrt(2)))
