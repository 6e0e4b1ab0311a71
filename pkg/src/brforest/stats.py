"""Paired one-sided t-test, Spearman rank correlation and the Student-t tail."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_FPMIN = 1e-300
_EPS = 1e-16
_MAX_ITER = 20000


def _betacf(a, b, x):
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float, xc: float | None = None) -> float:
    """I_x(a, b).  ``xc`` may pass ``1 - x`` computed without cancellation."""
    if xc is None:
        xc = 1.0 - x
    if x <= 0.0:
        return 0.0
    if xc <= 0.0:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log(xc))
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _betacf(b, a, xc) / b


def student_t_sf(t: float, dof: float) -> float:
    """Upper tail P(T > t) of Student's t with ``dof`` degrees of freedom."""
    if not math.isfinite(t):
        raise ValueError("t must be finite")
    if dof < 1:
        raise ValueError("dof must be >= 1")
    if t == 0.0:
        return 0.5
    t2 = t * t
    x = dof / (dof + t2)
    xc = t2 / (dof + t2)
    half_two_sided = 0.5 * regularized_incomplete_beta(0.5 * dof, 0.5, x, xc)
    return half_two_sided if t > 0 else 1.0 - half_two_sided


@dataclass(frozen=True)
class TestResult:
    t_statistic: float
    p_value: float
    dof: int

    __test__ = False  # keep pytest from collecting this class


def paired_t_greater(a, b) -> TestResult:
    """Paired t-test with alternative ``mean(a) > mean(b)``.

    Zero-variance differences are resolved by convention: p = 0 when the
    constant difference is positive, 1 when negative and 0.5 when zero.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired samples must be 1-D and of equal length")
    n = a.size
    if n < 2:
        raise ValueError("need at least two pairs")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("samples must be finite")
    d = a - b
    mean = d.mean()
    if np.all(d == d[0]):
        if mean > 0:
            return TestResult(math.inf, 0.0, n - 1)
        if mean < 0:
            return TestResult(-math.inf, 1.0, n - 1)
        return TestResult(0.0, 0.5, n - 1)
    sd = d.std(ddof=1)
    t = mean / (sd / math.sqrt(n))
    return TestResult(float(t), student_t_sf(float(t), n - 1), n - 1)


def average_ranks(x) -> np.ndarray:
    """1-based ranks; tied values share the mean of the ranks they span."""
    x = np.asarray(x, dtype=float)
    order = np.argsort(x, kind="mergesort")
    sx = x[order]
    ranks = np.empty(x.size)
    start = 0
    for i in range(1, x.size + 1):
        if i == x.size or sx[i] != sx[start]:
            ranks[order[start:i]] = 0.5 * (start + i - 1) + 1.0
            start = i
    return ranks


def spearman_rho(x, y) -> float:
    """Spearman rank-order correlation with average ranks for ties."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ValueError("need two equal-length vectors of length >= 2")
    rx = average_ranks(x)
    ry = average_ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    sxx = rx @ rx
    syy = ry @ ry
    if sxx == 0 or syy == 0:
        raise ValueError("undefined correlation: constant input")
    return float(np.clip((rx @ ry) / math.sqrt(sxx * syy), -1.0, 1.0))


def _column_ranks(F):
    """Average ranks down each column of a NaN-free matrix."""
    n, m = F.shape
    order = np.argsort(F, axis=0, kind="mergesort")
    sf = np.take_along_axis(F, order, axis=0)
    # for every sorted position, the first and last index of its tie block
    new_block = np.vstack([np.ones((1, m), bool), sf[1:] != sf[:-1]])
    pos = np.arange(n)[:, None] * np.ones((1, m), dtype=np.int64)
    first = np.maximum.accumulate(np.where(new_block, pos, 0), axis=0)
    end_block = np.vstack([sf[1:] != sf[:-1], np.ones((1, m), bool)])
    last = np.flipud(np.minimum.accumulate(np.flipud(np.where(end_block, pos, n - 1)), axis=0))
    ranks = np.empty_like(F, dtype=float)
    np.put_along_axis(ranks, order, 0.5 * (first + last) + 1.0, axis=0)
    return ranks


def spearman_columns(F, y) -> np.ndarray:
    """Spearman correlation of every column of ``F`` with ``y``.

    NaN cells are excluded pairwise (per column); a column with fewer than
    two usable rows or with constant ranks yields NaN.
    """
    F = np.asarray(F, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.full(F.shape[1], np.nan)
    complete = ~np.isnan(F).any(axis=0)

    if complete.any():
        R = _column_ranks(F[:, complete])
        ry = average_ranks(y)
        R -= R.mean(axis=0)
        ry -= ry.mean()
        num = ry @ R
        den = np.sqrt((R * R).sum(axis=0) * (ry @ ry))
        with np.errstate(invalid="ignore", divide="ignore"):
            rho = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)
        out[complete] = np.clip(rho, -1.0, 1.0)

    for j in np.flatnonzero(~complete):
        ok = ~np.isnan(F[:, j])
        if ok.sum() < 2:
            continue
        try:
            out[j] = spearman_rho(F[ok, j], y[ok])
        except ValueError:
            pass
    return out
