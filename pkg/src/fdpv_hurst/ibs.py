"""Increment Bernoulli Statistic (IBS) and its Hurst-index link functions.

The IBS of a path is the fraction of consecutive second-order increments that
share a sign. For fBm it converges to ``Lambda(H) = arccos(-rho(H)) / pi``,
where ``rho(H)`` is the lag-one correlation of second-order increments, so
``H`` is recovered by inverting ``Lambda``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from ._validation import check_path

if TYPE_CHECKING:
    from .variance import VarianceTable

_LN4, _LN9 = math.log(4.0), math.log(9.0)

#: ``Lambda`` at ``H -> 0+``: ``arccos(2/3) / pi``.
LAMBDA_MIN = math.acos(2.0 / 3.0) / math.pi
#: Hurst value reported when an IBS value falls at or below ``LAMBDA_MIN``.
HURST_FLOOR = 0.001


_BLOCK = 1 << 15


def second_order_increments(path) -> np.ndarray:
    """``X[k+2] - 2 X[k+1] + X[k]`` for ``k = 0 .. len(path) - 3``."""
    x = check_path(path, min_length=3)
    return x[2:] - 2.0 * x[1:-1] + x[:-2]


def psi(x: float, y: float) -> int:
    """1 when ``x`` and ``y`` have the same sign, else 0 (zero counts as positive)."""
    return int((x >= 0) == (y >= 0))


def psi_sequence(path) -> np.ndarray:
    """Sign-agreement indicators of consecutive second-order increments.

    Entry ``i`` compares the increments at ``i`` and ``i+1`` and therefore
    depends on samples ``i .. i+3``. The result has ``len(path) - 3`` entries.
    """
    x = check_path(path, min_length=4)
    n_pairs = x.shape[0] - 3
    out = np.empty(n_pairs, dtype=bool)
    # Blocks keep the float temporaries in cache and off the peak memory.
    for lo in range(0, n_pairs, _BLOCK):
        hi = min(lo + _BLOCK, n_pairs)
        seg = x[lo : hi + 3]
        nonneg = seg[2:] - 2.0 * seg[1:-1] + seg[:-2] >= 0
        np.equal(nonneg[1:], nonneg[:-1], out=out[lo:hi])
    return out


@dataclass(frozen=True)
class IbsValue:
    """An IBS statistic stored as an exact agreement count."""

    count: int
    n_pairs: int

    @property
    def value(self) -> float:
        return self.count / self.n_pairs

    def __float__(self) -> float:
        return self.value


def ibs(path) -> IbsValue:
    """Increment Bernoulli Statistic of ``path`` (at least 4 samples).

    Normalized by the number of compared pairs, ``len(path) - 3``.
    """
    agree = psi_sequence(path)
    return IbsValue(int(np.count_nonzero(agree)), int(agree.shape[0]))


def _check_link_domain(h):
    arr = np.asarray(h, dtype=np.float64)
    if not np.all((arr > 0.0) & (arr <= 1.0)):
        raise ValueError(f"hurst must lie in (0, 1], got {h!r}")
    return arr


def _expm1_ratio(t):
    # (9^t - 1) / (4^t - 1), continuous at t = 0 where it equals ln9 / ln4.
    t = np.asarray(t, dtype=np.float64)
    small = np.abs(t) < 1e-8
    safe = np.where(small, 1.0, t)
    ratio = np.expm1(safe * _LN9) / np.expm1(safe * _LN4)
    return np.where(small, (_LN9 / _LN4) * (1.0 + 0.5 * t * (_LN9 - _LN4)), ratio)


def rho(hurst):
    """Correlation of two consecutive second-order increments of fBm.

    ``(-3^{2H} + 2^{2H+2} - 7) / (8 - 2^{2H+1})``. Numerator and denominator
    both vanish at ``H = 1``, so the ratio is evaluated as
    ``-2 + 9 (9^t - 1) / (8 (4^t - 1))`` with ``t = H - 1``, which is exact
    near and at the endpoint (``rho(1) = -2 + 9 ln 9 / (8 ln 4)``).
    """
    h = _check_link_domain(hurst)
    out = -2.0 + 1.125 * _expm1_ratio(h - 1.0)
    return float(out) if out.ndim == 0 else out


def lambda_of_hurst(hurst):
    """Sign-agreement probability ``Lambda(H) = arccos(-rho(H)) / pi``."""
    out = np.arccos(-np.asarray(rho(hurst))) / np.pi
    return float(out) if out.ndim == 0 else out


#: ``Lambda(1)``, the supremum of the link function.
LAMBDA_MAX = lambda_of_hurst(1.0)


def _lambda_scalar(h: float) -> tuple[float, float]:
    # (Lambda(h), rho(h)) with plain floats; the Newton loop calls this often.
    t = h - 1.0
    if abs(t) < 1e-8:
        ratio = (_LN9 / _LN4) * (1.0 + 0.5 * t * (_LN9 - _LN4))
    else:
        ratio = math.expm1(t * _LN9) / math.expm1(t * _LN4)
    r = -2.0 + 1.125 * ratio
    return math.acos(-r) / math.pi, r


def _lambda_derivative(h: float) -> float:
    t = h - 1.0
    if abs(t) < 1e-6:
        dratio = (_LN9 / _LN4) * 0.5 * (_LN9 - _LN4)
    else:
        e9, e4 = math.expm1(t * _LN9), math.expm1(t * _LN4)
        dratio = (_LN9 * (e9 + 1.0) * e4 - _LN4 * (e4 + 1.0) * e9) / (e4 * e4)
    r = _lambda_scalar(h)[1]
    return 1.125 * dratio / (math.pi * math.sqrt(1.0 - r * r))


def hurst_of_lambda(lambda_value: float, tol: float = 1e-10, max_iter: int = 100) -> tuple[float, bool]:
    """Invert ``Lambda`` by safeguarded Newton iteration.

    Returns ``(hurst, clamped)``. Values at or below ``LAMBDA_MIN`` map to
    ``HURST_FLOOR`` and values at or above ``LAMBDA_MAX = Lambda(1)`` map to
    1.0; ``clamped`` is set unless the value equals ``LAMBDA_MAX`` exactly.
    """
    v = float(lambda_value)
    if not math.isfinite(v):
        raise ValueError(f"lambda_value must be finite, got {lambda_value!r}")
    if v <= LAMBDA_MIN:
        return HURST_FLOOR, True
    if v >= LAMBDA_MAX:
        return 1.0, v > LAMBDA_MAX

    lo, hi = 0.0, 1.0
    h = 0.5
    for _ in range(max_iter):
        resid = _lambda_scalar(h)[0] - v
        if abs(resid) <= tol:
            break
        if resid > 0:
            hi = h
        else:
            lo = h
        step = h - resid / _lambda_derivative(h)
        h = step if lo < step < hi else 0.5 * (lo + hi)
    return h, False


@dataclass(frozen=True)
class HurstEstimate:
    """Hurst estimate with its IBS value and CLT standard errors.

    ``ibs_std_error = sqrt(sigma2(H_hat) / n_pairs)`` is the standard error of
    the IBS value; ``std_error`` carries it to the Hurst scale through the
    slope of ``Lambda`` at ``H_hat``. ``clamped`` reports that the IBS value
    was outside the range of ``Lambda``; ``variance_clamped`` that ``H_hat``
    was outside the variance table grid.
    """

    hurst: float
    ibs: IbsValue
    std_error: float
    ibs_std_error: float
    clamped: bool = False
    variance_clamped: bool = False


def estimate_from_counts(count: int, n_pairs: int, variance_table: "VarianceTable") -> HurstEstimate:
    value = IbsValue(int(count), int(n_pairs))
    h, clamped = hurst_of_lambda(value.value)
    sigma2, var_clamped = variance_table.sigma_squared(h)
    ibs_se = math.sqrt(sigma2 / n_pairs)
    return HurstEstimate(
        hurst=h,
        ibs=value,
        std_error=ibs_se / _lambda_derivative(h),
        ibs_std_error=ibs_se,
        clamped=clamped,
        variance_clamped=var_clamped,
    )


def estimate_hurst(path, variance_table: "VarianceTable") -> HurstEstimate:
    """Estimate the Hurst index of ``path`` as ``Lambda^{-1}(IBS)``.

    ``sigma2`` is interpolated from ``variance_table``; see
    :class:`HurstEstimate` for the two standard errors.
    """
    v = ibs(path)
    return estimate_from_counts(v.count, v.n_pairs, variance_table)
