"""Filtered Derivative with p-Value (FDpV) detection of Hurst-index change points.

Index conventions
-----------------
For a path of ``m`` samples the sign-agreement sequence ``psi`` has
``P = m - 3`` entries, entry ``i`` depending on samples ``i .. i+3``. The
sliding-window IBS at ``k`` averages ``psi[k : k+A]``, i.e. the box that starts
at sample ``k``. The filtered derivative

    D(k, A) = IBS(k, A) - IBS(k - A, A),      A <= k <= P - A,

compares the box starting at ``k`` with the box ending just before it, so a
change point index ``k`` is reported in sample coordinates: the right-hand
segment starts at sample ``k``.
"""

from __future__ import annotations

import bisect
import json
import math
import time
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np
from scipy import stats

from ._validation import check_hurst, check_int, check_level, check_path
from .ibs import HurstEstimate, estimate_from_counts, hurst_of_lambda, psi_sequence
from .synthesis import fgn, make_rng
from .variance import VarianceTable

#: Flanking segments with fewer agreement pairs than this get ``p = 1``.
MIN_STEP2_PAIRS = 16
#: Smallest Monte-Carlo budget accepted for threshold calibration.
MIN_MC_REPLICATES = 100
#: Null Hurst values used for calibration are rounded to this many decimals.
NULL_HURST_DECIMALS = 2


@dataclass
class DetectorConfig:
    """Parameters of the two-step procedure.

    ``min_separation=None`` means "use ``window``".
    """

    window: int = 2000
    p1: float = 0.05
    p2: float = 0.05
    threshold_mode: str = "mc"
    mc_replicates: int = 500
    min_separation: int | None = None
    seed: int = 0

    def validate(self, length: int | None = None) -> "DetectorConfig":
        check_int(self.window, minimum=2, name="window")
        check_level(self.p1, name="p1", allow_one=True)
        check_level(self.p2, name="p2", allow_one=True)
        if self.threshold_mode not in ("mc", "gaussian"):
            raise ValueError(f"threshold_mode must be 'mc' or 'gaussian', got {self.threshold_mode!r}")
        if self.threshold_mode == "mc":
            check_int(self.mc_replicates, minimum=MIN_MC_REPLICATES, name="mc_replicates")
        if self.min_separation is not None:
            check_int(self.min_separation, minimum=1, name="min_separation")
        check_int(self.seed, minimum=0, name="seed")
        if length is not None and length <= 2 * self.window + 3:
            raise ValueError(
                f"series of {length} samples is too short for window {self.window}; "
                f"need more than {2 * self.window + 3}"
            )
        return self

    @property
    def separation(self) -> int:
        return self.window if self.min_separation is None else self.min_separation

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class FilteredDerivativeTrace:
    """``D(k, A)`` for ``k = window .. window + len(counts) - 1``.

    ``counts`` holds the exact integer difference of the two window sums;
    ``values = counts / window``.
    """

    counts: np.ndarray
    window: int

    @property
    def start(self) -> int:
        return self.window

    @property
    def values(self) -> np.ndarray:
        return self.counts / self.window

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.start, self.start + self.counts.shape[0])

    def __len__(self) -> int:
        return self.counts.shape[0]


class Candidate(NamedTuple):
    index: int
    height: float


class Step2Result(NamedTuple):
    index: int
    p_value: float
    statistic: float
    too_short: bool


@dataclass(frozen=True)
class SegmentEstimate:
    start: int
    end: int
    estimate: HurstEstimate

    def to_dict(self) -> dict:
        e = self.estimate
        return {
            "start": self.start,
            "end": self.end,
            "hurst": e.hurst,
            "std_error": e.std_error,
            "clamped": e.clamped or e.variance_clamped,
        }


@dataclass
class ChangePointReport:
    """Outcome of :func:`detect`."""

    config: DetectorConfig
    n_samples: int
    threshold_used: float
    hurst_null: float | None
    potential: list[Candidate]
    pvalues: list[Step2Result]
    retained: list[tuple[int, float]]
    segments: list[SegmentEstimate]
    timing: dict = field(default_factory=dict)

    @property
    def change_points(self) -> list[int]:
        return [k for k, _ in self.retained]

    @property
    def n_changes(self) -> int:
        return len(self.retained)

    def check(self) -> None:
        """Raise ``RuntimeError`` if the report is internally inconsistent."""
        idx = self.change_points
        if not set(idx) <= {c.index for c in self.potential}:
            raise RuntimeError("retained change points must be potential ones")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise RuntimeError("retained indices must be strictly increasing")
        if any(p > self.config.p2 for _, p in self.retained):
            raise RuntimeError("a retained p-value exceeds p2")
        if len(self.segments) != len(self.retained) + 1:
            raise RuntimeError("expected one segment more than retained change points")

    def to_dict(self, timing: bool = True) -> dict:
        out = {
            "config": self.config.to_dict(),
            "n_samples": self.n_samples,
            "threshold_mode": self.config.threshold_mode,
            "threshold_used": self.threshold_used,
            "hurst_null": self.hurst_null,
            "potential": [[c.index, c.height] for c in self.potential],
            "pvalues": [[r.index, r.p_value] for r in self.pvalues],
            "retained": [[k, p] for k, p in self.retained],
            "segments": [s.to_dict() for s in self.segments],
        }
        if timing:
            out["timing"] = dict(self.timing)
        return out

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def _count_dtype(n: int):
    # Window sums are exact in either type; int32 halves the memory traffic.
    return np.int32 if n < 2**31 - 1 else np.int64


def _prefix_counts(agree: np.ndarray) -> np.ndarray:
    prefix = np.zeros(agree.shape[-1] + 1, dtype=_count_dtype(agree.shape[-1]))
    np.cumsum(agree, out=prefix[1:])
    return prefix


def windowed_ibs(path, k: int, window: int) -> float:
    """Mean sign agreement on the box ``psi[k : k + window]``.

    ``windowed_ibs(path, 0, len(path) - 3)`` equals ``ibs(path).value``.
    """
    agree = psi_sequence(path)
    window = check_int(window, minimum=2, name="window")
    if not (0 <= k and k + window <= agree.shape[0]):
        raise IndexError(f"window [{k}, {k + window}) outside [0, {agree.shape[0]})")
    return int(np.count_nonzero(agree[k : k + window])) / window


def _trace_counts(prefix: np.ndarray, window: int) -> np.ndarray:
    # right(k) - left(k) = (c[k+A] - c[k]) - (c[k] - c[k-A]); each step of k
    # adds the entering terms and drops the leaving ones of both windows.
    a = window
    end = prefix.shape[-1] - a
    out = np.subtract(prefix[..., 2 * a :], prefix[..., a:end])
    out -= prefix[..., a:end]
    out += prefix[..., : end - a]
    return out


def filtered_derivative(path, window: int) -> FilteredDerivativeTrace:
    """Filtered derivative of the windowed IBS, computed in linear time."""
    x = check_path(path)
    window = check_int(window, minimum=2, name="window")
    if x.shape[0] <= 2 * window + 3:
        raise ValueError(f"need more than {2 * window + 3} samples for window {window}, got {x.shape[0]}")
    return FilteredDerivativeTrace(_trace_counts(_prefix_counts(psi_sequence(x)), window), window)


@lru_cache(maxsize=64)
def _mc_threshold(length: int, window: int, hurst: float, p1: float, replicates: int, seed: int) -> float:
    chunk = max(1, min(64, 2**22 // length))
    maxima = []
    for c, start in enumerate(range(0, replicates, chunk)):
        size = min(chunk, replicates - start)
        noise = fgn(hurst, length - 1, size=size, rng=make_rng(seed, c))
        nonneg = np.diff(noise, axis=-1) >= 0
        agree = nonneg[:, 1:] == nonneg[:, :-1]
        prefix = np.zeros((size, agree.shape[1] + 1), dtype=_count_dtype(agree.shape[1]))
        np.cumsum(agree, axis=1, out=prefix[:, 1:])
        maxima.append(np.abs(_trace_counts(prefix, window)).max(axis=1))
    return float(np.quantile(np.concatenate(maxima) / window, 1.0 - p1))


def calibrate_threshold(
    length: int,
    window: int,
    hurst_null: float,
    p1: float,
    mode: str = "mc",
    *,
    replicates: int = 500,
    seed: int = 0,
    variance_table: VarianceTable | None = None,
) -> float:
    """Step-1 critical value ``C1`` for ``max_k |D(k, A)|`` under no change.

    ``"mc"`` takes the empirical ``1 - p1`` quantile of the maximum over
    ``replicates`` simulated fBm paths with Hurst index ``hurst_null``.
    ``"gaussian"`` uses ``sqrt(2 sigma2(H) / A) * z_{1 - p1/(2M)}`` with
    ``M = floor((length - 2A) / A)`` and needs ``variance_table``.
    """
    length = check_int(length, minimum=4, name="length")
    window = check_int(window, minimum=2, name="window")
    if length <= 2 * window + 3:
        raise ValueError(f"need more than {2 * window + 3} samples for window {window}, got {length}")
    hurst_null = check_hurst(hurst_null)
    p1 = check_level(p1, name="p1", allow_one=True)
    if p1 >= 1.0:
        return 0.0
    if mode == "mc":
        check_int(replicates, minimum=MIN_MC_REPLICATES, name="replicates")
        return _mc_threshold(length, window, hurst_null, p1, int(replicates), int(seed))
    if mode == "gaussian":
        if variance_table is None:
            raise ValueError("gaussian threshold mode needs a variance table")
        sigma2, _ = variance_table.sigma_squared(hurst_null)
        m = max(1, (length - 2 * window) // window)
        return math.sqrt(2.0 * sigma2 / window) * float(stats.norm.isf(p1 / (2 * m)))
    raise ValueError(f"mode must be 'mc' or 'gaussian', got {mode!r}")


def select_potential(
    trace: FilteredDerivativeTrace, threshold: float, min_separation: int | None = None
) -> list[Candidate]:
    """Local maxima of ``|D|`` above ``threshold``, thinned to ``min_separation``.

    Flat maxima are located at their first index. Peaks are accepted in
    decreasing height (ties to the smaller index) and a peak closer than
    ``min_separation`` to an accepted one is dropped. The result is sorted by
    index.
    """
    if threshold < 0:
        raise ValueError(f"threshold must be non-negative, got {threshold}")
    sep = trace.window if min_separation is None else check_int(min_separation, minimum=1, name="min_separation")
    counts = trace.counts
    n = counts.shape[0]
    if n == 0:
        return []
    a = np.abs(counts)
    # Only entries above the threshold can be retained; ``cut`` errs low so the
    # exact test ``value / window > threshold`` below decides every survivor.
    cut = max(math.floor(threshold * trace.window) - 1, -1)
    idx = np.flatnonzero(a > cut)
    vals = a[idx]
    exact = vals / trace.window > threshold
    idx, vals = idx[exact], vals[exact]
    # Runs of equal values above the cut are contiguous in ``idx``.
    starts_run = (idx == 0) | (a[np.maximum(idx - 1, 0)] != vals)
    ends_run = (idx == n - 1) | (a[np.minimum(idx + 1, n - 1)] != vals)
    first, last, vals = idx[starts_run], idx[ends_run], vals[starts_run]
    before = np.where(first > 0, a[np.maximum(first - 1, 0)], -1)
    after = np.where(last < n - 1, a[np.minimum(last + 1, n - 1)], -1)
    keep = (vals > before) & (vals > after)
    starts, vals = first[keep], vals[keep]

    accepted: list[int] = []
    for i in np.lexsort((starts, -vals)):
        pos = int(starts[i])
        j = bisect.bisect_left(accepted, pos)
        if j > 0 and pos - accepted[j - 1] < sep:
            continue
        if j < len(accepted) and accepted[j] - pos < sep:
            continue
        accepted.insert(j, pos)
    height = dict(zip(starts.tolist(), (vals / trace.window).tolist()))
    return [Candidate(trace.start + p, height[p]) for p in accepted]


def _candidate_indices(candidates) -> list[int]:
    return [int(c.index) if isinstance(c, Candidate) else int(c) for c in candidates]


def _step2_from_prefix(prefix: np.ndarray, indices: Sequence[int], table: VarianceTable) -> list[Step2Result]:
    n_pairs = prefix.shape[0] - 1
    bounds = [0, *indices, n_pairs]
    out = []
    for i, k in enumerate(indices, start=1):
        lo, hi = bounds[i - 1], bounds[i + 1]
        m_left, m_right = k - lo, hi - k
        if min(m_left, m_right) < MIN_STEP2_PAIRS:
            out.append(Step2Result(k, 1.0, 0.0, True))
            continue
        c_left = int(prefix[k] - prefix[lo])
        c_right = int(prefix[hi] - prefix[k])
        pooled, _ = hurst_of_lambda((c_left + c_right) / (m_left + m_right))
        sigma2, _ = table.sigma_squared(pooled)
        se = math.sqrt(sigma2 * (1.0 / m_left + 1.0 / m_right))
        z = (c_left / m_left - c_right / m_right) / se
        out.append(Step2Result(k, math.erfc(abs(z) / math.sqrt(2.0)), z, False))
    return out


def step2_pvalues(path, candidates, variance_table: VarianceTable) -> list[Step2Result]:
    """Two-sample test of equal IBS on both sides of every candidate.

    The flanks of candidate ``k`` run to the neighbouring candidates (or to
    the ends of the series). The statistic is
    ``(IBS_L - IBS_R) / sqrt(sigma2(H_pool) (1/m_L + 1/m_R))`` and the p-value
    is its two-sided normal tail.
    """
    agree = psi_sequence(path)
    indices = _candidate_indices(candidates)
    if any(b <= a for a, b in zip(indices, indices[1:])):
        raise ValueError("candidates must be sorted by strictly increasing index")
    if indices and not (0 < indices[0] and indices[-1] < agree.shape[0]):
        raise IndexError("candidate index outside the series")
    return _step2_from_prefix(_prefix_counts(agree), indices, variance_table)


def detect(
    path,
    config: DetectorConfig | None = None,
    variance_table: VarianceTable | None = None,
    threshold: float | None = None,
) -> ChangePointReport:
    """Run the full two-step procedure on ``path``.

    Parameters
    ----------
    path : array-like of shape (n_samples,)
    config : DetectorConfig, optional
    variance_table : VarianceTable
        Tabulated ``sigma2(H)``, used by Step 2 and the segment estimates.
    threshold : float, optional
        Precomputed ``C1``. When omitted it is calibrated under the null
        ``H = H_hat`` of the whole path, rounded to two decimals and kept in
        ``[0.01, 0.99]``.
    """
    config = DetectorConfig() if config is None else config
    if variance_table is None:
        raise ValueError("detect needs a variance table")
    t0 = time.perf_counter()
    x = check_path(path)
    config.validate(x.shape[0])
    prefix = _prefix_counts(psi_sequence(x))
    n_pairs = prefix.shape[0] - 1
    trace = FilteredDerivativeTrace(_trace_counts(prefix, config.window), config.window)

    calibration_s = 0.0
    hurst_null = None
    if threshold is None:
        h, _ = hurst_of_lambda(int(prefix[-1]) / n_pairs)
        hurst_null = min(max(round(h, NULL_HURST_DECIMALS), 0.01), 0.99)
        t1 = time.perf_counter()
        threshold = calibrate_threshold(
            x.shape[0],
            config.window,
            hurst_null,
            config.p1,
            config.threshold_mode,
            replicates=config.mc_replicates,
            seed=config.seed,
            variance_table=variance_table,
        )
        calibration_s = time.perf_counter() - t1

    potential = select_potential(trace, threshold, config.separation)
    pvalues = _step2_from_prefix(prefix, [c.index for c in potential], variance_table)
    retained = [(r.index, r.p_value) for r in pvalues if r.p_value <= config.p2]

    bounds = [0, *(k for k, _ in retained), n_pairs]
    ends = [*(k for k, _ in retained), x.shape[0] - 1]
    segments = [
        SegmentEstimate(
            lo, end, estimate_from_counts(int(prefix[hi] - prefix[lo]), hi - lo, variance_table)
        )
        for lo, hi, end in zip(bounds[:-1], bounds[1:], ends)
    ]
    total_s = time.perf_counter() - t0
    report = ChangePointReport(
        config=config,
        n_samples=int(x.shape[0]),
        threshold_used=float(threshold),
        hurst_null=hurst_null,
        potential=potential,
        pvalues=pvalues,
        retained=retained,
        segments=segments,
        timing={
            "calibration_ms": 1e3 * calibration_s,
            "detection_ms": 1e3 * (total_s - calibration_s),
        },
    )
    report.check()
    return report
