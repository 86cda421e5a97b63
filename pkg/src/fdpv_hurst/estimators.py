"""scikit-learn compatible wrappers around the IBS estimator and the FDpV detector."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_path
from .detector import DetectorConfig, detect
from .ibs import estimate_hurst
from .variance import VarianceTable, cached_variance_table


def _resolve_table(table) -> VarianceTable:
    if table is None:
        return cached_variance_table()
    if isinstance(table, VarianceTable):
        return table
    return VarianceTable.load(table)


class IBSHurstEstimator(TransformerMixin, BaseEstimator):
    """Map each path (row of ``X``) to its IBS Hurst estimate.

    Parameters
    ----------
    variance_table : VarianceTable, path-like or None
        Table of ``sigma2(H)`` used for standard errors. ``None`` calibrates
        (or loads from the ``FDPV_HURST_CACHE`` directory) the default table.
    return_std : bool
        When true, :meth:`transform` returns ``[hurst, std_error]`` columns.

    Attributes
    ----------
    variance_table_ : VarianceTable
    """

    def __init__(self, variance_table=None, return_std=False):
        self.variance_table = variance_table
        self.return_std = return_std

    def fit(self, X=None, y=None):
        self.variance_table_ = _resolve_table(self.variance_table)
        return self

    def transform(self, X):
        check_is_fitted(self, "variance_table_")
        rows = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if rows.ndim != 2:
            raise ValueError(f"expected a 2-D array of paths, got shape {rows.shape}")
        est = [estimate_hurst(check_path(r), self.variance_table_) for r in rows]
        if self.return_std:
            return np.array([[e.hurst, e.std_error] for e in est])
        return np.array([[e.hurst] for e in est])

    def estimate(self, path):
        """Full :class:`~fdpv_hurst.ibs.HurstEstimate` for a single path."""
        check_is_fitted(self, "variance_table_")
        return estimate_hurst(path, self.variance_table_)


class FDpVDetector(ClusterMixin, BaseEstimator):
    """Two-step change point detector on the Hurst index.

    ``fit(X)`` runs the detection on the 1-D series ``X``; ``fit_predict``
    returns one segment label per sample.

    Attributes
    ----------
    report_ : ChangePointReport
    change_points_ : list of int
        Sample index where each detected new segment starts.
    n_change_points_ : int
    labels_ : ndarray of shape (n_samples,)
    """

    def __init__(
        self,
        window=2000,
        p1=0.05,
        p2=0.05,
        threshold_mode="mc",
        mc_replicates=500,
        min_separation=None,
        seed=0,
        variance_table=None,
        threshold=None,
    ):
        self.window = window
        self.p1 = p1
        self.p2 = p2
        self.threshold_mode = threshold_mode
        self.mc_replicates = mc_replicates
        self.min_separation = min_separation
        self.seed = seed
        self.variance_table = variance_table
        self.threshold = threshold

    def _config(self) -> DetectorConfig:
        return DetectorConfig(
            window=self.window,
            p1=self.p1,
            p2=self.p2,
            threshold_mode=self.threshold_mode,
            mc_replicates=self.mc_replicates,
            min_separation=self.min_separation,
            seed=self.seed,
        )

    def fit(self, X, y=None):
        x = check_path(X, name="X")
        self.variance_table_ = _resolve_table(self.variance_table)
        self.report_ = detect(x, self._config(), self.variance_table_, threshold=self.threshold)
        self.change_points_ = self.report_.change_points
        self.n_change_points_ = self.report_.n_changes
        self.labels_ = np.searchsorted(self.change_points_, np.arange(x.shape[0]), side="right")
        return self

    def segment_hurst(self) -> np.ndarray:
        """Hurst estimate of every detected segment."""
        check_is_fitted(self, "report_")
        return np.array([s.estimate.hurst for s in self.report_.segments])
