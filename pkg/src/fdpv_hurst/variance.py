"""Calibration and persistence of the asymptotic IBS variance ``sigma2(H)``.

``sqrt(n) (IBS_n - Lambda(H))`` is asymptotically normal with variance
``sigma2(H) = sum_j cov(psi_0, psi_j)``. No closed form is available, so the
variance is tabulated on a grid of Hurst values by simulation:

* ``"mc"``: ``n_pairs * Var(IBS)`` over independent replicates of exact fBm;
* ``"sum"``: the covariance series truncated at ``|j| <= lags``, each lagged
  product moment estimated from one long pool of exact sign-agreement
  sequences.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ._validation import check_hurst, check_int
from .ibs import lambda_of_hurst
from .synthesis import fgn, make_rng

#: Environment variable naming the directory used to cache calibrated tables.
CACHE_ENV = "FDPV_HURST_CACHE"

DEFAULT_GRID = tuple(round(0.05 * i, 2) for i in range(1, 20))
DEFAULT_MC = {"n": 2**14, "replicates": 2000}
DEFAULT_SUM = {"lags": 20, "pool_size": 2**22, "pool_length": 2**16}
DEFAULT_SEED = 7

_CHUNK = 64


class CalibrationError(RuntimeError):
    """A calibrated variance came out non-positive; more replicates are needed."""


@dataclass(frozen=True)
class VarianceTable:
    """Tabulated ``sigma2(H)`` with linear interpolation between grid points."""

    hurst: tuple[float, ...]
    sigma2: tuple[float, ...]
    mode: str = "mc"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        h = tuple(float(v) for v in self.hurst)
        s = tuple(float(v) for v in self.sigma2)
        if len(h) != len(s) or not h:
            raise ValueError("hurst and sigma2 must be non-empty and of equal length")
        if any(b <= a for a, b in zip(h, h[1:])):
            raise ValueError("hurst grid must be strictly increasing")
        if any(not (v > 0 and math.isfinite(v)) for v in s):
            raise ValueError("sigma2 must be positive and finite at every grid point")
        object.__setattr__(self, "hurst", h)
        object.__setattr__(self, "sigma2", s)
        object.__setattr__(self, "params", dict(self.params))

    def sigma_squared(self, hurst: float) -> tuple[float, bool]:
        """Interpolated ``sigma2`` at ``hurst`` and whether it was clamped to the grid."""
        h = float(hurst)
        clamped = h < self.hurst[0] or h > self.hurst[-1]
        return float(np.interp(h, self.hurst, self.sigma2)), clamped

    def to_dict(self) -> dict:
        out = {"mode": self.mode}
        out.update(self.params)
        out["grid"] = [[h, s] for h, s in zip(self.hurst, self.sigma2)]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "VarianceTable":
        try:
            grid = data["grid"]
            mode = data["mode"]
        except (KeyError, TypeError):
            raise ValueError("variance table needs 'mode' and 'grid'") from None
        params = {k: v for k, v in data.items() if k not in ("mode", "grid")}
        return cls(tuple(g[0] for g in grid), tuple(g[1] for g in grid), mode, params)

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "VarianceTable":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _stream_key(hurst: float) -> int:
    # Keyed by H rather than grid position so a grid point's value does not
    # depend on the rest of the grid.
    return int(round(hurst * 1_000_000))


def _agreements(noise: np.ndarray) -> np.ndarray:
    # Second-order increments of the cumulated path are first differences of the noise.
    nonneg = np.diff(noise, axis=-1) >= 0
    return nonneg[..., 1:] == nonneg[..., :-1]


def _mc_sigma2(hurst: float, n: int, replicates: int, seed) -> float:
    key = _stream_key(hurst)
    values = []
    for c, start in enumerate(range(0, replicates, _CHUNK)):
        size = min(_CHUNK, replicates - start)
        noise = fgn(hurst, n - 1, size=size, rng=make_rng(seed, key, c))
        values.append(np.count_nonzero(_agreements(noise), axis=-1))
    counts = np.concatenate(values)
    n_pairs = n - 3
    return float(n_pairs * np.var(counts / n_pairs, ddof=1))


def _sum_sigma2(hurst: float, lags: int, pool_size: int, pool_length: int, seed) -> float:
    key = _stream_key(hurst)
    n_paths = max(1, -(-pool_size // (pool_length - 3)))
    moments = np.zeros(lags + 1)
    terms = np.zeros(lags + 1)
    for c, start in enumerate(range(0, n_paths, _CHUNK)):
        size = min(_CHUNK, n_paths - start)
        noise = fgn(hurst, pool_length - 1, size=size, rng=make_rng(seed, key, c))
        agree = _agreements(noise).astype(np.float64)
        width = agree.shape[-1]
        for j in range(lags + 1):
            moments[j] += np.einsum("ij,ij->", agree[:, : width - j], agree[:, j:])
            terms[j] += size * (width - j)
    lam = lambda_of_hurst(hurst)
    cov = moments / terms - lam * lam
    return float(cov[0] + 2.0 * cov[1:].sum())


def calibrate_variance(
    hurst_grid: Sequence[float] = DEFAULT_GRID,
    mode: str = "mc",
    *,
    n: int = DEFAULT_MC["n"],
    replicates: int = DEFAULT_MC["replicates"],
    lags: int = DEFAULT_SUM["lags"],
    pool_size: int = DEFAULT_SUM["pool_size"],
    pool_length: int = DEFAULT_SUM["pool_length"],
    seed: int = DEFAULT_SEED,
    progress: Callable[[float, float], None] | None = None,
) -> VarianceTable:
    """Tabulate ``sigma2(H)`` on ``hurst_grid``.

    Parameters
    ----------
    hurst_grid : sequence of float
        Strictly increasing Hurst values in (0, 1).
    mode : {"mc", "sum"}
    n, replicates : int
        Path length and replicate count of the ``"mc"`` mode.
    lags, pool_size, pool_length : int
        Truncation lag, total number of pooled agreement indicators and
        length of each pooled path for the ``"sum"`` mode.
    seed : int
        Master seed; every grid point draws from its own derived stream.
    progress : callable, optional
        Called as ``progress(hurst, sigma2)`` after each grid point.

    Raises
    ------
    CalibrationError
        If an estimate is not positive.
    """
    grid = [check_hurst(h) for h in hurst_grid]
    if mode == "mc":
        n = check_int(n, minimum=8, name="n")
        replicates = check_int(replicates, minimum=2, name="replicates")
        params = {"n": n, "replicates": replicates, "seed": seed}
    elif mode == "sum":
        lags = check_int(lags, minimum=0, name="lags")
        pool_length = check_int(pool_length, minimum=lags + 8, name="pool_length")
        pool_size = check_int(pool_size, minimum=1, name="pool_size")
        params = {"lags": lags, "pool_size": pool_size, "pool_length": pool_length, "seed": seed}
    else:
        raise ValueError(f"mode must be 'mc' or 'sum', got {mode!r}")

    values = []
    for h in grid:
        if mode == "mc":
            s2 = _mc_sigma2(h, n, replicates, seed)
        else:
            s2 = _sum_sigma2(h, lags, pool_size, pool_length, seed)
        if not s2 > 0:
            raise CalibrationError(f"non-positive variance {s2!r} at H={h}; increase the sample size")
        values.append(s2)
        if progress is not None:
            progress(h, s2)
    return VarianceTable(tuple(grid), tuple(values), mode, params)


def default_cache_dir() -> Path | None:
    value = os.environ.get(CACHE_ENV)
    return Path(value) if value else None


def cache_filename(hurst_grid: Sequence[float], mode: str, **params) -> str:
    key = json.dumps({"grid": [float(h) for h in hurst_grid], "mode": mode, **params}, sort_keys=True)
    return f"variance-{mode}-{hashlib.sha1(key.encode()).hexdigest()[:12]}.json"


def cached_variance_table(
    hurst_grid: Sequence[float] = DEFAULT_GRID,
    mode: str = "mc",
    cache_dir: str | os.PathLike | None = None,
    **kwargs,
) -> VarianceTable:
    """Like :func:`calibrate_variance`, reusing a table stored in ``cache_dir``.

    ``cache_dir`` defaults to the ``FDPV_HURST_CACHE`` environment variable;
    without either, the table is calibrated and not stored.
    """
    progress = kwargs.pop("progress", None)
    directory = Path(cache_dir) if cache_dir is not None else default_cache_dir()
    defaults = dict(DEFAULT_MC if mode == "mc" else DEFAULT_SUM, seed=DEFAULT_SEED)
    defaults.update(kwargs)
    if directory is None:
        return calibrate_variance(hurst_grid, mode, progress=progress, **defaults)
    target = directory / cache_filename(hurst_grid, mode, **defaults)
    if target.exists():
        return VarianceTable.load(target)
    table = calibrate_variance(hurst_grid, mode, progress=progress, **defaults)
    directory.mkdir(parents=True, exist_ok=True)
    table.save(target)
    return table
