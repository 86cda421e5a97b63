"""Exact simulation of fractional Gaussian noise and piecewise fractional Brownian motion.

Paths are sampled on the grid ``t_i = i/n`` (``i = 0..n``): a segment with
Hurst index ``H`` and scale ``sigma`` contributes increments
``sigma * n**(-H) * G`` where ``G`` is unit-variance fractional Gaussian noise.
Stationary noise is drawn by circulant embedding of its Toeplitz covariance,
with a dense Cholesky fallback for short series.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.fft
import scipy.linalg

from ._validation import check_hurst, check_int

#: Relative tolerance on negative circulant eigenvalues (w.r.t. the largest one).
EIGEN_TOL = 1e-10
#: Largest series length for which the dense Cholesky fallback is allowed.
DENSE_CAP = 4096


class SimulationError(RuntimeError):
    """Raised when no exact sampler is available for the requested series."""


def make_rng(seed, *key: int) -> np.random.Generator:
    """Generator for the stream ``key`` of a master ``seed``.

    Streams are independent of each other and of the order in which they are
    requested, which keeps batched and per-segment simulation reproducible.
    """
    if isinstance(seed, np.random.SeedSequence):
        ss = np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + key)
    else:
        ss = np.random.SeedSequence(seed, spawn_key=key)
    return np.random.default_rng(ss)


def fgn_autocovariance(hurst: float, lag):
    """Autocovariance of unit-variance fractional Gaussian noise.

    ``gamma(k) = (|k+1|^{2H} - 2|k|^{2H} + |k-1|^{2H}) / 2``. ``lag`` may be a
    scalar or an array of integers; negative lags are folded by symmetry.
    """
    h2 = 2.0 * check_hurst(hurst)
    k = np.abs(np.asarray(lag, dtype=np.float64))
    gamma = 0.5 * (np.abs(k + 1.0) ** h2 - 2.0 * k**h2 + np.abs(k - 1.0) ** h2)
    if np.ndim(gamma) == 0:
        return float(gamma)
    return gamma


@lru_cache(maxsize=8)
def _circulant_sqrt_eigenvalues(hurst: float, m: int) -> np.ndarray | None:
    row = fgn_autocovariance(hurst, np.concatenate([np.arange(m + 1), np.arange(m - 1, 0, -1)]))
    eig = scipy.fft.rfft(row).real
    if eig.min() < -EIGEN_TOL * eig.max():
        return None
    eig = np.clip(eig, 0.0, None)
    # Expand the half-spectrum back to full length 2m (eigenvalues are symmetric).
    full = np.concatenate([eig, eig[-2:0:-1]])
    out = np.sqrt(full / (2 * m))
    out.setflags(write=False)
    return out


@lru_cache(maxsize=4)
def _cholesky_factor(hurst: float, n: int) -> np.ndarray:
    cov = scipy.linalg.toeplitz(fgn_autocovariance(hurst, np.arange(n)))
    factor = np.linalg.cholesky(cov)
    factor.setflags(write=False)
    return factor


def fgn(
    hurst: float,
    n: int,
    size: int | None = None,
    rng: np.random.Generator | None = None,
    method: str = "auto",
) -> np.ndarray:
    """Sample unit-variance fractional Gaussian noise.

    Parameters
    ----------
    hurst : float
        Hurst index in (0, 1).
    n : int
        Number of noise values per replicate.
    size : int, optional
        Number of independent replicates. ``None`` returns a 1-D array.
    rng : numpy.random.Generator, optional
    method : {"auto", "circulant", "cholesky"}
        ``"auto"`` uses circulant embedding and falls back to the dense
        factorization when the embedding is not non-negative definite.

    Returns
    -------
    ndarray of shape ``(n,)`` or ``(size, n)``.
    """
    hurst = check_hurst(hurst)
    n = check_int(n, minimum=1, name="n")
    rows = 1 if size is None else check_int(size, minimum=1, name="size")
    rng = np.random.default_rng() if rng is None else rng
    if method not in ("auto", "circulant", "cholesky"):
        raise ValueError(f"unknown method {method!r}")

    out = None
    if method in ("auto", "circulant"):
        m = scipy.fft.next_fast_len(max(n, 2))
        sqrt_eig = _circulant_sqrt_eigenvalues(hurst, m)
        if sqrt_eig is not None:
            out = _circulant_draw(sqrt_eig, n, rows, rng)
        elif method == "circulant":
            raise SimulationError(f"circulant embedding is not valid for H={hurst}, n={n}")
    if out is None:
        if n > DENSE_CAP:
            raise SimulationError(
                f"circulant embedding failed and n={n} exceeds the dense cap {DENSE_CAP}"
            )
        factor = _cholesky_factor(hurst, n)
        out = rng.standard_normal((rows, n)) @ factor.T
    return out[0] if size is None else out


def _circulant_draw(sqrt_eig: np.ndarray, n: int, rows: int, rng: np.random.Generator) -> np.ndarray:
    # Real and imaginary parts of one complex draw are independent samples.
    pairs = (rows + 1) // 2
    two_m = sqrt_eig.shape[0]
    z = rng.standard_normal((pairs, two_m)) + 1j * rng.standard_normal((pairs, two_m))
    y = scipy.fft.fft(z * sqrt_eig, axis=-1)[:, :n]
    out = np.empty((2 * pairs, n))
    out[0::2] = y.real
    out[1::2] = y.imag
    return out[:rows]


def simulate_fbm(hurst: float, scale: float = 1.0, n_samples: int = 1024, seed=None) -> np.ndarray:
    """Sample fractional Brownian motion at ``t_i = i/n``, ``i = 0..n``.

    ``n_samples = n + 1`` values are returned, starting at exactly 0. The
    increments have variance ``scale**2 * n**(-2H)``. The result depends only
    on ``(hurst, scale, n_samples, seed)``.
    """
    hurst = check_hurst(hurst)
    scale = _check_scale(scale)
    n_samples = check_int(n_samples, minimum=4, name="n_samples")
    steps = n_samples - 1
    noise = fgn(hurst, steps, rng=make_rng(seed, 0))
    path = np.empty(n_samples)
    path[0] = 0.0
    np.cumsum(noise * (scale * float(steps) ** (-hurst)), out=path[1:])
    return path


def _check_scale(scale) -> float:
    s = float(scale)
    if not (np.isfinite(s) and s > 0):
        raise ValueError(f"scale must be a positive real, got {scale!r}")
    return s


@dataclass(frozen=True)
class SegmentSpec:
    """One constant-parameter piece: Hurst index, scale and number of steps.

    ``length`` counts the increments the segment contributes, so consecutive
    segments share their boundary sample.
    """

    hurst: float
    scale: float = 1.0
    length: int = 1000

    def __post_init__(self):
        object.__setattr__(self, "hurst", check_hurst(self.hurst))
        object.__setattr__(self, "scale", _check_scale(self.scale))
        object.__setattr__(self, "length", check_int(self.length, minimum=2, name="length"))


@dataclass(frozen=True)
class PiecewiseModel:
    """Ground-truth segmentation of a piecewise fBm."""

    segments: tuple[SegmentSpec, ...]

    def __post_init__(self):
        segs = tuple(self.segments)
        if not segs:
            raise ValueError("a model needs at least one segment")
        for i, s in enumerate(segs):
            if not isinstance(s, SegmentSpec):
                raise TypeError(f"segment {i} is not a SegmentSpec")
        object.__setattr__(self, "segments", segs)

    @property
    def boundaries(self) -> np.ndarray:
        """``tau_0 = 0 < tau_1 < ... < tau_{K+1} = n`` as sample indices."""
        return np.concatenate([[0], np.cumsum([s.length for s in self.segments])])

    @property
    def change_points(self) -> list[int]:
        return [int(t) for t in self.boundaries[1:-1]]

    @property
    def n_changes(self) -> int:
        return len(self.segments) - 1

    @property
    def total_length(self) -> int:
        return int(self.boundaries[-1]) + 1

    def to_dict(self) -> dict:
        return {
            "segments": [
                {"hurst": s.hurst, "scale": s.scale, "length": s.length} for s in self.segments
            ]
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PiecewiseModel":
        if not isinstance(data, dict) or not isinstance(data.get("segments"), list):
            raise ValueError("model document must be an object with a 'segments' list")
        segments = []
        for i, raw in enumerate(data["segments"]):
            if not isinstance(raw, dict):
                raise ValueError(f"segment {i}: expected an object")
            unknown = set(raw) - {"hurst", "scale", "length"}
            if unknown:
                raise ValueError(f"segment {i}: unknown field(s) {sorted(unknown)}")
            if "hurst" not in raw or "length" not in raw:
                raise ValueError(f"segment {i}: 'hurst' and 'length' are required")
            try:
                segments.append(SegmentSpec(**raw))
            except (TypeError, ValueError) as exc:
                raise ValueError(f"segment {i}: {exc}") from None
        return cls(tuple(segments))

    @classmethod
    def from_segments(cls, hursts: Sequence[float], lengths, scales=1.0) -> "PiecewiseModel":
        k = len(hursts)
        lengths = np.broadcast_to(lengths, (k,))
        scales = np.broadcast_to(scales, (k,))
        return cls(tuple(SegmentSpec(float(h), float(s), int(n)) for h, s, n in zip(hursts, scales, lengths)))

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "PiecewiseModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def simulate_piecewise_fbm(model: PiecewiseModel, seed=None) -> tuple[np.ndarray, list[int]]:
    """Sample a continuous piecewise fBm and return it with its change indices.

    Each segment is an independent fBm (stream ``k`` of ``seed``) shifted so
    that it starts where the previous one ended, which makes the path
    continuous at every change point. With a single segment the output equals
    ``simulate_fbm`` for the same seed.
    """
    n = model.total_length - 1
    path = np.empty(model.total_length)
    path[0] = 0.0
    start = 0
    for k, seg in enumerate(model.segments):
        noise = fgn(seg.hurst, seg.length, rng=make_rng(seed, k))
        stop = start + seg.length
        np.cumsum(noise * (seg.scale * float(n) ** (-seg.hurst)), out=path[start + 1 : stop + 1])
        if k:
            path[start + 1 : stop + 1] += path[start]
        start = stop
    return path, model.change_points
