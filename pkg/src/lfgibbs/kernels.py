"""Smoothing kernels, scaled distances and importance ratios.

Conventions used throughout the package:
  - distances are non-negative scalars produced by ``scaled_distance``,
  - kernels are unnormalized (only weight ratios matter downstream),
  - an infinite bandwidth is legal and makes every sample weight equal,
  - importance ratios are prior/proposal density ratios evaluated in log
    space so that zero-prior samples get exact zero weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

__all__ = [
    "KernelSpec",
    "DistanceScaling",
    "kernel_weight",
    "knn_bandwidth",
    "scaled_distance",
    "importance_ratio",
]

_TIE_MARGIN = 1e-9
_SCALE_FLOOR = 1e-12


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus bandwidth.

    kind: "uniform" or "epanechnikov".
    bandwidth: positive, possibly infinite.  With an infinite bandwidth the
    uniform kernel weights every point equally; the Epanechnikov kernel
    degenerates the same way (the quadratic correction vanishes).
    """

    kind: str = "uniform"
    bandwidth: float = math.inf

    def __post_init__(self):
        if self.kind not in ("uniform", "epanechnikov"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")

    def with_bandwidth(self, h: float) -> "KernelSpec":
        return KernelSpec(self.kind, h)


def kernel_weight(distance: Union[float, np.ndarray], spec: KernelSpec) -> Union[float, np.ndarray]:
    """Unnormalized kernel value at the given distance(s).

    Uniform: 1 inside the bandwidth, 0 at or beyond it.
    Epanechnikov: max(0, 1 - (d/h)^2).
    Both return 1 everywhere for an infinite bandwidth.
    """
    d = np.asarray(distance, dtype=float)
    if np.any(d < 0):
        raise ValueError("distances must be non-negative")
    h = spec.bandwidth
    if math.isinf(h):
        out = np.ones_like(d)
    elif spec.kind == "uniform":
        out = (d < h).astype(float)
    else:
        u = d / h
        out = np.maximum(0.0, 1.0 - u * u)
    if np.ndim(distance) == 0:
        return float(out)
    return out


def knn_bandwidth(distances: np.ndarray, m: int) -> float:
    """Bandwidth that keeps the m nearest points inside the kernel support.

    Returns the m-th smallest distance inflated by a relative margin of 1e-9
    so ties at the boundary stay inside (the uniform kernel has an open
    support check, and exact ties would otherwise drop out).
    """
    d = np.asarray(distances, dtype=float)
    if d.ndim != 1 or d.size == 0:
        raise ValueError("distances must be a non-empty 1-d array")
    if not 1 <= m <= d.size:
        raise ValueError(f"m must be in [1, {d.size}], got {m}")
    kth = np.partition(d, m - 1)[m - 1]
    return float(kth) * (1.0 + _TIE_MARGIN)


@dataclass(frozen=True)
class DistanceScaling:
    """Per-coordinate scale factors for the distance metric.

    Scales are typically the weighted sample standard deviations of each
    coordinate over a reference table, floored at 1e-12 so constant
    coordinates do not produce infinities.
    """

    scales: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scales, dtype=float)
        if s.ndim != 1:
            raise ValueError("scales must be a 1-d array")
        if np.any(~np.isfinite(s)) or np.any(s <= 0):
            raise ValueError("scales must be positive and finite")
        object.__setattr__(self, "scales", s)

    @classmethod
    def identity(cls, dim: int) -> "DistanceScaling":
        return cls(np.ones(dim))

    @classmethod
    def from_samples(cls, x: np.ndarray, weights: Optional[np.ndarray] = None) -> "DistanceScaling":
        """Weighted per-coordinate standard deviations of the rows of x."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if weights is None:
            w = np.full(x.shape[0], 1.0 / x.shape[0])
        else:
            w = np.asarray(weights, dtype=float)
            if w.shape != (x.shape[0],):
                raise ValueError("weights must match the number of rows")
            if np.any(w < 0) or w.sum() <= 0:
                raise ValueError("weights must be non-negative with positive sum")
            w = w / w.sum()
        mean = w @ x
        var = w @ (x - mean) ** 2
        return cls(np.maximum(np.sqrt(var), _SCALE_FLOOR))


def scaled_distance(a: np.ndarray, b: np.ndarray, scaling: DistanceScaling) -> Union[float, np.ndarray]:
    """Diagonally scaled Euclidean distance sqrt(sum ((a_j-b_j)/s_j)^2).

    Accepts a single vector or a matrix of row vectors for ``a``; ``b`` is a
    single vector.  Dimensions must match the scaling.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    s = scaling.scales
    if b.shape != s.shape:
        raise ValueError(f"b has shape {b.shape}, expected {s.shape}")
    if a.shape[-1] != s.size:
        raise ValueError(f"a has last dimension {a.shape[-1]}, expected {s.size}")
    z = (a - b) / s
    out = np.sqrt(np.sum(z * z, axis=-1))
    if a.ndim == 1:
        return float(out)
    return out


def importance_ratio(log_prior: float, log_proposal: float) -> float:
    """Prior/proposal density ratio exp(log_prior - log_proposal).

    A sample outside the prior support (log_prior = -inf) gets ratio 0.  A
    sample outside the proposal support but inside the prior support cannot
    have been drawn from the proposal, so that combination is an error.
    """
    if np.isnan(log_prior) or np.isnan(log_proposal):
        raise ValueError("log densities must not be NaN")
    if log_prior == -math.inf:
        return 0.0
    if log_proposal == -math.inf:
        raise ValueError("sample has zero proposal density but positive prior density")
    return math.exp(log_prior - log_proposal)
