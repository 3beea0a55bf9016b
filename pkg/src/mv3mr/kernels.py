"""Per-view scalar kernels: distances, exponential kernels, trace normalization."""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist


class DistanceMetric(str, enum.Enum):
    L1 = "l1"
    L2 = "l2"
    CHI2 = "chi2"
    LINEAR = "linear"

    @classmethod
    def parse(cls, value: "str | DistanceMetric") -> "DistanceMetric":
        if isinstance(value, cls):
            return value
        aliases = {"chisquared": "chi2", "chi_squared": "chi2", "precomputedlinear": "linear"}
        key = str(value).strip().lower()
        return cls(aliases.get(key, key))


class DegenerateKernelWarning(UserWarning):
    """All pairwise distances are zero, so the exponential kernel is all ones."""


def _as_features(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise ValueError(f"feature matrix must be 2-D and non-empty, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("feature matrix contains non-finite entries")
    return X


def chi2_distance(A, B) -> np.ndarray:
    """Sum over coordinates of (x - y)^2 / (x + y), with 0/0 terms taken as 0."""
    A = _as_features(A)
    B = _as_features(B)
    if np.any(A < 0) or np.any(B < 0):
        raise ValueError("chi-squared distance requires nonnegative inputs")
    diff = A[:, None, :] - B[None, :, :]
    total = A[:, None, :] + B[None, :, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(total > 0, diff * diff / np.where(total > 0, total, 1.0), 0.0)
    return terms.sum(axis=2)


def pairwise_distance(A, B, metric) -> np.ndarray:
    """Distance matrix between the rows of ``A`` and ``B``.

    ``metric`` is one of ``l1``, ``l2`` or ``chi2``. Diagonal entries of
    ``pairwise_distance(X, X, m)`` are exactly zero.
    """
    metric = DistanceMetric.parse(metric)
    A = _as_features(A)
    B = _as_features(B)
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimensionality mismatch: {A.shape[1]} vs {B.shape[1]}")
    if metric is DistanceMetric.L1:
        D = cdist(A, B, metric="cityblock")
    elif metric is DistanceMetric.L2:
        D = cdist(A, B, metric="euclidean")
    elif metric is DistanceMetric.CHI2:
        D = chi2_distance(A, B)
    else:
        raise ValueError(f"{metric.value!r} is not a distance metric")
    if A is B or (A.shape == B.shape and np.array_equal(A, B)):
        D = 0.5 * (D + D.T)
        np.fill_diagonal(D, 0.0)
    return D


def exp_kernel(D, scale: float | None = None) -> tuple[np.ndarray, float]:
    """Return ``exp(-D / scale)`` and the scale used.

    When ``scale`` is None it is taken as the largest entry of ``D``. A zero
    scale means every distance is zero; the kernel is then all ones and a
    :class:`DegenerateKernelWarning` is emitted.
    """
    D = np.asarray(D, dtype=float)
    if np.any(D < 0):
        raise ValueError("distances must be nonnegative")
    lam = float(D.max()) if scale is None else float(scale)
    if lam <= 0.0:
        warnings.warn("zero kernel scale; using an all-ones kernel", DegenerateKernelWarning, stacklevel=2)
        return np.ones_like(D), 0.0
    return np.exp(-D / lam), lam


def linear_kernel(A, B) -> np.ndarray:
    A = _as_features(A)
    B = _as_features(B)
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimensionality mismatch: {A.shape[1]} vs {B.shape[1]}")
    return A @ B.T


def unit_trace_normalize(G) -> np.ndarray:
    G = np.asarray(G, dtype=float)
    tr = np.trace(G)
    if not tr > 0:
        raise ValueError(f"trace must be positive, got {tr}")
    return G / tr


def add_ridge(G, ridge_scale: float = 1e-8) -> np.ndarray:
    """Add ``ridge_scale * trace(G) / N`` to the diagonal of ``G``."""
    G = np.array(G, dtype=float)
    N = G.shape[0]
    G[np.diag_indices(N)] += ridge_scale * np.trace(G) / N
    return G


def check_simplex(w, name: str = "weights", tol: float = 1e-9) -> np.ndarray:
    w = np.asarray(w, dtype=float).ravel()
    if w.size == 0 or np.any(w < -tol) or abs(w.sum() - 1.0) > tol:
        raise ValueError(f"{name} must lie on the probability simplex, got {w}")
    return w


def combine_kernels(Gs, beta) -> np.ndarray:
    """Convex combination ``sum_v beta_v G_v``."""
    Gs = [np.asarray(G, dtype=float) for G in Gs]
    beta = check_simplex(beta, "beta")
    if len(Gs) != beta.size:
        raise ValueError(f"{len(Gs)} matrices but {beta.size} weights")
    shape = Gs[0].shape
    if any(G.shape != shape for G in Gs):
        raise ValueError("all matrices must share one shape")
    out = np.zeros(shape)
    for b, G in zip(beta, Gs):
        out += b * G
    return out


@dataclass
class ViewKernel:
    """Frozen kernel for one view.

    Holds everything needed to evaluate the normalized training Gram block
    and the test-vs-train block: the training inputs (features, or the raw
    training Gram block for precomputed views), the exponential-kernel scale
    and the trace factor of the raw training block.
    """

    kind: str  # "features" or "gram"
    metric: DistanceMetric | None
    train: np.ndarray
    scale: float
    trace: float

    @classmethod
    def fit(cls, X, metric) -> "ViewKernel":
        metric = DistanceMetric.parse(metric)
        X = _as_features(X)
        if metric is DistanceMetric.LINEAR:
            K, lam = linear_kernel(X, X), 0.0
        else:
            K, lam = exp_kernel(pairwise_distance(X, X, metric))
        return cls("features", metric, X, lam, float(np.trace(K)))

    @classmethod
    def from_gram(cls, K_train) -> "ViewKernel":
        K = np.asarray(K_train, dtype=float)
        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise ValueError("precomputed Gram block must be square")
        if np.max(np.abs(K - K.T), initial=0.0) > 1e-8:
            raise ValueError("precomputed Gram block is not symmetric")
        return cls("gram", None, 0.5 * (K + K.T), 0.0, float(np.trace(K)))

    @property
    def n_train(self) -> int:
        return self.train.shape[0]

    def _raw(self, X) -> np.ndarray:
        if self.metric is DistanceMetric.LINEAR:
            return linear_kernel(X, self.train)
        D = pairwise_distance(X, self.train, self.metric)
        if self.scale <= 0.0:
            return np.ones_like(D)
        return np.exp(-D / self.scale)

    def gram(self) -> np.ndarray:
        """Unit-trace training block (no ridge)."""
        if self.kind == "gram":
            K = self.train
        elif self.metric is DistanceMetric.LINEAR:
            K = linear_kernel(self.train, self.train)
        else:
            K, _ = exp_kernel(pairwise_distance(self.train, self.train, self.metric), self.scale or None)
        if not self.trace > 0:
            raise ValueError(f"trace must be positive, got {self.trace}")
        return K / self.trace

    def cross(self, X) -> np.ndarray:
        """Rows-vs-training block scaled by the training trace factor.

        For feature views ``X`` holds the new rows' features; for precomputed
        views it is the raw kernel block between new rows and training rows.
        """
        if self.kind == "gram":
            K = np.asarray(X, dtype=float)
            if K.ndim != 2 or K.shape[1] != self.n_train:
                raise ValueError(f"expected a block with {self.n_train} columns, got shape {K.shape}")
        else:
            X = _as_features(X)
            if X.shape[1] != self.train.shape[1]:
                raise ValueError(f"dimensionality mismatch: {X.shape[1]} vs {self.train.shape[1]}")
            K = self._raw(X)
        return K / self.trace
