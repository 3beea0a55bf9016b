"""Neighbor graphs, Laplacians, the output-label structure and Kronecker lifts."""

from __future__ import annotations

import numpy as np

from .kernels import check_simplex

PINV_RTOL = 1e-10


def knn_adjacency(similarity, k: int) -> np.ndarray:
    """Symmetric k-NN adjacency weighted by ``similarity``.

    ``W[i, j] = similarity[i, j]`` when ``j`` is among the ``k`` most similar
    points to ``i`` or ``i`` is among those of ``j``; zero otherwise. Ties are
    broken by index order. Negative similarities are clipped to zero.
    """
    S = np.asarray(similarity, dtype=float)
    N = S.shape[0]
    if S.ndim != 2 or S.shape[1] != N:
        raise ValueError("similarity must be square")
    if not 1 <= k < N:
        raise ValueError(f"need 1 <= k < N, got k={k}, N={N}")
    S = 0.5 * (S + S.T)
    ranked = np.where(np.eye(N, dtype=bool), -np.inf, S)
    order = np.argsort(-ranked, axis=1, kind="stable")[:, :k]
    mask = np.zeros((N, N), dtype=bool)
    mask[np.repeat(np.arange(N), k), order.ravel()] = True
    mask |= mask.T
    np.fill_diagonal(mask, False)
    return np.where(mask, np.maximum(S, 0.0), 0.0)


def scalar_laplacian(W, normalized: bool = True) -> np.ndarray:
    """``D - W`` or ``I - D^-1/2 W D^-1/2``.

    In the normalized form isolated vertices get identity rows; in the
    unnormalized form their rows are zero.
    """
    W = np.asarray(W, dtype=float)
    deg = W.sum(axis=1)
    if not normalized:
        return np.diag(deg) - W
    isolated = deg <= 0
    inv_sqrt = np.where(isolated, 0.0, 1.0 / np.sqrt(np.where(isolated, 1.0, deg)))
    L = np.eye(W.shape[0]) - inv_sqrt[:, None] * W * inv_sqrt[None, :]
    return 0.5 * (L + L.T)


def combine_laplacians(Ls, theta) -> np.ndarray:
    Ls = [np.asarray(L, dtype=float) for L in Ls]
    theta = check_simplex(theta, "theta")
    if len(Ls) != theta.size:
        raise ValueError(f"{len(Ls)} Laplacians but {theta.size} weights")
    if any(L.shape != Ls[0].shape for L in Ls):
        raise ValueError("all Laplacians must share one shape")
    out = np.zeros(Ls[0].shape)
    for t, L in zip(theta, Ls):
        out += t * L
    return out


def pinv_psd(A, rtol: float = PINV_RTOL) -> np.ndarray:
    """Moore-Penrose pseudo-inverse of a symmetric matrix via eigendecomposition.

    Eigenvalues with magnitude at most ``rtol`` times the largest magnitude are
    treated as zero.
    """
    A = np.asarray(A, dtype=float)
    w, V = np.linalg.eigh(0.5 * (A + A.T))
    cutoff = rtol * np.max(np.abs(w), initial=0.0)
    keep = np.abs(w) > cutoff
    if not np.any(keep):
        return np.zeros_like(A)
    Vk = V[:, keep]
    P = (Vk / w[keep]) @ Vk.T
    return 0.5 * (P + P.T)


def label_similarity(Y) -> np.ndarray:
    """Cosine similarity between label columns over labeled rows, clipped at 0.

    Rows whose entries are all zero are unlabeled and ignored.
    """
    Y = np.asarray(Y, dtype=float)
    rows = np.any(Y != 0, axis=1)
    if not np.any(rows):
        raise ValueError("label matrix has no labeled rows")
    C = Y[rows]
    norms = np.linalg.norm(C, axis=0)
    norms[norms == 0] = 1.0
    S = (C.T @ C) / np.outer(norms, norms)
    return np.clip(S, 0.0, None)


def output_laplacian(Y, k_out: int, normalized: bool = True) -> np.ndarray:
    """Laplacian of the k_out-NN graph whose vertices are the label columns of ``Y``."""
    return scalar_laplacian(knn_adjacency(label_similarity(Y), k_out), normalized)


def output_laplacian_pinv(Y, k_out: int, normalized: bool = True, rtol: float = PINV_RTOL) -> np.ndarray:
    return pinv_psd(output_laplacian(Y, k_out, normalized), rtol)


def build_Q(L_out_pinv, gamma_O: float) -> np.ndarray:
    """Output coupling ``gamma_O * L_out^+ + (1 - gamma_O) * I``."""
    if not 0.0 <= gamma_O <= 1.0:
        raise ValueError(f"gamma_O must lie in [0, 1], got {gamma_O}")
    P = np.asarray(L_out_pinv, dtype=float)
    Q = gamma_O * P + (1.0 - gamma_O) * np.eye(P.shape[0])
    return 0.5 * (Q + Q.T)


def kron_expand(base, multiplier) -> np.ndarray:
    """Lift an N x N sample matrix to nN x nN with sample-major blocks of size n.

    Block ``(i, j)`` equals ``base[i, j] * multiplier``, which matches stacking
    a coefficient matrix ``A`` (N x n) row by row into ``a``.
    """
    return np.kron(np.asarray(base, dtype=float), np.asarray(multiplier, dtype=float))
