"""Inner solvers for the multi-view vector-valued Laplacian SVM.

Vectors over samples are stacked sample-major: entry ``i * n + j`` refers to
sample ``i`` and label ``j``. Labeled samples always come first, so the
selector ``J`` simply keeps the leading ``n * l`` entries.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class Selector:
    """Block selector ``J = [I 0]`` and diagonal label matrix ``Y_d``."""

    Y_labeled: np.ndarray  # l x n, entries +1/-1
    N: int

    def __post_init__(self):
        Y = np.asarray(self.Y_labeled, dtype=float)
        if Y.ndim != 2 or not np.all(np.isin(Y, (-1.0, 1.0))):
            raise ValueError("labeled block must be a 2-D array of +1/-1")
        if Y.shape[0] > self.N:
            raise ValueError("more labeled rows than samples")
        object.__setattr__(self, "Y_labeled", Y)

    @property
    def l(self) -> int:
        return self.Y_labeled.shape[0]

    @property
    def n(self) -> int:
        return self.Y_labeled.shape[1]

    @property
    def y(self) -> np.ndarray:
        """Diagonal of ``Y_d``."""
        return self.Y_labeled.ravel()

    @property
    def J(self) -> np.ndarray:
        return np.eye(self.n * self.l, self.n * self.N)

    @property
    def Yd(self) -> np.ndarray:
        return np.diag(self.y)

    def lift(self, v) -> np.ndarray:
        """``J^T v``: pad a labeled-block vector with zeros."""
        out = np.zeros(self.n * self.N)
        out[: self.n * self.l] = v
        return out


def _system(G, M, gamma_A, gamma_I) -> np.ndarray:
    return 2.0 * gamma_A * np.eye(G.shape[0]) + 2.0 * gamma_I * (M @ G)


def _check_gammas(gamma_A, gamma_I):
    if not gamma_A > 0:
        raise ValueError(f"gamma_A must be positive, got {gamma_A}")
    if gamma_I < 0:
        raise ValueError(f"gamma_I must be nonnegative, got {gamma_I}")


def _lu(A):
    lu = sla.lu_factor(A, check_finite=True)
    if np.min(np.abs(np.diag(lu[0]))) <= np.finfo(float).eps * np.max(np.abs(np.diag(lu[0]))):
        raise np.linalg.LinAlgError("singular system; increase the ridge")
    return lu


def build_S(G, M, gamma_A, gamma_I, sel: Selector) -> np.ndarray:
    """``S = Y_d J G (2 gA I + 2 gI M G)^-1 J^T Y_d``, symmetrized."""
    _check_gammas(gamma_A, gamma_I)
    G = np.asarray(G, dtype=float)
    M = np.asarray(M, dtype=float)
    m = sel.n * sel.l
    rhs = np.zeros((G.shape[0], m))
    rhs[:m] = np.diag(sel.y)
    X = sla.lu_solve(_lu(_system(G, M, gamma_A, gamma_I)), rhs)
    S = sel.y[:, None] * (G[:m] @ X)
    return 0.5 * (S + S.T)


def solve_a(G, M, mu, gamma_A, gamma_I, sel: Selector) -> np.ndarray:
    """``a = (2 gA I + 2 gI M G)^-1 J^T Y_d mu``."""
    _check_gammas(gamma_A, gamma_I)
    G = np.asarray(G, dtype=float)
    rhs = sel.lift(sel.y * np.asarray(mu, dtype=float))
    return sla.lu_solve(_lu(_system(G, np.asarray(M, dtype=float), gamma_A, gamma_I)), rhs)


# ---------------------------------------------------------------------------
# dual QP over mu


def project_balanced_box(z, y, C) -> np.ndarray:
    """Euclidean projection of ``z`` onto ``{0 <= x <= C, y.x = 0}``.

    The solution is ``clip(z - lam * y, 0, C)`` for the root ``lam`` of the
    nonincreasing piecewise-linear balance ``y.x(lam)``; the root is located
    exactly between breakpoints.
    """
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)

    def x_of(lam):
        return np.clip(z - lam * y, 0.0, C)

    bps = np.unique(np.concatenate([z * y, (z - C) * y]))
    phi = np.clip(z[None, :] - bps[:, None] * y[None, :], 0.0, C) @ y
    if phi[0] <= 0.0:
        return x_of(bps[0])
    hi = int(np.argmax(phi <= 0.0)) if np.any(phi <= 0.0) else len(bps) - 1
    if phi[hi] > 0.0:
        return x_of(bps[hi])
    lo = hi - 1
    p0, p1 = phi[lo], phi[hi]
    lam = bps[lo] + (bps[hi] - bps[lo]) * p0 / (p0 - p1)
    return x_of(lam)


def project_dual(mu, Y_labeled, C) -> np.ndarray:
    """Project a sample-major dual vector onto the box and per-label balance set."""
    Y = np.asarray(Y_labeled, dtype=float)
    Z = np.asarray(mu, dtype=float).reshape(Y.shape)
    out = np.empty_like(Z)
    for j in range(Y.shape[1]):
        out[:, j] = project_balanced_box(Z[:, j], Y[:, j], C)
    return out.ravel()


def dual_objective(mu, S) -> float:
    """``mu.1 - mu^T S mu / 2`` (to be maximized)."""
    mu = np.asarray(mu, dtype=float)
    return float(mu.sum() - 0.5 * mu @ S @ mu)


def kkt_residual(mu, S, Y_labeled, C, L=None) -> float:
    """Sup-norm of the projected-gradient mapping at ``mu``.

    The step is ``min(1/L, C)`` so the measure stays meaningful when ``S`` is
    tiny and a full gradient step would jump across the whole box.
    """
    if L is None:
        L = max(float(np.linalg.eigvalsh(S)[-1]), 1e-12)
    t = min(1.0 / L, C)
    grad = 1.0 - S @ mu
    return float(np.max(np.abs(mu - project_dual(mu + t * grad, Y_labeled, C)), initial=0.0) / t)


def _polish(mu, S, Y, C, tol):
    """Solve the equality-constrained QP on the current free set exactly."""
    l, n = Y.shape
    m = l * n
    y = Y.ravel()
    eps = 1e-12 * max(C, 1.0)
    free = (mu > eps) & (mu < C - eps)
    if not np.any(free):
        return None
    A = np.zeros((n, m))
    A[np.arange(m) % n, np.arange(m)] = y
    F = np.flatnonzero(free)
    B = np.flatnonzero(~free)
    muB = np.where(mu[B] >= C / 2, C, 0.0)
    K = np.block([[S[np.ix_(F, F)], A[:, F].T], [A[:, F], np.zeros((n, n))]])
    rhs = np.concatenate([1.0 - S[np.ix_(F, B)] @ muB, -A[:, B] @ muB])
    sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    cand = np.empty(m)
    cand[B] = muB
    cand[F] = sol[: F.size]
    if np.any(cand < -tol * C) or np.any(cand > C * (1 + tol)):
        return None
    return project_dual(np.clip(cand, 0.0, C), Y, C)


def _smo(S, Y, C, mu, eps, max_iter):
    """Pairwise (SMO) refinement with second-order working-set selection.

    Pairs are always taken inside one label column, so every balance
    constraint is preserved. Stops when the largest maximal-violating-pair
    gap over labels is at most ``eps``.
    """
    l, n = Y.shape
    y = Y.ravel()
    diag = np.diag(S).copy()
    grad = S @ mu - 1.0  # gradient of the minimization form
    tau = 1e-12
    for _ in range(max_iter):
        up = np.where(y > 0, mu < C, mu > 0)
        low = np.where(y > 0, mu > 0, mu < C)
        score = -y * grad
        U = np.where(up, score, -np.inf).reshape(l, n)
        Lw = np.where(low, score, np.inf).reshape(l, n)
        gaps = U.max(axis=0) - Lw.min(axis=0)
        col = int(np.argmax(gaps))
        if not gaps[col] > eps:
            return mu, True
        rows = np.arange(l) * n + col
        i = rows[int(np.argmax(U[:, col]))]
        gmax = score[i]
        cand = rows[low[rows] & (score[rows] < gmax)]
        quad = diag[i] + diag[cand] - 2.0 * y[i] * y[cand] * S[i, cand]
        quad = np.where(quad > 0, quad, tau)
        diff = gmax - score[cand]
        j = cand[int(np.argmin(-(diff * diff) / quad))]

        old_i, old_j = mu[i], mu[j]
        if y[i] != y[j]:
            q = diag[i] + diag[j] + 2.0 * S[i, j]
            q = q if q > 0 else tau
            delta = (-grad[i] - grad[j]) / q
            d = mu[i] - mu[j]
            ai, aj = mu[i] + delta, mu[j] + delta
            if d > 0:
                if aj < 0:
                    aj, ai = 0.0, d
            elif ai < 0:
                ai, aj = 0.0, -d
            if d > 0:
                if ai > C:
                    ai, aj = C, C - d
            elif aj > C:
                aj, ai = C, C + d
        else:
            q = diag[i] + diag[j] - 2.0 * S[i, j]
            q = q if q > 0 else tau
            delta = (grad[i] - grad[j]) / q
            total = mu[i] + mu[j]
            ai, aj = mu[i] - delta, mu[j] + delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
                if aj > C:
                    aj, ai = C, total - C
            else:
                if aj < 0:
                    aj, ai = 0.0, total
                if ai < 0:
                    ai, aj = 0.0, total
        mu[i], mu[j] = ai, aj
        grad += S[:, i] * (ai - old_i) + S[:, j] * (aj - old_j)
    return mu, False


def solve_dual_mu(S, Y_labeled, mu0=None, tol: float = 1e-8, max_iter: int = 10_000) -> np.ndarray:
    """Maximize ``mu.1 - mu^T S mu / 2`` s.t. ``0 <= mu <= 1/(nl)`` and per-label balance.

    Accelerated projected gradient (step ``1 / lambda_max(S)``, restarts on
    objective decrease) with exact solves on the identified free set. If the
    projected-gradient residual is still above ``tol`` after ``max_iter``
    iterations, pairwise SMO updates finish the job. Raises
    :class:`ConvergenceError` when both fail.
    """
    S = np.asarray(S, dtype=float)
    S = 0.5 * (S + S.T)
    Y = np.asarray(Y_labeled, dtype=float)
    l, n = Y.shape
    C = 1.0 / (n * l)
    L = max(float(np.linalg.eigvalsh(S)[-1]), 1e-12)

    mu = project_dual(np.zeros(n * l) if mu0 is None else np.clip(mu0, 0.0, C), Y, C)
    w, t = mu.copy(), 1.0
    obj = dual_objective(mu, S)
    res = kkt_residual(mu, S, Y, C, L)
    it = 0
    while res > tol and it < max_iter:
        it += 1
        nxt = project_dual(w + (1.0 - S @ w) / L, Y, C)
        nobj = dual_objective(nxt, S)
        if nobj < obj:
            # momentum overshot; restart from the last accepted point
            w, t = mu.copy(), 1.0
            continue
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        w = nxt + ((t - 1.0) / t_next) * (nxt - mu)
        mu, obj, t = nxt, nobj, t_next
        if it % 10 == 0 or it < 10:
            res = kkt_residual(mu, S, Y, C, L)
            if res > tol:
                cand = _polish(mu, S, Y, C, tol)
                if cand is not None:
                    cres = kkt_residual(cand, S, Y, C, L)
                    if cres < res and dual_objective(cand, S) >= obj - 1e-15 * max(1.0, abs(obj)):
                        mu, obj, res = cand, dual_objective(cand, S), cres
                        w, t = mu.copy(), 1.0
    if res > tol:
        res = kkt_residual(mu, S, Y, C, L)
    eps = tol
    while res > tol and eps > 1e-16:
        eps *= 0.1
        mu, _ = _smo(S, Y, C, mu.copy(), eps, 100 * max_iter)
        res = kkt_residual(mu, S, Y, C, L)
    if res > tol:
        raise ConvergenceError(f"dual QP did not converge: residual {res:.3e}")
    return mu


# ---------------------------------------------------------------------------
# bias


def compute_bias(F_labeled, mu, Y_labeled, margin: float = 1e-10) -> np.ndarray:
    """Per-label bias from support vectors strictly inside the box.

    ``b_j`` is the median of ``y_ij - f_j(x_i)`` over samples with
    ``0 < mu_ij < 1/(nl) - margin``; if there are none, over all labeled
    samples of label ``j``.
    """
    F = np.asarray(F_labeled, dtype=float)
    Y = np.asarray(Y_labeled, dtype=float)
    l, n = Y.shape
    if l == 0:
        return np.zeros(n)
    C = 1.0 / (n * l)
    M = np.asarray(mu, dtype=float).reshape(l, n)
    R = Y - F
    b = np.zeros(n)
    for j in range(n):
        inbox = (M[:, j] > margin) & (M[:, j] < C - margin)
        b[j] = np.median(R[inbox, j]) if np.any(inbox) else np.median(R[:, j])
    return b


def hinge_optimal_bias(F_labeled, Y_labeled) -> np.ndarray:
    """Per-label bias minimizing the summed hinge loss for fixed scores.

    The loss is convex and piecewise linear in ``b_j`` with kinks at
    ``y_ij - f_ij``, so the minimum is attained at one of them; the smallest
    such minimizer is returned.
    """
    F = np.asarray(F_labeled, dtype=float)
    Y = np.asarray(Y_labeled, dtype=float)
    b = np.zeros(Y.shape[1])
    for j in range(Y.shape[1]):
        cands = np.sort(Y[:, j] - F[:, j])
        loss = np.maximum(0.0, 1.0 - Y[:, j][None, :] * (F[:, j][None, :] + cands[:, None])).sum(axis=1)
        b[j] = cands[int(np.argmin(loss))]
    return b


# ---------------------------------------------------------------------------
# kernel and graph weight subproblems


@dataclass
class SubproblemData:
    H: np.ndarray
    h: np.ndarray
    s: np.ndarray


def compute_subproblem_data(a, mu, Gs, G, Ms, M, gamma_A, gamma_I, sel: Selector, residual=None) -> SubproblemData:
    """Quadratic/linear coefficients of the weight subproblems at fixed ``a``.

    ``H_ij = gI a^T G_i M G_j a``, ``h_v = a^T G_v J^T Y_d mu - gA a^T G_v a``,
    ``s_v = gI a^T G M_v G a``. When ``residual`` is given (least-squares
    mode) the first term of ``h_v`` becomes ``2 a^T G_v residual`` and ``mu``
    is ignored.
    """
    a = np.asarray(a, dtype=float)
    Ga_v = np.stack([np.asarray(Gv) @ a for Gv in Gs])  # V x nN
    MGa_v = Ga_v @ np.asarray(M).T
    H = gamma_I * (Ga_v @ MGa_v.T)
    H = 0.5 * (H + H.T)
    if residual is None:
        drive = sel.lift(sel.y * np.asarray(mu, dtype=float))
        h = Ga_v @ drive - gamma_A * (Ga_v @ a)
    else:
        h = 2.0 * (Ga_v @ np.asarray(residual, dtype=float)) - gamma_A * (Ga_v @ a)
    Ga = np.asarray(G) @ a
    s = gamma_I * np.array([Ga @ (np.asarray(Mv) @ Ga) for Mv in Ms])
    return SubproblemData(H, h, s)


def beta_objective(beta, H, h, gamma_B) -> float:
    beta = np.asarray(beta, dtype=float)
    return float(beta @ H @ beta + gamma_B * beta @ beta - h @ beta)


def theta_objective(theta, s, gamma_C) -> float:
    theta = np.asarray(theta, dtype=float)
    return float(s @ theta + gamma_C * theta @ theta)


def _pairs(V, order):
    return list(order) if order is not None else list(itertools.combinations(range(V), 2))


def update_beta(H, h, beta, gamma_B, order=None, tol: float = 1e-10, max_sweeps: int = 10_000) -> np.ndarray:
    """Pairwise coordinate descent for ``beta^T H beta + gB |beta|^2 - h^T beta`` on the simplex.

    Each pair ``(i, j)`` is moved to the clipped closed-form minimizer along
    ``beta_i + beta_j = const``; a move that would raise the objective in
    floating point is discarded. Sweeps repeat until no coordinate moves by
    more than ``tol``.
    """
    if not gamma_B > 0:
        raise ValueError(f"gamma_B must be positive, got {gamma_B}")
    H = np.asarray(H, dtype=float)
    h = np.asarray(h, dtype=float)
    beta = np.array(beta, dtype=float)
    pairs = _pairs(beta.size, order)
    for _ in range(max_sweeps):
        moved = 0.0
        for i, j in pairs:
            c = beta[i] + beta[j]
            if c <= 0.0:
                continue
            kappa = H[i, i] - H[j, i] - H[i, j] + H[j, j]
            t_ij = kappa * beta[i] - (H[i] - H[j]) @ beta
            t_ji = kappa * beta[j] - (H[j] - H[i]) @ beta
            num_i = 2.0 * gamma_B * c + (h[i] - h[j]) + 2.0 * t_ij
            num_j = 2.0 * gamma_B * c + (h[j] - h[i]) + 2.0 * t_ji
            if num_i <= 0.0:
                bi = 0.0
            elif num_j <= 0.0:
                bi = c
            else:
                bi = min(max(num_i / (2.0 * kappa + 4.0 * gamma_B), 0.0), c)
            new = beta.copy()
            new[i], new[j] = bi, c - bi
            if beta_objective(new, H, h, gamma_B) <= beta_objective(beta, H, h, gamma_B):
                moved = max(moved, abs(bi - beta[i]))
                beta = new
        if moved < tol:
            break
    return beta


def update_theta(s, theta, gamma_C, order=None, tol: float = 1e-10, max_sweeps: int = 10_000) -> np.ndarray:
    """Pairwise coordinate descent for ``s^T theta + gC |theta|^2`` on the simplex."""
    if not gamma_C > 0:
        raise ValueError(f"gamma_C must be positive, got {gamma_C}")
    s = np.asarray(s, dtype=float)
    theta = np.array(theta, dtype=float)
    pairs = _pairs(theta.size, order)
    for _ in range(max_sweeps):
        moved = 0.0
        for i, j in pairs:
            c = theta[i] + theta[j]
            if c <= 0.0:
                continue
            if 2.0 * gamma_C * c + (s[j] - s[i]) <= 0.0:
                ti = 0.0
            elif 2.0 * gamma_C * c + (s[i] - s[j]) <= 0.0:
                ti = c
            else:
                ti = (2.0 * gamma_C * c + (s[j] - s[i])) / (4.0 * gamma_C)
            new = theta.copy()
            new[i], new[j] = ti, c - ti
            if theta_objective(new, s, gamma_C) <= theta_objective(theta, s, gamma_C):
                moved = max(moved, abs(ti - theta[i]))
                theta = new
        if moved < tol:
            break
    return theta


# ---------------------------------------------------------------------------
# least-squares variant


def _sylvester_operator(Gk, L, l, gamma_I):
    Gk = np.asarray(Gk, dtype=float)
    J = np.zeros_like(Gk)
    J[np.arange(l), np.arange(l)] = 1.0
    return J @ Gk + l * gamma_I * (np.asarray(L, dtype=float) @ Gk)


def solve_vvlrls_sylvester(Gk, L, Q, Y, gamma_A, gamma_I, l) -> np.ndarray:
    """Coefficient matrix ``A`` (N x n) of the vector-valued Laplacian RLS.

    Solves ``-(J G + l gI L G) A Q / (l gA) - A + Y / (l gA) = 0`` where ``J``
    keeps the first ``l`` rows. With ``Q = U diag(w) U^T`` the substitution
    ``B = A U`` decouples the equation into one N x N linear system per
    eigenvalue of ``Q``. The stacked coefficients are ``A.ravel()``.
    """
    _check_gammas(gamma_A, gamma_I)
    Y = np.asarray(Y, dtype=float)
    N = Y.shape[0]
    X = _sylvester_operator(Gk, L, l, gamma_I)
    w, U = np.linalg.eigh(0.5 * (np.asarray(Q, dtype=float) + np.asarray(Q, dtype=float).T))
    R = Y @ U
    B = np.empty_like(R)
    scale = l * gamma_A
    for k, wk in enumerate(w):
        B[:, k] = np.linalg.solve(wk * X + scale * np.eye(N), R[:, k])
    return B @ U.T


def sylvester_residual(A, Gk, L, Q, Y, gamma_A, gamma_I, l) -> np.ndarray:
    X = _sylvester_operator(Gk, L, l, gamma_I)
    A = np.asarray(A, dtype=float)
    return -(X @ A @ np.asarray(Q)) / (l * gamma_A) - A + np.asarray(Y) / (l * gamma_A)


# ---------------------------------------------------------------------------
# objective


def objective_value(a, b, beta, theta, G, M, Y_labeled, gamma_A, gamma_I, gamma_B, gamma_C, loss: str = "hinge") -> float:
    """Primal objective at a given state.

    Hinge: ``(1/nl) sum xi_ij + gA a^T G a + gI a^T G M G a + gB |beta|^2 + gC |theta|^2``
    with ``xi_ij = max(0, 1 - y_ij (f_j(x_i) + b_j))``. Least squares replaces
    the slack term by ``(1/l) sum_i |f(x_i) + b - y_i|^2``.
    """
    a = np.asarray(a, dtype=float)
    Y = np.asarray(Y_labeled, dtype=float)
    l, n = Y.shape
    Ga = np.asarray(G) @ a
    F = Ga[: l * n].reshape(l, n) + np.asarray(b, dtype=float)[None, :]
    if loss == "hinge":
        fit = np.maximum(0.0, 1.0 - Y * F).sum() / (n * l)
    elif loss == "least_squares":
        fit = ((F - Y) ** 2).sum() / l
    else:
        raise ValueError(f"unknown loss {loss!r}")
    beta = np.asarray(beta, dtype=float)
    theta = np.asarray(theta, dtype=float)
    reg = gamma_A * (a @ Ga) + gamma_I * (Ga @ (np.asarray(M) @ Ga))
    return float(fit + reg + gamma_B * beta @ beta + gamma_C * theta @ theta)
