"""Alternating optimization of the classifier, kernel weights and graph weights."""

from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .graph import (
    build_Q,
    combine_laplacians,
    kron_expand,
    knn_adjacency,
    output_laplacian_pinv,
    scalar_laplacian,
)
from .kernels import DistanceMetric, ViewKernel, add_ridge, check_simplex, combine_kernels
from .optimizer import (
    Selector,
    build_S,
    compute_bias,
    compute_subproblem_data,
    hinge_optimal_bias,
    objective_value,
    solve_a,
    solve_dual_mu,
    solve_vvlrls_sylvester,
    update_beta,
    update_theta,
)

log = logging.getLogger(__name__)

LOSSES = ("hinge", "least_squares")


class DegenerateLabelWarning(UserWarning):
    """A label column has a single class among the labeled rows."""


@dataclass
class TrainConfig:
    gamma_A: float = 1e-4
    gamma_I: float = 1e-2
    gamma_B: float = 1e-3
    gamma_C: float = 1e-1
    gamma_O: float = 1.0
    k_in: int = 10
    k_out: int = 2
    loss: str = "hinge"
    normalized_laplacian: bool = True
    stop_threshold: float = 1e-3
    max_outer_iter: int = 50
    ridge_scale: float = 1e-8
    seed: int = 0
    dual_tol: float = 1e-8
    dual_max_iter: int = 10_000

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("gamma_A", "gamma_B", "gamma_C", "stop_threshold"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.gamma_I >= 0:
            raise ValueError(f"gamma_I must be nonnegative, got {self.gamma_I}")
        if not 0.0 <= self.gamma_O <= 1.0:
            raise ValueError(f"gamma_O must lie in [0, 1], got {self.gamma_O}")
        for name in ("k_in", "k_out", "max_outer_iter", "dual_max_iter"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer, got {getattr(self, name)}")
        if self.ridge_scale < 0:
            raise ValueError(f"ridge_scale must be nonnegative, got {self.ridge_scale}")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}, got {self.loss!r}")

    def replace(self, **changes) -> "TrainConfig":
        return TrainConfig(**{**asdict(self), **changes})

    @classmethod
    def field_types(cls) -> dict:
        return {f.name: type(f.default) for f in fields(cls)}


@dataclass
class View:
    """One representation of every sample in a dataset.

    ``data`` is an N x d feature matrix for ``kind="features"`` or a full
    N x N kernel matrix for ``kind="gram"``.
    """

    name: str
    kind: str
    data: np.ndarray
    metric: DistanceMetric | None = None


@dataclass
class Dataset:
    views: list[View]
    Y: np.ndarray  # N x n; +1/-1 on labeled rows, 0 elsewhere
    labeled: np.ndarray
    unlabeled: np.ndarray
    test: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    truth: np.ndarray | None = None  # N x n ground truth in +1/-1, when known

    def __post_init__(self):
        self.Y = np.asarray(self.Y, dtype=float)
        self.labeled = np.asarray(self.labeled, dtype=int).ravel()
        self.unlabeled = np.asarray(self.unlabeled, dtype=int).ravel()
        self.test = np.asarray(self.test, dtype=int).ravel()
        self.validate()

    @property
    def n_samples(self) -> int:
        return self.Y.shape[0]

    @property
    def n_labels(self) -> int:
        return self.Y.shape[1]

    @property
    def train_index(self) -> np.ndarray:
        return np.concatenate([self.labeled, self.unlabeled])

    def validate(self):
        N = self.n_samples
        if self.Y.ndim != 2 or not np.all(np.isin(self.Y, (-1.0, 0.0, 1.0))):
            raise ValueError("label matrix entries must be +1, -1 or 0")
        if self.labeled.size < 1:
            raise ValueError("need at least one labeled sample")
        allidx = np.concatenate([self.labeled, self.unlabeled, self.test])
        if allidx.size and (allidx.min() < 0 or allidx.max() >= N):
            raise ValueError("split index out of range")
        if np.unique(allidx).size != allidx.size:
            raise ValueError("labeled, unlabeled and test indices must be disjoint")
        for i in self.labeled:
            if not np.all(self.Y[i] != 0):
                raise ValueError(f"labeled row {i} must be +1/-1 in every column")
        for i in np.concatenate([self.unlabeled, self.test]):
            if np.any(self.Y[i] != 0):
                raise ValueError(f"row {i} is not labeled but has nonzero label entries")
        for v in self.views:
            if v.kind == "features":
                if v.data.ndim != 2 or v.data.shape[0] != N:
                    raise ValueError(f"view {v.name!r} must have {N} rows")
            elif v.kind == "gram":
                if v.data.shape != (N, N):
                    raise ValueError(f"gram view {v.name!r} must be {N} x {N}")
                if np.max(np.abs(v.data - v.data.T), initial=0.0) > 1e-8:
                    raise ValueError(f"gram view {v.name!r} is not symmetric")
            else:
                raise ValueError(f"unknown view kind {v.kind!r}")
        if self.truth is not None:
            self.truth = np.asarray(self.truth, dtype=float)
            if self.truth.shape != self.Y.shape:
                raise ValueError("ground truth must match the label matrix shape")

    def view_rows(self, v: int, rows, train_index) -> np.ndarray:
        """Prediction input of view ``v`` for ``rows``: features, or the raw block against training rows."""
        view = self.views[v]
        if view.kind == "gram":
            return view.data[np.ix_(rows, train_index)]
        return view.data[rows]


@dataclass
class ModelState:
    a: np.ndarray
    b: np.ndarray
    beta: np.ndarray
    theta: np.ndarray
    kernels: list[ViewKernel]
    Q: np.ndarray
    config: TrainConfig
    n_labeled: int
    train_index: np.ndarray
    objective_trace: np.ndarray

    @property
    def n_labels(self) -> int:
        return self.Q.shape[0]

    @property
    def coef(self) -> np.ndarray:
        """Coefficients reshaped to (training samples x labels)."""
        return self.a.reshape(-1, self.n_labels)

    def train_gram(self) -> np.ndarray:
        """Combined scalar Gram over the training samples (labeled first).

        The diagonal ridge used while solving is not part of the model's
        kernel, so this agrees with :func:`decision_function` evaluated on
        the training inputs.
        """
        return combine_kernels([k.gram() for k in self.kernels], self.beta)


# ---------------------------------------------------------------------------


@dataclass
class _Problem:
    """Per-view matrices for one training set, in training order."""

    Gk: list[np.ndarray]
    Ls: list[np.ndarray]
    Gs: list[np.ndarray]
    Ms: list[np.ndarray]
    Q: np.ndarray
    Y_train: np.ndarray
    sel: Selector
    kernels: list[ViewKernel]
    train_index: np.ndarray


def _prepare(data: Dataset, cfg: TrainConfig) -> _Problem:
    order = data.train_index
    N, n = order.size, data.n_labels
    kernels = []
    for view in data.views:
        if view.kind == "gram":
            kernels.append(ViewKernel.from_gram(view.data[np.ix_(order, order)]))
        else:
            kernels.append(ViewKernel.fit(view.data[order], view.metric))
    raw = [k.gram() for k in kernels]
    k_in = min(int(cfg.k_in), N - 1)
    if N > 1:
        Ls = [scalar_laplacian(knn_adjacency(G, k_in), cfg.normalized_laplacian) for G in raw]
    else:
        Ls = [np.zeros((1, 1)) for _ in raw]
    Gk = [add_ridge(G, cfg.ridge_scale) for G in raw]

    Y_lab = data.Y[data.labeled]
    for j in range(n):
        if np.all(Y_lab[:, j] == Y_lab[0, j]):
            warnings.warn(
                f"label {j} has a single class among labeled rows; its dual block is forced to zero",
                DegenerateLabelWarning,
                stacklevel=3,
            )
    if n > 1:
        k_out = min(int(cfg.k_out), n - 1)
        Q = build_Q(output_laplacian_pinv(Y_lab, k_out, cfg.normalized_laplacian), cfg.gamma_O)
    else:
        Q = np.ones((1, 1))
    I_n = np.eye(n)
    return _Problem(
        Gk=Gk,
        Ls=Ls,
        Gs=[kron_expand(G, Q) for G in Gk],
        Ms=[kron_expand(L, I_n) for L in Ls],
        Q=Q,
        Y_train=data.Y[order],
        sel=Selector(Y_lab, N),
        kernels=kernels,
        train_index=order,
    )


def _init_weights(w, V, name):
    if w is None:
        return np.full(V, 1.0 / V)
    w = check_simplex(w, name)
    if w.size != V:
        raise ValueError(f"{name} has {w.size} entries for {V} views")
    return w.copy()


def _backtrack(f, old, cand, halvings: int = 30):
    """Step from ``old`` toward ``cand`` as far as the objective does not rise."""
    f0 = f(old)
    step = cand - old
    t = 1.0
    for _ in range(halvings):
        w = old + t * step
        w = np.clip(w, 0.0, None)
        w /= w.sum()
        if f(w) <= f0:
            return w
        t *= 0.5
    return old


def _accept_beta(refit, old, cand, current, state, halvings: int = 20):
    """Backtrack the kernel weights on the re-optimized objective.

    ``refit(w)`` returns ``(objective, (a, mu))`` after solving for the
    classifier at weights ``w``. The first point on the segment from ``old``
    to ``cand`` that does not raise ``current`` is taken together with its
    classifier; otherwise nothing changes.
    """
    step = cand - old
    if not np.any(step):
        return old, *state
    t = 1.0
    for _ in range(halvings):
        w = np.clip(old + t * step, 0.0, None)
        w /= w.sum()
        value, fitted = refit(w)
        if value <= current:
            return w, *fitted
        t *= 0.5
    return old, *state


def _stop_ratio(trace) -> float:
    num = abs(trace[-1] - trace[-2])
    den = abs(trace[-1] - trace[0])
    if den == 0.0:
        return 0.0 if num == 0.0 else np.inf
    return num / den


def fit(
    data: Dataset,
    cfg: TrainConfig,
    beta0=None,
    theta0=None,
    learn_beta: bool = True,
    learn_theta: bool = True,
) -> ModelState:
    """Train by alternating the classifier solve with kernel- and graph-weight updates.

    Each outer iteration solves for ``a`` at fixed weights, then updates
    ``beta`` and then ``theta`` by pairwise coordinate descent. Weight moves
    are accepted only as far as they do not increase the primal objective, so
    the recorded objective trace is non-increasing. Iteration stops when
    ``|O_k - O_{k-1}| / |O_k - O_0|`` drops below ``cfg.stop_threshold``; ``O_0``
    is the objective of the all-zero classifier at the initial weights.
    """
    prob = _prepare(data, cfg)
    V = len(prob.Gs)
    sel = prob.sel
    n, l, N = sel.n, sel.l, sel.N
    hinge = cfg.loss == "hinge"
    beta = _init_weights(beta0, V, "beta0")
    theta = _init_weights(theta0, V, "theta0")

    def bias(a, G):
        if not hinge:
            return np.zeros(n)
        F = (G @ a)[: n * l].reshape(l, n)
        return hinge_optimal_bias(F, sel.Y_labeled)

    def primal(a, beta, theta):
        G = combine_kernels(prob.Gs, beta)
        M = combine_laplacians(prob.Ms, theta)
        return objective_value(
            a, bias(a, G), beta, theta, G, M, sel.Y_labeled,
            cfg.gamma_A, cfg.gamma_I, cfg.gamma_B, cfg.gamma_C, loss=cfg.loss,
        )

    def solve(beta, theta, mu):
        G = combine_kernels(prob.Gs, beta)
        M = combine_laplacians(prob.Ms, theta)
        if hinge:
            S = build_S(G, M, cfg.gamma_A, cfg.gamma_I, sel)
            mu = solve_dual_mu(S, sel.Y_labeled, mu0=mu, tol=cfg.dual_tol, max_iter=cfg.dual_max_iter)
            return solve_a(G, M, mu, cfg.gamma_A, cfg.gamma_I, sel), mu
        A = solve_vvlrls_sylvester(
            combine_kernels(prob.Gk, beta), combine_laplacians(prob.Ls, theta),
            prob.Q, prob.Y_train, cfg.gamma_A, cfg.gamma_I, l,
        )
        return A.ravel(), mu

    def residual(a, G):
        if hinge:
            return None
        r = np.zeros(n * N)
        r[: n * l] = (sel.y - (G @ a)[: n * l]) / l
        return r

    learnable = V > 1 and (learn_beta or learn_theta)
    a = np.zeros(n * N)
    mu = np.zeros(n * l)
    trace = [primal(a, beta, theta)]
    for it in range(1, int(cfg.max_outer_iter) + 1):
        a_new, mu_new = solve(beta, theta, mu)
        current = primal(a, beta, theta)
        if primal(a_new, beta, theta) <= current:
            a, mu = a_new, mu_new
            current = primal(a, beta, theta)

        if V > 1 and learn_beta:
            G = combine_kernels(prob.Gs, beta)
            M = combine_laplacians(prob.Ms, theta)
            sub = compute_subproblem_data(a, mu, prob.Gs, G, prob.Ms, M, cfg.gamma_A, cfg.gamma_I, sel, residual(a, G))
            cand = update_beta(sub.H, sub.h, beta, cfg.gamma_B)
            beta, a, mu = _accept_beta(
                lambda w: (lambda am: (primal(am[0], w, theta), am))(solve(w, theta, mu)),
                beta, cand, current, (a, mu),
            )
        if V > 1 and learn_theta:
            G = combine_kernels(prob.Gs, beta)
            M = combine_laplacians(prob.Ms, theta)
            sub = compute_subproblem_data(a, mu, prob.Gs, G, prob.Ms, M, cfg.gamma_A, cfg.gamma_I, sel, residual(a, G))
            cand = update_theta(sub.s, theta, cfg.gamma_C)
            theta = _backtrack(lambda w: primal(a, beta, w), theta, cand)
        trace.append(primal(a, beta, theta))
        if not learnable:
            break
        ratio = _stop_ratio(trace)
        log.debug("iteration %d: objective %.12g, ratio %.3g, beta %s, theta %s", it, trace[-1], ratio, beta, theta)
        if ratio < cfg.stop_threshold:
            break

    G = combine_kernels(prob.Gs, beta)
    F = (G @ a)[: n * l].reshape(l, n)
    b = compute_bias(F, mu, sel.Y_labeled) if hinge else np.zeros(n)
    return ModelState(
        a=a,
        b=b,
        beta=beta,
        theta=theta,
        kernels=prob.kernels,
        Q=prob.Q,
        config=cfg,
        n_labeled=l,
        train_index=prob.train_index,
        objective_trace=np.array(trace),
    )


def fit_uniform_baseline(data: Dataset, cfg: TrainConfig) -> ModelState:
    """Same pipeline with ``beta`` and ``theta`` frozen at ``1/V``: one classifier solve."""
    return fit(data, cfg, learn_beta=False, learn_theta=False)


def decision_function(model: ModelState, inputs) -> np.ndarray:
    """Scores ``sum_v beta_v k_v(x, X_train) A Q + b`` for new rows.

    ``inputs`` holds one entry per view: a feature matrix, or for precomputed
    views the raw kernel block against the training rows (in training order).
    """
    if len(inputs) != len(model.kernels):
        raise ValueError(f"expected {len(model.kernels)} view inputs, got {len(inputs)}")
    K = combine_kernels([k.cross(x) for k, x in zip(model.kernels, inputs)], model.beta)
    return K @ model.coef @ model.Q + model.b[None, :]


def predict(model: ModelState, inputs) -> tuple[np.ndarray, np.ndarray]:
    """Scores and +1/-1 predictions (positive score means label present)."""
    scores = decision_function(model, inputs)
    return scores, np.where(scores > 0, 1, -1)


def transductive_scores(model: ModelState) -> np.ndarray:
    """Scores on the training samples, ``G a + b`` reshaped to (samples x labels)."""
    return model.train_gram() @ model.coef @ model.Q + model.b[None, :]


def predict_dataset(model: ModelState, data: Dataset, rows) -> np.ndarray:
    rows = np.asarray(rows, dtype=int)
    inputs = [data.view_rows(v, rows, model.train_index) for v in range(len(data.views))]
    return decision_function(model, inputs)
