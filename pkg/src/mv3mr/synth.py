"""Seeded multi-view multi-label synthetic data."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import DistanceMetric
from .trainer import Dataset, View


@dataclass
class SyntheticSpec:
    """Generator settings.

    Each sample gets ``n_labels`` latent scores ``z_ij = sqrt(rho) c_i +
    sqrt(1 - rho) e_ij`` (``rho`` the label correlation) and label
    ``y_ij = sign(z_ij - offset_j)``. View ``v`` observes
    ``iota_v * P_v z_i + sqrt((1 - iota_v)^2 + noise^2) * eps`` where
    ``iota_v`` is its informativeness and ``P_v`` a fixed random lift to
    ``dim`` coordinates. An uninformative view is pure noise.
    """

    seed: int = 0
    n_labeled: int = 40
    n_unlabeled: int = 120
    n_test: int = 40
    n_labels: int = 3
    informativeness: tuple[float, ...] = (1.0, 0.5, 0.0)
    label_correlation: float = 0.3
    noise: float = 0.5
    dim: int = 10
    metric: str = "l2"
    label_offsets: tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self):
        self.informativeness = tuple(float(x) for x in np.atleast_1d(self.informativeness))
        self.label_offsets = tuple(float(x) for x in np.atleast_1d(self.label_offsets))
        self.validate()

    def validate(self):
        if self.n_labeled < 1 or self.n_unlabeled < 0 or self.n_test < 0:
            raise ValueError("need n_labeled >= 1 and nonnegative unlabeled/test counts")
        if self.n_labels < 1 or self.dim < 1:
            raise ValueError("n_labels and dim must be positive")
        if not self.informativeness:
            raise ValueError("need at least one view")
        if any(not 0.0 <= x <= 1.0 for x in self.informativeness):
            raise ValueError("informativeness values must lie in [0, 1]")
        if not 0.0 <= self.label_correlation <= 1.0:
            raise ValueError("label_correlation must lie in [0, 1]")
        if self.noise < 0:
            raise ValueError("noise must be nonnegative")
        if self.label_offsets and len(self.label_offsets) != self.n_labels:
            raise ValueError("label_offsets needs one entry per label")
        DistanceMetric.parse(self.metric)

    @property
    def n_samples(self) -> int:
        return self.n_labeled + self.n_unlabeled + self.n_test


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Draw a dataset; labeled rows come first, then unlabeled, then test."""
    rng = np.random.default_rng(spec.seed)
    N, n = spec.n_samples, spec.n_labels
    rho = spec.label_correlation
    common = rng.standard_normal((N, 1))
    own = rng.standard_normal((N, n))
    Z = np.sqrt(rho) * common + np.sqrt(1.0 - rho) * own
    offsets = np.array(spec.label_offsets) if spec.label_offsets else np.zeros(n)
    truth = np.where(Z - offsets[None, :] > 0, 1.0, -1.0)

    metric = DistanceMetric.parse(spec.metric)
    views = []
    for v, iota in enumerate(spec.informativeness):
        P = rng.standard_normal((n, spec.dim)) / np.sqrt(n)
        sigma = np.sqrt((1.0 - iota) ** 2 + spec.noise**2)
        X = iota * (Z @ P) + sigma * rng.standard_normal((N, spec.dim))
        if metric is DistanceMetric.CHI2:
            X = np.abs(X)
        views.append(View(name=f"view{v}", kind="features", data=X, metric=metric))

    labeled = np.arange(spec.n_labeled)
    unlabeled = np.arange(spec.n_labeled, spec.n_labeled + spec.n_unlabeled)
    test = np.arange(spec.n_labeled + spec.n_unlabeled, N)
    Y = np.zeros((N, n))
    Y[labeled] = truth[labeled]
    return Dataset(views=views, Y=Y, labeled=labeled, unlabeled=unlabeled, test=test, truth=truth)
