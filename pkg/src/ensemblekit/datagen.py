"""Synthetic classifier pools with known accuracy, correlation and calibration.

Each instance has a label ``y`` and a shared nuisance ``g``; classifier
``j`` sees the latent ``z = a_j (2y - 1) + b_j g + e`` with private noise
``e``. Scores are ``sigmoid(alpha_j * c_j * z + beta_j)`` with
``c_j = 1 / sqrt(a_j^2 + b_j^2 + 1)``. Because the latent is Gaussian given
the label, the exact posterior over all columns is available in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import PredictionMatrix, ValidationError, sigmoid

__all__ = ["PoolSpec", "Oracle", "generate", "bayes_posterior", "make_pool_spec"]


@dataclass(frozen=True)
class PoolSpec:
    """Generator parameters; per-classifier arrays share one length.

    ``alpha = 1, beta = 0`` leaves a classifier uncalibrated only through
    the latent normaliser; other values apply a logit-affine distortion.
    """

    n_instances: int
    positive_rate: float
    signal: tuple[float, ...]
    shared_loading: tuple[float, ...]
    alpha: tuple[float, ...] = ()
    beta: tuple[float, ...] = ()
    bags: int = 1
    seed: int | None = 0
    names: tuple[str, ...] = ()

    def __post_init__(self):
        m = len(self.signal)
        for name in ("shared_loading", "alpha", "beta", "names"):
            v = getattr(self, name)
            if name in ("alpha", "beta", "names") and len(v) == 0:
                continue
            if len(v) != m:
                raise ValidationError(f"{name} has length {len(v)}, expected {m}")
        if not 0 < self.positive_rate < 1:
            raise ValidationError("positive_rate must lie in (0, 1)")
        if any(a < 0 for a in self.signal):
            raise ValidationError("signal strengths must be >= 0")
        if self.alpha and any(a <= 0 for a in self.alpha):
            raise ValidationError("alpha must be > 0")
        if self.bags < 1 or self.n_instances < 1:
            raise ValidationError("bags and n_instances must be >= 1")

    @property
    def n_classifiers(self) -> int:
        return len(self.signal)

    def classifier_names(self) -> list[str]:
        return list(self.names) if self.names else [f"clf{j:02d}" for j in range(self.n_classifiers)]

    def column_params(self):
        """Per-column (a, b, alpha, beta) arrays, bag columns repeated."""
        m = self.n_classifiers
        a = np.repeat(np.asarray(self.signal, float), self.bags)
        b = np.repeat(np.asarray(self.shared_loading, float), self.bags)
        al = np.repeat(np.asarray(self.alpha or (1.0,) * m, float), self.bags)
        be = np.repeat(np.asarray(self.beta or (0.0,) * m, float), self.bags)
        return a, b, al, be


def make_pool_spec(n_instances, positive_rate, signal, shared_loading, alpha=None, beta=None,
                   bags=1, seed=0, names=None) -> PoolSpec:
    m = len(signal)
    return PoolSpec(
        n_instances, positive_rate, tuple(map(float, signal)),
        tuple(map(float, np.broadcast_to(shared_loading, m))),
        tuple(map(float, np.broadcast_to(alpha, m))) if alpha is not None else (),
        tuple(map(float, np.broadcast_to(beta, m))) if beta is not None else (),
        bags, seed, tuple(names) if names else (),
    )


@dataclass(frozen=True, eq=False)
class Oracle:
    """Everything needed to evaluate the exact posterior of a generated pool."""

    spec: PoolSpec
    latent: np.ndarray = field(repr=False)
    posterior: np.ndarray = field(repr=False)


def _posterior_logit(latent: np.ndarray, a: np.ndarray, b: np.ndarray, pi: float) -> np.ndarray:
    # z | y ~ N((2y-1) a, I + b b^T); inverse by Sherman-Morrison
    sinv_a = a - b * (b @ a) / (1.0 + b @ b)
    return 2.0 * latent @ sinv_a + np.log(pi / (1 - pi))


def bayes_posterior(oracle: Oracle, latent) -> np.ndarray:
    """Exact ``P(y = 1 | z)`` for one latent vector or a stack of them."""
    a, b, _, _ = oracle.spec.column_params()
    z = np.asarray(latent, dtype=np.float64)
    return sigmoid(_posterior_logit(z, a, b, oracle.spec.positive_rate))


def generate(spec: PoolSpec):
    """Draw labels and a prediction matrix from ``spec``.

    Returns ``(matrix, labels, oracle)``. Bag ``k`` of classifier ``j`` is
    column ``"<name>_b<k>"`` in group ``"<name>"`` and differs from its
    siblings only in the private noise draw.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.n_instances
    y = (rng.random(n) < spec.positive_rate).astype(np.int8)
    g = rng.standard_normal(n)
    a, b, al, be = spec.column_params()
    e = rng.standard_normal((n, a.size))
    z = a * (2.0 * y[:, None] - 1.0) + b * g[:, None] + e
    c = 1.0 / np.sqrt(a**2 + b**2 + 1.0)
    # logit(sigmoid(z c)) == z c, applied directly to avoid saturation
    scores = sigmoid(al * (z * c) + be)
    names = spec.classifier_names()
    if spec.bags == 1:
        ids = names
        groups = {n_: n_ for n_ in names}
    else:
        ids = [f"{nm}_b{k}" for nm in names for k in range(spec.bags)]
        groups = {f"{nm}_b{k}": nm for nm in names for k in range(spec.bags)}
    matrix = PredictionMatrix(
        scores, tuple(ids), tuple(f"i{i}" for i in range(n)), groups
    )
    oracle = Oracle(spec, z, sigmoid(_posterior_logit(z, a, b, spec.positive_rate)))
    return matrix, y, oracle
