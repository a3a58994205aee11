"""Moment-matching objective, optimizers, and evaluation MMD.

Training matches the mean and diagonal variance of real and generated
samples inside a frozen embedding space. The embedding is either the
identity (exact-arithmetic tests) or a small frozen random-feature network
standing in for a pretrained feature extractor. A detached Adam tracker
(the "Adam moving average") smooths the small-batch target statistics, and
plain Adam drives the score updates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.spatial.distance import cdist

from . import net
from .errors import ConfigError, LayoutError


@dataclass(frozen=True)
class EmbeddingSpec:
    """Frozen feature map; ``random_features`` wraps a signed-constant net."""

    kind: str = "identity"
    arch: net.GeneratorArch | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("identity", "random_features"):
            raise ConfigError(f"unknown embedding kind {self.kind!r}")
        if self.kind == "random_features" and self.arch is None:
            raise ConfigError("random_features embedding needs an arch")


class Embedding:
    """Callable feature map with an input-gradient path for backprop.

    The feature weights are built once and never updated; byte-identical
    outputs before and after any amount of training are part of the
    contract.
    """

    def __init__(self, spec: EmbeddingSpec):
        self.spec = spec
        if spec.kind == "random_features":
            self._weights = net.init_signed_constant(spec.arch, spec.seed)
            self._dense = np.ones(spec.arch.total_weights)
        else:
            self._weights = None
            self._dense = None

    @property
    def input_dim(self) -> int | None:
        return None if self.spec.kind == "identity" else self.spec.arch.latent_dim

    def output_dim(self, input_dim: int) -> int:
        return input_dim if self.spec.kind == "identity" else self.spec.arch.output_dim

    def __call__(self, batch: np.ndarray) -> np.ndarray:
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim != 2:
            raise LayoutError("embedding expects a (n, dim) batch")
        if self.spec.kind == "identity":
            return batch
        return net.forward(self._weights, self._dense, batch)

    def input_grad(self, batch: np.ndarray, grad_feats: np.ndarray) -> np.ndarray:
        """d(loss)/d(batch) given d(loss)/d(features)."""
        if self.spec.kind == "identity":
            return np.asarray(grad_feats, dtype=np.float64)
        return net.input_gradient(self._weights, self._dense, batch, grad_feats)


@lru_cache(maxsize=32)
def build_embedding(spec: EmbeddingSpec) -> Embedding:
    return Embedding(spec)


def embed(spec: EmbeddingSpec, batch: np.ndarray) -> np.ndarray:
    """Map a sample batch into the frozen feature space."""
    return build_embedding(spec)(batch)


@dataclass
class MomentStats:
    """Mean and diagonal variance of a feature batch."""

    mean: np.ndarray
    var_diag: np.ndarray


def moment_stats(feats: np.ndarray) -> MomentStats:
    feats = np.asarray(feats, dtype=np.float64)
    return MomentStats(mean=feats.mean(axis=0), var_diag=feats.var(axis=0))


def mmd_loss_from_stats(target: MomentStats, fake_feats: np.ndarray,
                        include_var: bool = True):
    """Moment-matching loss against fixed target statistics.

    loss = ||target.mean - mean(fake)||^2 + ||target.var - var(fake)||^2
    (variance term only when include_var). Returns (loss, analytic gradient
    with respect to fake_feats).
    """
    y = np.asarray(fake_feats, dtype=np.float64)
    if y.ndim != 2 or y.shape[1] != target.mean.size:
        raise LayoutError(f"fake feature batch {y.shape} does not match target dim "
                          f"{target.mean.size}")
    m = y.shape[0]
    mean_f = y.mean(axis=0)
    mean_diff = mean_f - target.mean
    loss = float(mean_diff @ mean_diff)
    grad = np.tile(2.0 * mean_diff / m, (m, 1))
    if include_var and m >= 2:
        var_f = y.var(axis=0)
        var_diff = var_f - target.var_diag
        loss += float(var_diff @ var_diff)
        # d var_f / d y_j = 2 (y_j - mean_f) / m; the mean-shift term cancels
        grad += (4.0 / m) * var_diff * (y - mean_f)
    return loss, grad


def mmd_loss(real_feats: np.ndarray, fake_feats: np.ndarray):
    """Mean + diagonal-variance discrepancy between two feature batches.

    Returns (loss, gradient wrt fake_feats, cov_included). The variance
    term is skipped — with the flag reporting it — whenever either batch
    has fewer than 2 rows.
    """
    x = np.asarray(real_feats, dtype=np.float64)
    y = np.asarray(fake_feats, dtype=np.float64)
    if x.shape[1] != y.shape[1]:
        raise LayoutError(f"feature dims differ: {x.shape[1]} vs {y.shape[1]}")
    cov_included = x.shape[0] >= 2 and y.shape[0] >= 2
    target = moment_stats(x)
    loss, grad = mmd_loss_from_stats(target, y, include_var=cov_included)
    return loss, grad, cov_included


@dataclass
class AdamState:
    """Standard Adam moments; single-owner mutable."""

    m: np.ndarray
    v: np.ndarray
    step_count: int = 0
    beta1: float = 0.5
    beta2: float = 0.999
    lr: float = 0.1
    eps: float = 1e-8

    @classmethod
    def zeros(cls, dim: int, **kwargs) -> "AdamState":
        return cls(m=np.zeros(dim), v=np.zeros(dim), **kwargs)


def adam_step(state: AdamState, grad: np.ndarray) -> np.ndarray:
    """One bias-corrected Adam update; returns the delta to ADD to params."""
    g = np.asarray(grad, dtype=np.float64)
    state.step_count += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * g
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    m_hat = state.m / (1.0 - state.beta1 ** state.step_count)
    v_hat = state.v / (1.0 - state.beta2 ** state.step_count)
    return -state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


@dataclass
class AmaState:
    """Adam-tracked running statistic m, pulled toward each observation.

    Update rule: m <- m - rate * Adam(m - observed), i.e. gradient descent
    on 0.5 * ||m - observed||^2 with an Adam-shaped step scaled by rate.
    """

    m: np.ndarray
    adam: AdamState
    rate: float = 1.0

    @classmethod
    def zeros(cls, dim: int, rate: float = 1.0, lr: float = 0.005,
              beta1: float = 0.5, beta2: float = 0.999) -> "AmaState":
        return cls(m=np.zeros(dim), adam=AdamState.zeros(dim, lr=lr, beta1=beta1, beta2=beta2),
                   rate=rate)


def ama_update(state: AmaState, observed: np.ndarray) -> np.ndarray:
    """Move the running statistic toward an observation; returns new m."""
    observed = np.asarray(observed, dtype=np.float64)
    if observed.shape != state.m.shape:
        raise LayoutError(f"observation shape {observed.shape} != tracked {state.m.shape}")
    if state.rate != 0.0:
        delta = adam_step(state.adam, state.m - observed)
        state.m = state.m + state.rate * delta
    return state.m


def median_bandwidth(x: np.ndarray) -> float:
    """Median-heuristic Gaussian kernel bandwidth for a sample."""
    sq = cdist(x, x, "sqeuclidean")
    vals = sq[np.triu_indices_from(sq, k=1)]
    vals = vals[vals > 0.0]
    if vals.size == 0:
        return 1.0
    return float(np.sqrt(0.5 * np.median(vals)))


def rbf_mmd(a: np.ndarray, b: np.ndarray, bandwidth: float) -> float:
    """Unbiased squared MMD with a Gaussian kernel exp(-||x-y||^2 / 2 bw^2).

    The evaluation metric of the simulator. May be slightly negative by
    construction of the unbiased estimator.
    """
    if bandwidth <= 0.0:
        raise ConfigError(f"bandwidth must be positive, got {bandwidth}")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[1] != b.shape[1]:
        raise LayoutError(f"sample dims differ: {a.shape[1]} vs {b.shape[1]}")
    m, n = a.shape[0], b.shape[0]
    if m < 2 or n < 2:
        raise ConfigError("rbf_mmd needs at least 2 samples per side")
    gamma = 1.0 / (2.0 * bandwidth * bandwidth)
    kaa = np.exp(-gamma * cdist(a, a, "sqeuclidean"))
    kbb = np.exp(-gamma * cdist(b, b, "sqeuclidean"))
    kab = np.exp(-gamma * cdist(a, b, "sqeuclidean"))
    term_a = (kaa.sum() - np.trace(kaa)) / (m * (m - 1))
    term_b = (kbb.sum() - np.trace(kbb)) / (n * (n - 1))
    return float(term_a + term_b - 2.0 * kab.mean())
