"""Gaussian-mechanism privatization of Bernoulli parameters and RDP accounting.

The probability vector a client would upload is privatized by adding
Gaussian noise and clipping into [c, 1-c] before the mask is sampled from
it. Budget tracking composes the Gaussian mechanism's Renyi divergence
across rounds over a fixed order grid and converts to (epsilon, delta)-DP.

Sensitivity note: the L2 sensitivity of theta between neighboring datasets
is a configuration parameter (default 1.0), so every reported epsilon is
relative to that choice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

# 1.5 plus the integers 2..64: dense enough at desk scale, cheap to scan.
DEFAULT_ORDERS: tuple[float, ...] = (1.5,) + tuple(float(a) for a in range(2, 65))


@dataclass(frozen=True)
class PrivacySpec:
    """Privacy budget and mechanism parameters."""

    epsilon: float = 9.8
    delta: float = 1e-5
    clip_c: float = 0.1
    sensitivity: float = 1.0
    enabled: bool = False

    def __post_init__(self):
        if self.epsilon <= 0.0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError(f"delta must lie in (0, 1), got {self.delta}")
        if not 0.0 < self.clip_c < 0.5:
            raise ConfigError(f"clip_c must lie in (0, 0.5), got {self.clip_c}")
        if self.sensitivity <= 0.0:
            raise ConfigError(f"sensitivity must be > 0, got {self.sensitivity}")


def gaussian_sigma(epsilon: float, delta: float, sensitivity: float = 1.0) -> float:
    """Noise scale of the classic Gaussian mechanism.

    sigma = sqrt(2 ln(1.25 / delta)) * sensitivity / epsilon
    """
    return math.sqrt(2.0 * math.log(1.25 / delta)) * sensitivity / epsilon


def privatize(theta: np.ndarray, sigma: float, clip_c: float,
              rng: np.random.Generator) -> np.ndarray:
    """Add N(0, sigma^2) noise per coordinate, then clip into [c, 1-c]."""
    if not 0.0 < clip_c < 0.5:
        raise ConfigError(f"clip_c must lie in (0, 0.5), got {clip_c}")
    theta = np.asarray(theta, dtype=np.float64)
    noisy = theta + sigma * rng.standard_normal(theta.shape) if sigma > 0.0 else theta
    return np.clip(noisy, clip_c, 1.0 - clip_c)


def gamma_alpha(c: float, alpha: float) -> float:
    """Renyi divergence of order alpha between Bernoulli(c) and Bernoulli(1-c).

    gamma_alpha(c) = log(c^a (1-c)^(1-a) + (1-c)^a c^(1-a)) / (a - 1).

    Computed in log space on the canonical pair (min(c, 1-c), its
    complement), which makes the c <-> 1-c symmetry exact and gives
    gamma_alpha(0.5) == 0.0 identically.
    """
    if not 0.0 < c < 1.0:
        raise ConfigError(f"c must lie in (0, 1), got {c}")
    if alpha <= 1.0:
        raise ConfigError(f"alpha must be > 1, got {alpha}")
    lo = min(c, 1.0 - c)
    hi = 1.0 - lo
    log_lo, log_hi = math.log(lo), math.log(hi)
    t1 = alpha * log_lo + (1.0 - alpha) * log_hi
    t2 = alpha * log_hi + (1.0 - alpha) * log_lo
    return float(np.logaddexp(t1, t2)) / (alpha - 1.0)


def amplified_epsilon(eps: float, d: int, c: float, alpha: float) -> float:
    """Post-processing amplification bound: min(eps, d * gamma_alpha(c)).

    d is the number of released Bernoulli coordinates; the bound stops
    helping once the model is large.
    """
    if d < 0:
        raise ConfigError(f"d must be >= 0, got {d}")
    if d == 0:
        return 0.0
    return min(eps, d * gamma_alpha(c, alpha))


@dataclass
class RdpAccountant:
    """Additive per-order RDP ledger for repeated Gaussian releases."""

    orders: tuple[float, ...] = DEFAULT_ORDERS
    eps_at_order: np.ndarray = None
    rounds_accumulated: int = 0

    def __post_init__(self):
        if len(self.orders) == 0:
            raise ConfigError("order grid must be non-empty")
        if any(a <= 1.0 for a in self.orders):
            raise ConfigError("all RDP orders must be > 1")
        if self.eps_at_order is None:
            self.eps_at_order = np.zeros(len(self.orders))

    def to_dict(self) -> dict:
        return {
            "orders": list(self.orders),
            "eps_at_order": [float(e) for e in self.eps_at_order],
            "rounds_accumulated": self.rounds_accumulated,
        }


def accountant_accumulate(acc: RdpAccountant, sigma: float, rounds: int = 1,
                          sensitivity: float = 1.0) -> RdpAccountant:
    """Charge ``rounds`` Gaussian releases of scale sigma to the ledger.

    Per release the Gaussian mechanism is (alpha, alpha * Delta^2 / (2 sigma^2))-RDP;
    composition is additive per order.
    """
    if sigma <= 0.0:
        raise ConfigError(f"sigma must be > 0, got {sigma}")
    if rounds < 0:
        raise ConfigError(f"rounds must be >= 0, got {rounds}")
    per_round = np.array([a * sensitivity ** 2 / (2.0 * sigma ** 2) for a in acc.orders])
    acc.eps_at_order = acc.eps_at_order + rounds * per_round
    acc.rounds_accumulated += rounds
    return acc


def accountant_to_dp(acc: RdpAccountant, delta: float) -> float:
    """Best (epsilon, delta)-DP over the order grid.

    epsilon = min_a [ eps(a) + ln(1/delta) / (a - 1) ]; returns 0.0 when no
    mechanism has been applied yet.
    """
    if not 0.0 < delta < 1.0:
        raise ConfigError(f"delta must lie in (0, 1), got {delta}")
    if acc.rounds_accumulated == 0:
        return 0.0
    log_inv_delta = math.log(1.0 / delta)
    candidates = [e + log_inv_delta / (a - 1.0)
                  for a, e in zip(acc.orders, acc.eps_at_order)]
    return float(min(candidates))
