"""Scores, Bernoulli parameters, and binary masks, plus conversions.

The three per-weight vectors share one flat layout (see net.py). Masks are
stored bit-packed: little-endian bit order within each byte, layers
concatenated in architecture order. The packing is part of the wire and
storage contract, so it must round-trip exactly.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import expit, logit

from .errors import ConfigError, LayoutError

SELECT_MODES = ("bernoulli", "topk", "random", "dense")


class BinaryMask:
    """A {0,1}^d vector, bit-packed (little-endian bits, byte-padded tail)."""

    __slots__ = ("packed", "d")

    def __init__(self, packed: np.ndarray, d: int):
        packed = np.ascontiguousarray(packed, dtype=np.uint8)
        if packed.size != (d + 7) // 8:
            raise LayoutError(f"packed buffer has {packed.size} bytes, d={d} needs {(d + 7) // 8}")
        self.packed = packed
        self.packed.setflags(write=False)
        self.d = int(d)

    @classmethod
    def from_bits(cls, bits) -> "BinaryMask":
        bits = np.asarray(bits)
        if bits.ndim != 1:
            raise LayoutError("mask bits must be a flat vector")
        return cls(np.packbits(bits.astype(np.uint8), bitorder="little"), bits.size)

    def to_bits(self) -> np.ndarray:
        """Unpack to a uint8 0/1 vector of length d."""
        return np.unpackbits(self.packed, count=self.d, bitorder="little")

    def popcount(self) -> int:
        return int(self.to_bits().sum())

    def tobytes(self) -> bytes:
        return self.packed.tobytes()

    def __len__(self) -> int:
        return self.d

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.d == other.d and np.array_equal(self.packed, other.packed)

    def __hash__(self):
        return hash((self.d, self.packed.tobytes()))

    def __xor__(self, other: "BinaryMask") -> "BinaryMask":
        if not isinstance(other, BinaryMask) or other.d != self.d:
            raise LayoutError("xor requires masks with identical layout")
        return BinaryMask(np.bitwise_xor(self.packed, other.packed), self.d)

    def __repr__(self):
        return f"BinaryMask(d={self.d}, popcount={self.popcount()})"


def scores_to_probs(scores: np.ndarray) -> np.ndarray:
    """Elementwise sigmoid; saturates cleanly for large |s|."""
    return expit(np.asarray(scores, dtype=np.float64))


def probs_to_scores(theta: np.ndarray, clamp: float = 0.01) -> np.ndarray:
    """Inverse sigmoid after clamping theta into [clamp, 1 - clamp].

    The clamp removes the singularities at 0 and 1 that mask averaging can
    produce when every client agrees on a bit.
    """
    if not 0.0 < clamp < 0.5:
        raise ConfigError(f"clamp must lie in (0, 0.5), got {clamp}")
    theta = np.clip(np.asarray(theta, dtype=np.float64), clamp, 1.0 - clamp)
    return logit(theta)


def sample_mask(theta: np.ndarray, rng: np.random.Generator) -> BinaryMask:
    """Independent Bernoulli draw per coordinate: bit i is 1 w.p. theta_i."""
    theta = np.asarray(theta, dtype=np.float64)
    return BinaryMask.from_bits(rng.random(theta.size) < theta)


def _forced_count(k_percent: float, d: int) -> int:
    """ceil(k * d / 100) with exact integer arithmetic when k is integral."""
    if not 0.0 < k_percent <= 100.0:
        raise ConfigError(f"k_percent must lie in (0, 100], got {k_percent}")
    if float(k_percent).is_integer():
        return -((-int(k_percent) * d) // 100)
    return math.ceil(k_percent * d / 100.0)


def select_mask(mode: str, values: np.ndarray, rng: np.random.Generator | None = None,
                k_percent: float | None = None) -> BinaryMask:
    """Extract a binary mask from per-weight values.

    Modes:
      * ``bernoulli`` — values are probabilities; delegate to sample_mask.
      * ``topk`` — keep the ceil(k*d/100) largest values (scores or probs;
        both orderings agree). Ties break toward the lower flat index.
      * ``random`` — exactly ceil(k*d/100) bits chosen uniformly without
        replacement, ignoring the values.
      * ``dense`` — all-ones mask (the train-the-weights upper-bound stub).
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    d = values.size
    if mode == "bernoulli":
        if rng is None:
            raise ConfigError("bernoulli mode needs an rng")
        return sample_mask(values, rng)
    if mode == "dense":
        return BinaryMask.from_bits(np.ones(d, dtype=np.uint8))
    if k_percent is None:
        raise ConfigError(f"mode {mode!r} needs k_percent")
    m = _forced_count(k_percent, d)
    bits = np.zeros(d, dtype=np.uint8)
    if mode == "topk":
        # stable sort on -values: descending values, ties by lower index
        order = np.argsort(-values, kind="stable")
        bits[order[:m]] = 1
    elif mode == "random":
        if rng is None:
            raise ConfigError("random mode needs an rng")
        bits[rng.choice(d, size=m, replace=False)] = 1
    else:
        raise ConfigError(f"unknown mask selection mode {mode!r}")
    return BinaryMask.from_bits(bits)
