"""Server-side aggregation: mask averaging, MADA, and hybrid payloads.

The server averages client masks into a fresh global Bernoulli parameter,
measures how far the freshly sampled global mask moved from the previous
round's, and uses that distance as the interpolation weight between the
old global state and the new aggregate (mask-aware dynamic moving
average). The hybrid variant lets a fraction of layers upload raw
probabilities (32 bits per weight) instead of mask bits (1 bit) for higher
fidelity at higher cost.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, LayoutError, ProtocolError
from .masking import BinaryMask, probs_to_scores, scores_to_probs
from .net import GeneratorArch

MADA_METRICS = ("hamming", "cosine", "off")
HYBRID_PATHS = ("forward", "backward")


@dataclass(frozen=True)
class MadaConfig:
    """Distance metric and interpolation space for the moving average."""

    metric: str = "hamming"
    space: str = "score"

    def __post_init__(self):
        if self.metric not in MADA_METRICS:
            raise ConfigError(f"unknown MADA metric {self.metric!r}")
        if self.space not in ("score", "prob"):
            raise ConfigError(f"unknown MADA space {self.space!r}")


@dataclass(frozen=True)
class HybridConfig:
    """Fraction of layers that upload probabilities instead of masks."""

    alpha_percent: float = 0.0
    path: str = "backward"

    def __post_init__(self):
        if not 0.0 <= self.alpha_percent <= 100.0:
            raise ConfigError(f"alpha_percent must lie in [0, 100], got {self.alpha_percent}")
        if self.path not in HYBRID_PATHS:
            raise ConfigError(f"unknown hybrid path {self.path!r}")


@dataclass
class GlobalState:
    """Server-side state carried between rounds."""

    theta: np.ndarray
    prev_theta: np.ndarray
    prev_global_mask: BinaryMask
    round: int = 0


def aggregate_masks(masks: list[BinaryMask]) -> np.ndarray:
    """Elementwise mean of client masks; theta * K is integer-valued."""
    if not masks:
        raise ConfigError("need at least one mask to aggregate")
    d = masks[0].d
    total = np.zeros(d, dtype=np.int64)
    for m in masks:
        if m.d != d:
            raise LayoutError(f"mask layouts differ: {m.d} vs {d}")
        total += m.to_bits()
    return total / float(len(masks))


def mask_distance(a: BinaryMask, b: BinaryMask, metric: str = "hamming") -> float:
    """Distance in [0, 1] between two masks of identical layout.

    hamming: fraction of differing bits. cosine: 1 - a.b / (|a| |b|); if
    exactly one operand is all-zero the distance is 1, if both are it is 0.
    """
    if a.d != b.d:
        raise LayoutError(f"mask layouts differ: {a.d} vs {b.d}")
    if metric == "hamming":
        return (a ^ b).popcount() / a.d
    if metric == "cosine":
        pa, pb = a.popcount(), b.popcount()
        if pa == 0 and pb == 0:
            return 0.0
        if pa == 0 or pb == 0:
            return 1.0
        both = np.bitwise_and(a.packed, b.packed)
        dot = int(np.unpackbits(both, count=a.d, bitorder="little").sum())
        return 1.0 - dot / (np.sqrt(pa) * np.sqrt(pb))
    raise ConfigError(f"unknown mask distance metric {metric!r}")


def mada_update(prev_theta: np.ndarray, fresh_theta: np.ndarray, lam: float,
                space: str = "score", clamp: float = 0.01) -> np.ndarray:
    """Convex combination (1 - lam) * prev + lam * fresh, in score or prob space.

    lam = 0 and lam = 1 short-circuit to exact copies of the respective
    operand, so a zero distance leaves the global state bitwise unchanged.
    In score space both operands pass through the clamped inverse sigmoid
    first and the result is mapped back to probabilities.
    """
    if not 0.0 <= lam <= 1.0:
        raise ConfigError(f"lambda must lie in [0, 1], got {lam}")
    prev_theta = np.asarray(prev_theta, dtype=np.float64)
    fresh_theta = np.asarray(fresh_theta, dtype=np.float64)
    if prev_theta.shape != fresh_theta.shape:
        raise LayoutError("theta layouts differ")
    if lam == 0.0:
        return prev_theta.copy()
    if lam == 1.0:
        return fresh_theta.copy()
    if space == "prob":
        return (1.0 - lam) * prev_theta + lam * fresh_theta
    if space == "score":
        s = (1.0 - lam) * probs_to_scores(prev_theta, clamp) \
            + lam * probs_to_scores(fresh_theta, clamp)
        return scores_to_probs(s)
    raise ConfigError(f"unknown MADA space {space!r}")


def hybrid_select_layers(arch: GeneratorArch, alpha_percent: float,
                         path: str = "backward") -> np.ndarray:
    """Per-layer flags: True = score (probability) layer, False = mask layer.

    The score-layer count is round-half-up of alpha * L / 100; the backward
    path flags the deepest layers (nearest the output) first, the forward
    path the shallowest.
    """
    if not 0.0 <= alpha_percent <= 100.0:
        raise ConfigError(f"alpha_percent must lie in [0, 100], got {alpha_percent}")
    if path not in HYBRID_PATHS:
        raise ConfigError(f"unknown hybrid path {path!r}")
    num_layers = arch.num_layers
    n_score = int(np.floor(alpha_percent * num_layers / 100.0 + 0.5))
    flags = np.zeros(num_layers, dtype=bool)
    if n_score > 0:
        if path == "backward":
            flags[num_layers - n_score:] = True
        else:
            flags[:n_score] = True
    return flags


def hybrid_aggregate(client_layers: list[list], flags: np.ndarray) -> np.ndarray:
    """Aggregate per-layer payload parts under the layer-kind flags.

    ``client_layers[k][l]`` is client k's part for layer l: a BinaryMask
    where flags[l] is False, a probability vector where it is True. Mask
    layers are averaged like aggregate_masks; score layers are elementwise
    means of the raw probabilities. Kind mismatches raise ProtocolError.
    """
    if not client_layers:
        raise ConfigError("need at least one client payload")
    num_layers = len(flags)
    out = []
    for l in range(num_layers):
        parts = []
        for k, layers in enumerate(client_layers):
            if len(layers) != num_layers:
                raise ProtocolError(f"client {k} sent {len(layers)} layers, expected {num_layers}")
            part = layers[l]
            if flags[l]:
                if isinstance(part, BinaryMask):
                    raise ProtocolError(f"client {k} sent a mask for score layer {l}")
                parts.append(np.asarray(part, dtype=np.float64))
            else:
                if not isinstance(part, BinaryMask):
                    raise ProtocolError(f"client {k} sent probabilities for mask layer {l}")
                parts.append(part)
        if flags[l]:
            sizes = {p.size for p in parts}
            if len(sizes) != 1:
                raise LayoutError(f"score layer {l} parts disagree on size")
            out.append(np.mean(parts, axis=0))
        else:
            out.append(aggregate_masks(parts))
    return np.concatenate(out)


# ---------------------------------------------------------------------------
# Simulated uplink wire format
#
# header:  round u32 LE | client_id u32 LE | layer-kind bitmap, one bit per
#          layer (1 = score layer), little-endian bit order, byte-padded
# body:    per layer, in order — mask layer: bit-packed bits (little-endian,
#          byte-padded); score layer: fan_in*fan_out float32 LE
# ---------------------------------------------------------------------------

@dataclass
class UplinkPayload:
    """One client's per-round upload: a mask or probability part per layer."""

    round: int
    client_id: int
    layers: list

    def layer_kinds(self) -> np.ndarray:
        return np.array([not isinstance(p, BinaryMask) for p in self.layers], dtype=bool)


def encode_payload(payload: UplinkPayload, arch: GeneratorArch) -> bytes:
    if len(payload.layers) != arch.num_layers:
        raise ProtocolError(f"payload has {len(payload.layers)} layers, arch has "
                            f"{arch.num_layers}")
    kinds = payload.layer_kinds()
    buf = bytearray(struct.pack("<II", payload.round, payload.client_id))
    buf += np.packbits(kinds.astype(np.uint8), bitorder="little").tobytes()
    for l, spec in enumerate(arch.layers):
        part = payload.layers[l]
        if kinds[l]:
            probs = np.asarray(part, dtype=np.float32)
            if probs.size != spec.size:
                raise ProtocolError(f"layer {l} probabilities have {probs.size} entries, "
                                    f"expected {spec.size}")
            buf += probs.astype("<f4").tobytes()
        else:
            if part.d != spec.size:
                raise ProtocolError(f"layer {l} mask has {part.d} bits, expected {spec.size}")
            buf += part.tobytes()
    return bytes(buf)


def decode_payload(buf: bytes, arch: GeneratorArch) -> UplinkPayload:
    header_len = 8 + (arch.num_layers + 7) // 8
    if len(buf) < header_len:
        raise ProtocolError(f"payload truncated in header: {len(buf)} < {header_len} bytes")
    round_idx, client_id = struct.unpack_from("<II", buf, 0)
    kind_bytes = np.frombuffer(buf, dtype=np.uint8, count=(arch.num_layers + 7) // 8, offset=8)
    kinds = np.unpackbits(kind_bytes, count=arch.num_layers, bitorder="little").astype(bool)
    off = header_len
    layers = []
    for l, spec in enumerate(arch.layers):
        if kinds[l]:
            nbytes = 4 * spec.size
            if len(buf) < off + nbytes:
                raise ProtocolError(f"payload truncated in layer {l}")
            probs = np.frombuffer(buf, dtype="<f4", count=spec.size, offset=off)
            layers.append(probs.astype(np.float64))
            off += nbytes
        else:
            nbytes = (spec.size + 7) // 8
            if len(buf) < off + nbytes:
                raise ProtocolError(f"payload truncated in layer {l}")
            packed = np.frombuffer(buf, dtype=np.uint8, count=nbytes, offset=off)
            layers.append(BinaryMask(packed.copy(), spec.size))
            off += nbytes
    if off != len(buf):
        raise ProtocolError(f"payload has {len(buf) - off} trailing bytes")
    return UplinkPayload(round=round_idx, client_id=client_id, layers=layers)
