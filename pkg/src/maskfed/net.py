"""Feed-forward generator with frozen signed-constant weights.

The generator never trains its weights. Each weight is fixed at +scale or
-scale for its layer (scale = sqrt(2 / fan_in), the Kaiming-normal standard
deviation), and learning happens entirely through a per-weight multiplier:
either a hard binary mask or, in the relaxed mode used for training, the
Bernoulli probability of that mask bit. The backward pass treats the mask
as its expectation (straight-through), so the analytic score gradient is
exactly the gradient of the relaxed forward and can be checked against
finite differences.

Layout convention used across the whole package: per-weight vectors
(scores, probabilities, mask bits) are flat float64/uint8 arrays with the
layers concatenated in architecture order, each layer flattened C-order
over its (fan_in, fan_out) matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import LayoutError

ACTIVATIONS = ("relu", "tanh", "none")


@dataclass(frozen=True)
class LayerSpec:
    """One dense layer: fan_in inputs, fan_out outputs, then an activation."""

    fan_in: int
    fan_out: int
    activation: str = "relu"

    def __post_init__(self):
        if self.fan_in < 1 or self.fan_out < 1:
            raise ValueError(f"layer dims must be >= 1, got {self.fan_in}x{self.fan_out}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def size(self) -> int:
        return self.fan_in * self.fan_out


@dataclass(frozen=True)
class GeneratorArch:
    """Architecture of the generator: latent vector in, sample vector out.

    Consecutive layers must chain (fan_out of layer l equals fan_in of
    layer l+1), the first fan_in must equal latent_dim and the last
    fan_out must equal output_dim.
    """

    latent_dim: int
    layers: tuple[LayerSpec, ...]
    output_dim: int

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if not layers:
            raise ValueError("architecture needs at least one layer")
        if layers[0].fan_in != self.latent_dim:
            raise ValueError("first layer fan_in must equal latent_dim")
        if layers[-1].fan_out != self.output_dim:
            raise ValueError("last layer fan_out must equal output_dim")
        for a, b in zip(layers, layers[1:]):
            if a.fan_out != b.fan_in:
                raise ValueError(f"layers do not chain: {a.fan_out} -> {b.fan_in}")

    @classmethod
    def mlp(cls, latent_dim: int, hidden: tuple[int, ...], output_dim: int,
            hidden_activation: str = "relu", output_activation: str = "tanh") -> "GeneratorArch":
        """Convenience constructor for a plain MLP generator."""
        dims = (latent_dim, *hidden, output_dim)
        layers = []
        for i, (fi, fo) in enumerate(zip(dims, dims[1:])):
            act = output_activation if i == len(dims) - 2 else hidden_activation
            layers.append(LayerSpec(fi, fo, act))
        return cls(latent_dim, tuple(layers), output_dim)

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return tuple(l.size for l in self.layers)

    @property
    def total_weights(self) -> int:
        return sum(self.layer_sizes)

    def layer_slices(self) -> tuple[slice, ...]:
        """Flat-vector slice of each layer in the shared layout."""
        out, off = [], 0
        for n in self.layer_sizes:
            out.append(slice(off, off + n))
            off += n
        return tuple(out)


def kaiming_scale(fan_in: int) -> float:
    """Per-layer weight magnitude: sqrt(2 / fan_in)."""
    return math.sqrt(2.0 / fan_in)


class SignedConstantWeights:
    """Frozen weights: a per-layer positive scale and a sign bit per weight.

    Immutable after construction; the sign arrays are marked read-only so
    instances can be shared freely across concurrent client evaluations.
    """

    def __init__(self, arch: GeneratorArch, seed: int,
                 sign_bits: np.ndarray, scales: tuple[float, ...] | None = None):
        if sign_bits.shape != (arch.total_weights,):
            raise LayoutError(
                f"sign bitmap has {sign_bits.shape} bits, arch needs {arch.total_weights}")
        self.arch = arch
        self.seed = int(seed)
        self.scales = tuple(scales) if scales is not None else tuple(
            kaiming_scale(l.fan_in) for l in arch.layers)
        if len(self.scales) != arch.num_layers:
            raise LayoutError("one scale per layer required")
        self.sign_bits = np.ascontiguousarray(sign_bits, dtype=np.uint8)
        self.sign_bits.setflags(write=False)
        # Dense per-layer matrices (+scale / -scale), cached for the forward pass.
        self._matrices = []
        for spec, sl, scale in zip(arch.layers, arch.layer_slices(), self.scales):
            signs = np.where(self.sign_bits[sl] == 1, 1.0, -1.0)
            mat = (scale * signs).reshape(spec.fan_in, spec.fan_out)
            mat.setflags(write=False)
            self._matrices.append(mat)

    def matrix(self, layer: int) -> np.ndarray:
        """Dense (fan_in, fan_out) weight matrix of one layer."""
        return self._matrices[layer]

    @property
    def flat(self) -> np.ndarray:
        """All weights as one flat vector in the shared layout."""
        return np.concatenate([m.ravel() for m in self._matrices])


def init_signed_constant(arch: GeneratorArch, seed: int) -> SignedConstantWeights:
    """Draw the frozen random network for a given architecture and seed.

    Each sign bit is an independent fair coin from a per-layer stream
    derived from ``seed``, so (arch, seed) determines the network
    bit-for-bit.
    """
    from .rng import stream

    parts = []
    for l, spec in enumerate(arch.layers):
        rng = stream(seed, "signs", l)
        parts.append(rng.integers(0, 2, size=spec.size, dtype=np.uint8))
    return SignedConstantWeights(arch, seed, np.concatenate(parts))


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    return z


def _activate_grad(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return (z > 0.0).astype(np.float64)
    if kind == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    return np.ones_like(z)


def _as_multiplier(weights: SignedConstantWeights, mask_or_probs) -> np.ndarray:
    """Accept a BinaryMask or a flat probability vector; return float64 flat."""
    bits = getattr(mask_or_probs, "to_bits", None)
    mult = bits() if callable(bits) else mask_or_probs
    mult = np.asarray(mult, dtype=np.float64).ravel()
    if mult.shape != (weights.arch.total_weights,):
        raise LayoutError(
            f"multiplier has {mult.size} entries, layout needs {weights.arch.total_weights}")
    return mult


def _check_latent(weights: SignedConstantWeights, latent: np.ndarray) -> np.ndarray:
    latent = np.asarray(latent, dtype=np.float64)
    if latent.ndim != 2 or latent.shape[1] != weights.arch.latent_dim:
        raise LayoutError(
            f"latent batch must be (n, {weights.arch.latent_dim}), got {latent.shape}")
    return latent


def _forward_cached(weights: SignedConstantWeights, mult: np.ndarray, latent: np.ndarray):
    """Run the multiplier-scaled forward pass, keeping per-layer caches."""
    slices = weights.arch.layer_slices()
    h = latent
    inputs, preacts, eff_mats = [], [], []
    for l, spec in enumerate(weights.arch.layers):
        w_eff = weights.matrix(l) * mult[slices[l]].reshape(spec.fan_in, spec.fan_out)
        z = h @ w_eff
        inputs.append(h)
        preacts.append(z)
        eff_mats.append(w_eff)
        h = _activate(z, spec.activation)
    return h, inputs, preacts, eff_mats


def forward(weights: SignedConstantWeights, mask_or_probs, latent: np.ndarray) -> np.ndarray:
    """Generate outputs for a latent batch.

    ``mask_or_probs`` is either a BinaryMask (hard 0/1 multiplier — every
    effective weight is exactly 0 or +-scale) or a probability vector
    (relaxed mode, effective weight = weight * theta).
    """
    latent = _check_latent(weights, latent)
    mult = _as_multiplier(weights, mask_or_probs)
    out, _, _, _ = _forward_cached(weights, mult, latent)
    return out


def _backward_cached(weights, inputs, preacts, eff_mats, output_grad):
    """Backprop a loss gradient through the cached forward pass.

    Returns (grad wrt effective weights, flat; grad wrt latent inputs).
    """
    slices = weights.arch.layer_slices()
    grad_w = np.empty(weights.arch.total_weights)
    g = np.asarray(output_grad, dtype=np.float64)
    for l in range(weights.arch.num_layers - 1, -1, -1):
        spec = weights.arch.layers[l]
        gz = g * _activate_grad(preacts[l], spec.activation)
        grad_w[slices[l]] = (inputs[l].T @ gz).ravel()
        g = gz @ eff_mats[l].T
    return grad_w, g


def backward_scores(weights: SignedConstantWeights, probs: np.ndarray,
                    latent: np.ndarray, output_grad: np.ndarray,
                    multiplier=None) -> np.ndarray:
    """Gradient of a loss with respect to the per-weight scores.

    The forward path is re-run in relaxed mode (multiplier = probs) and the
    chain rule is closed through the sigmoid:

        dL/ds_i = dL/dW_eff_i * W_init_i * theta_i * (1 - theta_i)

    Args:
        weights: the frozen network.
        probs: Bernoulli parameters theta = sigmoid(scores), flat layout.
        latent: the latent batch the loss was evaluated on.
        output_grad: dL/d(generator output), shape like the output batch.
        multiplier: optional hard mask for the sampled-mask experiment; the
            forward path then uses the mask while the sigmoid derivative
            still comes from ``probs``.

    Returns:
        Flat float64 score-gradient vector in the shared layout.
    """
    latent = _check_latent(weights, latent)
    theta = _as_multiplier(weights, probs)
    mult = theta if multiplier is None else _as_multiplier(weights, multiplier)
    out, inputs, preacts, eff_mats = _forward_cached(weights, mult, latent)
    output_grad = np.asarray(output_grad, dtype=np.float64)
    if output_grad.shape != out.shape:
        raise LayoutError(f"output_grad shape {output_grad.shape} != output {out.shape}")
    grad_w, _ = _backward_cached(weights, inputs, preacts, eff_mats, output_grad)
    return grad_w * weights.flat * theta * (1.0 - theta)


def input_gradient(weights: SignedConstantWeights, mask_or_probs,
                   batch: np.ndarray, output_grad: np.ndarray) -> np.ndarray:
    """Gradient of a loss with respect to the network *inputs*.

    Used to backpropagate through frozen feature networks (the weights of
    which carry no scores).
    """
    batch = _check_latent(weights, batch)
    mult = _as_multiplier(weights, mask_or_probs)
    out, inputs, preacts, eff_mats = _forward_cached(weights, mult, batch)
    output_grad = np.asarray(output_grad, dtype=np.float64)
    if output_grad.shape != out.shape:
        raise LayoutError(f"output_grad shape {output_grad.shape} != output {out.shape}")
    _, grad_in = _backward_cached(weights, inputs, preacts, eff_mats, output_grad)
    return grad_in
