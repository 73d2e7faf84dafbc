"""Fully-connected autoencoder core: parameters, forward pass, exact gradients.

The detector is a mirror-symmetric MLP autoencoder. Layer widths run
``[input] + hidden + [code] + reversed(hidden) + [input]``; every layer except
the output applies ReLU, optionally followed by inverted dropout in train
mode. The anomaly score of a sample is its squared-L2 reconstruction error.
All arithmetic is float64 and every randomised step takes an explicit seed,
so identical inputs always produce identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, List, Sequence, Tuple

import numpy as np

Mode = str  # "train" or "eval"

_MODES = ("train", "eval")


def _check_mode(mode: str) -> None:
    if mode not in _MODES:
        raise ValueError(f"mode must be one of {_MODES}, got {mode!r}")


# ---------------------------------------------------------------------------
# Architecture
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ArchSpec:
    """Shape of the autoencoder: encoder widths are mirrored in the decoder."""

    input_dim: int
    hidden_dims: Tuple[int, ...]
    code_dim: int
    dropout_prob: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.input_dim < 1:
            raise ValueError(f"input_dim must be >= 1, got {self.input_dim}")
        if not self.hidden_dims:
            raise ValueError("hidden_dims must be non-empty")
        if any(h < 1 for h in self.hidden_dims):
            raise ValueError(f"hidden layer widths must be >= 1, got {self.hidden_dims}")
        if self.code_dim < 1:
            raise ValueError(f"code_dim must be >= 1, got {self.code_dim}")
        if self.code_dim >= self.input_dim:
            raise ValueError(
                f"code_dim must be < input_dim for a compressing code "
                f"(code_dim={self.code_dim}, input_dim={self.input_dim})"
            )
        if not 0.0 <= self.dropout_prob < 1.0:
            raise ValueError(f"dropout_prob must be in [0, 1), got {self.dropout_prob}")

    @classmethod
    def default(cls, input_dim: int, dropout_prob: float = 0.2) -> "ArchSpec":
        """Stock detector shape: hidden [128, 96, 64] around a 32-wide code."""
        return cls(input_dim, (128, 96, 64), 32, dropout_prob)

    @property
    def layer_widths(self) -> Tuple[int, ...]:
        """Widths of every layer, input through output."""
        h = self.hidden_dims
        return (self.input_dim, *h, self.code_dim, *reversed(h), self.input_dim)

    @property
    def layer_dims(self) -> Tuple[Tuple[int, int], ...]:
        """(fan_in, fan_out) of each dense layer in forward order."""
        w = self.layer_widths
        return tuple(zip(w[:-1], w[1:]))


def param_count(arch: ArchSpec) -> int:
    """Total number of scalar parameters: sum of (fan_in + 1) * fan_out."""
    return sum((d_in + 1) * d_out for d_in, d_out in arch.layer_dims)


# ---------------------------------------------------------------------------
# Parameter and gradient vectors
# ---------------------------------------------------------------------------


def _frozen_array(values: np.ndarray) -> np.ndarray:
    out = np.array(values, dtype=np.float64)
    if out.ndim != 1:
        raise ValueError(f"expected a flat vector, got shape {out.shape}")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ParamVector:
    """Flat float64 view of all weights and biases in layer order (W then b)."""

    arch: ArchSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        vals = _frozen_array(self.values)
        if vals.size != param_count(self.arch):
            raise ValueError(
                f"parameter vector has {vals.size} entries, "
                f"architecture needs {param_count(self.arch)}"
            )
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, arch: ArchSpec) -> "ParamVector":
        return cls(arch, np.zeros(param_count(arch)))


@dataclass(frozen=True)
class GradVector:
    """Gradient in the same flat layout as :class:`ParamVector`."""

    arch: ArchSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        vals = _frozen_array(self.values)
        if vals.size != param_count(self.arch):
            raise ValueError(
                f"gradient vector has {vals.size} entries, "
                f"architecture needs {param_count(self.arch)}"
            )
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, arch: ArchSpec) -> "GradVector":
        return cls(arch, np.zeros(param_count(arch)))


def _layer_views(values: np.ndarray, arch: ArchSpec) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """Yield (W, b) per layer as reshaped views of the flat vector."""
    off = 0
    for d_in, d_out in arch.layer_dims:
        w = values[off : off + d_in * d_out].reshape(d_out, d_in)
        off += d_in * d_out
        b = values[off : off + d_out]
        off += d_out
        yield w, b


def init_params(arch: ArchSpec, seed: int) -> ParamVector:
    """Seed-deterministic init: W ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), b = 0."""
    rng = np.random.default_rng(seed)
    parts: List[np.ndarray] = []
    for d_in, d_out in arch.layer_dims:
        bound = 1.0 / np.sqrt(d_in)
        parts.append(rng.uniform(-bound, bound, size=d_in * d_out))
        parts.append(np.zeros(d_out))
    return ParamVector(arch, np.concatenate(parts))


# ---------------------------------------------------------------------------
# Forward / loss / gradient
# ---------------------------------------------------------------------------


def _as_batch(x: Sequence[float] | np.ndarray, input_dim: int) -> Tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != input_dim:
        raise ValueError(f"expected samples of dimension {input_dim}, got shape {np.asarray(x).shape}")
    return arr, single


def _run_forward(
    params: ParamVector,
    X: np.ndarray,
    mode: str,
    mask_seed: int,
    keep_cache: bool,
):
    """Shared forward pass. With keep_cache, returns layer inputs, pre-activations
    and the scaled dropout masks needed for backprop."""
    arch = params.arch
    p = arch.dropout_prob
    use_dropout = mode == "train" and p > 0.0
    rng = np.random.default_rng(mask_seed) if use_dropout else None

    layers = list(_layer_views(params.values, arch))
    n_layers = len(layers)
    inputs: List[np.ndarray] = []   # H_{l-1}, the input to layer l
    preacts: List[np.ndarray] = []  # Z_l
    masks: List[np.ndarray | None] = []

    h = X
    for l, (w, b) in enumerate(layers):
        inputs.append(h)
        z = h @ w.T + b
        if l == n_layers - 1:  # linear output layer
            h = z
            preacts.append(z)
            masks.append(None)
            continue
        a = np.maximum(z, 0.0)
        if use_dropout:
            # Inverted dropout: scale kept units by 1/(1-p) so eval needs no rescale.
            mask = (rng.random(a.shape) >= p) / (1.0 - p)
            a = a * mask
        else:
            mask = None
        preacts.append(z)
        masks.append(mask)
        h = a
    if keep_cache:
        return h, inputs, preacts, masks, layers
    return h


def forward(
    params: ParamVector,
    x: Sequence[float] | np.ndarray,
    mode: str = "eval",
    mask_seed: int = 0,
) -> np.ndarray:
    """Reconstruct one sample (1-D input) or a batch (2-D input).

    Train mode applies inverted dropout with masks drawn from ``mask_seed``;
    eval mode is deterministic and mask-free.
    """
    _check_mode(mode)
    X, single = _as_batch(x, params.arch.input_dim)
    out = _run_forward(params, X, mode, mask_seed, keep_cache=False)
    return out[0] if single else out


def recon_loss(x: Sequence[float] | np.ndarray, x_hat: Sequence[float] | np.ndarray) -> float:
    """Squared L2 reconstruction error of a single sample."""
    a = np.asarray(x, dtype=np.float64)
    b = np.asarray(x_hat, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    d = a - b
    return float(d @ d)


def batch_loss(
    params: ParamVector,
    batch: np.ndarray,
    mode: str = "eval",
    mask_seed: int = 0,
) -> float:
    """Mean reconstruction loss over a batch (the objective grad() differentiates)."""
    _check_mode(mode)
    X, _ = _as_batch(batch, params.arch.input_dim)
    if X.shape[0] == 0:
        raise ValueError("batch is empty")
    out = _run_forward(params, X, mode, mask_seed, keep_cache=False)
    return float(np.mean(np.sum((X - out) ** 2, axis=1)))


def grad(
    params: ParamVector,
    batch: np.ndarray,
    mode: str = "train",
    mask_seed: int = 0,
) -> Tuple[int, GradVector]:
    """Exact mean gradient of the reconstruction loss over a batch.

    Returns ``(n, g)`` where n is the number of samples and g the gradient of
    mean_i ||x_i - x_hat_i||^2 with respect to every parameter. In train mode
    the same dropout masks are used in the forward and backward pass.
    """
    _check_mode(mode)
    X, _ = _as_batch(batch, params.arch.input_dim)
    n = X.shape[0]
    if n == 0:
        raise ValueError("cannot take a gradient over an empty batch")

    out, inputs, preacts, masks, layers = _run_forward(
        params, X, mode, mask_seed, keep_cache=True
    )

    # d(mean loss)/d(output); the 1/n folds the batch mean into the backward pass.
    g_out = 2.0 * (out - X) / n
    n_layers = len(layers)
    grads_w: List[np.ndarray] = [np.empty(0)] * n_layers
    grads_b: List[np.ndarray] = [np.empty(0)] * n_layers

    for l in range(n_layers - 1, -1, -1):
        w, _ = layers[l]
        grads_w[l] = g_out.T @ inputs[l]
        grads_b[l] = g_out.sum(axis=0)
        if l == 0:
            break
        g_h = g_out @ w
        g_h = g_h * (preacts[l - 1] > 0.0)
        if masks[l - 1] is not None:
            g_h = g_h * masks[l - 1]
        g_out = g_h

    flat = np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in zip(grads_w, grads_b)])
    return n, GradVector(params.arch, flat)


def apply_update(params: ParamVector, g: GradVector, alpha: float) -> ParamVector:
    """One plain gradient step: theta - alpha * g. Pure; inputs are untouched."""
    if alpha <= 0.0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if g.arch != params.arch:
        raise ValueError("gradient and parameters come from different architectures")
    return ParamVector(params.arch, params.values - alpha * g.values)


def anomaly_score(params: ParamVector, x: Sequence[float] | np.ndarray) -> float:
    """Reconstruction error of one sample under the current model (eval mode)."""
    return recon_loss(x, forward(params, x, mode="eval"))


def anomaly_scores(params: ParamVector, X: np.ndarray) -> np.ndarray:
    """Vectorised anomaly_score over the rows of X."""
    X2, _ = _as_batch(X, params.arch.input_dim)
    out = _run_forward(params, X2, "eval", 0, keep_cache=False)
    return np.sum((X2 - out) ** 2, axis=1)
