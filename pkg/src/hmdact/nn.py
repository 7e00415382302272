"""Minimal neural-network engine: 1-D convolution, max pooling, dense layers,
ReLU, inverted dropout, softmax cross-entropy and Adam.

Everything is float64 and deterministic. Forward passes run through the
fixed-order kernels in ``_kernels`` so their outputs are bit-identical to
naive nested-loop evaluation; backward passes use ordinary numpy/BLAS since
gradients are only held to finite-difference tolerance, not bit equality.

Single-sample operations take channel-major arrays ([channels, length]) to
match the documented data layout; the batched variants used by the training
loop are channels-last ([batch, length, channels]).
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ConfigError


def _as_f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


# ---------------------------------------------------------------------------
# Layers
# ---------------------------------------------------------------------------

@dataclass
class Conv1DLayer:
    """1-D convolution (cross-correlation) with zero padding on both ends.

    weights: [out_channels, in_channels, kernel_size]; bias: [out_channels].
    """

    weights: np.ndarray
    bias: np.ndarray
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        self.weights = _as_f64(self.weights)
        self.bias = _as_f64(self.bias)
        if self.weights.ndim != 3:
            raise ConfigError("conv weights must be [out, in, kernel]")
        if self.bias.shape != (self.weights.shape[0],):
            raise ConfigError("conv bias shape does not match out_channels")
        if self.weights.shape[2] < 1:
            raise ConfigError("kernel_size must be >= 1")
        if self.stride < 1:
            raise ConfigError("stride must be >= 1")
        if self.padding < 0:
            raise ConfigError("padding must be >= 0")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise ConfigError("conv parameters must be finite")

    @property
    def out_channels(self):
        return self.weights.shape[0]

    @property
    def in_channels(self):
        return self.weights.shape[1]

    @property
    def kernel_size(self):
        return self.weights.shape[2]

    def out_length(self, length: int) -> int:
        padded = length + 2 * self.padding
        if padded < self.kernel_size:
            raise ConfigError(
                f"input length {length} too short for kernel {self.kernel_size} "
                f"with padding {self.padding}"
            )
        return (padded - self.kernel_size) // self.stride + 1


@dataclass
class DenseLayer:
    """Fully connected layer. weights: [out_dim, in_dim]; bias: [out_dim]."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weights = _as_f64(self.weights)
        self.bias = _as_f64(self.bias)
        if self.weights.ndim != 2:
            raise ConfigError("dense weights must be [out, in]")
        if self.bias.shape != (self.weights.shape[0],):
            raise ConfigError("dense bias shape does not match out_dim")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise ConfigError("dense parameters must be finite")

    @property
    def out_dim(self):
        return self.weights.shape[0]

    @property
    def in_dim(self):
        return self.weights.shape[1]


# ---------------------------------------------------------------------------
# Convolution
# ---------------------------------------------------------------------------

def conv1d_batch(x, layer: Conv1DLayer):
    """Batched convolution, channels-last: [B, L, C_in] -> [B, L_out, C_out]."""
    x = _as_f64(x)
    if x.ndim != 3:
        raise ConfigError("expected [batch, length, channels] input")
    if x.shape[2] != layer.in_channels:
        raise ConfigError(
            f"input has {x.shape[2]} channels, layer expects {layer.in_channels}"
        )
    l_out = layer.out_length(x.shape[1])
    p = layer.padding
    if p:
        x_pad = np.zeros((x.shape[0], x.shape[1] + 2 * p, x.shape[2]))
        x_pad[:, p:-p, :] = x
    else:
        x_pad = x
    w_t = np.ascontiguousarray(layer.weights.transpose(1, 2, 0))
    out = np.empty((x.shape[0], l_out, layer.out_channels))
    _kernels.conv1d_fwd(x_pad, w_t, layer.bias, layer.stride, out)
    return out


def conv1d_forward(x, layer: Conv1DLayer):
    """Convolve one window: [C_in, L] -> [C_out, L_out].

    out[o, j] = bias[o] + sum over (c, k) of weights[o, c, k] *
    padded_input[c, j*stride + k], accumulated in exactly that order.
    """
    x = _as_f64(x)
    if x.ndim != 2:
        raise ConfigError("expected [channels, length] input")
    y = conv1d_batch(x.T[None, :, :], layer)
    return np.ascontiguousarray(y[0].T)


def conv1d_backward_batch(x, layer: Conv1DLayer, grad_out):
    """Gradients of a batched convolution.

    Returns (grad_x [B, L, C_in], grad_w [C_out, C_in, K], grad_b [C_out]).
    """
    x = _as_f64(x)
    grad_out = _as_f64(grad_out)
    p, s = layer.padding, layer.stride
    k_size = layer.kernel_size
    l_out = grad_out.shape[1]
    if p:
        x_pad = np.zeros((x.shape[0], x.shape[1] + 2 * p, x.shape[2]))
        x_pad[:, p:-p, :] = x
    else:
        x_pad = x
    grad_b = grad_out.sum(axis=(0, 1))
    grad_w = np.empty_like(layer.weights)
    grad_xpad = np.zeros_like(x_pad)
    span = s * (l_out - 1) + 1
    for k in range(k_size):
        xk = x_pad[:, k:k + span:s, :]                       # [B, L_out, C_in]
        grad_w[:, :, k] = np.tensordot(grad_out, xk, axes=([0, 1], [0, 1]))
        grad_xpad[:, k:k + span:s, :] += grad_out @ layer.weights[:, :, k]
    grad_x = grad_xpad[:, p:p + x.shape[1], :] if p else grad_xpad
    return np.ascontiguousarray(grad_x), grad_w, grad_b


# ---------------------------------------------------------------------------
# Max pooling (non-overlapping: stride == kernel)
# ---------------------------------------------------------------------------

def maxpool1d_batch(x, kernel: int):
    """Pool [B, L, C] -> ([B, L_out, C], argmax positions along L).

    Stride equals the kernel size; a trailing remainder shorter than the
    kernel is dropped. Ties go to the lowest index.
    """
    x = _as_f64(x)
    length = x.shape[1]
    if length < kernel:
        raise ConfigError(f"input length {length} shorter than pool kernel {kernel}")
    l_out = (length - kernel) // kernel + 1
    usable = x[:, :l_out * kernel, :].reshape(x.shape[0], l_out, kernel, x.shape[2])
    within = usable.argmax(axis=2)                           # [B, L_out, C]
    out = np.take_along_axis(usable, within[:, :, None, :], axis=2)[:, :, 0, :]
    absolute = within + (np.arange(l_out) * kernel)[None, :, None]
    return np.ascontiguousarray(out), absolute


def maxpool1d_forward(x, kernel: int):
    """Pool one window: [C, L] -> ([C, L_out], absolute argmax indices)."""
    x = _as_f64(x)
    if x.ndim != 2:
        raise ConfigError("expected [channels, length] input")
    out, argmax = maxpool1d_batch(x.T[None, :, :], kernel)
    return np.ascontiguousarray(out[0].T), np.ascontiguousarray(argmax[0].T)


def maxpool1d_backward_batch(grad_out, argmax, in_length: int):
    """Route pooled gradients back to the argmax positions."""
    grad_out = _as_f64(grad_out)
    n_batch, l_out, channels = grad_out.shape
    grad_x = np.zeros((n_batch, in_length, channels))
    b_idx = np.arange(n_batch)[:, None, None]
    c_idx = np.arange(channels)[None, None, :]
    np.add.at(grad_x, (b_idx, argmax, c_idx), grad_out)
    return grad_x


# ---------------------------------------------------------------------------
# Dense / ReLU
# ---------------------------------------------------------------------------

def dense_batch(x, layer: DenseLayer):
    """Batched affine map [B, D_in] -> [B, D_out], no activation."""
    x = _as_f64(x)
    if x.ndim != 2 or x.shape[1] != layer.in_dim:
        raise ConfigError(
            f"dense input dim {x.shape[-1]} does not match layer in_dim {layer.in_dim}"
        )
    w_t = np.ascontiguousarray(layer.weights.T)
    out = np.empty((x.shape[0], layer.out_dim))
    _kernels.dense_fwd(x, w_t, layer.bias, out)
    return out


def dense_forward(x, layer: DenseLayer, apply_relu: bool = False):
    """One vector through the layer: relu?(W @ x + b).

    Each output accumulates bias first, then input contributions in ascending
    index order.
    """
    x = _as_f64(x)
    if x.ndim != 1:
        raise ConfigError("dense_forward expects a vector; use dense_batch")
    out = dense_batch(x[None, :], layer)[0]
    return np.maximum(out, 0.0) if apply_relu else out


def dense_backward_batch(x, layer: DenseLayer, grad_out):
    """Returns (grad_x, grad_w, grad_b) for out = W @ x + b (no activation)."""
    x = _as_f64(x)
    grad_out = _as_f64(grad_out)
    grad_w = grad_out.T @ x
    grad_b = grad_out.sum(axis=0)
    grad_x = grad_out @ layer.weights
    return grad_x, grad_w, grad_b


def relu(x):
    return np.maximum(x, 0.0)


def relu_backward(grad_out, pre_activation):
    return grad_out * (pre_activation > 0.0)


# ---------------------------------------------------------------------------
# Softmax cross-entropy
# ---------------------------------------------------------------------------

def softmax_cross_entropy_batch(logits, labels):
    """Stable softmax cross-entropy over a batch.

    Returns (losses [B], grad_logits [B, n]); grad rows are softmax - onehot,
    i.e. the gradient of the per-sample loss (no batch-mean scaling).
    """
    logits = _as_f64(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if not np.isfinite(logits).all():
        raise ValueError("non-finite logits")
    if labels.min() < 0 or labels.max() >= logits.shape[1]:
        raise ConfigError("label index out of range")
    shifted = logits - logits.max(axis=1, keepdims=True)
    exps = np.exp(shifted)
    sums = exps.sum(axis=1)
    losses = np.log(sums) - shifted[np.arange(len(labels)), labels]
    grads = exps / sums[:, None]
    grads[np.arange(len(labels)), labels] -= 1.0
    return losses, grads


def softmax_cross_entropy(logits, true_label: int):
    """Loss and gradient for a single score vector."""
    losses, grads = softmax_cross_entropy_batch(
        np.asarray(logits, dtype=np.float64)[None, :], [int(true_label)]
    )
    return float(losses[0]), grads[0]


# ---------------------------------------------------------------------------
# Dropout
# ---------------------------------------------------------------------------

def dropout_apply(x, rate: float, mode: str, rng=None):
    """Inverted dropout: surviving units are scaled by 1/(1-rate) at train
    time so evaluation is a plain identity.

    Returns (output, mask) where mask already includes the 1/(1-rate) scale
    (multiply upstream gradients by it); mask is None in eval mode.
    """
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    x = _as_f64(x)
    if mode == "eval":
        return x, None
    if mode != "train":
        raise ConfigError(f"dropout mode must be 'train' or 'eval', got {mode!r}")
    if rate == 0.0:
        return x, np.ones_like(x)
    if rng is None:
        raise ConfigError("train-mode dropout needs an rng")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    """Bias-corrected Adam state; m/v mirror the parameter dict shapes.

    Update: m = b1*m + (1-b1)*g; v = b2*v + (1-b2)*g^2;
    p -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps).
    """

    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ConfigError("Adam betas must be in (0, 1)")


def adam_init(params: dict, learning_rate: float, **kwargs) -> AdamState:
    state = AdamState(learning_rate=learning_rate, **kwargs)
    for name, p in params.items():
        state.m[name] = np.zeros_like(p)
        state.v[name] = np.zeros_like(p)
    return state


def adam_step(params: dict, grads: dict, state: AdamState) -> AdamState:
    """One in-place Adam update over a named parameter dict."""
    if set(params) != set(grads) or set(params) != set(state.m):
        raise ConfigError("params/grads/state name sets differ")
    state.t += 1
    correction1 = 1.0 - state.beta1 ** state.t
    correction2 = 1.0 - state.beta2 ** state.t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ConfigError(f"gradient shape mismatch for {name}")
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
    return state
