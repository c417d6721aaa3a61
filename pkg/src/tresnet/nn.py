"""Dense double-precision layers with hand-derived gradients.

Activations are laid out (batch, time, channels). Every ``*_forward`` returns
``(out, cache)`` and the matching ``*_backward`` consumes that cache, in the
style of a classic layer-by-layer numpy network. The classes at the bottom
hold parameters and wire the functional ops together.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError, StateError, UsageError

# ---------------------------------------------------------------- functional


def conv_output_length(length: int, kernel_size: int, stride: int, padding: int) -> int:
    return (length + 2 * padding - kernel_size) // stride + 1


def conv1d_forward(x, weight, bias, stride=1, padding=0):
    """Cross-correlation (no kernel flip) with zero padding.

    x: (B, L, C_in); weight: (C_out, C_in, k); bias: (C_out,) or None.
    """
    if x.ndim != 3:
        raise ShapeError(f"conv1d expects (B, L, C) input, got shape {x.shape}")
    c_out, c_in, k = weight.shape
    if x.shape[2] != c_in:
        raise ShapeError(f"conv1d expects {c_in} input channels, got {x.shape[2]}")
    b, length, _ = x.shape
    l_out = conv_output_length(length, k, stride, padding)
    if l_out < 1:
        raise ShapeError(f"input length {length} too short for kernel {k} with padding {padding}")
    xp = np.pad(x, ((0, 0), (padding, padding), (0, 0))) if padding else x
    span = stride * (l_out - 1) + 1
    cols = np.stack([xp[:, j:j + span:stride, :] for j in range(k)], axis=2)  # (B, L_out, k, C_in)
    wmat = weight.transpose(2, 1, 0).reshape(k * c_in, c_out)
    out = cols.reshape(b * l_out, k * c_in) @ wmat
    if bias is not None:
        out += bias
    cache = (x.shape, cols, weight, stride, padding, bias is not None)
    return out.reshape(b, l_out, c_out), cache


def conv1d_backward(dout, cache):
    """Returns (dx, dweight, dbias); dbias is None for bias-free layers."""
    x_shape, cols, weight, stride, padding, has_bias = cache
    b, length, c_in = x_shape
    c_out, _, k = weight.shape
    l_out = cols.shape[1]
    if dout.shape != (b, l_out, c_out):
        raise ShapeError(f"conv1d backward expects grad of shape {(b, l_out, c_out)}, got {dout.shape}")
    d2 = dout.reshape(b * l_out, c_out)
    cols2 = cols.reshape(b * l_out, k * c_in)
    dweight = (cols2.T @ d2).reshape(k, c_in, c_out).transpose(2, 1, 0)
    dbias = d2.sum(axis=0) if has_bias else None
    wmat = weight.transpose(2, 1, 0).reshape(k * c_in, c_out)
    dcols = (d2 @ wmat.T).reshape(b, l_out, k, c_in)
    dxp = np.zeros((b, length + 2 * padding, c_in))
    span = stride * (l_out - 1) + 1
    for j in range(k):
        dxp[:, j:j + span:stride, :] += dcols[:, :, j, :]
    dx = dxp[:, padding:padding + length, :] if padding else dxp
    return dx, dweight, dbias


def batchnorm_forward(x, gamma, beta, running_mean, running_var, momentum=0.1, eps=1e-5,
                      training=True):
    """Per-channel normalization over (batch, time).

    In training mode ``running_mean``/``running_var`` are updated in place
    with ``running = (1 - momentum) * running + momentum * batch``; the
    batch variance is the biased one.
    """
    if x.ndim != 3 or x.shape[2] != gamma.shape[0]:
        raise ShapeError(f"batchnorm expects (B, L, {gamma.shape[0]}) input, got {x.shape}")
    if not training:
        inv_std = 1.0 / np.sqrt(running_var + eps)
        return (x - running_mean) * (gamma * inv_std) + beta, None
    n = x.shape[0] * x.shape[1]
    if n < 2:
        raise UsageError("batchnorm training needs at least two values per channel")
    mean = x.mean(axis=(0, 1))
    xc = x - mean
    var = (xc * xc).mean(axis=(0, 1))
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv_std
    running_mean *= 1.0 - momentum
    running_mean += momentum * mean
    running_var *= 1.0 - momentum
    running_var += momentum * var
    return xhat * gamma + beta, (xhat, inv_std, gamma)


def batchnorm_backward(dout, cache):
    """Returns (dx, dgamma, dbeta) for the training-mode forward."""
    if cache is None:
        raise StateError("batchnorm backward needs a training-mode forward")
    xhat, inv_std, gamma = cache
    if dout.shape != xhat.shape:
        raise ShapeError(f"batchnorm backward expects grad of shape {xhat.shape}, got {dout.shape}")
    n = xhat.shape[0] * xhat.shape[1]
    dbeta = dout.sum(axis=(0, 1))
    dgamma = (dout * xhat).sum(axis=(0, 1))
    dx = (gamma * inv_std / n) * (n * dout - dbeta - xhat * dgamma)
    return dx, dgamma, dbeta


def relu_forward(x):
    return np.maximum(x, 0.0), x


def relu_backward(dout, cache):
    return dout * (cache > 0)


def sigmoid_forward(x):
    # split by sign so exp never overflows
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out, out


def sigmoid_backward(dout, cache):
    return dout * cache * (1.0 - cache)


def avg_pool_time_forward(x):
    """Global average over time: (B, L, C) -> (B, C)."""
    return x.mean(axis=1), x.shape


def avg_pool_time_backward(dout, cache):
    b, length, c = cache
    return np.broadcast_to(dout[:, None, :] / length, (b, length, c)).copy()


def dense_forward(x, weight, bias):
    """x: (B, in); weight: (out, in); bias: (out,)."""
    if x.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"dense expects (B, {weight.shape[1]}) input, got {x.shape}")
    return x @ weight.T + bias, (x, weight)


def dense_backward(dout, cache):
    x, weight = cache
    return dout @ weight, dout.T @ x, dout.sum(axis=0)


# ---------------------------------------------------------------- layers


def he_normal(rng, shape, fan_in):
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


class Layer:
    """Parameter container; subclasses fill ``params``/``grads``/``buffers``."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self._cache = None

    def named_params(self, prefix=""):
        for name, p in self.params.items():
            yield prefix + name, p

    def named_grads(self, prefix=""):
        for name in self.params:
            yield prefix + name, self.grads[name]

    def named_buffers(self, prefix=""):
        for name, b in self.buffers.items():
            yield prefix + name, b

    def _take_cache(self):
        if self._cache is None:
            raise StateError(f"{type(self).__name__}.backward called without a matching forward")
        cache, self._cache = self._cache, None
        return cache


class Conv1d(Layer):
    def __init__(self, in_channels, out_channels, kernel_size=3, stride=1, padding=0,
                 bias=True, rng=None):
        super().__init__()
        if kernel_size < 1 or stride < 1 or padding < 0:
            raise UsageError("conv1d needs kernel_size >= 1, stride >= 1, padding >= 0")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.stride = stride
        self.padding = padding
        self.params["weight"] = he_normal(rng, (out_channels, in_channels, kernel_size),
                                          in_channels * kernel_size)
        if bias:
            self.params["bias"] = np.zeros(out_channels)

    @property
    def in_channels(self):
        return self.params["weight"].shape[1]

    @property
    def out_channels(self):
        return self.params["weight"].shape[0]

    def forward(self, x, training=True):
        out, self._cache = conv1d_forward(x, self.params["weight"], self.params.get("bias"),
                                          self.stride, self.padding)
        return out

    def backward(self, dout):
        dx, dw, db = conv1d_backward(dout, self._take_cache())
        self.grads["weight"] = dw
        if db is not None:
            self.grads["bias"] = db
        return dx


class BatchNorm1d(Layer):
    def __init__(self, channels, momentum=0.1, eps=1e-5):
        super().__init__()
        if not 0 < momentum < 1 or not eps > 0:
            raise UsageError("batchnorm needs 0 < momentum < 1 and eps > 0")
        self.momentum = momentum
        self.eps = eps
        self.params["gamma"] = np.ones(channels)
        self.params["beta"] = np.zeros(channels)
        self.buffers["running_mean"] = np.zeros(channels)
        self.buffers["running_var"] = np.ones(channels)

    def forward(self, x, training=True):
        out, cache = batchnorm_forward(x, self.params["gamma"], self.params["beta"],
                                       self.buffers["running_mean"], self.buffers["running_var"],
                                       self.momentum, self.eps, training)
        self._cache = cache
        return out

    def backward(self, dout):
        dx, dgamma, dbeta = batchnorm_backward(dout, self._take_cache())
        self.grads["gamma"] = dgamma
        self.grads["beta"] = dbeta
        return dx


class ReLU(Layer):
    def forward(self, x, training=True):
        out, self._cache = relu_forward(x)
        return out

    def backward(self, dout):
        return relu_backward(dout, self._take_cache())


class Sigmoid(Layer):
    def forward(self, x, training=True):
        out, self._cache = sigmoid_forward(x)
        return out

    def backward(self, dout):
        return sigmoid_backward(dout, self._take_cache())


class GlobalAvgPool(Layer):
    def forward(self, x, training=True):
        out, self._cache = avg_pool_time_forward(x)
        return out

    def backward(self, dout):
        return avg_pool_time_backward(dout, self._take_cache())


class Dense(Layer):
    def __init__(self, in_features, out_features, rng=None):
        super().__init__()
        if in_features < 1 or out_features < 1:
            raise UsageError("dense dimensions must be >= 1")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params["weight"] = he_normal(rng, (out_features, in_features), in_features)
        self.params["bias"] = np.zeros(out_features)

    def forward(self, x, training=True):
        out, self._cache = dense_forward(x, self.params["weight"], self.params["bias"])
        return out

    def backward(self, dout):
        dx, dw, db = dense_backward(dout, self._take_cache())
        self.grads["weight"] = dw
        self.grads["bias"] = db
        return dx


class Sequential(Layer):
    """Named children run in order; parameter names are ``child.param``."""

    def __init__(self, children):
        super().__init__()
        self.children = list(children)  # [(name, layer)]

    def named_params(self, prefix=""):
        for name, layer in self.children:
            yield from layer.named_params(f"{prefix}{name}.")

    def named_grads(self, prefix=""):
        for name, layer in self.children:
            yield from layer.named_grads(f"{prefix}{name}.")

    def named_buffers(self, prefix=""):
        for name, layer in self.children:
            yield from layer.named_buffers(f"{prefix}{name}.")

    def forward(self, x, training=True):
        for _, layer in self.children:
            x = layer.forward(x, training)
        return x

    def backward(self, dout):
        for _, layer in reversed(self.children):
            dout = layer.backward(dout)
        return dout


class ResidualBlock(Sequential):
    """Pre-activation block that halves time length and doubles channels.

    main:     BN -> ReLU -> Conv(k3, s2) -> BN -> ReLU -> Conv(k3, s1)
    shortcut: Conv(k1, s2)

    The first convolution feeds a BN, so it carries no bias; the shortcut
    shares the second convolution's bias, which ``out_bias=False`` drops for
    blocks whose output is normalized again downstream.
    """

    def __init__(self, in_channels, rng=None, momentum=0.1, eps=1e-5, out_bias=True):
        out = 2 * in_channels
        rng = rng if rng is not None else np.random.default_rng(0)
        main = [
            ("bn1", BatchNorm1d(in_channels, momentum, eps)),
            ("relu1", ReLU()),
            ("conv1", Conv1d(in_channels, out, 3, stride=2, padding=1, bias=False, rng=rng)),
            ("bn2", BatchNorm1d(out, momentum, eps)),
            ("relu2", ReLU()),
            ("conv2", Conv1d(out, out, 3, stride=1, padding=1, bias=out_bias, rng=rng)),
        ]
        self.shortcut = Conv1d(in_channels, out, 1, stride=2, padding=0, bias=False, rng=rng)
        super().__init__(main + [("shortcut", self.shortcut)])
        self.main = main

    def forward(self, x, training=True):
        if x.ndim != 3 or x.shape[2] != self.shortcut.in_channels:
            raise ShapeError(f"residual block expects {self.shortcut.in_channels} channels, "
                             f"got input of shape {x.shape}")
        h = x
        for _, layer in self.main:
            h = layer.forward(h, training)
        return h + self.shortcut.forward(x, training)

    def backward(self, dout):
        dx = self.shortcut.backward(dout)
        dh = dout
        for _, layer in reversed(self.main):
            dh = layer.backward(dh)
        return dx + dh


# ---------------------------------------------------------------- gradient checks


def numerical_gradient(f, x, h=1e-5):
    """Central differences of scalar ``f()`` w.r.t. array ``x`` (perturbed in place)."""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"], op_flags=["readwrite"])
    for _ in it:
        i = it.multi_index
        orig = x[i]
        x[i] = orig + h
        fp = f()
        x[i] = orig - h
        fm = f()
        x[i] = orig
        grad[i] = (fp - fm) / (2 * h)
    return grad


def relative_error(analytic, numeric) -> float:
    """``||a - n|| / max(||a|| + ||n||, 1e-12)``."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = max(np.linalg.norm(a) + np.linalg.norm(n), 1e-12)
    return float(np.linalg.norm(a - n) / denom)


def gradient_check(layer, x, loss_weights=None, h=1e-5, training=True, check_input=True):
    """Worst relative error between analytic and finite-difference gradients.

    The scalar loss is ``sum(loss_weights * layer.forward(x))`` with fixed
    random ``loss_weights``, so every output element contributes. Running
    statistics are restored after each perturbed evaluation so repeated
    forwards see the same state.
    """
    x = np.array(x, dtype=np.float64)
    saved = {name: b.copy() for name, b in layer.named_buffers()}

    def restore():
        for name, b in layer.named_buffers():
            b[...] = saved[name]

    out = layer.forward(x, training)
    restore()
    if loss_weights is None:
        loss_weights = np.random.default_rng(1234).normal(size=out.shape)

    def loss():
        val = float((loss_weights * layer.forward(x, training)).sum())
        restore()
        return val

    layer.forward(x, training)
    restore()
    dx = layer.backward(loss_weights)
    analytic = {k: v.copy() for k, v in layer.named_grads()}

    worst = 0.0
    if check_input:
        worst = max(worst, relative_error(dx, numerical_gradient(loss, x, h)))
    for name, p in layer.named_params():
        worst = max(worst, relative_error(analytic[name], numerical_gradient(loss, p, h)))
    return worst
