"""Minimal NHWC layer library with hand-written backward passes, plus Adam.

Tensors are plain numpy arrays, images are [batch, height, width, channels].
Convolutions use "same"-style padding: the output spatial extent is
ceil(input / stride), with the extra padding cell (odd totals) going to the
bottom/right edge.  Each layer caches what its backward pass needs during
forward; parameter gradients accumulate until ``zero_grad``.

Set ``nn.CHECK_FINITE = True`` to validate every op output (slow; meant for
debugging and tests).
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, NumericalError, UninitializedStatsError

CHECK_FINITE = False


def _pair(v) -> tuple[int, int]:
    if isinstance(v, (tuple, list)):
        a, b = v
        return int(a), int(b)
    return int(v), int(v)


def _check(name: str, arr: np.ndarray) -> np.ndarray:
    if CHECK_FINITE and not np.all(np.isfinite(arr)):
        raise NumericalError(f"non-finite values in output of {name}")
    return arr


def same_padding(size: int, kernel: int, stride: int) -> tuple[int, int, int]:
    """(pad_before, pad_after, output_size) for ceil-division output sizing."""
    out = -(-size // stride)
    total = max((out - 1) * stride + kernel - size, 0)
    return total // 2, total - total // 2, out


def _window_slices(kh, kw, sh, sw, out_h, out_w):
    for i in range(kh):
        for j in range(kw):
            yield i, j, (slice(i, i + sh * out_h, sh), slice(j, j + sw * out_w, sw))


class Conv2D:
    """Strided cross-correlation; weights are [out_ch, in_ch, kh, kw]."""

    def __init__(self, in_channels, out_channels, kernel_size, stride=1, *,
                 rng=None, dtype=np.float32):
        kh, kw = _pair(kernel_size)
        self.stride = _pair(stride)
        self.in_channels = in_channels
        self.out_channels = out_channels
        if rng is None:
            weight = np.zeros((out_channels, in_channels, kh, kw))
        else:
            fan_in = in_channels * kh * kw
            weight = rng.normal(0.0, np.sqrt(2.0 / fan_in),
                                size=(out_channels, in_channels, kh, kw))
        self.weight = weight.astype(dtype)
        self.bias = np.zeros(out_channels, dtype=dtype)
        self.grad_weight = np.zeros_like(self.weight)
        self.grad_bias = np.zeros_like(self.bias)
        self._cache = None

    @property
    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    @property
    def grads(self):
        return {"weight": self.grad_weight, "bias": self.grad_bias}

    def zero_grad(self):
        self.grad_weight[...] = 0
        self.grad_bias[...] = 0

    def _im2col(self, xpad, out_h, out_w):
        n, _, _, c = xpad.shape
        _, _, kh, kw = self.weight.shape
        sh, sw = self.stride
        cols = np.empty((n, out_h, out_w, kh, kw, c), dtype=xpad.dtype)
        for i, j, sl in _window_slices(kh, kw, sh, sw, out_h, out_w):
            cols[:, :, :, i, j, :] = xpad[:, sl[0], sl[1], :]
        return cols.reshape(n * out_h * out_w, kh * kw * c)

    def forward(self, x):
        if x.ndim != 4 or x.shape[3] != self.in_channels:
            raise DimensionError(
                f"conv expects [N,H,W,{self.in_channels}], got {x.shape}")
        n, h, w, _ = x.shape
        _, _, kh, kw = self.weight.shape
        sh, sw = self.stride
        pt, pb, out_h = same_padding(h, kh, sh)
        pl, pr, out_w = same_padding(w, kw, sw)
        xpad = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
        cols = self._im2col(xpad, out_h, out_w)
        wmat = self.weight.transpose(2, 3, 1, 0).reshape(kh * kw * self.in_channels,
                                                         self.out_channels)
        out = cols @ wmat + self.bias
        self._cache = (xpad, (n, h, w), (pt, pl), (out_h, out_w))
        return _check("conv2d", out.reshape(n, out_h, out_w, self.out_channels))

    def backward(self, grad_out):
        xpad, (n, h, w), (pt, pl), (out_h, out_w) = self._cache
        if grad_out.shape != (n, out_h, out_w, self.out_channels):
            raise DimensionError(
                f"conv backward expects {(n, out_h, out_w, self.out_channels)}, "
                f"got {grad_out.shape}")
        _, _, kh, kw = self.weight.shape
        sh, sw = self.stride
        g2 = grad_out.reshape(n * out_h * out_w, self.out_channels)
        self.grad_bias += g2.sum(axis=0)
        cols = self._im2col(xpad, out_h, out_w)
        gw = cols.T @ g2  # [kh*kw*cin, cout]
        self.grad_weight += gw.reshape(kh, kw, self.in_channels,
                                       self.out_channels).transpose(3, 2, 0, 1)
        wmat = self.weight.transpose(2, 3, 1, 0).reshape(kh * kw * self.in_channels,
                                                         self.out_channels)
        gcols = (g2 @ wmat.T).reshape(n, out_h, out_w, kh, kw, self.in_channels)
        gxpad = np.zeros_like(xpad)
        for i, j, sl in _window_slices(kh, kw, sh, sw, out_h, out_w):
            gxpad[:, sl[0], sl[1], :] += gcols[:, :, :, i, j, :]
        return gxpad[:, pt:pt + h, pl:pl + w, :]


class BatchNorm:
    """Per-channel normalization over batch and spatial positions.

    Train mode uses batch statistics (biased variance) and updates running
    stats with momentum; infer mode uses the running stats and fails if no
    training update has happened yet.
    """

    def __init__(self, channels, *, eps=1e-5, momentum=0.9, dtype=np.float32):
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.gamma = np.ones(channels, dtype=dtype)
        self.beta = np.zeros(channels, dtype=dtype)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.initialized = False
        self.grad_gamma = np.zeros_like(self.gamma)
        self.grad_beta = np.zeros_like(self.beta)
        self._cache = None

    @property
    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    @property
    def grads(self):
        return {"gamma": self.grad_gamma, "beta": self.grad_beta}

    def zero_grad(self):
        self.grad_gamma[...] = 0
        self.grad_beta[...] = 0

    def _axes(self, x):
        if x.shape[-1] != self.channels:
            raise DimensionError(
                f"batchnorm expects last dim {self.channels}, got {x.shape}")
        return tuple(range(x.ndim - 1))

    def forward(self, x, train=False):
        axes = self._axes(x)
        if train:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            m = self.momentum
            self.running_mean[...] = m * self.running_mean + (1 - m) * mean
            self.running_var[...] = m * self.running_var + (1 - m) * var
            self.initialized = True
        else:
            if not self.initialized:
                raise UninitializedStatsError(
                    "batchnorm inference before any training update")
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        self._cache = (xhat, inv_std, axes, train)
        return _check("batchnorm", self.gamma * xhat + self.beta)

    def backward(self, grad_out):
        xhat, inv_std, axes, train = self._cache
        if grad_out.shape != xhat.shape:
            raise DimensionError(
                f"batchnorm backward expects {xhat.shape}, got {grad_out.shape}")
        self.grad_gamma += (grad_out * xhat).sum(axis=axes)
        self.grad_beta += grad_out.sum(axis=axes)
        dxhat = grad_out * self.gamma
        if not train:
            return dxhat * inv_std
        m = float(np.prod([xhat.shape[a] for a in axes]))
        # d/dx of ((x - mean)/sqrt(var + eps)) with mean/var functions of x
        return (inv_std / m) * (m * dxhat
                                - dxhat.sum(axis=axes)
                                - xhat * (dxhat * xhat).sum(axis=axes))


class ReLU:
    params: dict = {}
    grads: dict = {}

    def __init__(self):
        self._mask = None

    def zero_grad(self):
        pass

    def forward(self, x, train=False):
        self._mask = x > 0
        return _check("relu", np.maximum(x, 0))

    def backward(self, grad_out):
        return grad_out * self._mask


class MaxPool:
    """Max pooling with same-style padding; ties route to the first maximal
    cell in row-major window scan order."""

    params: dict = {}
    grads: dict = {}

    def __init__(self, kernel_size=3, stride=2):
        self.kernel = _pair(kernel_size)
        self.stride = _pair(stride)

    def zero_grad(self):
        pass

    def forward(self, x, train=False):
        n, h, w, c = x.shape
        kh, kw = self.kernel
        sh, sw = self.stride
        pt, pb, out_h = same_padding(h, kh, sh)
        pl, pr, out_w = same_padding(w, kw, sw)
        xpad = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)),
                      constant_values=-np.inf)
        windows = np.empty((n, out_h, out_w, kh * kw, c), dtype=x.dtype)
        for i, j, sl in _window_slices(kh, kw, sh, sw, out_h, out_w):
            windows[:, :, :, i * kw + j, :] = xpad[:, sl[0], sl[1], :]
        argmax = windows.argmax(axis=3)
        out = np.take_along_axis(windows, argmax[:, :, :, None, :], axis=3)[:, :, :, 0, :]
        self._cache = (argmax, xpad.shape, (h, w), (pt, pl), (out_h, out_w))
        return _check("maxpool", out)

    def backward(self, grad_out):
        argmax, pad_shape, (h, w), (pt, pl), (out_h, out_w) = self._cache
        kh, kw = self.kernel
        sh, sw = self.stride
        gxpad = np.zeros(pad_shape, dtype=grad_out.dtype)
        for i, j, sl in _window_slices(kh, kw, sh, sw, out_h, out_w):
            gxpad[:, sl[0], sl[1], :] += grad_out * (argmax == i * kw + j)
        return gxpad[:, pt:pt + h, pl:pl + w, :]


class GlobalAvgPool:
    """[N,H,W,C] -> [N,C] by averaging each channel map."""

    params: dict = {}
    grads: dict = {}

    def __init__(self):
        self._shape = None

    def zero_grad(self):
        pass

    def forward(self, x, train=False):
        self._shape = x.shape
        return _check("global_avgpool", x.mean(axis=(1, 2)))

    def backward(self, grad_out):
        n, h, w, c = self._shape
        if grad_out.shape != (n, c):
            raise DimensionError(
                f"avgpool backward expects {(n, c)}, got {grad_out.shape}")
        return np.broadcast_to(grad_out[:, None, None, :] / (h * w),
                               self._shape).astype(grad_out.dtype, copy=True)


class Dense:
    """Affine map on flat features; weights are [in_features, out_features]."""

    def __init__(self, in_features, out_features, *, rng=None, dtype=np.float32):
        if rng is None:
            weight = np.zeros((in_features, out_features))
        else:
            weight = rng.normal(0.0, np.sqrt(2.0 / in_features),
                                size=(in_features, out_features))
        self.weight = weight.astype(dtype)
        self.bias = np.zeros(out_features, dtype=dtype)
        self.grad_weight = np.zeros_like(self.weight)
        self.grad_bias = np.zeros_like(self.bias)
        self._x = None

    @property
    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    @property
    def grads(self):
        return {"weight": self.grad_weight, "bias": self.grad_bias}

    def zero_grad(self):
        self.grad_weight[...] = 0
        self.grad_bias[...] = 0

    def forward(self, x, train=False):
        if x.ndim != 2 or x.shape[1] != self.weight.shape[0]:
            raise DimensionError(
                f"dense expects [N,{self.weight.shape[0]}], got {x.shape}")
        self._x = x
        return _check("dense", x @ self.weight + self.bias)

    def backward(self, grad_out):
        self.grad_weight += self._x.T @ grad_out
        self.grad_bias += grad_out.sum(axis=0)
        return grad_out @ self.weight.T


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean negative log-likelihood and its gradient w.r.t. the logits.

    Stabilized with log-sum-exp; gradient is (softmax - onehot) / batch.
    """
    labels = np.asarray(labels)
    n, k = logits.shape
    if labels.min() < 0 or labels.max() >= k:
        raise IndexError(f"label outside [0, {k})")
    z = logits - logits.max(axis=1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -log_probs[np.arange(n), labels].mean()
    grad = np.exp(log_probs)
    grad[np.arange(n), labels] -= 1.0
    grad /= n
    return float(loss), grad.astype(logits.dtype)


class Adam:
    """Bias-corrected Adam over a dict of named parameter arrays (updated
    in place)."""

    def __init__(self, params: dict[str, np.ndarray], lr=1e-4,
                 beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.step_count += 1
        t = self.step_count
        b1, b2 = self.beta1, self.beta2
        for name, p in self.params.items():
            g = grads[name]
            if not np.all(np.isfinite(g)):
                raise NumericalError(f"non-finite gradient for parameter '{name}'")
            m = self.m[name]
            v = self.v[name]
            m[...] = b1 * m + (1 - b1) * g
            v[...] = b2 * v + (1 - b2) * g * g
            mhat = m / (1 - b1 ** t)
            vhat = v / (1 - b2 ** t)
            p -= (self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(p.dtype)
