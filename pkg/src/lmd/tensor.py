"""Dense NCHW float32 operators used by the LMD network.

Tensors are plain ``numpy.ndarray`` objects of dtype float32 with four axes
(batch, channel, height, width). Every operator returns a new array and never
mutates its inputs.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ContractError

DTYPE = np.float32


def as_tensor(x, name="input"):
    """Validate ``x`` as a 4-D tensor and return it as contiguous float32."""
    arr = np.asarray(x)
    if arr.ndim != 4:
        raise ContractError(f"{name}: expected 4-D (n, c, h, w) tensor, got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise ContractError(f"{name}: all dims must be >= 1, got shape {arr.shape}")
    return np.ascontiguousarray(arr, dtype=DTYPE)


@dataclass(frozen=True)
class ConvParams:
    weights: np.ndarray  # (out_c, in_c, kh, kw)
    bias: np.ndarray  # (out_c,)
    stride: int = 1
    padding: int = 0
    dilation: int = 1

    def __post_init__(self):
        w = np.asarray(self.weights)
        if w.ndim != 4:
            raise ContractError(f"conv weights must be 4-D, got shape {w.shape}")
        b = np.asarray(self.bias)
        if b.shape != (w.shape[0],):
            raise ContractError(f"conv bias shape {b.shape} does not match out_c={w.shape[0]}")
        if self.stride < 1 or self.dilation < 1 or self.padding < 0:
            raise ContractError(
                f"invalid stride/padding/dilation {self.stride}/{self.padding}/{self.dilation}"
            )


@dataclass(frozen=True)
class BatchNormParams:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = 1e-5

    def __post_init__(self):
        n = len(self.gamma)
        for field in ("beta", "running_mean", "running_var"):
            if len(getattr(self, field)) != n:
                raise ContractError(f"batchnorm {field} length {len(getattr(self, field))} != {n}")
        if np.any(np.asarray(self.running_var) < 0):
            raise ContractError("batchnorm running_var must be non-negative")


def conv_output_size(size, kernel, stride, padding, dilation):
    return (size + 2 * padding - dilation * (kernel - 1) - 1) // stride + 1


def conv2d(x, p):
    """2-D cross-correlation with zero padding, stride and dilation.

    Accumulation runs tap by tap in (u, v) row-major order, each tap being a
    single matrix product over input channels, so the summation order is
    fixed for a given shape.
    """
    x = as_tensor(x)
    w = np.asarray(p.weights, dtype=DTYPE)
    n, c, h, wd = x.shape
    out_c, in_c, kh, kw = w.shape
    if c != in_c:
        raise ContractError(f"conv2d: input has {c} channels but weights expect in_c={in_c}")
    ho = conv_output_size(h, kh, p.stride, p.padding, p.dilation)
    wo = conv_output_size(wd, kw, p.stride, p.padding, p.dilation)
    if ho < 1 or wo < 1:
        raise ContractError(
            f"conv2d: output size {ho}x{wo} < 1 for input {h}x{wd}, kernel {kh}x{kw}, "
            f"padding {p.padding}, dilation {p.dilation}"
        )
    pad = p.padding
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    s, d = p.stride, p.dilation
    bias = np.asarray(p.bias, dtype=DTYPE)
    taps = [np.ascontiguousarray(w[:, :, u, v]) for u in range(kh) for v in range(kw)]

    out = np.empty((n, out_c, ho, wo), dtype=DTYPE)
    for b in range(n):
        acc = np.repeat(bias[:, None], ho * wo, axis=1)
        k = 0
        for u in range(kh):
            r0 = u * d
            for v in range(kw):
                c0 = v * d
                patch = xp[b, :, r0:r0 + s * (ho - 1) + 1:s, c0:c0 + s * (wo - 1) + 1:s]
                acc += taps[k] @ patch.reshape(c, ho * wo)
                k += 1
        out[b] = acc.reshape(out_c, ho, wo)
    return out


def batchnorm_infer(x, p):
    x = as_tensor(x)
    if x.shape[1] != len(p.gamma):
        raise ContractError(
            f"batchnorm: input has {x.shape[1]} channels, parameters have {len(p.gamma)}"
        )
    gamma = np.asarray(p.gamma, dtype=DTYPE)
    beta = np.asarray(p.beta, dtype=DTYPE)
    mean = np.asarray(p.running_mean, dtype=DTYPE)
    var = np.asarray(p.running_var, dtype=DTYPE)
    scale = gamma / np.sqrt(var + DTYPE(p.epsilon))
    return ((x - mean[:, None, None]) * scale[:, None, None] + beta[:, None, None]).astype(DTYPE)


def relu(x):
    return np.maximum(as_tensor(x), DTYPE(0))


def maxpool2x2(x):
    """2x2 stride-2 max pooling that also returns argmax offsets.

    Offsets are flat positions ``row * w + col`` inside the (h, w) plane of
    the same (n, c) slice. Ties resolve to the first cell in row-major order.
    """
    x = as_tensor(x)
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ContractError(f"maxpool2x2: spatial dims must be even, got {h}x{w}")
    ho, wo = h // 2, w // 2
    windows = (
        x.reshape(n, c, ho, 2, wo, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, 4)
    )
    arg = windows.argmax(axis=-1)
    values = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]
    rows = 2 * np.arange(ho)[:, None] + arg // 2
    cols = 2 * np.arange(wo)[None, :] + arg % 2
    return np.ascontiguousarray(values), (rows * w + cols).astype(np.int64)


def maxunpool2x2(x, indices, out_h, out_w):
    """Scatter pooled values back to the positions recorded by ``maxpool2x2``."""
    x = as_tensor(x)
    indices = np.asarray(indices)
    if indices.shape != x.shape:
        raise ContractError(f"maxunpool2x2: indices shape {indices.shape} != input shape {x.shape}")
    n, c, h, w = x.shape
    if out_h != 2 * h or out_w != 2 * w:
        raise ContractError(
            f"maxunpool2x2: output {out_h}x{out_w} must be twice the input {h}x{w}"
        )
    rows, cols = np.divmod(indices, out_w)
    dy = rows - 2 * np.arange(h)[:, None]
    dx = cols - 2 * np.arange(w)[None, :]
    if np.any((indices < 0) | (dy < 0) | (dy > 1) | (dx < 0) | (dx > 1)):
        raise ContractError("maxunpool2x2: corrupted indices, offset outside its 2x2 window")
    out = np.zeros((n, c, out_h * out_w), dtype=DTYPE)
    np.put_along_axis(out, indices.reshape(n, c, -1), x.reshape(n, c, -1), axis=-1)
    return out.reshape(n, c, out_h, out_w)


def softmax_channels(x):
    x = as_tensor(x).astype(np.float64)
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return (e / e.sum(axis=1, keepdims=True)).astype(DTYPE)


def _bilinear_taps(size):
    # align_corners=False source coordinates for a 2x upsample
    src = np.clip((np.arange(2 * size) + 0.5) / 2.0 - 0.5, 0.0, None)
    lo = np.minimum(np.floor(src).astype(np.int64), size - 1)
    hi = np.minimum(lo + 1, size - 1)
    return lo, hi, src - lo


def upsample2x_bilinear(x):
    """2x bilinear upsampling (half-pixel centers, edge clamped).

    Interpolates in float64 as ``a + t * (b - a)`` so outputs never leave the
    input's value range.
    """
    x = as_tensor(x).astype(np.float64)
    _, _, h, w = x.shape
    r0, r1, fr = _bilinear_taps(h)
    c0, c1, fc = _bilinear_taps(w)
    top = x[:, :, r0, :]
    rows = top + fr[:, None] * (x[:, :, r1, :] - top)
    left = rows[:, :, :, c0]
    out = left + fc * (rows[:, :, :, c1] - left)
    return out.astype(DTYPE)
