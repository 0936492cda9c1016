"""Neural operators on Tensors: convolutions, batch norm, ReLU, FC.

Layout is N,H,W,C row-major everywhere; 3-D inputs (H,W,C) are treated as a
batch of one. Convolution means cross-correlation (no kernel flip).

Implementation strategy, sized for CPU: every convolution is lowered to one
BLAS matmul plus a fused gather (im2col) or scatter-add (col2im) over the
k*k kernel offsets (numba-compiled when available, strided numpy loops
otherwise). Buffers stay at O(output * k^2 * C_cheap_axis); the giant
gather a naive im2col of the backward pass would need is never built.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .errors import ConfigurationError, DegenerateStatisticsError, DimensionError
from .tensor import Tensor

# ---------------------------------------------------------------------------
# padding


def _pad_amounts(dim, k, stride, spec, transposed):
    """Total padding for one spatial axis, split (before, after)."""
    if spec == "valid":
        total = 0
    elif spec == "same":
        if transposed:
            total = k - stride
            if total < 0:
                raise ConfigurationError(
                    f"'same' transposed padding needs kernel {k} >= stride {stride}")
        else:
            out = -(-dim // stride)  # ceil
            total = max((out - 1) * stride + k - dim, 0)
    elif isinstance(spec, int):
        if spec < 0:
            raise ConfigurationError(f"padding must be non-negative, got {spec}")
        total = 2 * spec
    else:
        raise ConfigurationError(f"unsupported padding spec: {spec!r}")
    before = total // 2
    return before, total - before


def resolve_padding(padding, h, w, kh, kw, stride, transposed=False):
    """Resolve a pad-spec ('same', 'valid', int, or (int, int)) to per-edge amounts."""
    if isinstance(padding, (tuple, list)):
        if len(padding) != 2:
            raise ConfigurationError(f"padding tuple must be (pad_h, pad_w), got {padding!r}")
        ph = _pad_amounts(h, kh, stride, int(padding[0]), transposed)
        pw = _pad_amounts(w, kw, stride, int(padding[1]), transposed)
        return ph + pw
    ph = _pad_amounts(h, kh, stride, padding, transposed)
    pw = _pad_amounts(w, kw, stride, padding, transposed)
    return ph + pw


def _check_stride(stride):
    if not isinstance(stride, int) or stride < 1:
        raise ConfigurationError(f"stride must be a positive integer, got {stride!r}")


def _batched(x):
    """View a 3-D (H,W,C) tensor as (1,H,W,C); returns (tensor, squeeze_flag)."""
    if x.ndim == 3:
        return x.reshape((1,) + tuple(x.shape)), True
    if x.ndim == 4:
        return x, False
    raise DimensionError(f"expected a 3-D or 4-D input, got {x.ndim}-D shape {tuple(x.shape)}")


def _maybe_squeeze(out, squeeze):
    return out.reshape(tuple(out.shape[1:])) if squeeze else out


def _pad_nhwc(arr, ph0, ph1, pw0, pw1):
    if ph0 == ph1 == pw0 == pw1 == 0:
        return arr
    return np.pad(arr, ((0, 0), (ph0, ph1), (pw0, pw1), (0, 0)))


# ---------------------------------------------------------------------------
# im2col / col2im (fused kernels with numpy fallback)

_im2col = _kernels.im2col
_col2im = _kernels.col2im


def _unpad(dxp, h, w, ph0, pw0):
    return dxp[:, ph0:ph0 + h, pw0:pw0 + w, :]


# ---------------------------------------------------------------------------
# conv2d


def conv2d(x, kernel, bias=None, stride=1, padding="valid"):
    """Cross-correlate ``x`` (H,W,C_in or N,H,W,C_in) with ``kernel`` (k,k,C_in,C_out)."""
    _check_stride(stride)
    x, squeeze = _batched(x)
    if kernel.ndim != 4:
        raise DimensionError(f"conv2d kernel must be 4-D (k,k,C_in,C_out), got {tuple(kernel.shape)}")
    kh, kw, c_in, c_out = kernel.shape
    n, h, w, c = x.shape
    if c != c_in:
        raise DimensionError(
            f"conv2d: input channels (input axis 3) = {c} but kernel C_in (kernel axis 2) = {c_in}")
    if bias is not None and tuple(bias.shape) != (c_out,):
        raise DimensionError(f"conv2d: bias shape {tuple(bias.shape)} != ({c_out},)")
    ph0, ph1, pw0, pw1 = resolve_padding(padding, h, w, kh, kw, stride)
    hp, wp = h + ph0 + ph1, w + pw0 + pw1
    if kh > hp or kw > wp:
        raise DimensionError(
            f"conv2d: kernel ({kh}x{kw}) exceeds padded input ({hp}x{wp}) on a spatial axis")
    oh = (hp - kh) // stride + 1
    ow = (wp - kw) // stride + 1

    xp = _pad_nhwc(x.data, ph0, ph1, pw0, pw1)
    pointwise = (kh == 1 and kw == 1 and stride == 1)
    if pointwise:
        cols_mat = xp.reshape(n * oh * ow, c_in)
    else:
        cols_mat = _im2col(xp, kh, kw, stride, oh, ow).reshape(n * oh * ow, kh * kw * c_in)
    w_mat = kernel.data.reshape(kh * kw * c_in, c_out)
    out_mat = cols_mat @ w_mat
    if bias is not None:
        out_mat += bias.data
    out_data = out_mat.reshape(n, oh, ow, c_out)

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    requires = any(p.requires_grad for p in parents)
    out = Tensor(out_data, requires_grad=requires, op="conv2d", parents=parents)
    if out.parents:
        def backward_fn(g, x=x, kernel=kernel, bias=bias, cols_mat=cols_mat,
                        w_mat=w_mat, geom=(n, h, w, hp, wp, oh, ow, kh, kw, stride,
                                           ph0, pw0, c_in, c_out, pointwise)):
            (n, h, w, hp, wp, oh, ow, kh, kw, stride,
             ph0, pw0, c_in, c_out, pointwise) = geom
            g_mat = np.ascontiguousarray(g).reshape(n * oh * ow, c_out)
            if bias is not None and bias.requires_grad:
                bias.accumulate_grad(g_mat.sum(axis=0), own=True)
            if kernel.requires_grad:
                kernel.accumulate_grad((cols_mat.T @ g_mat).reshape(kernel.shape), own=True)
            if x.requires_grad:
                g_cols = g_mat @ w_mat.T
                if pointwise:
                    dxp = g_cols.reshape(n, hp, wp, c_in)
                else:
                    dxp = _col2im(g_cols.reshape(n, oh, ow, kh, kw, c_in),
                                  (n, hp, wp, c_in), kh, kw, stride, oh, ow)
                x.accumulate_grad(_unpad(dxp, h, w, ph0, pw0), own=True)
        out.backward_fn = backward_fn
    return _maybe_squeeze(out, squeeze)


def pointwise_conv2d(x, kernel):
    """1x1 convolution: a per-pixel linear map over channels."""
    if kernel.ndim != 4 or kernel.shape[0] != 1 or kernel.shape[1] != 1:
        raise DimensionError(
            f"pointwise_conv2d kernel must be (1,1,C_in,C_out), got {tuple(kernel.shape)}")
    return conv2d(x, kernel, bias=None, stride=1, padding="valid")


# ---------------------------------------------------------------------------
# depthwise conv2d


def depthwise_conv2d(x, kernel, stride=1, padding="valid"):
    """Filter each channel independently with its own k x k kernel (k,k,C)."""
    _check_stride(stride)
    x, squeeze = _batched(x)
    if kernel.ndim != 3:
        raise DimensionError(
            f"depthwise_conv2d kernel must be 3-D (k,k,C), got {tuple(kernel.shape)}")
    kh, kw, kc = kernel.shape
    n, h, w, c = x.shape
    if c != kc:
        raise DimensionError(
            f"depthwise_conv2d: input channels (input axis 3) = {c} "
            f"but kernel channels (kernel axis 2) = {kc}")
    ph0, ph1, pw0, pw1 = resolve_padding(padding, h, w, kh, kw, stride)
    hp, wp = h + ph0 + ph1, w + pw0 + pw1
    if kh > hp or kw > wp:
        raise DimensionError(
            f"depthwise_conv2d: kernel ({kh}x{kw}) exceeds padded input ({hp}x{wp})")
    oh = (hp - kh) // stride + 1
    ow = (wp - kw) // stride + 1

    xp = _pad_nhwc(x.data, ph0, ph1, pw0, pw1)
    out_data = _kernels.depthwise_forward(xp, kernel.data, stride, oh, ow)

    requires = x.requires_grad or kernel.requires_grad
    out = Tensor(out_data, requires_grad=requires, op="depthwise_conv2d", parents=(x, kernel))
    if out.parents:
        def backward_fn(g, x=x, kernel=kernel, xp=xp,
                        geom=(n, h, w, hp, wp, oh, ow, kh, kw, stride, ph0, pw0, c)):
            n, h, w, hp, wp, oh, ow, kh, kw, stride, ph0, pw0, c = geom
            g = np.ascontiguousarray(g)
            if kernel.requires_grad:
                dk = _kernels.depthwise_grad_k(xp, g, kernel.data.shape, stride, oh, ow)
                kernel.accumulate_grad(dk, own=True)
            if x.requires_grad:
                dxp = _kernels.depthwise_grad_x(g, kernel.data, stride,
                                                (n, hp, wp, c), oh, ow)
                x.accumulate_grad(_unpad(dxp, h, w, ph0, pw0), own=True)
        out.backward_fn = backward_fn
    return _maybe_squeeze(out, squeeze)


# ---------------------------------------------------------------------------
# transposed conv2d


def transposed_conv2d(x, kernel, bias=None, stride=1, padding="valid"):
    """Adjoint of the matching conv2d.

    ``x`` is (H,W,C_in) or (N,H,W,C_in); ``kernel`` is (k,k,C_out,C_in): the
    same array the matching conv2d (C_out -> C_in) would use. Output spatial
    size is (dim-1)*stride + k - pad_total.
    """
    _check_stride(stride)
    x, squeeze = _batched(x)
    if kernel.ndim != 4:
        raise DimensionError(
            f"transposed_conv2d kernel must be 4-D (k,k,C_out,C_in), got {tuple(kernel.shape)}")
    kh, kw, c_out, c_in = kernel.shape
    n, h, w, c = x.shape
    if c != c_in:
        raise DimensionError(
            f"transposed_conv2d: input channels (input axis 3) = {c} "
            f"but kernel C_in (kernel axis 3) = {c_in}")
    if bias is not None and tuple(bias.shape) != (c_out,):
        raise DimensionError(f"transposed_conv2d: bias shape {tuple(bias.shape)} != ({c_out},)")
    ph0, ph1, pw0, pw1 = resolve_padding(padding, h, w, kh, kw, stride, transposed=True)
    fh = (h - 1) * stride + kh   # full (uncropped) output size
    fw = (w - 1) * stride + kw
    oh = fh - ph0 - ph1
    ow = fw - pw0 - pw1
    if oh < 1 or ow < 1:
        raise ConfigurationError(
            f"transposed_conv2d: computed output {oh}x{ow} is not positive")

    # forward = col2im of (input @ kernel^T) laid out on the full grid
    w_mat = kernel.data.reshape(kh * kw * c_out, c_in)
    cols = (x.data.reshape(n * h * w, c_in) @ w_mat.T).reshape(n, h, w, kh, kw, c_out)
    full = _col2im(cols, (n, fh, fw, c_out), kh, kw, stride, h, w)
    out_data = full[:, ph0:ph0 + oh, pw0:pw0 + ow, :]
    if bias is not None:
        out_data = out_data + bias.data

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    requires = any(p.requires_grad for p in parents)
    out = Tensor(out_data, requires_grad=requires, op="transposed_conv2d", parents=parents)
    if out.parents:
        def backward_fn(g, x=x, kernel=kernel, bias=bias, w_mat=w_mat,
                        geom=(n, h, w, fh, fw, oh, ow, kh, kw, stride,
                              ph0, ph1, pw0, pw1, c_in, c_out)):
            (n, h, w, fh, fw, oh, ow, kh, kw, stride,
             ph0, ph1, pw0, pw1, c_in, c_out) = geom
            if bias is not None and bias.requires_grad:
                bias.accumulate_grad(g.sum(axis=(0, 1, 2)), own=True)
            # pad the output-grad back to the full grid, then the matching
            # conv's im2col serves both input- and kernel-gradients
            gp = _pad_nhwc(g, ph0, ph1, pw0, pw1)
            g_cols = _im2col(gp, kh, kw, stride, h, w).reshape(n * h * w, kh * kw * c_out)
            if x.requires_grad:
                x.accumulate_grad((g_cols @ w_mat).reshape(n, h, w, c_in), own=True)
            if kernel.requires_grad:
                kernel.accumulate_grad(
                    (g_cols.T @ x.data.reshape(n * h * w, c_in)).reshape(kernel.shape),
                    own=True)
        out.backward_fn = backward_fn
    return _maybe_squeeze(out, squeeze)


# ---------------------------------------------------------------------------
# batch norm


class BatchNormState:
    """Running statistics for one batch-norm layer."""

    def __init__(self, channels, momentum=0.9, eps=1e-5, dtype=np.float32):
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.momentum = momentum
        self.eps = eps


def batch_norm(x, gamma, beta, state, mode="train"):
    """Normalize per channel over batch+spatial axes, then apply gamma/beta.

    Train mode uses batch statistics (biased variance) and updates
    ``state``'s running statistics in place; eval mode reads them.
    """
    if mode not in ("train", "eval"):
        raise ConfigurationError(f"batch_norm mode must be 'train' or 'eval', got {mode!r}")
    x, squeeze = _batched(x)
    n, h, w, c = x.shape
    if tuple(gamma.shape) != (c,) or tuple(beta.shape) != (c,):
        raise DimensionError(
            f"batch_norm: gamma/beta must have shape ({c},), got "
            f"{tuple(gamma.shape)} and {tuple(beta.shape)}")
    m = n * h * w
    eps = state.eps

    x2d = np.ascontiguousarray(x.data).reshape(m, c)
    if mode == "train":
        if m < 2:
            raise DegenerateStatisticsError(
                f"batch_norm train mode needs >= 2 elements per channel, got {m}")
        s1, s2 = _kernels.moment_sums(x2d)
        mu64 = s1 / m
        var64 = np.maximum(s2 / m - mu64 * mu64, 0.0)  # biased; guard cancellation
        mu = mu64.astype(x.dtype)
        var = var64.astype(x.dtype)
        mom = state.momentum
        state.running_mean = (mom * state.running_mean + (1.0 - mom) * mu).astype(
            state.running_mean.dtype)
        state.running_var = (mom * state.running_var + (1.0 - mom) * var).astype(
            state.running_var.dtype)
    else:
        mu = state.running_mean.astype(x.dtype, copy=False)
        var = state.running_var.astype(x.dtype, copy=False)

    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    scale = (gamma.data * inv_std).astype(x.dtype, copy=False)
    out_data = _kernels.bn_normalize(x2d, mu, scale, beta.data.astype(x.dtype, copy=False))

    requires = x.requires_grad or gamma.requires_grad or beta.requires_grad
    out = Tensor(out_data.reshape(x.shape), requires_grad=requires, op="batch_norm",
                 parents=(x, gamma, beta))
    if out.parents:
        def backward_fn(g, x=x, gamma=gamma, beta=beta, x2d=x2d, mu=mu,
                        inv_std=inv_std, m=m, c=c, train=(mode == "train")):
            g2d = np.ascontiguousarray(g).reshape(m, c)
            g_sum, gx_sum = _kernels.bn_backward_sums(g2d, x2d, mu)
            if beta.requires_grad:
                beta.accumulate_grad(g_sum.astype(x.dtype), own=True)
            if gamma.requires_grad:
                gamma.accumulate_grad((gx_sum * inv_std).astype(x.dtype), own=True)
            if x.requires_grad:
                scale = gamma.data * inv_std
                if train:
                    # dx = scale*(g - mean(g)) - (x-mu)*scale*mean(g*(x-mu))*inv_std^2
                    g_mean = (g_sum / m).astype(x.dtype)
                    coef = (scale * (gx_sum / m) * inv_std * inv_std).astype(x.dtype)
                    dx = _kernels.bn_backward_dx(g2d, x2d, mu, scale.astype(x.dtype),
                                                 g_mean, coef)
                    x.accumulate_grad(dx.reshape(x.shape), own=True)
                else:
                    x.accumulate_grad((g2d * scale).reshape(x.shape), own=True)
        out.backward_fn = backward_fn
    return _maybe_squeeze(out, squeeze)


# ---------------------------------------------------------------------------
# relu / fully connected / pairwise squared distance


def relu(x):
    out_data = np.maximum(x.data, 0)
    out = Tensor(out_data, requires_grad=x.requires_grad, op="relu", parents=(x,))
    if out.parents:
        def backward_fn(g, x=x):
            x.accumulate_grad(_kernels.relu_backward(g, x.data), own=True)
        out.backward_fn = backward_fn
    return out


def fully_connected(x, weight, bias=None):
    """Affine map: (N,D_in) @ (D_in,D_out) + bias."""
    if x.ndim != 2:
        raise DimensionError(f"fully_connected input must be 2-D (N,D_in), got {tuple(x.shape)}")
    if weight.ndim != 2:
        raise DimensionError(f"fully_connected weight must be 2-D, got {tuple(weight.shape)}")
    if x.shape[1] != weight.shape[0]:
        raise DimensionError(
            f"fully_connected: input D_in (axis 1) = {x.shape[1]} but weight expects "
            f"{weight.shape[0]} (axis 0)")
    out = x @ weight
    if bias is not None:
        if tuple(bias.shape) != (weight.shape[1],):
            raise DimensionError(
                f"fully_connected: bias shape {tuple(bias.shape)} != ({weight.shape[1]},)")
        out = out + bias
    return out


def pairwise_sqdist(z, centers):
    """Squared euclidean distances (N,K) between rows of (N,D) and (K,D)."""
    if z.ndim != 2 or centers.ndim != 2 or z.shape[1] != centers.shape[1]:
        raise DimensionError(
            f"pairwise_sqdist: incompatible shapes {tuple(z.shape)} and {tuple(centers.shape)}")
    diff = z.data[:, None, :] - centers.data[None, :, :]
    out_data = np.einsum("nkd,nkd->nk", diff, diff)
    requires = z.requires_grad or centers.requires_grad
    out = Tensor(out_data, requires_grad=requires, op="pairwise_sqdist", parents=(z, centers))
    if out.parents:
        def backward_fn(g, z=z, centers=centers, diff=diff):
            if z.requires_grad:
                z.accumulate_grad(2.0 * np.einsum("nk,nkd->nd", g, diff), own=True)
            if centers.requires_grad:
                centers.accumulate_grad(-2.0 * np.einsum("nk,nkd->kd", g, diff), own=True)
        out.backward_fn = backward_fn
    return out
