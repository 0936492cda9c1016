"""Fused loops for the memory-bound hot paths (im2col/col2im, batch norm).

Numba-compiled when available, with equivalent numpy fallbacks. Reductions
use a fixed chunk count combined in a fixed order, so results do not depend
on the number of threads.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is an optional accelerator
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        if args and callable(args[0]):
            return args[0]
        return wrap

_SUM_CHUNKS = 16


@njit(cache=True)
def _im2col_nb(xp, cols, stride):
    n, oh, ow, kh, kw, c = cols.shape
    for row in range(n * oh):
        b = row // oh
        p = row % oh
        for q in range(ow):
            for i in range(kh):
                for j in range(kw):
                    src_h = p * stride + i
                    src_w_base = q * stride + j
                    for ch in range(c):
                        cols[b, p, q, i, j, ch] = xp[b, src_h, src_w_base, ch]


@njit(cache=True)
def _col2im_nb(cols, dxp, stride):
    n, oh, ow, kh, kw, c = cols.shape
    for b in range(n):
        for p in range(oh):
            for q in range(ow):
                for i in range(kh):
                    for j in range(kw):
                        for ch in range(c):
                            dxp[b, p * stride + i, q * stride + j, ch] += cols[b, p, q, i, j, ch]


@njit(cache=True)
def _sums_chunked_nb(x2d, out):
    m, c = x2d.shape
    nchunks = out.shape[0]
    chunk = (m + nchunks - 1) // nchunks
    for b in range(nchunks):
        lo = b * chunk
        hi = min(m, lo + chunk)
        for i in range(lo, hi):
            for j in range(c):
                v = x2d[i, j]
                out[b, 0, j] += v
                out[b, 1, j] += v * v


@njit(cache=True)
def _bn_normalize_nb(x2d, mu, scale, beta, out):
    m, c = x2d.shape
    for i in range(m):
        for j in range(c):
            out[i, j] = (x2d[i, j] - mu[j]) * scale[j] + beta[j]


@njit(cache=True)
def _bn_bwd_sums_nb(g2d, x2d, mu, out):
    m, c = g2d.shape
    nchunks = out.shape[0]
    chunk = (m + nchunks - 1) // nchunks
    for b in range(nchunks):
        lo = b * chunk
        hi = min(m, lo + chunk)
        for i in range(lo, hi):
            for j in range(c):
                gv = g2d[i, j]
                out[b, 0, j] += gv
                out[b, 1, j] += gv * (x2d[i, j] - mu[j])


@njit(cache=True)
def _bn_bwd_dx_nb(g2d, x2d, mu, scale, g_mean, coef, out):
    m, c = g2d.shape
    for i in range(m):
        for j in range(c):
            out[i, j] = (g2d[i, j] - g_mean[j]) * scale[j] - (x2d[i, j] - mu[j]) * coef[j]


@njit(cache=True)
def _dw_forward_nb(xp, k, stride, out):
    n, oh, ow, c = out.shape
    kh, kw = k.shape[0], k.shape[1]
    for b in range(n):
        for p in range(oh):
            for q in range(ow):
                for ch in range(c):
                    acc = 0.0
                    for i in range(kh):
                        for j in range(kw):
                            acc += xp[b, p * stride + i, q * stride + j, ch] * k[i, j, ch]
                    out[b, p, q, ch] = acc


@njit(cache=True)
def _dw_grad_x_nb(g, k, stride, dxp):
    n, oh, ow, c = g.shape
    kh, kw = k.shape[0], k.shape[1]
    for b in range(n):
        for p in range(oh):
            for q in range(ow):
                for i in range(kh):
                    for j in range(kw):
                        for ch in range(c):
                            dxp[b, p * stride + i, q * stride + j, ch] += g[b, p, q, ch] * k[i, j, ch]


@njit(cache=True)
def _dw_grad_k_nb(xp, g, stride, dk):
    n, oh, ow, c = g.shape
    kh, kw = dk.shape[0], dk.shape[1]
    for b in range(n):
        for p in range(oh):
            for q in range(ow):
                for i in range(kh):
                    for j in range(kw):
                        for ch in range(c):
                            dk[i, j, ch] += xp[b, p * stride + i, q * stride + j, ch] * g[b, p, q, ch]


@njit(cache=True)
def _relu_bwd_nb(g, x, out):
    flat_g = g.reshape(g.size)
    flat_x = x.reshape(x.size)
    flat_o = out.reshape(out.size)
    for i in range(flat_g.size):
        flat_o[i] = flat_g[i] if flat_x[i] > 0 else 0.0


# ---------------------------------------------------------------------------
# public wrappers with numpy fallbacks


def im2col(xp, kh, kw, stride, oh, ow):
    """(N,oh,ow,kh,kw,C) windows of the padded input."""
    n, _, _, c = xp.shape
    cols = np.empty((n, oh, ow, kh, kw, c), dtype=xp.dtype)
    if HAVE_NUMBA:
        _im2col_nb(np.ascontiguousarray(xp), cols, stride)
        return cols
    for i in range(kh):
        hi = i + stride * oh
        for j in range(kw):
            wj = j + stride * ow
            cols[:, :, :, i, j, :] = xp[:, i:hi:stride, j:wj:stride, :]
    return cols


def col2im(cols, xp_shape, kh, kw, stride, oh, ow):
    """Scatter-add windows back onto the padded-input grid."""
    dxp = np.zeros(xp_shape, dtype=cols.dtype)
    if HAVE_NUMBA:
        _col2im_nb(np.ascontiguousarray(cols), dxp, stride)
        return dxp
    for i in range(kh):
        hi = i + stride * oh
        for j in range(kw):
            wj = j + stride * ow
            dxp[:, i:hi:stride, j:wj:stride, :] += cols[:, :, :, i, j, :]
    return dxp


def moment_sums(x2d):
    """Per-column float64 (sum, sum of squares), chunk-combined deterministically."""
    if HAVE_NUMBA:
        out = np.zeros((_SUM_CHUNKS, 2, x2d.shape[1]), dtype=np.float64)
        _sums_chunked_nb(np.ascontiguousarray(x2d), out)
        totals = out.sum(axis=0)
        return totals[0], totals[1]
    x64 = x2d.astype(np.float64, copy=False)
    return x64.sum(axis=0), (x64 * x64).sum(axis=0)


def bn_normalize(x2d, mu, scale, beta):
    if HAVE_NUMBA:
        out = np.empty_like(x2d)
        _bn_normalize_nb(np.ascontiguousarray(x2d), mu, scale, beta, out)
        return out
    return (x2d - mu) * scale + beta


def bn_backward_sums(g2d, x2d, mu):
    """Per-column (sum g, sum g*(x-mu)), chunk-combined deterministically."""
    if HAVE_NUMBA:
        out = np.zeros((_SUM_CHUNKS, 2, g2d.shape[1]), dtype=np.float64)
        _bn_bwd_sums_nb(np.ascontiguousarray(g2d), np.ascontiguousarray(x2d), mu, out)
        totals = out.sum(axis=0)
        return totals[0], totals[1]
    g64 = g2d.astype(np.float64, copy=False)
    return g64.sum(axis=0), np.einsum("mc,mc->c", g64, (x2d - mu).astype(np.float64, copy=False))


def bn_backward_dx(g2d, x2d, mu, scale, g_mean, coef):
    if HAVE_NUMBA:
        out = np.empty_like(g2d)
        _bn_bwd_dx_nb(np.ascontiguousarray(g2d), np.ascontiguousarray(x2d),
                      mu, scale, g_mean, coef, out)
        return out
    return (g2d - g_mean) * scale - (x2d - mu) * coef


def depthwise_forward(xp, kernel, stride, oh, ow):
    n, _, _, c = xp.shape
    if HAVE_NUMBA:
        out = np.empty((n, oh, ow, c), dtype=xp.dtype)
        _dw_forward_nb(np.ascontiguousarray(xp), np.ascontiguousarray(kernel), stride, out)
        return out
    kh, kw = kernel.shape[0], kernel.shape[1]
    out = np.zeros((n, oh, ow, c), dtype=xp.dtype)
    for i in range(kh):
        hi = i + stride * oh
        for j in range(kw):
            wj = j + stride * ow
            out += xp[:, i:hi:stride, j:wj:stride, :] * kernel[i, j]
    return out


def depthwise_grad_x(g, kernel, stride, xp_shape, oh, ow):
    dxp = np.zeros(xp_shape, dtype=g.dtype)
    if HAVE_NUMBA:
        _dw_grad_x_nb(np.ascontiguousarray(g), np.ascontiguousarray(kernel), stride, dxp)
        return dxp
    kh, kw = kernel.shape[0], kernel.shape[1]
    for i in range(kh):
        hi = i + stride * oh
        for j in range(kw):
            wj = j + stride * ow
            dxp[:, i:hi:stride, j:wj:stride, :] += g * kernel[i, j]
    return dxp


def depthwise_grad_k(xp, g, kernel_shape, stride, oh, ow):
    if HAVE_NUMBA:
        dk = np.zeros(kernel_shape, dtype=np.float64)
        _dw_grad_k_nb(np.ascontiguousarray(xp), np.ascontiguousarray(g), stride, dk)
        return dk.astype(g.dtype)
    kh, kw = kernel_shape[0], kernel_shape[1]
    dk = np.empty(kernel_shape, dtype=g.dtype)
    for i in range(kh):
        hi = i + stride * oh
        for j in range(kw):
            wj = j + stride * ow
            dk[i, j] = np.einsum("nhwc,nhwc->c", xp[:, i:hi:stride, j:wj:stride, :], g)
    return dk


def relu_backward(g, x):
    if HAVE_NUMBA and g.shape == x.shape:
        gc = np.ascontiguousarray(g)
        out = np.empty_like(gc)
        _relu_bwd_nb(gc, np.ascontiguousarray(x), out)
        return out
    return g * (x > 0)
