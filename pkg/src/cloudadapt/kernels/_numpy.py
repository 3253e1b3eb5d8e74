"""Pure-numpy twins of the JIT kernels.

Used when numba is unavailable or when CLOUDADAPT_BACKEND=numpy.  einsum is
called with optimize=False so the contraction never routes through BLAS;
that keeps each output element's reduction order fixed and independent of
how the batch is composed.
"""
import numpy as np


def conv2d_forward(xp, w):
    n, hp, wp, ci = xp.shape
    kh, kw, _, co = w.shape
    ho = hp - kh + 1
    wo = wp - kw + 1
    out = np.zeros((n, ho, wo, co), dtype=np.float64)
    for ky in range(kh):
        for kx in range(kw):
            patch = xp[:, ky : ky + ho, kx : kx + wo, :]
            out += np.einsum("nhwb,bc->nhwc", patch, w[ky, kx], optimize=False)
    return out


def conv2d_grad_w(xp, dy, kh, kw):
    _, ho, wo, _ = dy.shape
    ci = xp.shape[3]
    co = dy.shape[3]
    dw = np.empty((kh, kw, ci, co), dtype=np.float64)
    for ky in range(kh):
        for kx in range(kw):
            patch = xp[:, ky : ky + ho, kx : kx + wo, :]
            dw[ky, kx] = np.einsum("nhwb,nhwc->bc", patch, dy, optimize=False)
    return dw


def maxpool_forward(x, p):
    n, h, w, c = x.shape
    ho = h // p
    wo = w // p
    # Window laid out in row-major order so argmax's first-occurrence rule
    # picks the same position as the scan in the JIT twin.
    xr = (
        x.reshape(n, ho, p, wo, p, c)
        .transpose(0, 1, 3, 5, 2, 4)
        .reshape(n, ho, wo, c, p * p)
    )
    arg = xr.argmax(axis=4)
    y = np.take_along_axis(xr, arg[..., None], axis=4)[..., 0]
    return y, arg


def maxpool_backward(dy, arg, p, h, w):
    n, ho, wo, c = dy.shape
    dx = np.zeros((n, h, w, c), dtype=np.float64)
    ii, iy, ix, ic = np.indices((n, ho, wo, c))
    # One winner per disjoint window, so plain fancy assignment is safe.
    dx[ii, iy * p + arg // p, ix * p + arg % p, ic] = dy
    return dx


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit hash of a byte string."""
    h = 0xCBF29CE484222325
    for b in data:
        h = ((h ^ b) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h
