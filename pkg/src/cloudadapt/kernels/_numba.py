"""JIT-compiled hot loops: convolution, pooling, and buffer hashing.

Kernels are deliberately compiled without fastmath or parallel so that
summation order is fixed and results are reproducible run to run.
"""
import numpy as np

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only without numba installed

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(func):
            return func

        return wrap

    NUMBA_AVAILABLE = False


@njit(cache=True)
def conv2d_forward(xp, w):
    # xp: (n, hp, wp, ci) already padded; w: (kh, kw, ci, co)
    n, hp, wp, ci = xp.shape
    kh, kw, _, co = w.shape
    ho = hp - kh + 1
    wo = wp - kw + 1
    out = np.zeros((n, ho, wo, co), dtype=np.float64)
    for i in range(n):
        for y in range(ho):
            for x in range(wo):
                for c in range(co):
                    acc = 0.0
                    for ky in range(kh):
                        for kx in range(kw):
                            for b in range(ci):
                                acc += xp[i, y + ky, x + kx, b] * w[ky, kx, b, c]
                    out[i, y, x, c] = acc
    return out


@njit(cache=True)
def conv2d_grad_w(xp, dy, kh, kw):
    # d(loss)/d(w) given upstream dy: (n, ho, wo, co)
    n, hp, wp, ci = xp.shape
    _, ho, wo, co = dy.shape
    dw = np.zeros((kh, kw, ci, co), dtype=np.float64)
    for i in range(n):
        for y in range(ho):
            for x in range(wo):
                for ky in range(kh):
                    for kx in range(kw):
                        for b in range(ci):
                            xv = xp[i, y + ky, x + kx, b]
                            for c in range(co):
                                dw[ky, kx, b, c] += xv * dy[i, y, x, c]
    return dw


@njit(cache=True)
def maxpool_forward(x, p):
    # Non-overlapping p x p windows; ties resolve to the first position in
    # row-major window order, which must match the numpy twin exactly.
    n, h, w, c = x.shape
    ho = h // p
    wo = w // p
    y = np.empty((n, ho, wo, c), dtype=np.float64)
    arg = np.empty((n, ho, wo, c), dtype=np.int64)
    for i in range(n):
        for iy in range(ho):
            for ix in range(wo):
                for ch in range(c):
                    best = x[i, iy * p, ix * p, ch]
                    bidx = 0
                    for ky in range(p):
                        for kx in range(p):
                            v = x[i, iy * p + ky, ix * p + kx, ch]
                            if v > best:
                                best = v
                                bidx = ky * p + kx
                    y[i, iy, ix, ch] = best
                    arg[i, iy, ix, ch] = bidx
    return y, arg


@njit(cache=True)
def maxpool_backward(dy, arg, p, h, w):
    n, ho, wo, c = dy.shape
    dx = np.zeros((n, h, w, c), dtype=np.float64)
    for i in range(n):
        for iy in range(ho):
            for ix in range(wo):
                for ch in range(c):
                    a = arg[i, iy, ix, ch]
                    dx[i, iy * p + a // p, ix * p + a % p, ch] += dy[i, iy, ix, ch]
    return dx


@njit(cache=True)
def _fnv1a64_u8(data):
    h = np.uint64(0xCBF29CE484222325)
    prime = np.uint64(0x100000001B3)
    for i in range(data.size):
        h = (h ^ np.uint64(data[i])) * prime
    return h


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit hash of a byte string."""
    buf = np.frombuffer(data, dtype=np.uint8)
    return int(_fnv1a64_u8(buf))
