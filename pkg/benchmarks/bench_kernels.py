"""Time the JIT kernels against the plain-numpy fallbacks.

Runs both implementations on identical inputs, checks they agree, and
prints per-kernel timings with the speedup factor.  Shapes default to the
first and last conv blocks of the 32x32 preset so the numbers reflect the
actual training hot path.

    python3 benchmarks/bench_kernels.py --batch 16 --repeats 5
"""
import argparse
import timeit

import numpy as np

from cloudadapt.kernels import _numba, _numpy


def _best(fn, repeats):
    return min(timeit.repeat(fn, number=1, repeat=repeats))


def _fmt(name, impl, t):
    print(f"  {name:<18} {impl:<6} {t * 1e3:9.3f} ms")


def bench_conv(rng, n, h, w, ci, co, k, repeats):
    pad = k // 2
    xp = rng.standard_normal((n, h + 2 * pad, w + 2 * pad, ci))
    wgt = rng.standard_normal((k, k, ci, co))
    dy = rng.standard_normal((n, h, w, co))

    _numba.conv2d_forward(xp, wgt)  # compile outside the timed region
    _numba.conv2d_grad_w(xp, dy, k, k)

    out_nb = _numba.conv2d_forward(xp, wgt)
    out_np = _numpy.conv2d_forward(xp, wgt)
    np.testing.assert_allclose(out_nb, out_np, rtol=1e-10, atol=1e-12)
    gw_nb = _numba.conv2d_grad_w(xp, dy, k, k)
    gw_np = _numpy.conv2d_grad_w(xp, dy, k, k)
    np.testing.assert_allclose(gw_nb, gw_np, rtol=1e-10, atol=1e-12)

    print(f"conv {n}x{h}x{w}x{ci} -> {co} filters, {k}x{k}")
    t_nb = _best(lambda: _numba.conv2d_forward(xp, wgt), repeats)
    t_np = _best(lambda: _numpy.conv2d_forward(xp, wgt), repeats)
    _fmt("forward", "numba", t_nb)
    _fmt("forward", "numpy", t_np)
    print(f"  {'':<18} ratio  {t_np / t_nb:9.2f}x")
    t_nb = _best(lambda: _numba.conv2d_grad_w(xp, dy, k, k), repeats)
    t_np = _best(lambda: _numpy.conv2d_grad_w(xp, dy, k, k), repeats)
    _fmt("weight grad", "numba", t_nb)
    _fmt("weight grad", "numpy", t_np)
    print(f"  {'':<18} ratio  {t_np / t_nb:9.2f}x")


def bench_pool(rng, n, h, w, c, p, repeats):
    x = rng.standard_normal((n, h, w, c))
    _numba.maxpool_forward(x, p)
    y_nb, arg_nb = _numba.maxpool_forward(x, p)
    y_np, arg_np = _numpy.maxpool_forward(x, p)
    np.testing.assert_array_equal(y_nb, y_np)
    np.testing.assert_array_equal(arg_nb, arg_np)

    dy = rng.standard_normal(y_nb.shape)
    _numba.maxpool_backward(dy, arg_nb, p, h, w)
    dx_nb = _numba.maxpool_backward(dy, arg_nb, p, h, w)
    dx_np = _numpy.maxpool_backward(dy, arg_np, p, h, w)
    np.testing.assert_array_equal(dx_nb, dx_np)

    print(f"maxpool {n}x{h}x{w}x{c}, window {p}")
    t_nb = _best(lambda: _numba.maxpool_forward(x, p), repeats)
    t_np = _best(lambda: _numpy.maxpool_forward(x, p), repeats)
    _fmt("forward", "numba", t_nb)
    _fmt("forward", "numpy", t_np)
    print(f"  {'':<18} ratio  {t_np / t_nb:9.2f}x")
    t_nb = _best(lambda: _numba.maxpool_backward(dy, arg_nb, p, h, w), repeats)
    t_np = _best(lambda: _numpy.maxpool_backward(dy, arg_np, p, h, w), repeats)
    _fmt("backward", "numba", t_nb)
    _fmt("backward", "numpy", t_np)
    print(f"  {'':<18} ratio  {t_np / t_nb:9.2f}x")


def bench_hash(rng, n_bytes, repeats):
    data = rng.integers(0, 256, n_bytes, dtype=np.uint8).tobytes()
    _numba.fnv1a64(data)
    assert _numba.fnv1a64(data) == _numpy.fnv1a64(data)
    print(f"fnv1a64 over {n_bytes} bytes")
    t_nb = _best(lambda: _numba.fnv1a64(data), repeats)
    t_np = _best(lambda: _numpy.fnv1a64(data), repeats)
    _fmt("hash", "numba", t_nb)
    _fmt("hash", "numpy", t_np)
    print(f"  {'':<18} ratio  {t_np / t_nb:9.2f}x")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=16)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--hash-bytes", type=int, default=200_000)
    ap.add_argument("--seed", type=int, default=0)
    ns = ap.parse_args(argv)

    rng = np.random.default_rng(ns.seed)
    if not _numba.NUMBA_AVAILABLE:
        print("numba not installed; the jit columns run the fallback path")
    bench_conv(rng, ns.batch, 32, 32, 3, 8, 3, ns.repeats)
    bench_conv(rng, ns.batch, 4, 4, 32, 64, 3, ns.repeats)
    bench_pool(rng, ns.batch, 32, 32, 8, 2, ns.repeats)
    bench_hash(rng, ns.hash_bytes, ns.repeats)


if __name__ == "__main__":
    main()
