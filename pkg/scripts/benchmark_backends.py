"""Compare the compiled Cython kernels with the pure-numpy reference.

Times the forward pass and the full loss/gradient computation over a grid
of batch sizes, using the MLP shape the presets run (32-64-10).

Usage: python3 scripts/benchmark_backends.py [--repeats N]
"""

import argparse
import time

import numpy as np

from fedarena.backends import pure

try:
    from fedarena.backends import _kernels
except ImportError:
    _kernels = None


def make_net(sizes, seed=0):
    rng = np.random.default_rng(seed)
    weights = [rng.normal(scale=0.3, size=(b, a)) for a, b in zip(sizes, sizes[1:])]
    biases = [np.zeros(b) for b in sizes[1:]]
    return weights, biases


def bench(fn, repeats):
    fn()  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats * 1e6  # microseconds


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=200)
    args = ap.parse_args()

    sizes = (32, 64, 10)
    weights, biases = make_net(sizes)
    rng = np.random.default_rng(1)

    backends = [("python", pure)]
    if _kernels is not None:
        backends.append(("cython", _kernels))
    else:
        print("compiled extension not built; timing the pure backend only")

    print(f"MLP {'-'.join(map(str, sizes))}, {args.repeats} repeats, times in us/call")
    print(f"{'batch':>6} {'op':>10} " + " ".join(f"{n:>10}" for n, _ in backends) + "   speedup")
    for batch in (32, 128, 512):
        x = rng.uniform(0, 1, size=(batch, sizes[0]))
        y = rng.integers(0, sizes[-1], size=batch)
        for op, call in (
            ("forward", lambda m: m.mlp_forward(x, weights, biases)),
            ("grads", lambda m: m.mlp_loss_grads(x, y, weights, biases)),
        ):
            times = [bench(lambda m=mod: call(m), args.repeats) for _, mod in backends]
            speed = f"{times[0] / times[1]:8.2f}x" if len(times) == 2 else ""
            cols = " ".join(f"{t:10.1f}" for t in times)
            print(f"{batch:>6} {op:>10} {cols}  {speed}")


if __name__ == "__main__":
    main()
