"""Time the Q-network kernels under the numba and numpy backends.

    python benchmarks/bench_kernels.py [--repeat 2000] [--batch 32]

Shapes match the DQN agents: 8 inputs, two hidden layers of 32, 2 outputs.
"""
import argparse
import timeit

import numpy as np

from dlcache import _kernels as K
from dlcache.neuralnet import AdamState, Network, train_batch


def bench(backend: str, repeat: int, batch: int, sizes=(8, 32, 32, 2)) -> dict[str, float]:
    K.set_backend(backend)
    rng = np.random.default_rng(0)
    net = Network(sizes, seed=0)
    adam = AdamState.for_network(net)
    X = rng.random((batch, sizes[0]))
    T = rng.normal(size=(batch, sizes[-1]))
    M = np.zeros_like(T)
    M[np.arange(batch), rng.integers(sizes[-1], size=batch)] = 1.0
    grad = rng.normal(size=net.theta.shape)
    one = X[:1]

    cases = {
        "forward(1 row)": lambda: K.forward(net.theta, one, net.sizes),
        f"forward({batch} rows)": lambda: K.forward(net.theta, X, net.sizes),
        "loss_grad": lambda: K.loss_grad(net.theta, X, T, M, net.sizes),
        "adam": lambda: K.adam(net.theta.copy(), grad, adam.m, adam.v, 1, 1e-3, 0.9, 0.999, 1e-8),
        "train_batch": lambda: train_batch(net, adam, X, T, M),
    }
    out = {}
    for name, fn in cases.items():
        fn()  # compile / warm caches
        out[name] = min(timeit.repeat(fn, number=repeat, repeat=3)) / repeat * 1e6
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=2000)
    ap.add_argument("--batch", type=int, default=32)
    args = ap.parse_args()
    backends = ["numpy"] + (["numba"] if K.HAVE_NUMBA else [])
    results = {b: bench(b, args.repeat, args.batch) for b in backends}
    print(f"{'kernel':<18}" + "".join(f"{b + ' us':>12}" for b in backends)
          + ("     speedup" if len(backends) == 2 else ""))
    for name in results["numpy"]:
        row = f"{name:<18}" + "".join(f"{results[b][name]:12.2f}" for b in backends)
        if len(backends) == 2:
            row += f"{results['numpy'][name] / results['numba'][name]:11.1f}x"
        print(row)
    if not K.HAVE_NUMBA:
        print("numba unavailable or disabled by DLCACHE_DISABLE_JIT; numpy only")


if __name__ == "__main__":
    main()
