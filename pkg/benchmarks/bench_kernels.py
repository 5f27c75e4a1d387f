"""Compare the compiled and pure-numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 200] [--iterations 6]

Times each kernel on token-sized inputs, then a few end-to-end attack
iterations with the default 64x64 ensemble.
"""
import argparse
import time
import timeit

import numpy as np

from praf import kernels
from praf.attack import AttackConfig, run_attack
from praf.surrogate import build_ensemble, default_ensemble_configs
from praf.synthetic import random_pair

ROWS, DIM = 65, 64  # CLS + 64 patch tokens of a 64x64 image with 8x8 patches


def kernel_cases(rng):
    x = rng.normal(size=(ROWS, DIM))
    gamma, beta = rng.normal(size=DIM), rng.normal(size=DIM)
    g = rng.normal(size=(ROWS, DIM))
    scores = rng.normal(size=(4 * ROWS, ROWS))
    y, xhat, rstd = kernels.layer_norm_forward(x, gamma, beta, 1e-6)
    p = kernels.softmax_forward(scores)
    return {
        "layer_norm_forward": lambda: kernels.layer_norm_forward(x, gamma, beta, 1e-6),
        "layer_norm_backward": lambda: kernels.layer_norm_backward(g, xhat, rstd, gamma),
        "softmax_forward": lambda: kernels.softmax_forward(scores),
        "softmax_backward": lambda: kernels.softmax_backward(p, scores),
        "gelu_forward": lambda: kernels.gelu_forward(x),
        "gelu_backward": lambda: kernels.gelu_backward(x, g),
    }


def attack_seconds(iterations):
    ensemble = build_ensemble(default_ensemble_configs())
    x_cle, x_tgt = random_pair(0)
    cfg = AttackConfig(T=iterations, M=min(3, iterations), seed=0)
    start = time.perf_counter()
    run_attack(x_cle, x_tgt, ensemble, cfg)
    return (time.perf_counter() - start) / iterations


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=200)
    parser.add_argument("--iterations", type=int, default=6)
    args = parser.parse_args()

    backends = kernels.available()
    if "native" not in backends:
        print("compiled extension not built; only the numpy backend is available")
    rows = {}
    for name in backends:
        kernels.use(name)
        for kname, fn in kernel_cases(np.random.default_rng(0)).items():
            best = min(timeit.repeat(fn, number=args.repeat, repeat=3)) / args.repeat
            rows.setdefault(kname, {})[name] = best * 1e6
        rows.setdefault("attack iteration", {})[name] = attack_seconds(args.iterations) * 1e6

    header = f"{'kernel':<22}" + "".join(f"{b + ' (us)':>16}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for kname, vals in rows.items():
        line = f"{kname:<22}" + "".join(f"{vals[b]:>16.1f}" for b in backends)
        if len(backends) == 2:
            line += f"{vals['python'] / vals['native']:>9.2f}x"
        print(line)


if __name__ == "__main__":
    main()
