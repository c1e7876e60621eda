"""Time the compiled LSTM kernel against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--batch 32] [--steps 20] [--hidden 64]
"""

import argparse
import timeit

import numpy as np

from hgr.autodiff import lstm
from hgr.autodiff.tensor import Tensor, backward


def run_once(backend, x, lengths, w_ih, w_hh, b):
    params = [Tensor(a.copy(), requires_grad=True) for a in (w_ih, w_hh, b)]
    h = lstm.lstm_sequence(Tensor(x), lengths, *params, backend=backend)
    backward(h.sum())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--batch", type=int, default=32)
    ap.add_argument("--steps", type=int, default=20)
    ap.add_argument("--input", type=int, default=32)
    ap.add_argument("--hidden", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--dtype", default="float32")
    a = ap.parse_args()
    rng = np.random.default_rng(0)
    dt = np.dtype(a.dtype)
    x = rng.standard_normal((a.batch, a.steps, a.input)).astype(dt)
    lengths = rng.integers(1, a.steps + 1, size=a.batch)
    w_ih = (0.1 * rng.standard_normal((4 * a.hidden, a.input))).astype(dt)
    w_hh = (0.1 * rng.standard_normal((4 * a.hidden, a.hidden))).astype(dt)
    b = np.zeros(4 * a.hidden, dtype=dt)
    print(f"B={a.batch} T={a.steps} I={a.input} H={a.hidden} {dt}")
    times = {}
    for name in sorted(lstm.KERNELS):
        t = min(timeit.repeat(lambda: run_once(name, x, lengths, w_ih, w_hh, b), number=3, repeat=a.repeat)) / 3
        times[name] = t
        print(f"{name:>9}: {1e3 * t:8.2f} ms per forward+backward")
    if "compiled" in times:
        print(f"speed-up: {times['python'] / times['compiled']:.2f}x")
    else:
        print("compiled kernel not built; only the fallback was timed")


if __name__ == "__main__":
    main()
