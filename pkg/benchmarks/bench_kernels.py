"""Time the numba kernels against their numpy twins.

    python3 benchmarks/bench_kernels.py [--rho 20000] [--senders 100] [--repeat 5]

Each kernel runs once untimed (so numba compiles outside the measurement),
then ``--repeat`` times per backend; the best wall time is reported. Both
backends must produce identical integer output; the covariance kernel is
compared to 1e-12 relative.
"""
import argparse
import time

import numpy as np

from mixscope import _accel, _kernels
from mixscope.diagnostics import _index_tuples
from mixscope.generator import random_profiles


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rho", type=int, default=20_000)
    ap.add_argument("--senders", type=int, default=100)
    ap.add_argument("--receivers", type=int, default=200)
    ap.add_argument("--tuples", type=int, default=100_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    rng = np.random.default_rng(0)
    lam = rng.uniform(0.5, 10, args.senders)
    P = random_profiles(args.senders, args.receivers, rng)
    counts = _kernels.poisson_inputs(1, lam, args.rho, use_numba=True)
    x = counts.astype(np.float64)
    kmn, _ = _index_tuples(args.senders, 3, args.tuples, rng)
    tuples = np.ascontiguousarray(kmn[:, [0, 0, 1, 2]])  # Cov(X_k^2, X_m X_n)
    q = np.full(args.senders, 1.0 / args.senders)

    cases = {
        "poisson_inputs": lambda nb: _kernels.poisson_inputs(1, lam, args.rho, use_numba=nb),
        "threshold_inputs": lambda nb: _kernels.threshold_inputs(1, q, 100, args.rho, use_numba=nb),
        "route_messages/multinomial": lambda nb: _kernels.route_messages(1, counts, P, False, use_numba=nb),
        "route_messages/max_variance": lambda nb: _kernels.route_messages(1, counts, P, True, use_numba=nb),
        "tuple_covariances": lambda nb: _kernels.tuple_covariances(x, tuples, use_numba=nb),
    }
    print(f"rho={args.rho} N={args.senders} M={args.receivers} messages={int(counts.sum())} tuples={len(tuples)}")
    print(f"{'kernel':<30}{'numba s':>10}{'numpy s':>10}{'speedup':>9}  match")
    for name, run in cases.items():
        a, b = run(True), run(False)
        if isinstance(a, tuple):
            same = all(np.array_equal(u, v) for u, v in zip(a, b))
        elif a.dtype.kind == "f":
            same = bool(np.allclose(a, b, rtol=1e-12, atol=0))
        else:
            same = bool(np.array_equal(a, b))
        t_nb = best_of(lambda: run(True), args.repeat)
        t_np = best_of(lambda: run(False), args.repeat)
        print(f"{name:<30}{t_nb:>10.4f}{t_np:>10.4f}{t_np / t_nb:>8.1f}x  {'yes' if same else 'NO'}")


if __name__ == "__main__":
    main()
