"""Compare the numba and pure-numpy kernel paths.

Times the two hot spots of a sequential run at short-column scale: the
marginal likelihood evaluated inside every MCMC step, and the mixture
prediction over the MC set.  Both backends are checked for agreement
before timing.

    python benchmarks/bench_kernels.py [--n 40] [--mc 100000] [--draws 50]
"""
import argparse
import time

import numpy as np

from tailgp import _accel, kernels
from tailgp.gp_core import TrainingSet
from tailgp.posterior import MCMCConfig, fit_surrogate


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=40, help="training points")
    ap.add_argument("--d", type=int, default=3)
    ap.add_argument("--mc", type=int, default=100_000, help="prediction points")
    ap.add_argument("--draws", type=int, default=50, help="posterior draws")
    ap.add_argument("--lik-evals", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    if not _accel.NUMBA_AVAILABLE:
        raise SystemExit("numba is unavailable (or TAILGP_NUMBA=0); nothing to compare")

    rng = np.random.default_rng(0)
    X = rng.random((args.n, args.d))
    y = np.sin(4 * X[:, 0]) + X[:, 1:].sum(axis=1)
    train = TrainingSet(X, y, np.zeros(args.d), np.ones(args.d))
    sur = fit_surrogate(train, config=MCMCConfig(burn_in=100, thin=1, M=args.draws), seed=0)
    logdiff = kernels.pairwise_log_absdiff(train.scaled)
    thetas = np.exp(rng.uniform(np.log(0.01), np.log(50), (args.lik_evals, args.d)))
    ps = rng.uniform(1, 2, (args.lik_evals, args.d))
    Xs = rng.random((args.mc, args.d))

    def lik(use_numba):
        for th, p in zip(thetas, ps):
            kernels.log_marginal(logdiff, y, th, p, use_numba=use_numba)

    def pred(use_numba, want_var=True):
        return kernels.mixture_moments(Xs, train.scaled, sur.draws, want_var, use_numba)

    # warm up the JIT and check agreement
    lik(True)
    m1, v1 = pred(True)
    m0, v0 = pred(False)
    print(f"max |mean diff| {np.max(np.abs(m1 - m0)):.2e}, "
          f"max rel var diff {np.max(np.abs(v1 - v0) / np.maximum(v0, 1e-300)):.2e}")

    rows = [
        (f"log marginal x{args.lik_evals}", lambda: lik(True), lambda: lik(False)),
        (f"mean only, {args.mc} pts", lambda: pred(True, False), lambda: pred(False, False)),
        (f"mean + var, {args.mc} pts", lambda: pred(True), lambda: pred(False)),
    ]
    print(f"n={args.n} d={args.d} draws={args.draws}")
    print(f"{'kernel':<28}{'numba s':>10}{'numpy s':>10}{'speedup':>10}")
    for name, fast, slow in rows:
        t_nb = best_of(fast, args.repeat)
        t_np = best_of(slow, args.repeat)
        print(f"{name:<28}{t_nb:10.3f}{t_np:10.3f}{t_np / t_nb:10.1f}")


if __name__ == "__main__":
    main()
