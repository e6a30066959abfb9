"""Time the numba loop kernels against their numpy counterparts.

    python3 benchmarks/bench_kernels.py [--repeat N]

Both variants are always importable, so one process measures both; the
first numba call per signature (compilation) is excluded.
"""

import argparse
import timeit

import numpy as np

from labelcorr import kernels


def _inputs(rng, n=4096, c=10):
    z = 4 * rng.standard_normal((n, c))
    probs = np.exp(z - z.max(axis=1, keepdims=True))
    probs /= probs.sum(axis=1, keepdims=True)
    labels = rng.integers(0, c, n)
    T = rng.dirichlet(np.ones(c), size=c).T + 4 * np.eye(c)
    T /= T.sum(axis=0)
    return probs, labels, T, np.linalg.inv(T)


def cases(rng):
    probs, labels, T, Tinv = _inputs(rng)
    c = T.shape[0]
    out = {}
    for kind, name in ((kernels.LOSS_FORWARD, "forward loss"), (kernels.LOSS_SKEPTICAL, "skeptical loss"),
                       (kernels.LOSS_BACKWARD, "backward loss")):
        out[name] = (
            lambda f, k=kind: f(k, probs, labels, T, Tinv, 0.63),
            kernels.loss_logit_grad_loop,
            kernels.loss_logit_grad_numpy,
        )
    out["transition sweep"] = (
        lambda f: f(np.eye(c), probs, labels, 0.9999, 0.1),
        kernels.transition_sweep_loop,
        kernels.transition_sweep_numpy,
    )
    out["top2"] = (lambda f: f(probs), kernels.top2_loop, kernels.top2_numpy)
    out["pair counts"] = (
        lambda f: f(labels, rng.integers(0, c, labels.size), c),
        kernels.pair_counts_loop,
        kernels.pair_counts_numpy,
    )
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':<18}{'numba us':>12}{'numpy us':>12}{'speedup':>10}")
    for name, (call, loop, vec) in cases(rng).items():
        call(loop)  # compile
        t_loop = min(timeit.repeat(lambda: call(loop), number=args.repeat, repeat=3)) / args.repeat
        t_vec = min(timeit.repeat(lambda: call(vec), number=args.repeat, repeat=3)) / args.repeat
        print(f"{name:<18}{1e6 * t_loop:>12.1f}{1e6 * t_vec:>12.1f}{t_vec / t_loop:>9.1f}x")


if __name__ == "__main__":
    main()
