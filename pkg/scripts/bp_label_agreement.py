#!/usr/bin/env python3
"""How often do sum-product argmax labels on a 3x3 grid agree with the exact
marginal labels and with the exact MAP (max-marginal) labels, as the pairwise
coupling strengthens?"""

import argparse

import numpy as np

from facestyle.mrf import brute_force_marginals, run_bp


def grid_edges(rows, cols):
    ids = np.arange(rows * cols).reshape(rows, cols)
    return np.vstack([np.c_[ids[:, :-1].ravel(), ids[:, 1:].ravel()],
                      np.c_[ids[:-1].ravel(), ids[1:].ravel()]])


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--unaries", choices=["uniform", "dterm"], default="uniform",
                    help="uniform on [0,1], or exp(-D^2/0.5) with D uniform on [0,1.8]")
    args = ap.parse_args()
    edges = grid_edges(3, 3)
    print(f"{'psi_low':>8s} {'marginal':>9s} {'map':>5s} {'max_err':>9s}")
    for low in (0.99, 0.9, 0.7, 0.5, 0.2):
        rng = np.random.default_rng(args.seed)
        agree = agree_map = 0
        err = 0.0
        for _ in range(args.trials):
            if args.unaries == "uniform":
                phi = rng.uniform(0, 1, (9, 3)) + 1e-12
            else:
                d = rng.uniform(0, 1.8, (9, 3))
                phi = np.exp(-d * d / 0.5)
            psi = rng.uniform(low, 1.0, (len(edges), 3, 3))
            b = run_bp(edges, phi, psi, n_iters=200, tol=1e-9).beliefs
            exact = brute_force_marginals(9, edges, phi, psi)
            mx = brute_force_marginals(9, edges, phi, psi, mode="max")
            agree += np.all(b.argmax(1) == exact.argmax(1))
            agree_map += np.all(b.argmax(1) == mx.argmax(1))
            err = max(err, float(np.abs(b - exact).max()))
        print(f"{low:8.2f} {agree:9d} {agree_map:5d} {err:9.1e}")


if __name__ == "__main__":
    main()
