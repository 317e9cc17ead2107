#!/usr/bin/env python3
"""Learn a coupling matrix against the average pairwise-distance objective
with a linear generator and report how close the learned sample correlation
comes to the repulsive one (off-diagonals -1/(k-1))."""

import argparse

import numpy as np

from noisecouple.generators import make_linear, objective_pairwise_l2
from noisecouple.optimize import AmortizedConfig, optimize_coupling, write_trajectory


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--k", type=int, default=4)
    parser.add_argument("--dim", type=int, default=8)
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    parser.add_argument("--init", choices=["identity_rows", "random_rows"], default="identity_rows")
    parser.add_argument("--steps", type=int, default=500)
    parser.add_argument("--step-size", type=float, default=0.01)
    parser.add_argument("--mc-batch", type=int, default=4096)
    parser.add_argument("--trajectory-out", help="optional JSONL path (last seed only)")
    args = parser.parse_args()

    gen = make_linear(np.eye(args.dim))
    target = -1.0 / (args.k - 1)
    for seed in args.seeds:
        cfg = AmortizedConfig(
            k=args.k, r=args.k, objective=objective_pairwise_l2(args.k), generator=gen,
            d=args.dim, seed=seed, init=args.init, steps=args.steps,
            step_size=args.step_size, mc_batch=args.mc_batch,
        )
        trajectory = optimize_coupling(cfg)
        A = trajectory[-1].matrix.entries
        C = A @ A.T
        off = C[~np.eye(args.k, dtype=bool)]
        print(f"seed {seed} ({args.init}): objective {trajectory[-1].objective_estimate:.4f}")
        print(np.array_str(C, precision=3, suppress_small=True))
        print(f"  max |offdiag - ({target:.4f})| = {np.max(np.abs(off - target)):.4f}\n")
        if args.trajectory_out and seed == args.seeds[-1]:
            write_trajectory(trajectory, args.trajectory_out)
            print(f"trajectory written to {args.trajectory_out}")


if __name__ == "__main__":
    main()
