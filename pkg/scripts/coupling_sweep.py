#!/usr/bin/env python3
"""Sweep the equicorrelation strength and compare Monte Carlo separation
against the closed-form prediction 2(1-c)||J||_F^2.

Emits CSV to stdout: c,k,metric,estimate,stderr,prediction
"""

import argparse

import numpy as np

from noisecouple.analysis import LinearFeatureMap, local_linear_prediction, pairwise_separation
from noisecouple.core import CouplingSpec, feasible_interval
from noisecouple.samplers import RandomStream, sample_many


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--k", type=int, default=3)
    parser.add_argument("--dim", type=int, default=16)
    parser.add_argument("--m", type=int, default=3, help="feature dimension")
    parser.add_argument("--n", type=int, default=20_000, help="galleries per grid point")
    parser.add_argument("--points", type=int, default=5, help="grid points from 0 to the boundary")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--feature-seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.feature_seed)
    fmap = LinearFeatureMap(rng.standard_normal((args.m, args.dim)))
    lo, _ = feasible_interval(args.k)
    grid = [lo * i / (args.points - 1) for i in range(args.points)]

    print("c,k,metric,estimate,stderr,prediction")
    for idx, c in enumerate(grid):
        spec = CouplingSpec.equicorrelated(args.k, args.dim, c)
        batches = sample_many(spec, RandomStream(args.seed, idx * args.n), args.n)
        est = pairwise_separation(batches, fmap)
        predicted = local_linear_prediction(args.k, c, fmap)
        print(f"{c},{args.k},separation,{est.estimate},{est.stderr},{predicted}")


if __name__ == "__main__":
    main()
