"""BP against brute-force enumeration for each (nodes, regions) size.

    python scripts/oracle_sweep.py --trials 200
"""
import argparse
import json

import numpy as np

from jvgn.checks import random_factor_graph
from jvgn.inference import propagate, run_belief_propagation, sweep
from jvgn.oracle import brute_force_marginals


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--max-nodes", type=int, default=6)
    p.add_argument("--max-regions", type=int, default=8)
    p.add_argument("--scale", type=float, default=2.0, help="spread of the random log-potentials")
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    rng = np.random.default_rng(args.seed)
    rows = []
    for m in range(1, args.max_nodes + 1):
        for n in range(2, args.max_regions + 1):
            err = change = 0.0
            for _ in range(args.trials):
                fg = random_factor_graph(rng, m, n, args.scale)
                err = max(err, float(np.max(np.abs(run_belief_propagation(fg).marginals
                                                   - brute_force_marginals(fg)))))
                change = max(change, sweep(fg, propagate(fg).messages)[1])
            rows.append({"nodes": m, "regions": n, "max_marginal_error": err, "max_sweep_change": change})
            print(f"M={m} N={n}  max err {err:.2e}  sweep change {change:.2e}")
    print(json.dumps(rows))


if __name__ == "__main__":
    main()
