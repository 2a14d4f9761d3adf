"""Finite-n equilibria sampled from a type distribution against the mean-field limit.

    python3 scripts/convergence.py --config configs/two_point.json
"""

import argparse

import numpy as np

from insurer_game.io import load_config
from insurer_game.mean_field import convergence_experiment, seed_averaged


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawTextHelpFormatter)
    ap.add_argument("--config", default="configs/two_point.json")
    ap.add_argument("--n-list", default="4,16,64,256,1024")
    ap.add_argument("--seeds", type=int, default=8)
    ap.add_argument("--steps", type=int, default=10_000)
    args = ap.parse_args()

    cfg = load_config(args.config)
    g = cfg.game
    ns = [int(x) for x in args.n_list.split(",")]
    rows = convergence_experiment(cfg.distribution(), ns, range(args.seeds), cfg.market,
                                  g.lambda_hat, g.eta_hat, g.horizon_T, args.steps)
    avg = seed_averaged(rows)
    print(f"{'n':>6} {'err_ell':>10} {'err_a':>10} {'err':>10} {'n*err':>8}")
    for n in ns:
        e_ell, e_a, e = avg[n]
        print(f"{n:6d} {e_ell:10.5f} {e_a:10.5f} {e:10.5f} {n * e:8.3f}")
    logs = np.log([avg[n][2] for n in ns])
    slope = np.polyfit(np.log(ns), logs, 1)[0]
    print(f"log-log slope of the seed-averaged error: {slope:.3f}")


if __name__ == "__main__":
    main()
