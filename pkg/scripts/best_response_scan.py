"""Objective surface of one insurer over constant deviations from the equilibrium.

Each cell is simulated under the worst-case measure induced by the deviated
strategy, with common random numbers across cells.

    python3 scripts/best_response_scan.py --paths 20000
"""

import argparse
import math

import numpy as np

from insurer_game.equilibrium import solve_equilibrium
from insurer_game.io import load_config
from insurer_game.simulation import SimulationConfig, best_response_scan


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawTextHelpFormatter)
    ap.add_argument("--config", default="configs/calibration.json")
    ap.add_argument("--insurer", type=int, default=0)
    ap.add_argument("--paths", type=int, default=20_000)
    ap.add_argument("--dt", type=float, default=None)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--width", type=float, default=0.1)
    ap.add_argument("--cells", type=int, default=5)
    args = ap.parse_args()

    cfg = load_config(args.config)
    prof = solve_equilibrium(cfg.game, cfg.market)
    offs = np.linspace(-args.width, args.width, args.cells)
    scan = best_response_scan(args.insurer, prof, offs, offs,
                              SimulationConfig(paths=args.paths, dt=args.dt, seed=args.seed))
    J, se = scan.J(), scan.J_se()
    c = args.cells // 2
    print("J surface (rows: d_ell, columns: d_a)")
    print("        " + "".join(f"{d:+9.3f} " for d in offs) + "  (* clamped)")
    for r, d in enumerate(offs):
        flags = ["*" if scan.clamped[r, k] else " " for k in range(len(offs))]
        print(f"{d:+7.3f} " + "".join(f"{J[r, k]:9.5f}{flags[k]}" for k in range(len(offs))))
    best = np.unravel_index(np.argmax(J), J.shape)
    print(f"centre J = {J[c, c]:.5f} +- {se[c, c]:.5f}")
    print(f"max J    = {J[best]:.5f} at (d_ell, d_a) = ({offs[best[0]]:+.3f}, {offs[best[1]]:+.3f})")
    print(f"gap {J[best] - J[c, c]:.2e}, combined SE {math.hypot(se[c, c], se[best]):.2e}, "
          f"paired SE {scan.paired_se(best, (c, c)):.2e}")


if __name__ == "__main__":
    main()
