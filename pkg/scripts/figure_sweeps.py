"""Parameter sweeps behind the comparative-statics figures.

Writes one CSV per (parameter, quantity) with columns value,t,quantity and
prints the sign of the response at t = 0.

    python3 scripts/figure_sweeps.py --config configs/calibration.json --out-dir out/sweeps
"""

import argparse
from pathlib import Path

import numpy as np

from insurer_game.equilibrium import solve_equilibrium
from insurer_game.io import CsvSink, load_config, parse_config, with_parameter

# (parameter path, low, high, quantity)
SWEEPS = [
    ("game.lambda_hat", 0.2, 1.0, "a_star"),
    ("game.eta_hat", 0.15, 0.45, "a_star"),
    ("insurers[0].theta", 0.3, 0.9, "a_star"),
    ("insurers[1].theta", 0.3, 0.9, "a_star"),
    ("insurers[0].delta", 1.0, 4.0, "a_star"),
    ("insurers[1].delta", 1.0, 4.0, "a_star"),
    ("insurers[0].psi", 3.0, 9.0, "a_star"),
    ("insurers[1].psi", 3.0, 9.0, "a_star"),
    ("insurers[0].theta", 0.3, 0.9, "ell"),
    ("insurers[1].theta", 0.3, 0.9, "ell"),
    ("insurers[0].delta", 1.0, 4.0, "ell"),
    ("insurers[1].delta", 1.0, 4.0, "ell"),
    ("insurers[0].psi", 3.0, 9.0, "ell"),
    ("insurers[1].psi", 3.0, 9.0, "ell"),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawTextHelpFormatter)
    ap.add_argument("--config", default="configs/calibration.json")
    ap.add_argument("--out-dir", default="out/sweeps")
    ap.add_argument("--values", type=int, default=4)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--every", type=int, default=20, help="write every k-th grid time")
    args = ap.parse_args()

    base = load_config(args.config)
    out_dir = Path(args.out_dir)
    for fig, (param, lo, hi, qty) in enumerate(SWEEPS, start=1):
        at0 = []
        path = out_dir / f"fig{fig:02d}_{qty}_{param.replace('[', '').replace('].', '_')}.csv"
        with CsvSink(path, ["value", "t", "quantity"]) as out:
            for v in np.linspace(lo, hi, args.values):
                cfg = parse_config(with_parameter(base.raw, param, float(v)))
                prof = solve_equilibrium(cfg.game, cfg.market, steps=args.steps)
                traj = getattr(prof, qty)[prof.layout.type_index[0]]
                for k in range(0, prof.t_grid.size, args.every):
                    out.row(float(v), prof.t_grid[k], traj[k])
                at0.append(traj[0])
        trend = "increasing" if np.all(np.diff(at0) > 0) else (
            "decreasing" if np.all(np.diff(at0) < 0) else "mixed")
        print(f"fig {fig:2d}: {qty}_1(0) vs {param:18s} {trend:10s} "
              + " ".join(f"{x:.5f}" for x in at0))


if __name__ == "__main__":
    main()
