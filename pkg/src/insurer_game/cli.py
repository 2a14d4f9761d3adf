"""Command-line entry point: insurer-game <subcommand> --config cfg.json --out file.csv"""

from __future__ import annotations

import argparse
import json
import re
import sys
import warnings
from pathlib import Path

import numpy as np

from .equilibrium import RiccatiBank, solve_equilibrium
from .io import ConfigError, CsvSink, load_config, parse_config, with_parameter
from .mean_field import convergence_experiment, mean_field_solve
from .model import DomainError, validate_game
from .riccati import build_coefficients, existence_check, report_checks
from .simulation import SimulationConfig, estimate_objective, simulate

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _numerics(cfg, args):
    num = dict(cfg.numerics)
    for k in ("steps", "tol", "paths", "dt", "seed"):
        v = getattr(args, k, None)
        if v is not None:
            num[k] = v
    if num["steps"] < 1:
        raise UsageError("--steps must be >= 1")
    return num


def _out(args):
    if not args.out:
        raise UsageError("--out is required")
    return Path(args.out)


def _sink(args, path, header):
    return CsvSink(path, header, emit_json=args.emit_json)


# ---------------------------------------------------------------- subcommands


def cmd_check(args):
    cfg = load_config(args.config)
    num = _numerics(cfg, args)
    game, market = cfg.game, cfg.market
    report = validate_game(game, market)
    if market.feller_ok:
        seen = {}
        for i, u in enumerate(game.insurers):
            key = (u.delta, u.psi)
            if key not in seen:
                seen[key] = existence_check(
                    build_coefficients(u, market), u, market, game.horizon_T,
                    steps=min(num["steps"], 2000),
                )
            report.checks.extend(report_checks(seen[key], f"insurer[{i}]"))
    print(report.to_text())
    if args.out:
        Path(args.out).write_text(json.dumps(report.to_json_obj(), indent=2) + "\n")
    return EXIT_OK if report.passed else EXIT_DOMAIN


def cmd_riccati(args):
    cfg = load_config(args.config)
    num = _numerics(cfg, args)
    bank = RiccatiBank(cfg.market, cfg.game.horizon_T, num["steps"], force=args.force)
    with _sink(args, _out(args), ["t", "insurer_id", "v3", "upsilon3", "v2"]) as out:
        for i, u in enumerate(cfg.game.insurers):
            sol = bank.get(u)
            for k, t in enumerate(sol.t_grid):
                out.row(t, i, sol.v3[k], sol.ups3[k], sol.v2[k])
    return EXIT_OK


EQ_HEADER = ["t", "insurer_id", "ell", "ell_myopic", "ell_hedge", "ell_comp_myopic",
             "ell_comp_hedge", "a_star", "phi_coeff", "chi_coeff", "phi_tilde", "vartheta_self"]


def cmd_equilibrium(args):
    cfg = load_config(args.config)
    num = _numerics(cfg, args)
    prof = solve_equilibrium(cfg.game, cfg.market, num["steps"], num["tol"],
                             cfg.numerics["max_iter"], force=args.force)
    path = _out(args)
    d = prof.decomposition
    ti = prof.layout.type_index
    with _sink(args, path, EQ_HEADER) as out:
        for i in range(prof.n):
            j = ti[i]
            cols = (prof.ell[j], d.myopic[j], d.hedging[j], d.competition_myopic[j],
                    d.competition_hedging[j], prof.a_star[j],
                    prof.generators.phi_coeff[j], prof.generators.chi_coeff[j],
                    prof.generators.phi_tilde[j], prof.generators.vartheta_self[j])
            for k, t in enumerate(prof.t_grid):
                out.row(t, i, *(c[k] for c in cols))
    cross = path.with_name(path.stem + "_vartheta_cross" + path.suffix)
    with _sink(args, cross, ["t", "i", "k", "value"]) as out:
        for i in range(prof.n):
            for k in range(prof.n):
                if k == i:
                    continue
                vals = prof.vartheta_cross(i, k)
                for s, t in enumerate(prof.t_grid):
                    out.row(t, i, k, vals[s])
    return EXIT_OK


def cmd_meanfield(args):
    cfg = load_config(args.config)
    num = _numerics(cfg, args)
    g = cfg.game
    mf = mean_field_solve(cfg.distribution(), cfg.market, g.lambda_hat, g.eta_hat, g.horizon_T,
                          num["steps"], num["tol"], cfg.numerics["max_iter"], force=args.force)
    with _sink(args, _out(args), ["t", "atom_id", "ell", "a_star", "M1", "Omega_bar"]) as out:
        for j in range(len(mf.dist.atoms)):
            for k, t in enumerate(mf.t_grid):
                out.row(t, j, mf.ell[j, k], mf.a_star[j, k], mf.M1[k], mf.Omega_bar[k])
    return EXIT_OK


def _int_list(text, flag):
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"{flag} expects comma-separated integers") from exc
    if not vals:
        raise UsageError(f"{flag} is empty")
    return vals


def cmd_converge(args):
    cfg = load_config(args.config)
    num = _numerics(cfg, args)
    n_list = _int_list(args.n_list, "--n-list")
    seeds = _int_list(args.seeds, "--seeds")
    if min(n_list) < 1:
        raise UsageError("--n-list entries must be >= 1")
    g = cfg.game
    rows = convergence_experiment(cfg.distribution(), n_list, seeds, cfg.market, g.lambda_hat,
                                  g.eta_hat, g.horizon_T, num["steps"], num["tol"],
                                  force=args.force)
    with _sink(args, _out(args), ["n", "seed", "err_ell", "err_a"]) as out:
        for r in rows:
            out.row(r.n, r.seed, r.err_ell, r.err_a)
    return EXIT_OK


def cmd_simulate(args):
    cfg = load_config(args.config)
    num = _numerics(cfg, args)
    game, market = cfg.game, cfg.market
    worst = None
    if args.measure == "worst_case":
        worst = args.insurer
        if not 0 <= worst < game.n:
            raise UsageError(f"--insurer {worst} out of range for n={game.n}")
    sim_cfg = SimulationConfig(paths=num["paths"], dt=num["dt"], seed=num["seed"],
                               worst_case=worst)
    sim_cfg.steps_for(game.horizon_T)  # validate dt before the equilibrium solve
    path = _out(args)
    header = ["quantity", "estimate", "std_error"]
    if sim_cfg.paths == 0:
        with _sink(args, path, header):
            pass
        if args.dump_terminal:
            with _sink(args, Path(args.dump_terminal), ["path_id", "Y_T"]):
                pass
        return EXIT_OK
    prof = solve_equilibrium(game, market, num["steps"], num["tol"], cfg.numerics["max_iter"],
                             force=args.force)
    bundle = simulate(game, market, prof, sim_cfg)
    N = bundle.paths
    se = (lambda x: float(np.std(x, ddof=1) / np.sqrt(N))) if N > 1 else (lambda x: np.nan)
    with _sink(args, path, header) as out:
        out.row("Z_T_mean", float(bundle.Z_T.mean()), se(bundle.Z_T))
        out.row("penalty", float(bundle.penalty.mean()), se(bundle.penalty))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for i in range(game.n):
                est = estimate_objective(i, bundle)
                out.row(f"X_T_mean[{i}]", float(bundle.X_T[i].mean()), se(bundle.X_T[i]))
                out.row(f"Y_T_mean[{i}]", est.mean, est.mean_se)
                out.row(f"Y_T_var[{i}]", est.variance, est.variance_se)
                # the penalty belongs to the simulated measure, so J is only
                # reported for its owner (every insurer under the reference measure)
                if worst is None or worst == i:
                    out.row(f"J[{i}]", est.J, est.J_se)
    if args.dump_terminal:
        with _sink(args, Path(args.dump_terminal), ["path_id", "Y_T"]) as out:
            i = worst if worst is not None else args.insurer
            for p in range(N):
                out.row(p, bundle.Y_T[i, p])
    return EXIT_OK


_QUANTITY_RE = re.compile(r"^(a_star|ell)\[(\d+)\]$")


def cmd_sweep(args):
    cfg = load_config(args.config)
    num = _numerics(cfg, args)
    m = _QUANTITY_RE.match(args.quantity)
    if not m:
        raise UsageError("--quantity must look like a_star[j] or ell[j]")
    qname, j = m.group(1), int(m.group(2))
    if j >= cfg.game.n:
        raise UsageError(f"--quantity insurer {j} out of range")
    if args.param is None or args.from_ is None or args.to is None:
        raise UsageError("sweep needs --param, --from and --to")
    if args.sweep_steps < 2:
        raise UsageError("--sweep-steps must be >= 2")
    if args.from_ == args.to:
        raise UsageError("--from and --to must differ")
    with_parameter(cfg.raw, args.param, args.from_)  # validates the path up front
    values = np.linspace(args.from_, args.to, args.sweep_steps)
    failed = False
    with _sink(args, _out(args), ["value", "t", "quantity", "status"]) as out:
        for v in values:
            try:
                vc = parse_config(with_parameter(cfg.raw, args.param, float(v)))
                prof = solve_equilibrium(vc.game, vc.market, num["steps"], num["tol"],
                                         vc.numerics["max_iter"], force=args.force)
            except (DomainError, ConfigError) as exc:
                failed = True
                out.row(float(v), np.nan, np.nan, "error: " + str(exc).replace(",", ";"))
                continue
            traj = prof.of(qname, j)
            if args.at_time is None:
                for k, t in enumerate(prof.t_grid):
                    out.row(float(v), t, traj[k], "ok")
            else:
                t = min(max(args.at_time, 0.0), prof.T)
                k = int(np.searchsorted(prof.t_grid, t, side="right") - 1)
                k = min(max(k, 0), prof.t_grid.size - 1)
                out.row(float(v), prof.t_grid[k], traj[k], "ok")
    return EXIT_DOMAIN if failed else EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="insurer-game", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required=True):
        sp.add_argument("--config", required=True)
        sp.add_argument("--out", required=out_required, default=None)
        sp.add_argument("--steps", type=int)
        sp.add_argument("--tol", type=float)
        sp.add_argument("--force", action="store_true",
                        help="proceed past soft condition failures (never Feller or n = sum theta)")
        sp.add_argument("--emit-json", action="store_true",
                        help="also write each CSV as a JSON array of row objects")
        return sp

    sp = common(sub.add_parser("check", help="validity checks"), out_required=False)
    sp.set_defaults(func=cmd_check)
    common(sub.add_parser("riccati", help="per-insurer Riccati solution")).set_defaults(
        func=cmd_riccati)
    common(sub.add_parser("equilibrium", help="n-insurer equilibrium")).set_defaults(
        func=cmd_equilibrium)
    common(sub.add_parser("meanfield", help="mean-field equilibrium over weighted atoms")
           ).set_defaults(func=cmd_meanfield)

    sp = common(sub.add_parser("converge", help="n-insurer vs mean-field gap"))
    sp.add_argument("--n-list", default="4,16,64,256")
    sp.add_argument("--seeds", default="0,1,2,3,4,5,6,7")
    sp.set_defaults(func=cmd_converge)

    sp = common(sub.add_parser("simulate", help="Monte Carlo of the equilibrium"))
    sp.add_argument("--paths", type=int)
    sp.add_argument("--dt", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--measure", choices=("reference", "worst_case"), default="reference")
    sp.add_argument("--insurer", type=int, default=0)
    sp.add_argument("--dump-terminal", metavar="PATH")
    sp.set_defaults(func=cmd_simulate)

    sp = common(sub.add_parser("sweep", help="parameter sweep of a strategy coefficient"))
    sp.add_argument("--param", help="e.g. insurers[0].theta, game.lambda_hat")
    sp.add_argument("--from", dest="from_", type=float)
    sp.add_argument("--to", type=float)
    sp.add_argument("--sweep-steps", type=int, default=5)
    sp.add_argument("--at-time", type=float, help="omit for full trajectories")
    sp.add_argument("--quantity", default="a_star[0]")
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
