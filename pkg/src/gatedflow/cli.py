"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 I/O failure, 4 numerical
abort. The default output root comes from GATEDFLOW_OUT (falling back to
./results).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import experiments as exp
from .model import NumericalBlowup
from .presets import PRESETS
from .record import FLOAT_FMT
from .runio import (
    DEFAULT_OUT_ENV,
    ConfigError,
    RunConfig,
    parse_config,
    parse_set_flags,
    report_directory,
    write_grid_csv,
    write_manifest,
    write_matrix_csv,
    write_run_outputs,
)

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4


def _out_dir(cfg_out: str | None, default_name: str) -> Path:
    root = os.environ.get(DEFAULT_OUT_ENV, "results")
    return Path(cfg_out) if cfg_out else Path(root) / default_name


def _common_flags(p: argparse.ArgumentParser, with_regime: bool = True):
    p.add_argument("--config", help="INI config file ([run] and [overrides] sections)")
    p.add_argument("--preset", help="named preset (see --list-presets)")
    p.add_argument("--seed", type=int)
    p.add_argument("--seeds", type=int, help="number of seeds (seed, seed+1, ...)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--stride", type=int, help="log every N steps")
    p.add_argument("--mode", choices=["sampled", "expectation"])
    if with_regime:
        p.add_argument("--regime", choices=["flexible", "forgetful"])
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   dest="overrides", help="override a preset field")
    p.add_argument("--workers", type=int)


def _load_config(args, default_preset: str | None = None) -> RunConfig:
    flags = {
        k: getattr(args, k, None)
        for k in ("preset", "seed", "seeds", "out", "stride", "mode", "workers")
    }
    if getattr(args, "regime", None) is not None:
        flags["regime"] = args.regime
    if flags.get("preset") is None and default_preset is not None and args.config is None:
        flags["preset"] = default_preset
    return parse_config(args.config, flags, parse_set_flags(args.overrides))


def _seed_list(cfg: RunConfig) -> list[int]:
    if cfg.seeds is None:
        return [cfg.seed]
    return list(range(cfg.seed, cfg.seed + cfg.seeds))


def cmd_run(args) -> int:
    cfg = _load_config(args, default_preset="main")
    out = _out_dir(cfg.out, cfg.preset)
    seeds = _seed_list(cfg)
    t0 = time.time()
    for seed in seeds:
        rec = exp.run_curriculum(cfg.resolved_preset(), seed, regime=cfg.regime,
                                 expectation=cfg.mode == "expectation",
                                 stride=cfg.stride, on_blowup="raise")
        write_run_outputs(out, seed, rec)
    write_manifest(out, cfg, seeds, time.time() - t0)
    # teacher matrices for cross-checking
    from .curriculum import make_teachers, seed_streams
    params = cfg.resolved_preset().effective()
    teachers = make_teachers(params.M, params.d_in, params.d_out,
                             rng=seed_streams(seeds[0])["teachers"],
                             orthogonality=params.orthogonality)
    for m in range(teachers.M):
        write_matrix_csv(out / f"teacher_{m}_seed{seeds[0]}.csv", teachers[m])
    print(f"wrote {len(seeds)} run(s) to {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_config(args, default_preset="sweep-lr-block")
    axis = "lambda" if "reg" in cfg.preset else "ratio"
    out = _out_dir(cfg.out, cfg.preset)
    t0 = time.time()
    grid = exp.grid_sweep(
        cfg.resolved_preset(), axis=axis,
        n_points=(args.grid_points, args.grid_points),
        seeds=cfg.seeds or 3,
        total_time=args.total_time,
        workers=cfg.workers,
    )
    write_grid_csv(out, grid)
    write_manifest(out, cfg, list(range(cfg.seeds or 3)), time.time() - t0,
                   extra={"grid_meta": grid.meta, "failures": grid.failures})
    print(f"wrote grid to {out} (mean alignment {np.nanmean(grid.mean()):.3f})")
    return EXIT_OK


def cmd_reduced(args) -> int:
    cfg = _load_config(args, default_preset="reduced")
    out = _out_dir(cfg.out, "reduced")
    preset = cfg.resolved_preset()
    from .reduced import ReducedState, run_reduced
    state = ReducedState.specialized(tau_w=preset.tau_w, tau_c=preset.tau_c)
    targets = [np.eye(2)[b % 2] for b in range(preset.n_blocks)]
    t0 = time.time()
    traj = run_reduced(state, targets, preset.tau_B, preset.dt,
                       reg=preset.effective().reg, stride=cfg.stride or 1)
    traj.to_csv(out / "reduced_trajectory.csv")
    write_manifest(out, cfg, [cfg.seed], time.time() - t0,
                   extra={"final_loss": float(traj.loss[-1])})
    print(f"wrote reduced trajectory to {out}")
    return EXIT_OK


def cmd_exact_check(args) -> int:
    cfg = _load_config(args, default_preset="reduced")
    out = _out_dir(cfg.out, "exact-check")
    t0 = time.time()
    results = exp.exact_solution_check()
    rows = []
    for r in results:
        r["trajectory"].to_csv(out / f"trajectory_tau_c_{r['tau_c']:g}.csv")
        rows.append({k: v for k, v in r.items() if k != "trajectory"})
    (out / "exact_check.json").write_text(json.dumps(rows, indent=2))
    write_manifest(out, cfg, [0], time.time() - t0)
    for r in rows:
        print(f"tau_c={r['tau_c']:<5g} sup|wbar-exact|={r['sup_dev']:.5f} "
              f"final_loss={r['final_loss']:.4g} reached<1e-2={r['reached_1e2']}")
    return EXIT_OK


def cmd_deep(args) -> int:
    cfg = _load_config(args, default_preset="fc")
    out = _out_dir(cfg.out, "fc")
    seeds = _seed_list(cfg)
    t0 = time.time()
    for seed in seeds:
        res = exp.fc_run(seed, regime=cfg.regime, preset=cfg.resolved_preset(),
                         stride=cfg.stride)
        data = np.column_stack([res.t, res.block, res.loss_task, res.g1_norm,
                                res.g2_norm, res.emergent_gates, res.sorted_alignment])
        header = ("t,block,loss_task,dw1_norm,dw2_norm,"
                  + ",".join(f"gate_{m+1}" for m in range(res.emergent_gates.shape[1]))
                  + ",sorted_alignment")
        np.savetxt(out / f"fc_run_{seed}.csv", data, delimiter=",", fmt=FLOAT_FMT,
                   header=header, comments="")
        for snap in res.final_state["w2_snapshots"][-2:]:
            write_matrix_csv(out / f"w2_sorted_seed{seed}_block{snap['block']}.csv",
                             snap["W2_sorted"])
            write_matrix_csv(out / f"w2_unsorted_seed{seed}_block{snap['block']}.csv",
                             snap["W2"])
        (out / f"summary_{seed}.json").write_text(
            json.dumps(res.summary, indent=2, default=float))
    write_manifest(out, cfg, seeds, time.time() - t0)
    print(f"wrote {len(seeds)} fully-connected run(s) to {out}")
    return EXIT_OK


def cmd_generalize(args) -> int:
    cfg = _load_config(args, default_preset=f"{args.gen_mode}-composition")
    out = _out_dir(cfg.out, f"generalize-{args.gen_mode}")
    seeds = _seed_list(cfg)
    t0 = time.time()
    for seed in seeds:
        rec = exp.generalization_run(args.gen_mode, cfg.regime, seed,
                                     preset=cfg.resolved_preset(), stride=cfg.stride)
        write_run_outputs(out, seed, rec)
    write_manifest(out, cfg, seeds, time.time() - t0,
                   extra={"mode": args.gen_mode})
    print(f"wrote {len(seeds)} generalization run(s) to {out}")
    return EXIT_OK


def cmd_repr_cost(args) -> int:
    cfg = _load_config(args, default_preset="repr-cost")
    out = _out_dir(cfg.out, "repr-cost")
    seeds = _seed_list(cfg)
    t0 = time.time()
    for seed in seeds:
        rec = exp.repr_cost_run(seed, lambda_w=args.lambda_w)
        write_run_outputs(out, seed, rec)
    write_manifest(out, cfg, seeds, time.time() - t0,
                   extra={"lambda_w": args.lambda_w})
    print(f"wrote {len(seeds)} run(s) to {out}")
    return EXIT_OK


def cmd_blocklen(args) -> int:
    cfg = _load_config(args, default_preset="blocklen")
    out = _out_dir(cfg.out, "blocklen")
    t0 = time.time()
    res = exp.blocklen_ratio()
    out.mkdir(parents=True, exist_ok=True)
    (out / "blocklen.json").write_text(json.dumps(res, indent=2, default=float))
    write_manifest(out, cfg, [0], time.time() - t0)
    print(json.dumps(res, indent=2, default=float))
    return EXIT_OK


def cmd_fewshot(args) -> int:
    cfg = _load_config(args, default_preset="fewshot")
    out = _out_dir(cfg.out, "fewshot")
    t0 = time.time()
    res = exp.fewshot_run(n_seeds=cfg.seeds or 100)
    out.mkdir(parents=True, exist_ok=True)
    np.savetxt(out / "end_block_loss.csv", res["end_loss_all"], delimiter=",",
               fmt=FLOAT_FMT,
               header=",".join(f"block_{b+1}" for b in range(res["end_loss_all"].shape[1])),
               comments="")
    write_manifest(out, cfg, list(range(cfg.seeds or 100)), time.time() - t0,
                   extra={"late_over_first_switch": res["late_over_first_switch"]})
    print(f"late/first post-switch end loss: {res['late_over_first_switch']:.3f}")
    return EXIT_OK


def cmd_rank_speed(args) -> int:
    cfg = _load_config(args, default_preset="rank-speed")
    out = _out_dir(cfg.out, "rank-speed")
    t0 = time.time()
    res = exp.rank_speed_curve()
    out.mkdir(parents=True, exist_ok=True)
    np.savetxt(out / "rank_speed.csv",
               np.column_stack([res["ranks"], res["values"]]),
               delimiter=",", fmt=FLOAT_FMT, header="rank,gate_update", comments="")
    write_manifest(out, cfg, [0], time.time() - t0,
                   extra={"r_squared": res["r_squared"], "slope": res["slope"]})
    print(f"linear fit R^2 = {res['r_squared']:.5f}")
    return EXIT_OK


def cmd_full_vs_reduced(args) -> int:
    cfg = _load_config(args, default_preset="full-vs-reduced")
    out = _out_dir(cfg.out, "full-vs-reduced")
    t0 = time.time()
    rec, traj, report = exp.full_vs_reduced(cfg.seed, stride=cfg.stride)
    write_run_outputs(out, cfg.seed, rec)
    traj.to_csv(out / "reduced_trajectory.csv")
    (out / "discrepancy.json").write_text(json.dumps(report, indent=2))
    write_manifest(out, cfg, [cfg.seed], time.time() - t0, extra=report)
    print(json.dumps(report, indent=2))
    return EXIT_OK


def cmd_report(args) -> int:
    print(json.dumps(report_directory(args.dir), indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gatedflow",
        description="Simulate gated linear students on blocked task curricula.",
    )
    parser.add_argument("--list-presets", action="store_true",
                        help="list preset names and exit")
    sub = parser.add_subparsers(dest="command")

    commands = {
        "run": (cmd_run, "integrate a preset curriculum"),
        "sweep": (cmd_sweep, "hyperparameter grid, final total alignment per cell"),
        "reduced": (cmd_reduced, "integrate the reduced two-dimensional model"),
        "exact-check": (cmd_exact_check, "reduced trajectories vs the exact curve"),
        "deep": (cmd_deep, "two-layer fully-connected run"),
        "generalize": (cmd_generalize, "composition generalization run"),
        "repr-cost": (cmd_repr_cost, "redundant-path run with weight cost"),
        "blocklen": (cmd_blocklen, "block-length scaling of specialization"),
        "fewshot": (cmd_fewshot, "single-sample adaptation runs"),
        "rank-speed": (cmd_rank_speed, "gate-update magnitude vs teacher rank"),
        "full-vs-reduced": (cmd_full_vs_reduced, "side-by-side model comparison"),
    }
    for name, (fn, help_text) in commands.items():
        p = sub.add_parser(name, help=help_text)
        _common_flags(p)
        p.set_defaults(fn=fn)
        if name == "sweep":
            p.add_argument("--grid-points", type=int, default=8)
            p.add_argument("--total-time", type=float, default=25.0)
        if name == "generalize":
            p.add_argument("--gen-mode", choices=["task", "subtask"], default="task",
                           dest="gen_mode")
        if name == "repr-cost":
            p.add_argument("--lambda-w", type=float, default=None, dest="lambda_w")

    p = sub.add_parser("report", help="print JSON summary of a results directory")
    p.add_argument("dir")
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.list_presets:
        for name in sorted(PRESETS):
            print(f"{name}: {PRESETS[name].notes}")
        return EXIT_OK
    if not getattr(args, "command", None):
        parser.print_help()
        return EXIT_CONFIG
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalBlowup as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
