"""Command-line entry point: trajgen, evolve, simulate, analyze.

Every command is deterministic given its inputs and --seed; evolve writes
resumable per-generation checkpoints.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .agents import ControllerLibrary, GenomeError, default_library, dyad_from_dict
from .analysis import run_analysis
from .config import ConfigError, RunConfig
from .evolution import EvolutionError, HallOfFame, run_evolution
from .simulator import InitSpec, SimulationError, simulate_trial
from .trajectory import TrajectoryError, load_library, make_library, save_library


class CliError(Exception):
    """User-facing command failure; message printed, nonzero exit."""


def _load_config(args) -> RunConfig:
    config = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        config = RunConfig.from_dict({**config.to_dict(), "seed": args.seed})
    config.validate()
    return config


def cmd_trajgen(args) -> int:
    config = _load_config(args)
    tcfg = config.trajectory_config()
    library, heldout = make_library(config.seed, tcfg, config.trajectory_count)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_library(out, library, heldout=heldout, config=tcfg)
    print(f"wrote {len(library)} trajectories (+1 held out) to {out}")
    return 0


def cmd_evolve(args) -> int:
    config = _load_config(args)
    out_dir = Path(args.out) if args.out else (Path(config.out_dir) if config.out_dir else None)
    if out_dir is None:
        raise CliError("evolve needs --out (or out_dir in the config)")

    def progress(stat):
        print(
            f"gen {stat.generation:4d}  traj {stat.trajectory_id}  "
            f"front0 {stat.front0_size:4d}  hof {stat.hof_size:5d}",
            flush=True,
        )

    result = run_evolution(
        config,
        seed=config.seed,
        out_dir=out_dir,
        threads=args.threads,
        progress=progress,
        resume=args.resume,
    )
    print(f"archive size {len(result.hall_of_fame)}; checkpoints in {out_dir}")
    return 0


def _load_dyad(args, library: ControllerLibrary):
    doc = json.loads(Path(args.dyad).read_text())
    if "entries" in doc:
        entries = doc["entries"]
        if not entries:
            raise CliError("archive holds no dyads")
        if not 0 <= args.index < len(entries):
            raise CliError(f"--index {args.index} out of range (archive has {len(entries)})")
        return dyad_from_dict(entries[args.index]["dyad"], library)
    return dyad_from_dict(doc, library)


def cmd_simulate(args) -> int:
    config = _load_config(args)
    library_doc = None
    if args.dyad:
        doc = json.loads(Path(args.dyad).read_text())
        library_doc = doc.get("library")
    ctrl_library = (
        ControllerLibrary.from_dict(library_doc) if library_doc else default_library(config.f_opt)
    )
    trajectories, heldout = load_library(args.trajectories)
    pool = {t.id: t for t in trajectories}
    if heldout is not None:
        pool[heldout.id] = heldout
    if args.traj_id not in pool:
        raise CliError(f"trajectory id {args.traj_id!r} not in {sorted(pool)}")
    dyad = _load_dyad(args, ctrl_library)
    params = config.egg_params()
    rec = simulate_trial(dyad, pool[args.traj_id], params, config.dt, init=InitSpec.resting(params))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    rec.to_csv(out)
    swaps = int(abs(rec.role1[1:] - rec.role1[:-1]).sum() + abs(rec.role2[1:] - rec.role2[:-1]).sum())
    print(f"wrote {len(rec)} steps to {out} (valid={rec.valid}, role swaps={swaps})")
    return 0


def cmd_analyze(args) -> int:
    doc = json.loads(Path(args.hof).read_text())
    for key in ("config", "seed", "library", "entries"):
        if key not in doc:
            raise CliError(f"archive file is missing {key!r}")
    config = RunConfig.from_dict(doc["config"])
    library = ControllerLibrary.from_dict(doc["library"])
    hof = HallOfFame.from_dict(doc, library)
    _, heldout = make_library(doc["seed"], config.trajectory_config(), config.trajectory_count)
    result = run_analysis(
        hof,
        heldout,
        config.egg_params(),
        config.dt,
        config.stabilization_slope,
        seed=doc["seed"],
        out_dir=args.out,
        threads=args.threads,
        histogram_bins=config.histogram_bins,
    )
    if not result.filtered:
        print("warning: no dyads survive the tracking/stabilization filter", file=sys.stderr)
    print(
        f"{len(result.rows)} archived dyads, {len(result.filtered)} after filtering; "
        f"outputs in {args.out}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dyadevo",
        description="Dyadic cooperative tracking: evolve and analyze role-switching policies.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("trajgen", help="generate the trajectory library as JSON")
    p.add_argument("--config", help="run config JSON")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", required=True, help="output library JSON path")
    p.set_defaults(func=cmd_trajgen)

    p = sub.add_parser("evolve", help="run the evolutionary engine")
    p.add_argument("--config", help="run config JSON")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", help="checkpoint directory")
    p.add_argument("--threads", type=int, default=1, help="trial evaluation workers")
    p.add_argument("--resume", action="store_true", help="continue from the latest checkpoint")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("simulate", help="run one dyad on one trajectory, write trial CSV")
    p.add_argument("--dyad", required=True, help="dyad JSON or hof.json")
    p.add_argument("--index", type=int, default=0, help="entry index when --dyad is an archive")
    p.add_argument("--trajectories", required=True, help="trajgen library JSON")
    p.add_argument("--traj-id", required=True, help="trajectory id to run")
    p.add_argument("--config", help="run config JSON (egg parameters, dt)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="compute cooperation metrics over an archive")
    p.add_argument("--hof", required=True, help="hof.json from evolve")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--threads", type=int, default=1, help="re-simulation workers")
    p.set_defaults(func=cmd_analyze)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (
        CliError,
        ConfigError,
        EvolutionError,
        GenomeError,
        SimulationError,
        TrajectoryError,
        FileNotFoundError,
        KeyError,
        json.JSONDecodeError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
