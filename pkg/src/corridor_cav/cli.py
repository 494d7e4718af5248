"""Command-line entry point.

Subcommands::

    run          simulate one mode (optimized or baseline)
    compare      simulate both modes and write the comparison
    validate     parse and validate a scenario
    emit-preset  print or save a built-in scenario

Exit status: 0 on success, 1 when the collision audit found violations,
2 on scenario or I/O errors.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import sys
from pathlib import Path

from .errors import DomainError, ScenarioError
from .metrics import KEYS, compare, fleet_metrics
from .scenario_io import (
    PRESETS,
    default_out_dir,
    emit_plot_data,
    fmt,
    load_scenario,
    write_json,
    write_schedule_table,
    write_trajectory_table,
)
from .sim import SimResult, run_baseline, run_optimized

EXIT_OK, EXIT_VIOLATION, EXIT_ERROR = 0, 1, 2


def collide_merge_times(schedule: dict[int, dict[int, float]]) -> dict[int, dict[int, float]]:
    """Test hook: give the first two vehicles sharing a zone the same merge time.

    The later vehicle's other zone times move by the same amount, so the
    corrupted plan stays solvable while breaking the scheduler's spacing.
    """
    out = {vid: dict(t) for vid, t in schedule.items()}
    ids = sorted(out)
    for a_pos, a in enumerate(ids):
        for b in ids[a_pos + 1:]:
            common = sorted(set(out[a]) & set(out[b]))
            if not common:
                continue
            z = common[0]
            ta, tb = out[a][z], out[b][z]
            if ta == tb:
                continue
            shift = ta - tb
            if min(out[b].values()) + shift - 0.5 <= 0:
                continue
            out[b] = {k: t + shift for k, t in out[b].items()}
            return out
    return out


HOOKS = {"collide-merge-times": collide_merge_times}


def _run_mode(mode: str, scenario, schedule_hook=None) -> SimResult:
    if mode == "optimized":
        return run_optimized(scenario, schedule_hook=schedule_hook)
    if mode == "baseline":
        return run_baseline(scenario)
    raise ValueError(f"unknown mode {mode!r}")


def _write_mode(res: SimResult, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory_table(res, out / "trajectories.csv")
    write_schedule_table(res, out / "schedule.csv")
    audit = res.audit.to_dict()
    audit["issues"] = list(res.issues)
    write_json(audit, out / "audit.json")
    fm = fleet_metrics(res, res.scenario.fuel)
    write_json({"vehicles": {str(vid): m.as_dict() for vid, m in sorted(fm.items())}},
               out / "metrics.json")
    emit_plot_data(res, out / "plot")


def _write_comparison(opt: SimResult, base: SimResult, out: Path) -> None:
    coeffs = opt.scenario.fuel
    cmp_ = compare(fleet_metrics(opt, coeffs), fleet_metrics(base, coeffs))
    write_json(cmp_.to_dict(), out / "comparison.json")
    cols = ["vehicle_id"] + [f"{k}_{s}" for k in KEYS for s in ("opt", "base", "improvement")]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for row in cmp_.per_vehicle:
        w.writerow([row["vehicle_id"]] + [fmt(row[c]) for c in cols[1:]])
    w.writerow(["fleet"] + [fmt(cmp_.fleet[c]) for c in cols[1:]])
    (out / "comparison.csv").write_text(buf.getvalue(), encoding="utf-8")


def run_command(mode: str, scenario, out_dir, schedule_hook=None) -> int:
    """Run ``mode`` on ``scenario`` and write its report tree under ``out_dir``.

    ``compare`` writes ``optimized/`` and ``baseline/`` subdirectories plus
    the comparison files. Returns the process exit status.
    """
    out = Path(out_dir)
    modes = ("optimized", "baseline") if mode == "compare" else (mode,)
    results = {}
    for m in modes:
        res = _run_mode(m, scenario, schedule_hook if m == "optimized" else None)
        results[m] = res
        _write_mode(res, out / m if mode == "compare" else out)
    if mode == "compare":
        _write_comparison(results["optimized"], results["baseline"], out)
    return EXIT_OK if all(r.audit.clean for r in results.values()) else EXIT_VIOLATION


def _scenario_from_args(args):
    sc = load_scenario(args.scenario)
    changes = {}
    if getattr(args, "dt", None) is not None:
        changes["dt"] = args.dt
    if getattr(args, "mode", None) is not None:
        changes["mode"] = args.mode
    return dataclasses.replace(sc, **changes) if changes else sc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="corridor-cav", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, with_out=True):
        sp.add_argument("--scenario", required=True, help="scenario file or preset name")
        if with_out:
            sp.add_argument("--out", type=Path, default=None,
                            help="output directory (default: $CORRIDOR_CAV_OUT or ./corridor_cav_out)")
            sp.add_argument("--dt", type=float, default=None, help="sampling step override")

    r = sub.add_parser("run", help="simulate one mode")
    common(r)
    r.add_argument("--mode", choices=("optimized", "baseline", "compare"), default=None,
                   help="mode override (default: the scenario's run.mode)")
    r.add_argument("--corrupt-schedule", choices=sorted(HOOKS), default=None, help=argparse.SUPPRESS)

    c = sub.add_parser("compare", help="simulate both modes and compare")
    common(c)
    c.add_argument("--corrupt-schedule", choices=sorted(HOOKS), default=None, help=argparse.SUPPRESS)

    v = sub.add_parser("validate", help="parse and validate a scenario")
    common(v, with_out=False)

    e = sub.add_parser("emit-preset", help="write a built-in scenario as YAML")
    e.add_argument("name", choices=sorted(PRESETS))
    e.add_argument("--out", type=Path, default=None, help="file to write (default: stdout)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "emit-preset":
            text = PRESETS[args.name]
            if args.out is None:
                sys.stdout.write(text)
            else:
                args.out.write_text(text, encoding="utf-8")
            return EXIT_OK
        scenario = _scenario_from_args(args)
        if args.command == "validate":
            routes = sorted({s.route for s in scenario.spawns})
            print(f"ok: {len(scenario.spawns)} spawns on {len(routes)} routes ({', '.join(routes)})")
            return EXIT_OK
        mode = "compare" if args.command == "compare" else scenario.mode
        out = args.out if args.out is not None else default_out_dir()
        hook = HOOKS[args.corrupt_schedule] if args.corrupt_schedule else None
        status = run_command(mode, scenario, out, schedule_hook=hook)
        print(f"{mode}: wrote {out} ({'audit clean' if status == EXIT_OK else 'audit violations'})")
        return status
    except (ScenarioError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc.filename or ''}: {exc.strerror}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
