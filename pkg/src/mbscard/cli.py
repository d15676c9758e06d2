"""Command-line front end: ``mbscard <command> ...``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import asdict
from pathlib import Path

from .analysis import EnergyParams, StopContext, analyze_rows
from .core import AccuracySpec, make_rng
from .experiment import (
    DEFAULT_N_RANGE, ELL_TABLE, ExperimentSpec, ResultRow, calibrate_ell, load_ell_table, run_experiment,
    save_ell_table,
)
from .hsrc_m2 import decoder_rows
from .omt import TourInstance, exact_tour, greedy_tour, validate
from .scenario import ScenarioConfig, build_model, dump_csv


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _load_json(path: str):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON ({exc})") from None


# ------------------------------------------------------------------ commands


def cmd_simulate(args) -> None:
    raw = _load_json(args.spec)
    if args.replicates is not None:
        raw["replicates"] = args.replicates
    if args.seed is not None:
        raw["seed"] = args.seed
    spec = ExperimentSpec.from_dict(raw)
    log = (lambda msg: print(msg, file=sys.stderr)) if args.verbose else None
    rows = run_experiment(spec, progress=log)
    if args.format == "json":
        text = json.dumps({"name": spec.name, "sweep": spec.sweep, "rows": [asdict(r) for r in rows]}, indent=2) + "\n"
    else:
        text = _csv(ResultRow.CSV_FIELDS, [r.as_csv() for r in rows])
    _emit(text, args.out)


def cmd_analyze(args) -> None:
    raw = _load_json(args.context)
    contexts = raw if isinstance(raw, list) else [raw]
    rows = []
    for c in contexts:
        c = dict(c)
        energy = c.pop("energy", {})
        ctx = StopContext.from_dict(c)
        rows.append(analyze_rows(ctx, EnergyParams.uniform(ctx.T, **energy)))
    if args.format == "json":
        text = json.dumps(rows if isinstance(raw, list) else rows[0], indent=2) + "\n"
    else:
        keys = list(dict.fromkeys(k for r in rows for k in r))
        text = _csv(keys, [[f"{r.get(k, ''):.10g}" if k in r else "" for k in keys] for r in rows])
    _emit(text, args.out)


def cmd_calibrate(args) -> None:
    base = AccuracySpec(W=args.W, t=args.t, estimator_rate=args.estimator_rate)
    cal = calibrate_ell(
        args.epsilon, args.delta, args.n_range, seed=args.seed if args.seed is not None else 2024,
        replicates=args.replicates or 1000, base=base,
    )
    entry = cal.to_dict()
    history = entry.pop("history")
    if args.table:
        path = Path(args.table)
        entries = load_ell_table(path) if path.exists() else []
        entries = [
            e for e in entries
            if not (e["epsilon"] == cal.epsilon and e["delta"] == cal.delta
                    and e.get("estimator_rate", "p") == cal.estimator_rate)
        ]
        entries.append(entry)
        entries.sort(key=lambda e: (e.get("estimator_rate", "p"), e["delta"], e["epsilon"]))
        save_ell_table(entries, path)
    if args.format == "json":
        text = json.dumps({**entry, "history": history}, indent=2) + "\n"
    else:
        text = _csv(["epsilon", "delta", "estimator_rate", "ell"], [[cal.epsilon, cal.delta, cal.estimator_rate, cal.ell]])
    _emit(text, args.out)


def cmd_omt(args) -> int:
    inst = TourInstance.load(args.instance)
    tour = exact_tour(inst) if args.exact else greedy_tour(inst)
    if tour is None:
        rec = {"solver": "exact", "feasible": False, "tour": None, "cost": None, "energy": None,
               "covered": 0, "reason": "infeasible", "violations": []}
    else:
        rep = validate(inst, tour.sequence)
        rec = {"solver": "exact" if args.exact else "greedy", "feasible": rep.feasible, "tour": list(tour.sequence),
               "cost": tour.cost, "energy": tour.energy, "covered": len(tour.covered), "reason": tour.reason,
               "violations": rep.violations}
    if args.format == "json":
        text = json.dumps(rec, indent=2) + "\n"
    else:
        tour_s = " ".join(map(str, rec["tour"])) if rec["tour"] else ""
        text = _csv(
            ["solver", "feasible", "tour", "cost", "energy", "covered", "reason", "violations"],
            [[rec["solver"], rec["feasible"], tour_s, rec["cost"], rec["energy"], rec["covered"], rec["reason"],
              "; ".join(rec["violations"])]],
        )
    _emit(text, args.out)
    return 0


def cmd_scenario(args) -> None:
    config = ScenarioConfig.from_dict(_load_json(args.config)) if args.config else ScenarioConfig()
    pop, plan = build_model(config, make_rng(args.seed if args.seed is not None else 0, 0, 0, 0))
    if args.dump:
        text = dump_csv(pop, plan)
    else:
        summary = {
            "config": config.to_dict(), "N": pop.N, "D": pop.D.tolist(), "q": pop.q.tolist(),
            "true_counts": pop.true_counts().tolist(), "stops": plan.ordered_stops().tolist(),
        }
        text = json.dumps(summary, indent=2) + "\n"
    _emit(text, args.out)


def cmd_decoder(args) -> None:
    if args.T < 4:
        raise ValueError("decoder tables exist for T >= 4 (smaller T use the three-step layout)")
    rows = decoder_rows(args.T)
    if args.format == "json":
        text = json.dumps(rows, indent=2) + "\n"
    else:
        keys = list(rows[0])
        text = _csv(keys, [[r[k] for k in keys] for r in rows])
    _emit(text, args.out)


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--replicates", type=int, default=None)
    common.add_argument("--out", default=None, help="write output here instead of stdout")
    common.add_argument("--format", choices=("csv", "json"), default="csv")

    p = argparse.ArgumentParser(prog="mbscard", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="run an experiment sweep from a JSON spec")
    s.add_argument("spec")
    s.add_argument("-v", "--verbose", action="store_true")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("analyze", parents=[common], help="closed-form slots/energy for stop context(s) in JSON")
    s.add_argument("context")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("calibrate-ell", parents=[common], help="calibrate the frame length for (epsilon, delta)")
    s.add_argument("--epsilon", type=float, default=0.03)
    s.add_argument("--delta", type=float, default=0.2)
    s.add_argument("--n-range", type=int, nargs="+", default=list(DEFAULT_N_RANGE))
    s.add_argument("--W", type=int, default=30)
    s.add_argument("--t", type=int, default=16)
    s.add_argument("--estimator-rate", choices=("p", "two_pow_I"), default="p")
    s.add_argument("--table", default=None, help=f"merge the result into this {ELL_TABLE}-style file")
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("omt", help="tour optimisation")
    osub = s.add_subparsers(dest="omt_command", required=True)
    so = osub.add_parser("solve", parents=[common], help="solve an instance file")
    g = so.add_mutually_exclusive_group(required=True)
    g.add_argument("--greedy", action="store_true")
    g.add_argument("--exact", action="store_true")
    so.add_argument("instance")
    so.set_defaults(func=cmd_omt)

    s = sub.add_parser("scenario", help="population generation")
    ssub = s.add_subparsers(dest="scenario_command", required=True)
    sg = ssub.add_parser("generate", parents=[common], help="draw one population")
    sg.add_argument("config", nargs="?", default=None, help="scenario JSON (defaults if omitted)")
    sg.add_argument("--dump", action="store_true", help="emit the node/stop CSV")
    sg.set_defaults(func=cmd_scenario)

    s = sub.add_parser("decoder", help="joint-decoder tables")
    dsub = s.add_subparsers(dest="decoder_command", required=True)
    sd = dsub.add_parser("dump", parents=[common], help="one row per reachable step-1 outcome")
    sd.add_argument("--T", type=int, required=True)
    sd.set_defaults(func=cmd_decoder)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        rc = args.func(args)
    except (ValueError, KeyError, TypeError, OSError) as exc:
        print(f"mbscard: error: {exc}", file=sys.stderr)
        return 2
    return int(rc or 0)


if __name__ == "__main__":
    sys.exit(main())
