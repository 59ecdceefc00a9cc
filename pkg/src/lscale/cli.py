"""Command line entry point: ``lscale {run,select,embed,dump-latent,report,synth}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .features import propagate_features
from .graph import load_dataset, write_dataset, write_matrix
from .synthetic import sbm_dataset

logger = logging.getLogger("lscale")

# (flag, config field, type, help)
EXPERIMENT_FLAGS = [
    ("--dataset", "dataset", str, "dataset directory"),
    ("--strategy", "strategy", str,
     "lscale, lscale-plain, random, uncertainty, featprop or featprop-u"),
    ("--features", "features", str, "propagated, embeddings or file:PATH"),
    ("--budget", "budget", str, "comma-separated checkpoints, e.g. 10,30,60"),
    ("--batch", "batch", int, "nodes selected per step"),
    ("--init-pool", "init_pool", int, "size of the random initial pool"),
    ("--runs", "runs", int, "number of runs"),
    ("--splits", "splits", int, "distinct data splits, assigned round-robin to runs"),
    ("--seed", "seed", int, "base seed; run r uses seed + r"),
    ("--lambda", "lam", float, "decay base of the mixing weight"),
    ("--hidden-dim", "hidden_dim", int, "latent dimension of the classifier"),
    ("--khops", "khops", int, "propagation depth"),
    ("--lr", "learning_rate", float, "learning rate"),
    ("--weight-decay", "weight_decay", float, "weight decay"),
    ("--epochs", "max_epochs", int, "maximum training epochs"),
    ("--early-stop", "early_stop", int, "early-stopping window"),
    ("--test-fraction", "test_fraction", float, "fraction of nodes held out for testing"),
    ("--test-size", "test_size", int, "absolute test-set size (overrides --test-fraction)"),
    ("--val-size", "val_size", int, "validation-set size"),
    ("--restarts", "restarts", int, "seeded K-Medoids restarts per step"),
    ("--fixed-alpha", "fixed_alpha", float, "pin the mixing weight (ablation)"),
    ("--jobs", "jobs", int, "worker processes for independent runs"),
    ("--out", "out", str, "output directory"),
]
_BOOL_FIELDS = {"count_initial_in_budget"}
_FIELD_TYPES = {f: t for _, f, t, _ in EXPERIMENT_FLAGS}
_KEY_TO_FIELD = {flag[2:]: f for flag, f, _, _ in EXPERIMENT_FLAGS}
_KEY_TO_FIELD.update({f.replace("_", "-"): f for f in _FIELD_TYPES})
_KEY_TO_FIELD["count-initial-in-budget"] = "count_initial_in_budget"


def read_config_file(path):
    """Parse a flat ``key = value`` document; keys are flag names."""
    values = {}
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" in line:
                key, value = (p.strip() for p in line.split("=", 1))
            else:
                parts = line.split(None, 1)
                if len(parts) != 2:
                    raise SystemExit(f"{path}:{lineno}: expected 'key = value'")
                key, value = parts
            key = key.lstrip("-").replace("_", "-")
            field = _KEY_TO_FIELD.get(key)
            if field is None:
                raise SystemExit(f"{path}:{lineno}: unknown key {key!r}")
            if field in _BOOL_FIELDS:
                values[field] = value.lower() in ("1", "true", "yes", "on")
            else:
                try:
                    values[field] = _FIELD_TYPES[field](value)
                except ValueError:
                    raise SystemExit(f"{path}:{lineno}: bad value for {key}") from None
    return values


def _add_experiment_flags(p):
    p.add_argument("--config", help="key/value config file; flags override it")
    for flag, field, typ, text in EXPERIMENT_FLAGS:
        p.add_argument(flag, dest=field, type=typ, help=text, default=argparse.SUPPRESS)
    p.add_argument("--count-initial-in-budget", dest="count_initial_in_budget",
                   action="store_true", default=argparse.SUPPRESS,
                   help="count the initial pool against the budget")


def build_config(args):
    values = read_config_file(args.config) if getattr(args, "config", None) else {}
    for field in list(_FIELD_TYPES) + list(_BOOL_FIELDS):
        if hasattr(args, field):
            values[field] = getattr(args, field)
    if isinstance(values.get("budget"), str):
        values["budget"] = tuple(int(b) for b in values["budget"].split(",") if b.strip())
    try:
        return harness.ExperimentConfig(**values)
    except ValueError as exc:
        raise SystemExit(f"invalid configuration: {exc}") from None


def _print_summary(report, method, stream=None):
    stream = stream or sys.stdout
    header, row = harness.format_table(report, method)
    width = max(len(c) for c in header + row) + 2
    stream.write("".join(c.ljust(width) for c in header) + "\n")
    stream.write("".join(c.ljust(width) for c in row) + "\n")


def _write_outputs(report, config, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    harness.write_report(report, out / "records.csv")
    harness.write_table(report, out / "table.csv", config.strategy)
    harness.write_config(config, out / "config.txt")
    payload = {"audit": report.audit, "runs": report.diagnostics}
    (out / "diagnostics.json").write_text(json.dumps(payload, indent=1), encoding="utf-8")


def cmd_run(args):
    config = build_config(args)
    if args.state and Path(args.state).exists() and args.resume:
        report = harness.resume(args.state, config)
    else:
        report = harness.run_experiment(config, state_path=args.state)
    if config.out:
        _write_outputs(report, config, config.out)
    _print_summary(report, config.strategy)
    if report.audit and any(report.audit.values()):
        logger.error("label audit found violations: %s", report.audit)
        return 1
    return 0


def cmd_select(args):
    config = build_config(args)
    state = Path(args.state)
    if state.exists():
        payload = harness.load_state(state)
        if payload["finished"]:
            print("run already finished, nothing to select")
            return 0
        before = harness.steps_recorded(state)
        report = harness.resume(state, config, max_steps=1)
    else:
        before = 0
        report = harness.run_experiment(config, state_path=state, max_steps=1)
    if harness.steps_recorded(state) == before:
        # the last checkpoint only needed its evaluation
        print("run finished, no selection left")
    else:
        print(" ".join(str(i) for i in harness.last_selection(state)))
    if report.finished and config.out:
        _write_outputs(report, config, config.out)
    return 0


def cmd_embed(args):
    graph, X, _ = load_dataset(args.dataset)
    write_matrix(args.out, propagate_features(graph, X, args.khops))
    return 0


def cmd_dump_latent(args):
    config = build_config(args)
    labelled = None
    if args.state:
        payload = harness.load_state(args.state)
        current = payload["current"] or (payload["completed"][-1] if payload["completed"] else None)
        if current is not None:
            labelled = np.asarray(current["state"]["labelled"], dtype=np.int64)
    space, labelled = harness.latent_space_for(config, labelled=labelled)
    target = args.output or (Path(config.out) / "latent.txt" if config.out else None)
    if target is None:
        raise SystemExit("dump-latent needs --output FILE or --out DIR")
    Path(target).parent.mkdir(parents=True, exist_ok=True)
    write_matrix(target, space.combined)
    print(f"wrote {space.combined.shape[0]}x{space.combined.shape[1]} latent matrix "
          f"(alpha={space.alpha:.6f}, |L|={len(labelled)}) to {target}")
    return 0


def cmd_report(args):
    try:
        report = harness.read_report(args.records)
    except harness.ReportError as exc:
        raise SystemExit(str(exc)) from None
    target = Path(args.output) if args.output else Path(args.records)
    harness.write_report(report, target)
    for a in harness.aggregate(report.records):
        flag = " (single record)" if a.single_record else ""
        print(f"{a.checkpoint}\t{a.mean:.9f}\t{a.std:.9f}\t{a.runs}{flag}")
    _print_summary(report, args.method)
    return 0


def cmd_synth(args):
    sizes = tuple(int(s) for s in args.blocks.split(","))
    graph, X, labels = sbm_dataset(sizes, args.p_in, args.p_out, args.dim,
                                   args.center_distance, seed=args.seed)
    emb = propagate_features(graph, X, args.khops) if args.embeddings else None
    write_dataset(args.out, graph, X, labels, embeddings=emb)
    print(f"wrote SBM dataset with {graph.n} nodes and {graph.num_edges} edges to {args.out}")
    return 0


def make_parser():
    parser = argparse.ArgumentParser(prog="lscale", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a full experiment")
    _add_experiment_flags(p)
    p.add_argument("--state", help="save resumable progress to this file")
    p.add_argument("--resume", action="store_true", help="continue from --state if present")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("select", help="perform one selection step recorded in a state file")
    _add_experiment_flags(p)
    p.add_argument("--state", required=True)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("embed", help="write propagated features to a matrix file")
    p.add_argument("--dataset", required=True)
    p.add_argument("--khops", type=int, default=2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("dump-latent", help="write the combined selection space")
    _add_experiment_flags(p)
    p.add_argument("--state", help="take the labelled set from this state file")
    p.add_argument("--output", help="matrix file to write")
    p.set_defaults(func=cmd_dump_latent)

    p = sub.add_parser("report", help="re-aggregate a records CSV")
    p.add_argument("records")
    p.add_argument("--output", help="records path to rewrite (summary goes alongside)")
    p.add_argument("--method", default="method", help="row label for the table")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("synth", help="write a synthetic SBM dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--blocks", default="100,100,100")
    p.add_argument("--p-in", type=float, default=0.10)
    p.add_argument("--p-out", type=float, default=0.01)
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--center-distance", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--khops", type=int, default=2)
    p.add_argument("--embeddings", action="store_true",
                   help="also write propagated features as embeddings.txt")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    args = make_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
