"""``dain`` command-line entry point.

Exit codes: 0 success, 1 usage error, 2 runtime failure.  Set ``DAIN_LOG``
to ``error``, ``info`` or ``debug`` for log verbosity (default ``info``).
"""
import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .core.io import save_tensor
from .data.layout import THETAS, scan_gtos
from .data.splits import make_splits, save_split
from .data.synthetic import SyntheticConfig, generate_synthetic
from .data.table import load_view_table
from .errors import DainError
from .gradsuite import run_suite
from .harness.config import RunConfig, parse_override
from .harness.report import collect_runs, cross_split_report, write_report
from .harness.runs import load_tables, resolve_plan, run_eval, run_train

__all__ = ["main", "build_parser"]

log = logging.getLogger("dain")

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
GRAD_TOLERANCE = 1e-3


class UsageError(Exception):
    """Bad command line: reported with usage text and exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _dump_json(path, obj):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _flag(key):
    return "--" + key.replace("_", "-")


def _add_run_flags(parser, exclude=()):
    """One ``--key`` flag per RunConfig key; values are parsed as JSON when possible."""
    group = parser.add_argument_group("configuration keys (JSON values)")
    for key in RunConfig.keys():
        if key not in exclude:
            group.add_argument(_flag(key), dest=f"cfg_{key}", metavar="VALUE")


def _collect_overrides(args):
    pairs = []
    for key in RunConfig.keys():
        raw = getattr(args, f"cfg_{key}", None)
        if raw is not None:
            pairs.append(parse_override(f"{key}={raw}"))
    for text in args.overrides:
        try:
            pairs.append(parse_override(text))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    if args.seed is not None:
        pairs.append(("seed", args.seed))
    if args.workers is not None:
        pairs.append(("workers", args.workers))
    return pairs


def _resolve_config(args, base=None):
    """Config file first, then flags and key=value overrides; unknown keys are usage errors."""
    try:
        if base is None:
            base = RunConfig()
            if args.config:
                base = RunConfig.from_dict(json.loads(Path(args.config).read_text()))
        return base.with_overrides(_collect_overrides(args))
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from None


def cmd_gen(args):
    cfg = SyntheticConfig(n_classes=args.classes, instances_per_class=args.instances,
                          image_size=args.size, seed=args.seed or 0,
                          n_conditions=args.conditions, control_class=args.control,
                          noise=args.noise)
    try:
        cfg.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    index = generate_synthetic(cfg, args.out, workers=args.workers or 1)
    print(f"wrote {len(index.instances)} instances of {len(index.classes)} classes to {args.out}")


def cmd_scan(args):
    index = scan_gtos(args.root)
    summary = index.summary()
    if args.out:
        _dump_json(args.out, summary)
    print(f"{len(index.instances)} instances, {len(index.classes)} classes, "
          f"{len(index.incomplete)} incomplete, {len(index.warnings)} warnings")
    for w in index.warnings:
        print(f"warning: {w}")


def cmd_diff(args):
    index = scan_gtos(args.root)
    out = Path(args.out)
    stats = {}
    for inst in index.instances:
        table = load_view_table(index, [inst.instance_id], align=not args.no_align,
                                workers=args.workers or 1)
        conds = inst.conditions
        for r in range(len(table)):
            theta = THETAS[table.theta_index[r]]
            cond = conds[table.condition[r]]
            rel = Path(inst.instance_id) / cond / f"theta{theta:+03d}.dait"
            (out / rel).parent.mkdir(parents=True, exist_ok=True)
            save_tensor(out / rel, table.diffs[r])
            stats[str(rel)] = round(float(np.abs(table.diffs[r]).mean()), 8)
        if table.n_fallbacks:
            log.warning("%s: %d unaligned fallback(s)", inst.instance_id, table.n_fallbacks)
    _dump_json(out / "diff_summary.json", {"align": not args.no_align, "mean_abs": stats})
    print(f"wrote {len(stats)} differential images to {out}")


def cmd_split(args):
    index = scan_gtos(args.dataset)
    splits = make_splits(index, n_splits=args.n, train_frac=args.train_frac,
                         min_instances=args.min_instances, seed=args.seed or 0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for s in splits:
        save_split(s, out / f"split{s.split_id}.json")
    if splits[0].excluded:
        print(f"excluded classes: {', '.join(splits[0].excluded)}")
    print(f"wrote {len(splits)} splits to {out}")


def _num_classes(cfg):
    """Class count from the split file, read only; 2 when it is not available yet."""
    try:
        return len(json.loads(Path(cfg.split).read_text())["train"])
    except (OSError, ValueError, KeyError):
        return 2


def cmd_train(args):
    cfg = _resolve_config(args)
    if not cfg.dataset or not cfg.split:
        raise UsageError("train needs dataset and split (config file or --dataset/--split)")
    if args.dry_run:
        try:
            plan = resolve_plan(cfg, _num_classes(cfg))
        except ValueError as exc:
            raise UsageError(f"invalid configuration: {exc}") from None
        print(json.dumps(plan, indent=2, sort_keys=True))
        return
    if not args.out:
        raise UsageError("train needs --out")

    def progress(rec):
        log.info("epoch %d  stage %d  lr %.3g  loss %.4f  train acc %.2f%%",
                 rec["epoch"], rec["stage"], rec["lr"], rec["loss"], rec["train_acc"])

    metrics = run_train(cfg, args.out, tables=load_tables(cfg), log_fn=progress)
    for ev in metrics["evals"]:
        print(f"{ev['mode']} {ev['combiner']} (N={ev['n_views']}): "
              f"{100 * ev['accuracy']:.2f}%")


def cmd_eval(args):
    run_dir = Path(args.run)
    plan_path = run_dir / "config.json"
    if not plan_path.exists():
        raise DainError(f"{run_dir} is not a run directory (no config.json)")
    base = RunConfig.from_dict(json.loads(plan_path.read_text())["run"])
    cfg = _resolve_config(args, base)
    overrides = [(k, v) for k, v in cfg.to_dict().items() if base.to_dict()[k] != v]
    if args.dry_run:
        print(json.dumps({"run_dir": str(run_dir), "overrides": dict(overrides),
                          "plan": resolve_plan(cfg, _num_classes(cfg))},
                         indent=2, sort_keys=True))
        return
    metrics = run_eval(run_dir, args.out, overrides)
    for ev in metrics["evals"]:
        print(f"{ev['mode']} {ev['combiner']} (N={ev['n_views']}): "
              f"{100 * ev['accuracy']:.2f}%")


def cmd_report(args):
    records = collect_runs(args.runs)
    if not records:
        raise DainError(f"no metrics.json found under {args.runs}")
    report = cross_split_report(records)
    write_report(report, args.out)
    print(report.to_text(), end="")


def cmd_gradcheck(args):
    results, seconds = run_suite(seed=args.seed or 0, n_instances=args.instances)
    width = max(len(k) for k in results)
    for name, err in results.items():
        status = "ok" if err < GRAD_TOLERANCE else "FAIL"
        print(f"{name:<{width}}  {err:.3e}  {status}")
    worst = max(results.values())
    print(f"max relative error {worst:.3e} over {len(results)} checks in {seconds:.1f}s")
    if not worst < GRAD_TOLERANCE:
        raise DainError(f"gradient error {worst:.3e} exceeds {GRAD_TOLERANCE}")


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, help="seed for every random stream")
    common.add_argument("--workers", type=int, help="worker processes for image work")

    parser = _Parser(prog="dain", description="Differential angular imaging experiments.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("gen", parents=[common], help="render a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=8)
    p.add_argument("--instances", type=int, default=12)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--conditions", type=int, default=4)
    p.add_argument("--noise", type=float, default=SyntheticConfig.noise)
    p.add_argument("--control", action="store_true", help="add a flat matte control class")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("scan", parents=[common], help="index a dataset tree")
    p.add_argument("root")
    p.add_argument("--out", help="write the index summary as JSON")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("diff", parents=[common], help="compute differential images")
    p.add_argument("root")
    p.add_argument("--out", required=True)
    p.add_argument("--no-align", action="store_true", help="subtract without registration")
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("split", parents=[common], help="write train/test split files")
    p.add_argument("dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=5)
    p.add_argument("--train-frac", type=float, default=0.7)
    p.add_argument("--min-instances", type=int, default=4)
    p.set_defaults(func=cmd_split)

    overrides_note = "Extra key=value arguments override configuration keys (JSON values)."
    p = sub.add_parser("train", parents=[common], help="train and evaluate one configuration",
                       description=overrides_note)
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--dry-run", action="store_true")
    _add_run_flags(p, exclude=("seed", "workers"))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="re-evaluate a trained run",
                       description=overrides_note)
    p.add_argument("run")
    p.add_argument("--out")
    p.add_argument("--dry-run", action="store_true")
    _add_run_flags(p, exclude=("seed", "workers"))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", parents=[common], help="cross-split table from run directories")
    p.add_argument("runs")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient suite")
    p.add_argument("--instances", type=int, default=10)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def _configure_logging():
    level = os.environ.get("DAIN_LOG", "info").lower()
    if level not in LOG_LEVELS:
        raise UsageError(f"DAIN_LOG must be one of {', '.join(LOG_LEVELS)}, got {level!r}")
    logging.basicConfig(level=LOG_LEVELS[level], format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr, force=True)


def main(argv=None):
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        _configure_logging()
        if not argv:
            raise UsageError(parser.format_help().rstrip())
        args, extra = parser.parse_known_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage().rstrip())
        # key=value overrides may appear anywhere after the subcommand
        args.overrides = [a for a in extra if "=" in a and not a.startswith("-")]
        unknown = [a for a in extra if a not in args.overrides]
        if unknown or (args.overrides and args.command not in ("train", "eval")):
            raise UsageError(f"{parser.format_usage()}dain: error: unrecognized arguments: "
                             f"{' '.join(unknown or args.overrides)}")
        args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (DainError, OSError, ValueError) as exc:
        print(f"dain: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
