"""Run directories: train, evaluate and record one configuration.

A run directory holds::

    config.json     resolved RunConfig, TrainConfig, NetworkSpec and hash
    checkpoint/     DAIT parameter files and manifest (with input statistics)
    losses.csv      epoch,loss,train_acc
    metrics.json    test-set evaluations
    report.txt      the run's row(s) of the comparison table
"""
import json
import logging
from pathlib import Path

from ..data.layout import scan_gtos
from ..data.splits import config_hash, load_split
from ..data.table import load_view_table
from ..net.checkpoint import load_checkpoint, save_checkpoint
from ..net.network import build_network
from .config import RunConfig
from .evaluate import evaluate
from .pipeline import InputPipeline
from .report import collect_runs, cross_split_report
from .train import train_staged

__all__ = ["run_hash", "resolve_plan", "load_tables", "run_train", "run_eval", "load_run"]

log = logging.getLogger(__name__)


def run_hash(cfg):
    d = cfg.to_dict()
    d.pop("workers", None)
    return config_hash(d)


def _dump(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def resolve_plan(cfg, num_classes=None):
    """Everything a run would do, as plain data (no filesystem access)."""
    tc = cfg.train_config()
    spec = cfg.network_spec(num_classes or 2, (3, cfg.crop, cfg.crop))
    spec.validate()
    return {"run": cfg.to_dict(), "train": tc.to_dict(), "network": spec.to_dict(),
            "config_hash": run_hash(cfg)}


def load_tables(cfg, index=None, split=None):
    """``(train_table, test_table, split)`` for a run configuration."""
    index = index if index is not None else scan_gtos(cfg.dataset)
    split = split if split is not None else load_split(cfg.split)
    classes = split.classes
    train = load_view_table(index, split.train_ids, classes, cfg.align, cfg.workers)
    test = load_view_table(index, split.test_ids, classes, cfg.align, cfg.workers)
    return train, test, split


def _evaluate_all(network, test, pipeline, cfg):
    evals = []
    for comb in cfg.eval_combiners:
        if comb == "single":
            res = evaluate(network, test, pipeline, "single")
        else:
            res = evaluate(network, test, pipeline, "multiview", comb, cfg.eval_views,
                           seed=cfg.seed)
        evals.append(res.to_dict())
    return evals


def _write_metrics(out, cfg, split_id, evals, classes):
    metrics = {"arch": cfg.arch, "fusion_op": cfg.fusion_op, "seed": cfg.seed,
               "split_id": split_id, "config_hash": run_hash(cfg), "classes": classes,
               "evals": evals}
    _dump(out / "metrics.json", metrics)
    (out / "report.txt").write_text(cross_split_report(collect_runs(out), rows=()).to_text())
    return metrics


def run_train(cfg, out_dir, tables=None, log_fn=None):
    """Train, checkpoint and evaluate one configuration; returns the metrics."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train, test, split = tables if tables is not None else load_tables(cfg)
    tc = cfg.train_config()
    pipeline = InputPipeline(tc.augment).fit(train)
    shape = (3, tc.augment.crop, tc.augment.crop)
    if cfg.init_from:
        network, _ = load_checkpoint(Path(cfg.init_from))
        if network.spec.num_classes != len(train.classes):
            raise ValueError("initial checkpoint has a different number of classes")
    else:
        network = build_network(cfg.network_spec(len(train.classes), shape), cfg.seed)
    plan = resolve_plan(cfg, len(train.classes))
    plan["network"] = network.spec.to_dict()
    plan["split_id"] = split.split_id
    _dump(out / "config.json", plan)
    result = train_staged(network, train, pipeline, tc, diagnostics_dir=out / "diagnostics",
                          log_fn=log_fn)
    with open(out / "losses.csv", "w") as f:
        f.write("epoch,loss,train_acc\n")
        for h in result.history:
            f.write(f"{h['epoch']},{h['loss']:.8f},{h['train_acc']:.4f}\n")
    save_checkpoint(network, out / "checkpoint", stage="final",
                    extra={"pipeline": pipeline.to_dict(), "classes": list(train.classes),
                           "augment": tc.to_dict()["augment"]})
    return _write_metrics(out, cfg, split.split_id, _evaluate_all(network, test, pipeline, cfg),
                          list(train.classes))


def load_run(run_dir):
    """``(network, pipeline, RunConfig)`` from a finished run directory."""
    run_dir = Path(run_dir)
    plan = json.loads((run_dir / "config.json").read_text())
    cfg = RunConfig.from_dict(plan["run"])
    network, manifest = load_checkpoint(run_dir / "checkpoint")
    pipeline = InputPipeline(cfg.train_config().augment).load_dict(manifest["pipeline"])
    return network, pipeline, cfg


def run_eval(run_dir, out_dir=None, overrides=(), test=None):
    """Re-evaluate a trained run, optionally with overridden eval keys."""
    network, pipeline, cfg = load_run(run_dir)
    cfg = cfg.with_overrides(overrides)
    split = load_split(cfg.split)
    if test is None:
        test = load_view_table(scan_gtos(cfg.dataset), split.test_ids, split.classes,
                               cfg.align, cfg.workers)
    out = Path(out_dir) if out_dir is not None else Path(run_dir)
    out.mkdir(parents=True, exist_ok=True)
    return _write_metrics(out, cfg, split.split_id, _evaluate_all(network, test, pipeline, cfg),
                          list(split.classes))

