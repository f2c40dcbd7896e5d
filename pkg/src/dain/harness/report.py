"""Aggregating runs across splits into comparison tables."""
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["row_label", "STANDARD_ROWS", "MetricsReport", "cross_split_report", "collect_runs",
           "write_report"]

ABSENT = "absent"

STANDARD_ROWS = (
    "single view CNN",
    "multiview CNN (voting)",
    "single view DAIN (sum)",
    "multiview DAIN (sum, voting)",
    "multiview DAIN (sum, pooling)",
    "multiview DAIN (sum, filter3d)",
)

_ARCH_NAMES = {"single": "CNN", "final": "final fusion", "intermediate": "intermediate fusion",
               "dain": "DAIN"}


def row_label(arch, fusion_op, combiner):
    """Table row for an architecture evaluated with a combiner (``single`` = one view)."""
    name = _ARCH_NAMES[arch]
    if arch == "single":
        return "single view CNN" if combiner == "single" else f"multiview CNN ({combiner})"
    if combiner == "single":
        return f"single view {name} ({fusion_op})"
    return f"multiview {name} ({fusion_op}, {combiner})"


@dataclass
class MetricsReport:
    """Mean and population std over splits for each table row.

    A split's accuracy for a row is the mean over the seeds run on it.
    Splits without a run are recorded as absent and left out of the mean.
    """

    splits: list
    rows: dict
    config_hashes: list = field(default_factory=list)
    seeds: list = field(default_factory=list)

    def to_dict(self):
        return {"splits": self.splits, "rows": self.rows, "config_hashes": self.config_hashes,
                "seeds": self.seeds}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self):
        header = ["method"] + [f"split {s}" for s in self.splits] + ["mean", "std"]
        body = []
        for label, row in self.rows.items():
            cells = [label]
            for s in self.splits:
                v = row["splits"].get(str(s))
                cells.append(ABSENT if v is None else f"{100 * v:.2f}")
            cells += [ABSENT if row["mean"] is None else f"{100 * row['mean']:.2f}",
                      ABSENT if row["std"] is None else f"{100 * row['std']:.2f}"]
            body.append(cells)
        widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]

        def line(cells):
            first = cells[0].ljust(widths[0])
            return "  ".join([first] + [c.rjust(w) for c, w in zip(cells[1:], widths[1:])])

        rule = "-" * len(line(header))
        return "\n".join([line(header), rule] + [line(r) for r in body]) + "\n"


def cross_split_report(records, rows=STANDARD_ROWS):
    """Build a report from run records.

    Each record is a mapping with ``row``, ``split``, ``seed`` and
    ``accuracy`` (and optionally ``config_hash`` and ``confusion``).  Rows
    listed in ``rows`` always appear; other rows follow in sorted order.
    """
    records = list(records)
    splits = sorted({int(r["split"]) for r in records})
    labels = list(rows) + sorted({r["row"] for r in records} - set(rows))
    out = {}
    for label in labels:
        mine = [r for r in records if r["row"] == label]
        per_split = {}
        for s in splits:
            accs = [float(r["accuracy"]) for r in mine if int(r["split"]) == s]
            per_split[str(s)] = float(np.mean(accs)) if accs else None
        present = [v for v in per_split.values() if v is not None]
        confusion = None
        mats = [np.asarray(r["confusion"]) for r in mine if r.get("confusion") is not None]
        if mats and len({m.shape for m in mats}) == 1:
            confusion = np.sum(mats, axis=0).tolist()
        out[label] = {
            "splits": per_split,
            "mean": float(np.mean(present)) if present else None,
            "std": float(np.std(present)) if present else None,
            "n_runs": len(mine),
            "seeds": sorted({int(r["seed"]) for r in mine}),
            "confusion": confusion,
        }
    hashes = sorted({r["config_hash"] for r in records if r.get("config_hash")})
    seeds = sorted({int(r["seed"]) for r in records})
    return MetricsReport(splits, out, hashes, seeds)


def collect_runs(root):
    """Records from every ``metrics.json`` below ``root`` (sorted by path)."""
    records = []
    for path in sorted(Path(root).rglob("metrics.json")):
        m = json.loads(path.read_text())
        for ev in m["evals"]:
            comb = "single" if ev["mode"] == "single" else ev["combiner"]
            records.append({"row": row_label(m["arch"], m["fusion_op"], comb),
                            "split": m["split_id"], "seed": m["seed"],
                            "accuracy": ev["accuracy"], "confusion": ev["confusion"],
                            "config_hash": m["config_hash"]})
    return records


def write_report(report, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json())
    (out / "report.txt").write_text(report.to_text())
