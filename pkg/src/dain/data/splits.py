"""Instance-level train/test splits.

The unit of splitting is the surface instance: every view and lighting
condition of an instance lands on the same side, so no surface seen in
training is ever tested on.
"""
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..core.rng import make_rng
from ..errors import SplitError

__all__ = ["SplitSpec", "make_splits", "n_train", "save_split", "load_split", "config_hash"]


@dataclass
class SplitSpec:
    split_id: int
    train: dict
    test: dict
    seed: int = 0
    config_hash: str = ""
    excluded: list = field(default_factory=list)

    def __post_init__(self):
        for cls in set(self.train) | set(self.test):
            overlap = set(self.train.get(cls, ())) & set(self.test.get(cls, ()))
            if overlap:
                raise SplitError(f"class {cls}: instances on both sides {sorted(overlap)}")

    @property
    def classes(self):
        return sorted(set(self.train) | set(self.test))

    @property
    def train_ids(self):
        return sorted(i for ids in self.train.values() for i in ids)

    @property
    def test_ids(self):
        return sorted(i for ids in self.test.values() for i in ids)

    def to_dict(self):
        return {"split_id": self.split_id, "seed": self.seed, "config_hash": self.config_hash,
                "excluded": sorted(self.excluded),
                "train": {c: sorted(v) for c, v in sorted(self.train.items())},
                "test": {c: sorted(v) for c, v in sorted(self.test.items())}}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["split_id"]), {c: list(v) for c, v in d["train"].items()},
                   {c: list(v) for c, v in d["test"].items()}, int(d.get("seed", 0)),
                   d.get("config_hash", ""), list(d.get("excluded", [])))


def config_hash(obj):
    """Short stable digest of a JSON-serialisable object."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def n_train(count, train_frac):
    """Round-half-up share of ``count`` instances for training, kept in [1, count-1]."""
    k = int(count * train_frac + 0.5)
    return min(max(k, 1), count - 1)


def make_splits(index, n_splits=5, train_frac=0.7, min_instances=4, seed=0):
    """Seeded per-class instance splits.

    Classes with fewer than ``min_instances`` instances are left out of
    every split and listed in ``SplitSpec.excluded``.
    """
    if not 0 < train_frac < 1:
        raise ValueError("train_frac must lie in (0, 1)")
    groups = {c: sorted(i.instance_id for i in insts) for c, insts in index.by_class().items()}
    kept = {c: ids for c, ids in groups.items() if len(ids) >= max(min_instances, 2)}
    excluded = sorted(set(groups) - set(kept))
    if len(kept) < 2:
        raise SplitError(f"only {len(kept)} class(es) have at least {min_instances} instances")
    digest = config_hash({"classes": groups, "train_frac": train_frac,
                          "min_instances": min_instances})
    splits = []
    for s in range(1, n_splits + 1):
        train, test = {}, {}
        for cls, ids in kept.items():
            order = make_rng(seed, "split", s, cls).permutation(len(ids))
            k = n_train(len(ids), train_frac)
            train[cls] = sorted(ids[i] for i in order[:k])
            test[cls] = sorted(ids[i] for i in order[k:])
        splits.append(SplitSpec(s, train, test, seed, digest, excluded))
    return splits


def save_split(split, path):
    Path(path).write_text(json.dumps(split.to_dict(), indent=2, sort_keys=True) + "\n")


def load_split(path):
    return SplitSpec.from_dict(json.loads(Path(path).read_text()))
