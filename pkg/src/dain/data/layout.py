"""On-disk dataset layout and the in-memory index built from it.

A tree looks like::

    root/<class>/<instance>/<condition>/theta{+-NN}_delta{0|5}.png

for example ``root/asphalt/asphalt_003/cond2/theta-30_delta5.png``.  Each
base polar angle along the arc is paired with a partner whose azimuth is
offset by ``delta`` degrees.
"""
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

from PIL import Image, UnidentifiedImageError

from ..errors import DatasetError

__all__ = [
    "THETAS",
    "DELTAS",
    "ViewRecord",
    "SurfaceInstance",
    "DatasetIndex",
    "view_filename",
    "parse_view_filename",
    "scan_gtos",
]

log = logging.getLogger(__name__)

THETAS = tuple(range(-40, 41, 10))
DELTAS = (0, 5)

_NAME = re.compile(r"theta([+-]\d{2})_delta(\d+)\.png")


def view_filename(theta_deg, delta_deg):
    return f"theta{int(theta_deg):+03d}_delta{int(delta_deg)}.png"


def parse_view_filename(name):
    """``(theta, delta)`` for a valid view file name, else ``None``."""
    m = _NAME.fullmatch(name)
    if m is None:
        return None
    theta, delta = int(m.group(1)), int(m.group(2))
    if theta not in THETAS or delta not in DELTAS:
        return None
    return theta, delta


@dataclass(frozen=True)
class ViewRecord:
    theta_deg: int
    delta_deg: int
    illumination: str
    phi_deg: float = 0.0
    exposure: str = "single"
    path: str | None = None

    def __post_init__(self):
        if self.theta_deg not in THETAS:
            raise ValueError(f"theta {self.theta_deg} is not on the base arc {THETAS}")
        if self.delta_deg not in DELTAS:
            raise ValueError(f"delta must be one of {DELTAS}, got {self.delta_deg}")


@dataclass
class SurfaceInstance:
    class_name: str
    instance_id: str
    views: list = field(default_factory=list)

    @property
    def conditions(self):
        return sorted({v.illumination for v in self.views})

    def view(self, theta, delta, illumination):
        for v in self.views:
            if (v.theta_deg, v.delta_deg, v.illumination) == (theta, delta, illumination):
                return v
        return None

    def complete_thetas(self, illumination):
        """Base angles (arc order) that have both members of the pair."""
        have = {(v.theta_deg, v.delta_deg) for v in self.views if v.illumination == illumination}
        return [t for t in THETAS if all((t, d) in have for d in DELTAS)]

    @property
    def complete(self):
        conds = self.conditions
        return bool(conds) and all(len(self.complete_thetas(c)) == len(THETAS) for c in conds)


@dataclass
class DatasetIndex:
    root: str
    instances: list
    n_conditions: int = 4
    warnings: list = field(default_factory=list)

    @property
    def classes(self):
        return sorted({i.class_name for i in self.instances})

    @property
    def n_views(self):
        return len(THETAS)

    def by_class(self):
        out = {c: [] for c in self.classes}
        for inst in self.instances:
            out[inst.class_name].append(inst)
        return out

    def instance(self, instance_id):
        for inst in self.instances:
            if inst.instance_id == instance_id:
                return inst
        raise KeyError(instance_id)

    @property
    def incomplete(self):
        return [i.instance_id for i in self.instances if not i.complete]

    def summary(self):
        return {
            "root": self.root,
            "classes": {c: [i.instance_id for i in insts]
                        for c, insts in self.by_class().items()},
            "n_views": {i.instance_id: len(i.views) for i in self.instances},
            "incomplete": self.incomplete,
            "warnings": list(self.warnings),
        }


def scan_gtos(root_dir):
    """Index a dataset tree.

    Instance ids are ``<class>/<instance>`` so they are unique across
    classes.  Files with names off the grid or that cannot be decoded are
    reported in ``index.warnings`` and skipped; instances missing views are
    kept and listed in ``index.incomplete``.
    """
    root = Path(root_dir)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} does not exist")
    warnings = []
    instances = []
    for class_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        for inst_dir in sorted(p for p in class_dir.iterdir() if p.is_dir()):
            inst = SurfaceInstance(class_dir.name, f"{class_dir.name}/{inst_dir.name}")
            for cond_dir in sorted(p for p in inst_dir.iterdir() if p.is_dir()):
                for f in sorted(cond_dir.iterdir()):
                    if not f.is_file():
                        continue
                    parsed = parse_view_filename(f.name)
                    if parsed is None:
                        warnings.append(f"{f.relative_to(root)}: not a view file name")
                        continue
                    try:
                        with Image.open(f) as im:
                            im.verify()
                    except (OSError, UnidentifiedImageError) as exc:
                        warnings.append(f"{f.relative_to(root)}: unreadable ({exc})")
                        continue
                    inst.views.append(ViewRecord(parsed[0], parsed[1], cond_dir.name,
                                                 path=str(f)))
            if inst.views:
                instances.append(inst)
            else:
                warnings.append(f"{inst_dir.relative_to(root)}: no views")
    if not instances:
        raise DatasetError(f"no surface instances found under {root}")
    for w in warnings:
        log.warning(w)
    n_cond = max(len(i.conditions) for i in instances)
    return DatasetIndex(str(root), instances, n_cond, warnings)
