"""In-memory arrays of view pairs and their differential images."""
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..errors import AlignmentError, SamplingError
from ..imaging.differential import make_differential
from ..imaging.png import read_png
from .layout import THETAS
from .sampling import window_starts

__all__ = ["ViewTable", "load_view_table"]

log = logging.getLogger(__name__)


@dataclass
class ViewTable:
    """One row per complete (instance, condition, base angle) pair.

    ``images`` holds the base view, ``diffs`` the differential image, both
    ``[M, H, W, 3]`` float32.  ``instance`` indexes ``instance_ids``.
    """

    images: np.ndarray
    diffs: np.ndarray
    labels: np.ndarray
    instance: np.ndarray
    condition: np.ndarray
    theta_index: np.ndarray
    instance_ids: list
    classes: list
    n_fallbacks: int = 0

    def __len__(self):
        return len(self.labels)

    def subset(self, rows):
        rows = np.asarray(rows)
        return ViewTable(self.images[rows], self.diffs[rows], self.labels[rows],
                         self.instance[rows], self.condition[rows], self.theta_index[rows],
                         self.instance_ids, self.classes, self.n_fallbacks)

    def groups(self):
        """``{(instance, condition): {theta_index: row}}``."""
        out = {}
        for r, key in enumerate(zip(self.instance.tolist(), self.condition.tolist())):
            out.setdefault(key, {})[int(self.theta_index[r])] = r
        return out

    def windows(self, n):
        """Every valid window as an array of row indices ``[W, n]`` (arc order)."""
        rows = []
        for _, by_theta in sorted(self.groups().items()):
            thetas = [THETAS[t] for t in by_theta]
            for s in window_starts(thetas, n):
                rows.append([by_theta[s + i] for i in range(n)])
        return np.asarray(rows, dtype=np.intp).reshape(-1, n)

    def sample_windows(self, n, rng):
        """One uniformly placed window per (instance, condition) group."""
        rows = []
        for key, by_theta in sorted(self.groups().items()):
            starts = window_starts([THETAS[t] for t in by_theta], n)
            if not starts:
                raise SamplingError(f"group {key} has no {n} contiguous complete views")
            s = starts[int(rng.integers(len(starts)))]
            rows.append([by_theta[s + i] for i in range(n)])
        return np.asarray(rows, dtype=np.intp).reshape(-1, n)


def _pair_job(args):
    path_v, path_d, align = args
    iv, ivd = read_png(path_v), read_png(path_d)
    try:
        d = make_differential(iv, ivd, align=align)
        fell_back = False
    except AlignmentError:
        d = make_differential(iv, ivd, align=False)
        fell_back = True
    return iv, d.pixels.astype(np.float32), fell_back


def load_view_table(index, instance_ids, classes=None, align=True, workers=1):
    """Read the listed instances and compute their differential images.

    ``classes`` fixes the label order (default: the index's sorted classes).
    Pairs whose alignment fails fall back to a plain difference and are
    counted in ``n_fallbacks``.
    """
    classes = list(classes) if classes is not None else index.classes
    label_of = {c: i for i, c in enumerate(classes)}
    instance_ids = sorted(instance_ids)
    jobs, meta = [], []
    for ii, iid in enumerate(instance_ids):
        inst = index.instance(iid)
        for ci, cond in enumerate(inst.conditions):
            for t in inst.complete_thetas(cond):
                jobs.append((inst.view(t, 0, cond).path, inst.view(t, 5, cond).path, align))
                meta.append((label_of[inst.class_name], ii, ci, THETAS.index(t)))
    if not jobs:
        raise SamplingError("no complete view pairs among the requested instances")
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_pair_job, jobs, chunksize=16))
    else:
        results = [_pair_job(j) for j in jobs]
    n_fb = sum(r[2] for r in results)
    if n_fb:
        log.warning("alignment fell back to plain differences for %d pair(s)", n_fb)
    meta = np.asarray(meta, dtype=np.intp)
    return ViewTable(np.stack([r[0] for r in results]), np.stack([r[1] for r in results]),
                     meta[:, 0], meta[:, 1], meta[:, 2], meta[:, 3], instance_ids, classes,
                     n_fb)
