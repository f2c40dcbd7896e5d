"""Turning table rows into normalised network batches."""
import numpy as np

from ..data.augment import augment, center_crop
from ..data.normalize import ChannelStandardizer

__all__ = ["InputPipeline"]


class InputPipeline:
    """Augmentation (or centre crop) followed by per-stream standardisation.

    Row groups are ``[G, n]`` arrays of table rows; a group is one sample
    made of ``n`` consecutive views.  All ``2n`` images of a group share one
    geometric draw, and batches come out channel-first with each group's
    views contiguous.
    """

    def __init__(self, augment_params, normalize=True):
        self.params = augment_params
        self.normalize = normalize
        self.std_v = None
        self.std_d = None

    def fit(self, table):
        if self.normalize:
            self.std_v = ChannelStandardizer().fit(table.images)
            self.std_d = ChannelStandardizer().fit(table.diffs)
        return self

    def _finish(self, views, diffs):
        xv = np.stack(views).astype(np.float32)
        xd = np.stack(diffs).astype(np.float32)
        if self.std_v is not None:
            xv = self.std_v.transform(xv)
            xd = self.std_d.transform(xd)
        return (np.ascontiguousarray(xv.transpose(0, 3, 1, 2)),
                np.ascontiguousarray(xd.transpose(0, 3, 1, 2)))

    def train_batch(self, table, groups, rng):
        views, diffs = [], []
        for rows in np.atleast_2d(groups):
            imgs = [table.images[r] for r in rows] + [table.diffs[r] for r in rows]
            out = augment(imgs, self.params, rng)
            views += out[:len(rows)]
            diffs += out[len(rows):]
        return self._finish(views, diffs)

    def eval_batch(self, table, groups):
        views, diffs = [], []
        for rows in np.atleast_2d(groups):
            for r in rows:
                v, d = center_crop([table.images[r], table.diffs[r]], self.params)
                views.append(v)
                diffs.append(d)
        return self._finish(views, diffs)

    def to_dict(self):
        return {"std_v": self.std_v.to_dict() if self.std_v is not None else None,
                "std_d": self.std_d.to_dict() if self.std_d is not None else None}

    def load_dict(self, d):
        if d.get("std_v") is not None:
            self.std_v = ChannelStandardizer.from_dict(d["std_v"])
            self.std_d = ChannelStandardizer.from_dict(d["std_d"])
        return self
