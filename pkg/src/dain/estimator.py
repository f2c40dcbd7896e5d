"""Scikit-learn style classifier over (view, differential) image pairs."""
import math

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_is_fitted

from .data.layout import THETAS
from .data.table import ViewTable
from .harness.config import RunConfig
from .harness.pipeline import InputPipeline
from .harness.train import train_staged
from .net.network import build_network
from .validation import check_view_input

__all__ = ["DAINClassifier"]


class DAINClassifier(ClassifierMixin, BaseEstimator):
    """Two-stream material classifier trained with staged SGD.

    ``X`` is ``[n, 2, H, W, C]``: each sample is a base view and its
    differential image (see ``DifferentialImager``).  Multiview samples
    ``[n, V, 2, H, W, C]`` hold ``V`` consecutive views along the arc; they
    train and predict with ``combiner``.

    Parameters
    ----------
    arch : {"single", "final", "intermediate", "dain"}
        How the two streams are combined.  ``"single"`` ignores the
        differential image.
    fusion_op : {"sum", "max"}
        Pointwise operation merging feature maps.
    channels : sequence of int
        Convolution widths of the backbone.
    hidden : int
        Width of the dense layer above the convolutions.
    dropout : float
        Dropout rate of the dense layer.
    stages : list of [scope, lr, epochs or "saturation"], optional
        Training schedule; ``None`` uses the default schedule for ``arch``.
    epochs : int, optional
        Total epoch budget; ``None`` keeps the schedule's own budget.
    batch_size, momentum, lr_decay
        SGD settings.
    stretch, flip_prob : float
        Augmentation strength.  Images are resized so a full stretch draw
        still covers the crop.
    combiner : {"pooling", "filter3d", "voting"}
        Multiview combiner (ignored for single-view input).
    random_state : int
        Seed for initialisation, shuffling, augmentation and dropout.
    """

    def __init__(self, arch="dain", fusion_op="sum", channels=(16, 32, 32), hidden=128,
                 dropout=0.5, stages=None, epochs=None, batch_size=32, momentum=0.9,
                 lr_decay=0.1, stretch=0.1, flip_prob=0.5, combiner="pooling",
                 random_state=0):
        self.arch = arch
        self.fusion_op = fusion_op
        self.channels = channels
        self.hidden = hidden
        self.dropout = dropout
        self.stages = stages
        self.epochs = epochs
        self.batch_size = batch_size
        self.momentum = momentum
        self.lr_decay = lr_decay
        self.stretch = stretch
        self.flip_prob = flip_prob
        self.combiner = combiner
        self.random_state = random_state

    def _run_config(self, size, n_views):
        resize = math.ceil(size / (1 - self.stretch)) if self.stretch > 0 else size
        return RunConfig(
            arch=self.arch, fusion_op=self.fusion_op, channels=list(self.channels),
            hidden=self.hidden, dropout=self.dropout,
            stages=[list(s) for s in self.stages] if self.stages is not None else None,
            epochs=self.epochs, batch_size=self.batch_size, momentum=self.momentum,
            lr_decay=self.lr_decay, resize=resize, crop=size, stretch=self.stretch,
            flip_prob=self.flip_prob, n_views=n_views, combiner=self.combiner,
            seed=self.random_state)

    @staticmethod
    def _as_table(X, labels, classes):
        if X.ndim == 5:
            X = X[:, None]
        n, v = X.shape[:2]
        flat = X.reshape((n * v,) + X.shape[2:])
        return ViewTable(flat[:, 0], flat[:, 1], np.repeat(labels, v), np.repeat(np.arange(n), v),
                         np.zeros(n * v, dtype=np.intp), np.tile(np.arange(v), n),
                         [str(i) for i in range(n)], list(classes))

    def fit(self, X, y):
        X, multiview = check_view_input(X)
        y = np.asarray(y)
        if len(y) != len(X):
            raise ValueError(f"X has {len(X)} samples but y has {len(y)}")
        self.classes_ = unique_labels(y)
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes")
        h, w = X.shape[-3:-1]
        if h != w:
            raise ValueError(f"images must be square, got {h}x{w}")
        n_views = X.shape[1] if multiview else 1
        if n_views > len(THETAS):
            raise ValueError(f"at most {len(THETAS)} views per sample, got {n_views}")
        cfg = self._run_config(h, n_views)
        tc = cfg.train_config()
        table = self._as_table(X, np.searchsorted(self.classes_, y), self.classes_)
        self.pipeline_ = InputPipeline(tc.augment).fit(table)
        spec = cfg.network_spec(len(self.classes_), (X.shape[-1], h, w))
        self.network_ = build_network(spec, self.random_state)
        self.history_ = train_staged(self.network_, table, self.pipeline_, tc).history
        self.n_features_in_ = int(np.prod(X.shape[-3:]))
        return self

    def _batches(self, X, batch_size=64):
        X, multiview = check_view_input(X)
        n_views = X.shape[1] if multiview else 1
        table = self._as_table(X, np.zeros(len(X), dtype=np.intp), self.classes_)
        groups = np.arange(len(table)).reshape(-1, n_views)
        step = max(batch_size // n_views, 1)
        for start in range(0, len(groups), step):
            yield self.pipeline_.eval_batch(table, groups[start:start + step]), n_views

    def predict_proba(self, X):
        """Averaged head probabilities; voting has none, so it is rejected."""
        check_is_fitted(self, "network_")
        two = self.network_.spec.two_stream
        out = []
        for (xv, xd), n_views in self._batches(X):
            out.append(self.network_.predict_proba(xv, xd if two else None, n_views,
                                                   self.combiner))
        return np.concatenate(out)

    def predict(self, X):
        check_is_fitted(self, "network_")
        two = self.network_.spec.two_stream
        out = []
        for (xv, xd), n_views in self._batches(X):
            out.append(self.network_.predict_multiview(xv, xd if two else None, n_views,
                                                       self.combiner))
        return self.classes_[np.concatenate(out)]
