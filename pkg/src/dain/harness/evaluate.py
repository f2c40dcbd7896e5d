"""Deterministic test-set evaluation in single-view and multiview modes."""
from dataclasses import dataclass

import numpy as np

from ..core.rng import make_rng
from ..errors import EvaluationError

__all__ = ["EvalResult", "evaluate", "network_predictor"]


@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray
    n_samples: int
    mode: str
    combiner: str
    n_views: int

    def to_dict(self):
        return {"accuracy": self.accuracy, "confusion": self.confusion.tolist(),
                "n_samples": self.n_samples, "mode": self.mode, "combiner": self.combiner,
                "n_views": self.n_views}


def network_predictor(network):
    """Adapt a network to the ``predictor(xv, xd, n_views, combiner)`` protocol."""
    two_stream = network.spec.two_stream

    def predict(xv, xd, n_views, combiner):
        return network.predict_multiview(xv, xd if two_stream else None, n_views, combiner)

    return predict


def evaluate(predictor, table, pipeline, mode="single", combiner="pooling", n_views=4,
             seed=0, batch_size=64):
    """Accuracy and confusion matrix (rows true, columns predicted).

    ``mode="single"`` scores every row on its own; ``"multiview"`` draws one
    window of ``n_views`` consecutive views per (instance, condition) with
    a stream fixed by ``seed``.  Test images are centre-cropped, so the
    result is a pure function of the inputs.  ``predictor`` is a network or
    a callable ``(xv, xd, n_views, combiner) -> labels``.
    """
    if len(table) == 0:
        raise EvaluationError("empty test set")
    if not callable(predictor):
        predictor = network_predictor(predictor)
    if mode == "single":
        groups = np.arange(len(table)).reshape(-1, 1)
        n_views, combiner = 1, "pooling"
    elif mode == "multiview":
        groups = table.sample_windows(n_views, make_rng(seed, "eval-windows"))
    else:
        raise ValueError(f"mode must be single or multiview, got {mode!r}")
    k = len(table.classes)
    confusion = np.zeros((k, k), dtype=np.int64)
    step = max(batch_size // n_views, 1)
    for start in range(0, len(groups), step):
        g = groups[start:start + step]
        xv, xd = pipeline.eval_batch(table, g)
        pred = np.asarray(predictor(xv, xd, n_views, combiner), dtype=np.intp)
        np.add.at(confusion, (table.labels[g[:, 0]], pred), 1)
    n = int(confusion.sum())
    return EvalResult(float(np.trace(confusion) / n), confusion, n, mode, combiner, n_views)
