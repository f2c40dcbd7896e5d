"""Per-channel standardisation fitted on training images only."""
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ..errors import DimensionError, NumericError

__all__ = ["ChannelStandardizer"]


class ChannelStandardizer(TransformerMixin, BaseEstimator):
    """Subtract a per-channel mean and divide by the per-channel std.

    Fit on ``[n, H, W, C]`` training images; the view stream and the
    differential stream each get their own instance.

    Attributes
    ----------
    mean_, std_ : ndarray of shape (C,)
    """

    def __init__(self, eps=0.0):
        self.eps = eps

    @staticmethod
    def _check(X):
        X = np.asarray(X)
        if X.ndim != 4:
            raise DimensionError(f"expected [n, H, W, C] images, got {X.shape}")
        if X.shape[0] == 0:
            raise ValueError("cannot standardise an empty image set")
        return X

    def fit(self, X, y=None):
        X = self._check(X)
        flat = X.reshape(-1, X.shape[-1]).astype(np.float64)
        self.mean_ = flat.mean(axis=0)
        self.std_ = flat.std(axis=0)
        if np.any(self.std_ + self.eps <= 0):
            bad = np.flatnonzero(self.std_ + self.eps <= 0).tolist()
            raise NumericError(f"zero variance in channel(s) {bad}")
        self.std_ = self.std_ + self.eps
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = self._check(X)
        out = (X - self.mean_) / self.std_
        return out.astype(X.dtype if X.dtype.kind == "f" else np.float32)

    def to_dict(self):
        check_is_fitted(self, "mean_")
        return {"mean": self.mean_.tolist(), "std": self.std_.tolist()}

    @classmethod
    def from_dict(cls, d):
        obj = cls()
        obj.mean_ = np.asarray(d["mean"], dtype=np.float64)
        obj.std_ = np.asarray(d["std"], dtype=np.float64)
        return obj
