"""Differential angular images ``I_v - aligned(I_{v+delta})``."""
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ..errors import AlignmentError, DimensionError, NumericError
from ..validation import check_image_pairs
from .align import AffineParams, estimate_affine, warp_affine

__all__ = ["DifferentialImage", "make_differential", "sparsity_stats", "DifferentialImager"]


@dataclass
class DifferentialImage:
    pixels: np.ndarray
    alignment: AffineParams
    valid_mask: np.ndarray


def make_differential(image_v, image_vdelta, align=True, levels=3, max_iters=50, tol=1e-4):
    """Signed difference of a view and its offset partner.

    With ``align`` the partner is first registered onto ``image_v`` by a
    global affine map; pixels the warp could not fill are zero and masked
    out.  Alignment errors propagate so callers can retry with
    ``align=False``.
    """
    iv = np.asarray(image_v)
    ivd = np.asarray(image_vdelta)
    if iv.shape != ivd.shape:
        raise DimensionError(f"view pair shapes differ: {iv.shape} vs {ivd.shape}")
    dtype = iv.dtype if iv.dtype.kind == "f" else np.float64
    if not align:
        pixels = iv.astype(np.float64) - ivd.astype(np.float64)
        return DifferentialImage(pixels.astype(dtype), AffineParams.identity(),
                                 np.ones(iv.shape[:2], dtype=bool))
    params = estimate_affine(iv, ivd, levels=levels, max_iters=max_iters, tol=tol)
    warped, mask = warp_affine(ivd.astype(np.float64), params)
    diff = iv.astype(np.float64) - warped
    m = mask[..., None] if diff.ndim == 3 else mask
    pixels = np.where(m, diff, 0.0).astype(dtype)
    return DifferentialImage(pixels, params, mask)


def sparsity_stats(diff, threshold):
    """Fraction of valid pixels whose magnitude (max over channels) is below ``threshold``."""
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    mask = diff.valid_mask
    if not mask.any():
        raise NumericError("sparsity is undefined for an empty valid mask")
    mag = np.abs(diff.pixels)
    if mag.ndim == 3:
        mag = mag.max(axis=-1)
    return float((mag[mask] < threshold).mean())


class DifferentialImager(TransformerMixin, BaseEstimator):
    """Turn view pairs ``[n, 2, H, W, C]`` into differential images ``[n, H, W, C]``.

    Parameters
    ----------
    align : bool
        Register the offset view before subtracting.
    fallback : bool
        On an alignment failure subtract without registration instead of
        raising.
    levels, max_iters, tol
        Pyramid depth and Gauss-Newton stopping rule.
    """

    def __init__(self, align=True, fallback=True, levels=3, max_iters=50, tol=1e-4):
        self.align = align
        self.fallback = fallback
        self.levels = levels
        self.max_iters = max_iters
        self.tol = tol

    def fit(self, X, y=None):
        check_image_pairs(X)
        return self

    def transform(self, X):
        X = check_image_pairs(X)
        out = np.empty(X.shape[:1] + X.shape[2:], dtype=X.dtype)
        self.n_fallbacks_ = 0
        for i, (iv, ivd) in enumerate(X):
            try:
                d = make_differential(iv, ivd, align=self.align, levels=self.levels,
                                      max_iters=self.max_iters, tol=self.tol)
            except AlignmentError:
                if not self.fallback:
                    raise
                self.n_fallbacks_ += 1
                d = make_differential(iv, ivd, align=False)
            out[i] = d.pixels
        return out
