"""Input validation helpers in the spirit of ``sklearn.utils.validation``."""
import numpy as np

from .errors import DimensionError

__all__ = ["check_image", "check_image_pairs", "check_view_input"]


def check_image(image, min_size=1):
    """Coerce to a float H×W×C (or H×W) array and reject non-finite values."""
    arr = np.asarray(image)
    if arr.dtype.kind in "ui":
        arr = arr.astype(np.float32) / (255.0 if arr.dtype == np.uint8 else 1.0)
    elif arr.dtype.kind != "f":
        arr = arr.astype(np.float32)
    if arr.ndim not in (2, 3):
        raise DimensionError(f"image must be H×W or H×W×C, got shape {arr.shape}")
    if min(arr.shape[:2]) < min_size:
        raise DimensionError(f"image smaller than {min_size}px: {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains NaN or Inf")
    return arr


def check_image_pairs(X):
    """Validate a stack of view pairs shaped ``[n, 2, H, W, C]``."""
    X = np.asarray(X)
    if X.dtype.kind != "f":
        X = X.astype(np.float32)
    if X.ndim != 5 or X.shape[1] != 2:
        raise DimensionError(f"expected pairs of shape [n, 2, H, W, C], got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("input contains NaN or Inf")
    return X


def check_view_input(X):
    """Validate classifier input.

    Single-view samples are ``[n, 2, H, W, C]`` (original, differential);
    multiview samples are ``[n, V, 2, H, W, C]`` with views ordered along
    the arc.  Returns the array and whether it is multiview.
    """
    X = np.asarray(X)
    if X.dtype.kind != "f":
        X = X.astype(np.float32)
    if X.ndim == 5 and X.shape[1] == 2:
        multiview = False
    elif X.ndim == 6 and X.shape[2] == 2:
        multiview = True
    else:
        raise DimensionError(
            f"expected [n, 2, H, W, C] or [n, V, 2, H, W, C] input, got {X.shape}")
    if X.shape[0] == 0:
        raise ValueError("empty input")
    return X, multiview
