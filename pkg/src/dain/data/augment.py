"""Training-time geometric augmentation and its deterministic test-time twin.

The pipeline is resize, independent horizontal/vertical stretch, optional
horizontal mirror, random crop.  Passing several images (a view and its
differential) applies one geometric draw to all of them.
"""
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import map_coordinates

__all__ = ["AugmentParams", "resample", "augment", "center_crop"]


@dataclass(frozen=True)
class AugmentParams:
    resize: int = 36
    stretch: float = 0.1
    flip_prob: float = 0.5
    crop: int = 32

    def __post_init__(self):
        if not 0 <= self.stretch < 1:
            raise ValueError("stretch must lie in [0, 1)")
        if not 0 <= self.flip_prob <= 1:
            raise ValueError("flip_prob must lie in [0, 1]")
        if self.crop < 1 or self.resize < 1:
            raise ValueError("sizes must be positive")
        if self.crop > self.min_size:
            raise ValueError(f"crop {self.crop} exceeds the smallest stretched size "
                             f"{self.min_size}; raise resize or lower stretch")

    @property
    def min_size(self):
        """Smallest side a stretch draw can produce."""
        return max(int(round(self.resize * (1 - self.stretch))), 1)


def resample(image, out_h, out_w):
    """Bilinear resize of an H×W(×C) image with pixel-centre alignment.

    Resampling to the input size returns the input unchanged.
    """
    image = np.asarray(image)
    h, w = image.shape[:2]
    if (out_h, out_w) == (h, w):
        return image.copy()
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    if image.ndim == 2:
        return map_coordinates(image, [yy, xx], order=1, mode="nearest")
    return np.stack([map_coordinates(image[..., c], [yy, xx], order=1, mode="nearest")
                     for c in range(image.shape[2])], axis=-1)


def _as_group(images):
    if isinstance(images, (list, tuple)):
        return list(images), True
    return [images], False


def augment(images, params, rng):
    """Randomly resize/stretch/flip/crop one image or a group sharing geometry."""
    group, is_group = _as_group(images)
    shapes = {np.shape(im)[:2] for im in group}
    if len(shapes) != 1:
        raise ValueError(f"grouped images must share a size, got {sorted(shapes)}")
    sy, sx = rng.uniform(1 - params.stretch, 1 + params.stretch, 2)
    flip = rng.random() < params.flip_prob
    out_h = max(int(round(params.resize * sy)), 1)
    out_w = max(int(round(params.resize * sx)), 1)
    if params.crop > min(out_h, out_w):
        raise ValueError(f"crop {params.crop} exceeds stretched size {out_h}x{out_w}")
    top = int(rng.integers(0, out_h - params.crop + 1))
    left = int(rng.integers(0, out_w - params.crop + 1))
    out = []
    for im in group:
        im = resample(im, out_h, out_w)
        if flip:
            im = im[:, ::-1]
        out.append(np.ascontiguousarray(im[top:top + params.crop, left:left + params.crop]))
    return out if is_group else out[0]


def center_crop(images, params):
    """Resize to ``params.resize`` and take the central ``params.crop`` square."""
    group, is_group = _as_group(images)
    if params.crop > params.resize:
        raise ValueError(f"crop {params.crop} exceeds resize {params.resize}")
    off = (params.resize - params.crop) // 2
    out = [np.ascontiguousarray(
        resample(im, params.resize, params.resize)[off:off + params.crop, off:off + params.crop])
        for im in group]
    return out if is_group else out[0]
