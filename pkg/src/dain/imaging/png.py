"""8-bit PNG reading/writing and differential visualisation."""
import numpy as np
from PIL import Image

__all__ = ["read_png", "write_png", "differential_to_png"]


def read_png(path):
    """Load an 8-bit PNG as float32 RGB in [0, 1], shape H×W×3."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return arr.astype(np.float32) / 255.0


def write_png(path, image):
    """Quantise a [0, 1] float image to 8 bits (values are clipped)."""
    arr = np.clip(np.rint(np.asarray(image, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path, format="PNG")


def differential_to_png(path, pixels, scale=None):
    """Write a signed image with 0 at mid-gray; ``scale`` maps to full white/black."""
    pixels = np.asarray(pixels, dtype=np.float64)
    if scale is None:
        scale = max(float(np.abs(pixels).max()), 1e-12)
    write_png(path, 0.5 + 0.5 * pixels / scale)
