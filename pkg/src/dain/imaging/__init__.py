"""View-pair registration and differential angular images."""
from .align import AffineParams, estimate_affine, luminance, warp_affine
from .differential import DifferentialImage, DifferentialImager, make_differential, sparsity_stats
from .png import differential_to_png, read_png, write_png
