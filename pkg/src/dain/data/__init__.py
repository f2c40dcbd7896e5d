"""Dataset layout, synthetic generation, splits and input pipeline."""
from .augment import AugmentParams, augment, center_crop, resample
from .layout import (DELTAS, THETAS, DatasetIndex, SurfaceInstance, ViewRecord,
                     parse_view_filename, scan_gtos, view_filename)
from .normalize import ChannelStandardizer
from .sampling import sample_view_window, window_starts
from .splits import SplitSpec, config_hash, load_split, make_splits, n_train, save_split
from .synthetic import CONTROL_CLASS, SyntheticConfig, generate_synthetic, render_view
from .table import ViewTable, load_view_table

__all__ = [
    "AugmentParams", "augment", "center_crop", "resample",
    "DELTAS", "THETAS", "DatasetIndex", "SurfaceInstance", "ViewRecord",
    "parse_view_filename", "scan_gtos", "view_filename",
    "ChannelStandardizer", "sample_view_window", "window_starts",
    "SplitSpec", "config_hash", "load_split", "make_splits", "n_train", "save_split",
    "CONTROL_CLASS", "SyntheticConfig", "generate_synthetic", "render_view",
    "ViewTable", "load_view_table",
]
