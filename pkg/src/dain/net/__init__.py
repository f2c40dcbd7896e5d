"""Two-stream and multiview network family."""
from .checkpoint import load_checkpoint, save_checkpoint
from .fusion import (
    average_predictions,
    center_one_kernels,
    fuse_maps,
    fuse_maps_backward,
    multiview_filter3d,
    multiview_filter3d_backward,
    multiview_pool,
    multiview_pool_backward,
    multiview_vote,
)
from .network import Network, build_network
from .spec import ARCHITECTURES, COMBINERS, FUSION_OPS, LayerSpec, NetworkSpec, toy_backbone
