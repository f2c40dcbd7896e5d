"""Network layout descriptions."""
from dataclasses import asdict, dataclass, field

from ..errors import SpecError

__all__ = ["LayerSpec", "NetworkSpec", "toy_backbone", "ARCHITECTURES", "FUSION_OPS", "COMBINERS"]

ARCHITECTURES = ("single", "final", "intermediate", "dain")
FUSION_OPS = ("sum", "max")
COMBINERS = ("voting", "pooling", "filter3d")
LAYER_KINDS = ("conv", "relu", "pool", "dense", "dropout")


@dataclass
class LayerSpec:
    kind: str
    size: int = 0
    kernel: int = 3
    stride: int = 1
    pad: int = -1  # -1 -> (kernel - 1) // 2
    window: int = 2
    rate: float = 0.5

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise SpecError(f"unknown layer kind {self.kind!r}")
        if self.kind in ("conv", "dense") and self.size < 1:
            raise SpecError(f"{self.kind} layer needs a positive size")
        if self.kind == "dropout" and not 0 <= self.rate < 1:
            raise SpecError("dropout rate must be in [0, 1)")

    @property
    def padding(self):
        return (self.kernel - 1) // 2 if self.pad < 0 else self.pad


def toy_backbone(channels=(16, 32, 32), hidden=128, dropout=0.5):
    """conv3x3-relu-maxpool2 blocks, then dense-relu-dropout.

    The classifier layer is not listed; networks append it with
    ``num_classes`` outputs.
    """
    layers = []
    for c in channels:
        layers += [LayerSpec("conv", c), LayerSpec("relu"), LayerSpec("pool", window=2)]
    layers += [LayerSpec("dense", hidden), LayerSpec("relu"), LayerSpec("dropout", rate=dropout)]
    return layers


@dataclass
class NetworkSpec:
    """Backbone layout plus how the two image streams are combined.

    ``fusion_layer`` indexes ``backbone`` and must name a ReLU in the
    convolutional part; it is where feature maps are fused (intermediate,
    dain) and where multiview pooling/filtering happens for every head.
    ``None`` picks the last convolutional ReLU.
    """

    backbone: list = field(default_factory=toy_backbone)
    fusion_arch: str = "dain"
    fusion_op: str = "sum"
    fusion_layer: int = None
    num_classes: int = 8
    input_shape: tuple = (3, 32, 32)

    def __post_init__(self):
        self.backbone = [l if isinstance(l, LayerSpec) else LayerSpec(**l) for l in self.backbone]
        self.input_shape = tuple(int(v) for v in self.input_shape)
        if self.fusion_layer is None:
            self.fusion_layer = self._default_fusion_layer()
        self.validate()

    @property
    def two_stream(self):
        return self.fusion_arch != "single"

    def _first_dense(self):
        for i, l in enumerate(self.backbone):
            if l.kind == "dense":
                return i
        return len(self.backbone)

    def _default_fusion_layer(self):
        relus = [i for i, l in enumerate(self.backbone[:self._first_dense()]) if l.kind == "relu"]
        return relus[-1] if relus else -1

    def validate(self):
        if self.fusion_arch not in ARCHITECTURES:
            raise SpecError(f"fusion_arch must be one of {ARCHITECTURES}")
        if self.fusion_op not in FUSION_OPS:
            raise SpecError(f"fusion_op must be one of {FUSION_OPS}")
        if self.num_classes < 2:
            raise SpecError("num_classes must be at least 2")
        m = self.fusion_layer
        if not 0 <= m < len(self.backbone):
            raise SpecError(f"fusion_layer {m} outside backbone of {len(self.backbone)} layers")
        if self.backbone[m].kind != "relu":
            raise SpecError(f"fusion_layer {m} is a {self.backbone[m].kind!r} layer, "
                            "not a post-activation feature map")
        if m > self._first_dense():
            raise SpecError(f"fusion_layer {m} follows a dense layer; fusion needs a "
                            "spatial feature map")
        self.layer_shapes()

    def layer_shapes(self):
        """Output shape (per sample) after every backbone layer."""
        c, h, w = self.input_shape
        shapes = []
        flat = None
        for l in self.backbone:
            if l.kind == "conv":
                if flat is not None:
                    raise SpecError("conv layer after dense layer")
                p = l.padding
                if l.kernel > h + 2 * p or l.kernel > w + 2 * p:
                    raise SpecError(f"kernel {l.kernel} exceeds feature map {h}x{w}")
                h = (h + 2 * p - l.kernel) // l.stride + 1
                w = (w + 2 * p - l.kernel) // l.stride + 1
                c = l.size
            elif l.kind == "pool":
                if flat is not None:
                    raise SpecError("pool layer after dense layer")
                if l.window > h or l.window > w:
                    raise SpecError(f"pool window {l.window} exceeds feature map {h}x{w}")
                h = (h - l.window) // l.window + 1
                w = (w - l.window) // l.window + 1
            elif l.kind == "dense":
                flat = l.size
            shapes.append((flat,) if flat is not None else (c, h, w))
        return shapes

    def to_dict(self):
        d = asdict(self)
        d["input_shape"] = list(self.input_shape)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)
