"""Training schedules and the flat run configuration.

A run is described by one flat JSON object (``RunConfig``); every key can
be overridden from the command line as ``key=value``.  The staged SGD
schedule is derived from it as a ``TrainConfig``.
"""
import json
from dataclasses import asdict, dataclass, field, fields

from ..data.augment import AugmentParams
from ..net.spec import ARCHITECTURES, COMBINERS, FUSION_OPS, NetworkSpec, toy_backbone

__all__ = ["SCOPES", "Stage", "TrainConfig", "RunConfig", "preset_single_stream",
           "preset_two_branch", "parse_override"]

SCOPES = ("last-dense", "all-dense", "upper", "all")


@dataclass(frozen=True)
class Stage:
    """Train parameters in ``scope`` at ``base_lr``.

    ``epochs=None`` runs until the total epoch budget is spent, decaying
    the rate whenever training accuracy saturates.
    """

    scope: str
    base_lr: float
    epochs: int | None = None

    def __post_init__(self):
        if self.scope not in SCOPES:
            raise ValueError(f"scope must be one of {SCOPES}, got {self.scope!r}")
        if not self.base_lr > 0:
            raise ValueError("learning rates must be positive")
        if self.epochs is not None and self.epochs < 0:
            raise ValueError("stage epochs must be non-negative")

    def to_list(self):
        return [self.scope, self.base_lr, "saturation" if self.epochs is None else self.epochs]

    @classmethod
    def from_list(cls, item):
        scope, lr, ep = item
        return cls(scope, float(lr), None if ep == "saturation" else int(ep))


@dataclass
class TrainConfig:
    stages: list
    batch_size: int = 32
    momentum: float = 0.9
    dropout_rate: float = 0.5
    lr_decay_factor: float = 0.1
    saturation_window: int = 3
    saturation_points: float = 0.2
    epoch_budget: int = 20
    seed: int = 0
    augment: AugmentParams = field(default_factory=AugmentParams)
    n_views: int = 1
    combiner: str = "pooling"

    def __post_init__(self):
        self.stages = [s if isinstance(s, Stage) else Stage.from_list(s) for s in self.stages]
        if isinstance(self.augment, dict):
            self.augment = AugmentParams(**self.augment)
        self.validate()

    def validate(self):
        if not self.stages:
            raise ValueError("a schedule needs at least one stage")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not 0 < self.lr_decay_factor < 1:
            raise ValueError("lr_decay_factor must lie in (0, 1)")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.saturation_window < 1:
            raise ValueError("saturation_window must be at least 1")
        if self.n_views < 1:
            raise ValueError("n_views must be at least 1")
        if self.combiner not in COMBINERS:
            raise ValueError(f"combiner must be one of {COMBINERS}")
        if self.combiner == "voting" and self.n_views > 1:
            raise ValueError("voting is an evaluation rule; train with n_views=1")
        fixed = sum(s.epochs for s in self.stages if s.epochs is not None)
        if fixed > self.epoch_budget:
            raise ValueError(f"fixed stages need {fixed} epochs but the budget is "
                             f"{self.epoch_budget}")

    def to_dict(self):
        d = asdict(self)
        d["stages"] = [s.to_list() for s in self.stages]
        return d


def preset_single_stream(epoch_budget=30, batch_size=196):
    """Classifier, then all dense layers, then everything with decay on saturation."""
    return TrainConfig([Stage("last-dense", 5e-2, 5), Stage("all-dense", 1e-2, 5),
                        Stage("all", 1e-3, None)],
                       batch_size=batch_size, epoch_budget=epoch_budget)


def preset_two_branch(epoch_budget=20, batch_size=64):
    """Layers above the fusion point first, then everything."""
    return TrainConfig([Stage("upper", 1e-3, 3), Stage("all", 1e-3, None)],
                       batch_size=batch_size, epoch_budget=epoch_budget,
                       augment=AugmentParams(resize=43, stretch=0.25))


SCHEDULES = {"single-stream": preset_single_stream, "two-branch": preset_two_branch}


@dataclass
class RunConfig:
    """Flat, JSON-serialisable description of one training/evaluation run."""

    dataset: str = ""
    split: str = ""
    arch: str = "dain"
    fusion_op: str = "sum"
    fusion_layer: int | None = None
    channels: list = field(default_factory=lambda: [16, 32, 32])
    hidden: int = 128
    schedule: str = "auto"
    stages: list | None = None
    epochs: int | None = None
    batch_size: int = 32
    momentum: float = 0.9
    dropout: float = 0.5
    lr_decay: float = 0.1
    saturation_window: int = 3
    resize: int | None = None
    crop: int = 32
    stretch: float | None = None
    flip_prob: float = 0.5
    n_views: int = 1
    combiner: str = "pooling"
    eval_views: int = 4
    eval_combiners: list = field(default_factory=lambda: ["single"])
    align: bool = True
    init_from: str | None = None
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.arch not in ARCHITECTURES:
            raise ValueError(f"arch must be one of {ARCHITECTURES}")
        if self.fusion_op not in FUSION_OPS:
            raise ValueError(f"fusion_op must be one of {FUSION_OPS}")
        if self.schedule not in ("auto", *SCHEDULES):
            raise ValueError(f"schedule must be auto or one of {sorted(SCHEDULES)}")
        for c in self.eval_combiners:
            if c != "single" and c not in COMBINERS:
                raise ValueError(f"eval combiner {c!r} not in {('single',) + COMBINERS}")

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls)]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        unknown = sorted(set(d) - set(cls.keys()))
        if unknown:
            raise KeyError(f"unknown config key(s): {', '.join(unknown)}")
        return cls(**d)

    def with_overrides(self, pairs):
        d = self.to_dict()
        for key, value in pairs:
            if key not in d:
                raise KeyError(f"unknown config key: {key}")
            d[key] = value
        return RunConfig.from_dict(d)

    def network_spec(self, num_classes, input_shape):
        return NetworkSpec(backbone=toy_backbone(tuple(self.channels), self.hidden, self.dropout),
                           fusion_arch=self.arch, fusion_op=self.fusion_op,
                           fusion_layer=self.fusion_layer, num_classes=num_classes,
                           input_shape=input_shape)

    def train_config(self):
        name = self.schedule
        if name == "auto":
            name = "single-stream" if self.arch == "single" else "two-branch"
        base = SCHEDULES[name]()
        budget = self.epochs if self.epochs is not None else base.epoch_budget
        stages = ([Stage.from_list(s) for s in self.stages] if self.stages is not None
                  else base.stages)
        stretch = self.stretch if self.stretch is not None else base.augment.stretch
        resize = self.resize if self.resize is not None else base.augment.resize
        return TrainConfig(
            stages, batch_size=self.batch_size, momentum=self.momentum,
            dropout_rate=self.dropout, lr_decay_factor=self.lr_decay,
            saturation_window=self.saturation_window, epoch_budget=budget, seed=self.seed,
            augment=AugmentParams(resize, stretch, self.flip_prob, self.crop),
            n_views=self.n_views, combiner=self.combiner)


def parse_override(text):
    """``key=value`` with the value parsed as JSON when possible."""
    if "=" not in text:
        raise ValueError(f"override {text!r} is not key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value
