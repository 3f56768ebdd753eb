"""Run configuration: nested dataclasses, YAML/JSON loading and ``section.key=value`` overrides."""
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import InvalidArgument
from .imaging import DesensitizeMethod
from .networks import DiscriminatorConfig, GeneratorConfig, ReidConfig


@dataclass
class DataConfig:
    root: str = "data/market1501"
    train_dir: str = "bounding_box_train"
    image_size: tuple = (256, 128)
    split_seed: int = 0
    manifest: str = ""


@dataclass
class DesensitizeConfig:
    kind: str = "blur"
    blur_kernel: int = 12
    pixel_block: int = 24
    noise_variance: float = 0.5
    blur_shape: str = "box"
    seed: int = 0

    def method(self):
        return DesensitizeMethod(self.kind, self.blur_kernel, self.pixel_block,
                                 self.noise_variance, self.blur_shape)


@dataclass
class ModelConfig:
    generator: GeneratorConfig = field(default_factory=lambda: GeneratorConfig(
        base_width=64, depth=7, image_size=(256, 128)))
    discriminator: DiscriminatorConfig = field(default_factory=lambda: DiscriminatorConfig(
        base_width=64, n_layers=3))
    reid: ReidConfig = field(default_factory=lambda: ReidConfig(backbone="resnet50", pretrained=True))


@dataclass
class ScheduleConfig:
    """Linear warmup from ``warmup_start`` to ``base_lr``, then step drops to absolute values."""
    warmup_start: float = 3.5e-5
    base_lr: float = 3.5e-4
    warmup_epochs: int = 10
    decay_epochs: tuple = (40, 80)
    decay_lrs: tuple = (3.5e-5, 3.5e-6)


@dataclass
class TrainConfig:
    epochs: int = 120
    P: int = 16
    K: int = 4
    gen_betas: tuple = (0.5, 0.999)
    reid_betas: tuple = (0.9, 0.999)
    reid_weight_decay: float = 5e-4
    lambda_l1: float = 100.0
    non_saturating: bool = True
    center_weight: float = 5e-4
    center_lr: float = 0.5
    label_smoothing: float = 0.0
    eps_psnr: float = 1.0
    eps_ssim: float = 0.05
    eps_r1: float = 0.05
    upgrade: bool = True
    upgrade_every: int = 1
    psnr_cap: float = 60.0
    pretrain_epochs: int = 0  # 0 -> same as epochs
    init_reid_from_pretrain: bool = True
    seed: int = 0
    deterministic: bool = True

    @property
    def batch_size(self):
        return self.P * self.K


@dataclass
class Config:
    data: DataConfig = field(default_factory=DataConfig)
    desensitize: DesensitizeConfig = field(default_factory=DesensitizeConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    out_dir: str = "runs/default"

    def to_dict(self):
        return _plain(dataclasses.asdict(self))

    def fingerprint(self):
        """Hash of everything that determines parameter shapes."""
        key = {"model": _plain(dataclasses.asdict(self.model)),
               "image_size": list(self.data.image_size)}
        return hashlib.sha256(json.dumps(key, sort_keys=True).encode()).hexdigest()[:16]


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _build(cls, data):
    if not isinstance(data, dict):
        raise InvalidArgument(f"expected a mapping for {cls.__name__}, got {data!r}")
    kwargs = {}
    names = {f.name: f for f in dataclasses.fields(cls)}
    for key, value in data.items():
        if key not in names:
            raise InvalidArgument(f"unknown config key {cls.__name__}.{key}")
        default = getattr(cls(), key) if _has_defaults(cls) else None
        if dataclasses.is_dataclass(default):
            value = _build(type(default), {**_plain(dataclasses.asdict(default)), **value})
        elif isinstance(default, tuple) or isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    return cls(**kwargs)


def _has_defaults(cls):
    return all(f.default is not dataclasses.MISSING or f.default_factory is not dataclasses.MISSING
               for f in dataclasses.fields(cls))


def from_dict(data):
    return _build(Config, data or {})


def desk_config(out_dir="runs/toy", root="data/toy"):
    """Preset sized for the synthetic 8-identity corpus at 64x32 on a CPU."""
    return from_dict({
        "data": {"root": root, "image_size": [64, 32]},
        "model": {
            "generator": {"base_width": 32, "depth": 4, "image_size": [64, 32]},
            "discriminator": {"base_width": 32, "n_layers": 2},
            "reid": {"backbone": "small", "widths": [16, 32, 64, 128], "num_classes": 8,
                     "pretrained": False},
        },
        "schedule": {"warmup_epochs": 3, "decay_epochs": [20, 27]},
        "train": {"epochs": 30, "P": 4, "K": 4, "pretrain_epochs": 15},
        "out_dir": out_dir,
    })


PRESETS = {"full": Config, "desk": desk_config}


def apply_overrides(cfg, overrides):
    """Apply ``section.key=value`` strings; values are parsed as YAML scalars/lists."""
    data = cfg.to_dict()
    for item in overrides or ():
        if "=" not in item:
            raise InvalidArgument(f"override {item!r} is not of the form key=value")
        path, raw = item.split("=", 1)
        node = data
        keys = path.strip().split(".")
        for k in keys[:-1]:
            if k not in node or not isinstance(node[k], dict):
                raise InvalidArgument(f"unknown config section {path!r}")
            node = node[k]
        if keys[-1] not in node:
            raise InvalidArgument(f"unknown config key {path!r}")
        node[keys[-1]] = yaml.safe_load(raw)
    return from_dict(data)


def load_config(path=None, overrides=(), preset="full"):
    if preset not in PRESETS:
        raise InvalidArgument(f"unknown preset {preset!r}")
    cfg = PRESETS[preset]()
    if path:
        text = Path(path).read_text()
        data = yaml.safe_load(text) or {}
        merged = _merge(cfg.to_dict(), data)
        cfg = from_dict(merged)
    return apply_overrides(cfg, overrides)


def _merge(base, extra):
    out = dict(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def save_config(cfg, path):
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))
