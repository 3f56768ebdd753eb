"""Single-file checkpoints for the five networks plus training state."""
import dataclasses
import os
import pickle
from dataclasses import dataclass
from pathlib import Path

import torch

from .config import from_dict
from .errors import CheckpointError
from .losses import CenterLoss
from .networks import PatchDiscriminator, ReidModel, UNetGenerator
from .upgradation import UpgradeState

FORMAT_VERSION = 1
NETWORKS = ("G_X", "G_Y", "D_X", "D_Y", "ReID")
_READ_ERRORS = (OSError, RuntimeError, EOFError, pickle.UnpicklingError)


@dataclass
class Models:
    gx: torch.nn.Module
    gy: torch.nn.Module
    dx: torch.nn.Module
    dy: torch.nn.Module
    reid: torch.nn.Module
    centers: CenterLoss

    def named(self):
        return dict(zip(NETWORKS, (self.gx, self.gy, self.dx, self.dy, self.reid)))

    def eval(self):
        for m in self.named().values():
            m.eval()
        return self

    def train(self):
        for m in self.named().values():
            m.train()
        return self


def build_models(cfg):
    mc = cfg.model
    reid = ReidModel(mc.reid)
    return Models(gx=UNetGenerator(mc.generator), gy=UNetGenerator(mc.generator),
                  dx=PatchDiscriminator(mc.discriminator), dy=PatchDiscriminator(mc.discriminator),
                  reid=reid, centers=CenterLoss(mc.reid.num_classes, reid.embed_dim,
                                                cfg.train.center_lr))


def save_checkpoint(path, cfg, models, epoch, upgrade_state=None, class_map=None):
    """Write to a temporary file and rename, so readers never see a partial archive."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format_version": FORMAT_VERSION,
        "fingerprint": cfg.fingerprint(),
        "config": cfg.to_dict(),
        "epoch": epoch,
        "networks": {k: m.state_dict() for k, m in models.named().items()},
        "centers": models.centers.centers.clone(),
        "upgrade_state": dataclasses.asdict(upgrade_state) if upgrade_state else None,
        "class_map": {str(k): v for k, v in (class_map or {}).items()},
    }
    tmp = path.with_name(path.name + ".tmp")
    torch.save(payload, tmp)
    os.replace(tmp, path)
    return path


@dataclass
class Checkpoint:
    cfg: object
    models: Models
    epoch: int
    upgrade_state: UpgradeState
    class_map: dict


def load_checkpoint(path, cfg=None):
    """Restore a checkpoint; ``cfg`` (if given) must match the stored fingerprint."""
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except _READ_ERRORS as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format in {path}")
    stored = from_dict(payload["config"])
    if stored.fingerprint() != payload["fingerprint"]:
        raise CheckpointError("checkpoint config does not match its own fingerprint")
    if cfg is not None and cfg.fingerprint() != payload["fingerprint"]:
        raise CheckpointError(
            f"config fingerprint {cfg.fingerprint()} does not match checkpoint "
            f"{payload['fingerprint']}")
    models = build_models(stored)
    for name, module in models.named().items():
        module.load_state_dict(payload["networks"][name])
    models.centers.centers.copy_(payload["centers"])
    state = UpgradeState(**payload["upgrade_state"]) if payload["upgrade_state"] else None
    class_map = {int(k): v for k, v in payload["class_map"].items()}
    return Checkpoint(stored, models.eval(), payload["epoch"], state, class_map)


def save_baseline(path, cfg, baseline):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"format_version": FORMAT_VERSION, "fingerprint": cfg.fingerprint(),
               "reid": baseline.reid.state_dict(), "centers": baseline.centers.centers.clone(),
               "r1_raw_des": baseline.r1_raw_des, "psnr_des": baseline.psnr_des,
               "ssim_des": baseline.ssim_des}
    tmp = path.with_name(path.name + ".tmp")
    torch.save(payload, tmp)
    os.replace(tmp, path)
    return path


def load_baseline(path, cfg):
    from .pipeline import Baseline

    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except _READ_ERRORS as exc:
        raise CheckpointError(f"cannot read baseline {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("fingerprint") != cfg.fingerprint():
        raise CheckpointError("baseline was trained with a different model configuration")
    models = build_models(cfg)
    models.reid.load_state_dict(payload["reid"])
    models.centers.centers.copy_(payload["centers"])
    return Baseline(models.reid, models.centers, payload["r1_raw_des"], payload["psnr_des"],
                    payload["ssim_des"])
