"""Progressive supervision upgradation.

Supervision targets start as desensitized images. After each validation pass
the generator's outputs replace them only when both gates pass:

* privacy: anonymized-vs-raw PSNR and SSIM stay below the desensitized
  baselines plus ``eps_psnr`` / ``eps_ssim``;
* retrieval: rank-1 with raw queries against an anonymized gallery beats
  the best rank-1 seen so far (initialised to ``r1_raw_des - eps_r1``).
"""
from dataclasses import dataclass, field, replace

import torch

from .errors import InvalidArgument

KEPT = "kept"
UPGRADED = "upgraded"


@dataclass(frozen=True)
class UpgradeState:
    psnr_des: float
    ssim_des: float
    max_r1: float
    eps_psnr: float = 1.0
    eps_ssim: float = 0.05
    eps_r1: float = 0.05
    upgrade_count: int = 0
    last_decision: str = KEPT


@dataclass(frozen=True)
class ValidationSnapshot:
    psnr_ano: float
    ssim_ano: float
    r1_raw_ano: float


def init_state(r1_raw_des, psnr_des, ssim_des, eps=(1.0, 0.05, 0.05)):
    """``eps`` is ``(eps_psnr, eps_ssim, eps_r1)``."""
    if not 0.0 <= r1_raw_des <= 1.0:
        raise InvalidArgument(f"rank-1 must be in [0, 1], got {r1_raw_des}")
    eps_psnr, eps_ssim, eps_r1 = eps
    return UpgradeState(psnr_des=psnr_des, ssim_des=ssim_des, max_r1=r1_raw_des - eps_r1,
                        eps_psnr=eps_psnr, eps_ssim=eps_ssim, eps_r1=eps_r1)


def privacy_ok(state, snap):
    return (snap.psnr_ano < state.psnr_des + state.eps_psnr
            and snap.ssim_ano < state.ssim_des + state.eps_ssim)


def reid_ok(state, snap):
    return snap.r1_raw_ano > state.max_r1


def check(state, snap):
    """Return ``(decision, new_state)``; a kept decision leaves the state untouched."""
    if privacy_ok(state, snap) and reid_ok(state, snap):
        return UPGRADED, replace(state, max_r1=snap.r1_raw_ano,
                                 upgrade_count=state.upgrade_count + 1,
                                 last_decision=UPGRADED)
    return KEPT, state


def desensitized_tag():
    return "desensitized"


def upgraded_tag(epoch):
    return f"upgraded@{epoch}"


@dataclass
class SupervisionStore:
    """Current target image per training sample, ``(N, 3, H, W)`` in [0, 1]."""
    targets: torch.Tensor
    tags: list = field(default_factory=list)

    def __post_init__(self):
        if not self.tags:
            self.tags = [desensitized_tag()] * len(self.targets)
        if len(self.tags) != len(self.targets):
            raise InvalidArgument("one tag per target required")

    def __len__(self):
        return len(self.targets)

    def __getitem__(self, idx):
        return self.targets[idx]


@torch.no_grad()
def regenerate(gen, images, batch_size=64):
    was_training = gen.training
    gen.eval()
    try:
        out = [gen(images[i:i + batch_size]) for i in range(0, len(images), batch_size)]
    finally:
        gen.train(was_training)
    return torch.cat(out) if out else images[:0].clone()


def apply_upgrade(store, gen, images, epoch, batch_size=64):
    """Return a new store whose targets are the frozen generator's outputs.

    All targets are computed before anything is replaced, so a failure part
    way through leaves ``store`` as it was.
    """
    if len(images) != len(store):
        raise InvalidArgument("training images and supervision store differ in length")
    new_targets = regenerate(gen, images, batch_size)
    if not torch.all(torch.isfinite(new_targets)):
        raise InvalidArgument("generator produced non-finite targets; upgrade aborted")
    return SupervisionStore(new_targets.detach().clone(), [upgraded_tag(epoch)] * len(store))


@dataclass
class UpgradeEvent:
    epoch: int
    psnr_ano: float
    ssim_ano: float
    r1_raw_ano: float
    decision: str
    max_r1: float
