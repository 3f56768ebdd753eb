"""Baseline Re-ID pretraining and the joint anonymization / recovery / Re-ID training loop."""
import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import metrics
from .checkpoint import Models, build_models, save_checkpoint
from .data import make_splits, pk_batches, scan_dir, SplitSpec, identity_index
from .errors import InvalidArgument, TrainingDivergence
from .imaging import desensitize
from .losses import (LossBundle, agw_loss, discriminator_loss, generator_adv_loss,
                     l1_reconstruction, reid_loss)
from .upgradation import (UPGRADED, SupervisionStore, UpgradeEvent, ValidationSnapshot,
                          apply_upgrade, check, init_state)

log = logging.getLogger(__name__)


def lr_at_epoch(epoch, sched):
    """Learning rate for 1-indexed ``epoch``.

    Linear per-epoch warmup from ``warmup_start`` (epoch 1) to ``base_lr``
    (epoch ``warmup_epochs``), then absolute step drops at each decay epoch.
    """
    if epoch < 1:
        raise InvalidArgument(f"epochs are 1-indexed, got {epoch}")
    if epoch <= sched.warmup_epochs:
        if sched.warmup_epochs == 1:
            return sched.base_lr
        frac = (epoch - 1) / (sched.warmup_epochs - 1)
        return sched.warmup_start + frac * (sched.base_lr - sched.warmup_start)
    lr = sched.base_lr
    for start, value in zip(sched.decay_epochs, sched.decay_lrs):
        if epoch >= start:
            lr = value
    return lr


def derive_seed(*parts):
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def seed_everything(seed, deterministic=True):
    torch.manual_seed(seed)
    np.random.seed(seed % 2 ** 32)
    if deterministic:
        torch.use_deterministic_algorithms(True)


def to_tensor(images):
    arr = np.stack(images).astype(np.float32).transpose(0, 3, 1, 2)
    return torch.from_numpy(np.ascontiguousarray(arr))


def to_images(t):
    return t.detach().cpu().double().numpy().transpose(0, 2, 3, 1)


@dataclass
class Partition:
    samples: list
    raw: torch.Tensor
    des: torch.Tensor
    ids: np.ndarray
    cams: np.ndarray


@dataclass
class Workspace:
    cfg: object
    split: SplitSpec
    class_map: dict
    train: Partition
    gallery: Partition
    query: Partition

    @property
    def train_labels(self):
        return torch.as_tensor([self.class_map[p] for p in self.train.ids], dtype=torch.long)

    @property
    def val_raw(self):
        return torch.cat([self.gallery.raw, self.query.raw])

    @property
    def val_des(self):
        return torch.cat([self.gallery.des, self.query.des])


def _partition(samples, cfg, seed_offset):
    method = cfg.desensitize.method()
    raw, des = [], []
    for i, s in enumerate(samples):
        img = s.load(tuple(cfg.data.image_size))
        raw.append(img)
        des.append(desensitize(img, method, seed=derive_seed(cfg.desensitize.seed, seed_offset, i)))
    if not samples:
        raise InvalidArgument("empty partition")
    return Partition(samples, to_tensor(raw), to_tensor(des),
                     np.array([s.person_id for s in samples]),
                     np.array([s.camera_id for s in samples]))


def load_split(cfg):
    if cfg.data.manifest and Path(cfg.data.manifest).exists():
        return SplitSpec.load(cfg.data.manifest)
    samples = scan_dir(Path(cfg.data.root) / cfg.data.train_dir)
    if not samples:
        raise InvalidArgument(f"no images under {Path(cfg.data.root) / cfg.data.train_dir}")
    return make_splits(samples, cfg.data.split_seed)


def prepare_workspace(cfg, split=None):
    """Load, resize and desensitize every image of the split.

    ``cfg.model.reid.num_classes`` is set to the number of training identities.
    """
    split = split or load_split(cfg)
    class_map = identity_index(split.train)
    if cfg.model.reid.num_classes != len(class_map):
        log.info("setting reid.num_classes to %d training identities", len(class_map))
        cfg.model.reid.num_classes = len(class_map)
    return Workspace(cfg, split, class_map,
                     train=_partition(split.train, cfg, 0),
                     gallery=_partition(split.val_gallery, cfg, 1),
                     query=_partition(split.val_query, cfg, 2))


@torch.no_grad()
def translate(gen, images, batch_size=128):
    was = gen.training
    gen.eval()
    try:
        return torch.cat([gen(images[i:i + batch_size]) for i in range(0, len(images), batch_size)])
    finally:
        gen.train(was)


@torch.no_grad()
def embed(reid, images, batch_size=128):
    """BNNeck features (the retrieval embedding) in eval mode."""
    was = reid.training
    reid.eval()
    try:
        return torch.cat([reid(images[i:i + batch_size])[1]
                          for i in range(0, len(images), batch_size)]).double().numpy()
    finally:
        reid.train(was)


def rank1(reid, query_imgs, gallery_imgs, ws):
    rep = metrics.evaluate_retrieval(embed(reid, query_imgs), embed(reid, gallery_imgs),
                                     ws.query.ids, ws.query.cams, ws.gallery.ids, ws.gallery.cams)
    return rep.rank1


def image_scores(pred, ref, psnr_cap):
    return metrics.mean_image_scores(zip(to_images(pred), to_images(ref)), psnr_cap)


def _finite(loss, name):
    if not torch.isfinite(loss):
        raise TrainingDivergence(f"{name} became {float(loss)}")
    return loss


def _set_lr(opt, lr):
    for g in opt.param_groups:
        g["lr"] = lr


@dataclass
class Baseline:
    reid: torch.nn.Module
    centers: object
    r1_raw_des: float
    psnr_des: float
    ssim_des: float


def pretrain_baseline(cfg, ws, epochs=None):
    """Train a Re-ID model on paired raw/desensitized images and measure the upgrade baselines.

    Returns the model plus rank-1 (raw query, desensitized gallery) and the
    mean desensitized-vs-raw PSNR/SSIM over the validation images.
    """
    tc = cfg.train
    epochs = epochs or tc.pretrain_epochs or tc.epochs
    seed_everything(derive_seed(tc.seed, 1), tc.deterministic)
    models = build_models(cfg)
    reid, centers = models.reid, models.centers
    opt = torch.optim.Adam(reid.parameters(), lr=cfg.schedule.warmup_start,
                           betas=tuple(tc.reid_betas), weight_decay=tc.reid_weight_decay)
    labels = ws.train_labels
    reid.train()
    for epoch in range(1, epochs + 1):
        _set_lr(opt, lr_at_epoch(epoch, cfg.schedule))
        for idx in pk_batches(labels.numpy(), tc.P, tc.K, derive_seed(tc.seed, 2, epoch)):
            idx = torch.as_tensor(idx)
            terms, feats = reid_loss(reid, ws.train.raw[idx], ws.train.des[idx], labels[idx],
                                     centers, tc.center_weight, tc.label_smoothing,
                                     return_features=True)
            opt.zero_grad()
            _finite(terms.total, "baseline Re-ID loss").backward()
            opt.step()
            centers.update(feats, labels[idx].repeat(2))
    r1 = rank1(reid, ws.query.raw, ws.gallery.des, ws)
    psnr_des, ssim_des = image_scores(ws.val_des, ws.val_raw, tc.psnr_cap)
    return Baseline(reid, centers, r1, psnr_des, ssim_des)


def validation_snapshot(models, ws, psnr_cap=60.0):
    anon = translate(models.gx, ws.val_raw)
    psnr_ano, ssim_ano = image_scores(anon, ws.val_raw, psnr_cap)
    n_g = len(ws.gallery.raw)
    r1 = rank1(models.reid, ws.query.raw, anon[:n_g], ws)
    return ValidationSnapshot(psnr_ano, ssim_ano, r1)


@dataclass
class TrainResult:
    models: Models
    state: object
    store: SupervisionStore
    losses: list = field(default_factory=list)
    events: list = field(default_factory=list)
    step_trace: list = field(default_factory=list)
    checkpoint: Path = None
    baseline: Baseline = None


class JointTrainer:
    """Owns all mutable training state. Each batch runs D-step, G-step, Re-ID step in that order."""

    def __init__(self, cfg, ws, baseline, run_dir=None, upgrade=None):
        self.cfg, self.ws, self.baseline = cfg, ws, baseline
        tc = cfg.train
        self.upgrade = tc.upgrade if upgrade is None else upgrade
        self.run_dir = Path(run_dir) if run_dir else None
        seed_everything(derive_seed(tc.seed, 3), tc.deterministic)
        self.models = build_models(cfg)
        if tc.init_reid_from_pretrain:
            self.models.reid.load_state_dict(baseline.reid.state_dict())
            self.models.centers.centers.copy_(baseline.centers.centers)
        m = self.models
        gb, rb = tuple(tc.gen_betas), tuple(tc.reid_betas)
        lr0 = cfg.schedule.warmup_start
        self.opt_g = torch.optim.Adam(list(m.gx.parameters()) + list(m.gy.parameters()), lr0, betas=gb)
        self.opt_d = torch.optim.Adam(list(m.dx.parameters()) + list(m.dy.parameters()), lr0, betas=gb)
        self.opt_r = torch.optim.Adam(m.reid.parameters(), lr0, betas=rb,
                                      weight_decay=tc.reid_weight_decay)
        self.state = init_state(baseline.r1_raw_des, baseline.psnr_des, baseline.ssim_des,
                                (tc.eps_psnr, tc.eps_ssim, tc.eps_r1))
        self.store = SupervisionStore(ws.train.des.clone())
        self.labels = ws.train_labels
        self.losses, self.events, self.step_trace = [], [], []
        self.step = 0

    # -- per-batch updates -------------------------------------------------
    def d_step(self, x, y):
        m = self.models
        with torch.no_grad():
            fake = m.gx(x)
            rec = m.gy(fake)
        loss_y = discriminator_loss(m.dy.logits(x, y), m.dy.logits(x, fake))
        loss_x = discriminator_loss(m.dx.logits(fake, x), m.dx.logits(fake, rec))
        self.opt_d.zero_grad()
        _finite(loss_y + loss_x, "discriminator loss").backward()
        self.opt_d.step()
        self.step_trace.append("D")

    def g_step(self, x, y, labels):
        m, tc = self.models, self.cfg.train
        fake = m.gx(x)
        rec = m.gy(fake)
        adv1 = generator_adv_loss(m.dy.logits(x, fake), tc.non_saturating)
        l1_ano = l1_reconstruction(fake, y)
        adv2 = generator_adv_loss(m.dx.logits(fake, rec), tc.non_saturating)
        l1_rec = l1_reconstruction(rec, x)
        reid_path, _ = agw_loss(m.reid, fake, labels, m.centers, tc.center_weight, tc.label_smoothing)
        loss = (adv1 + tc.lambda_l1 * l1_ano) + (adv2 + tc.lambda_l1 * l1_rec) + reid_path.total
        self.opt_g.zero_grad()
        _finite(loss, "generator loss").backward()
        self.opt_g.step()
        self.step_trace.append("G")
        return fake.detach(), [v.item() for v in (adv1, l1_ano, adv2, l1_rec)]

    def reid_step(self, x, fake, labels):
        m, tc = self.models, self.cfg.train
        terms, feats = reid_loss(m.reid, x, fake, labels, m.centers, tc.center_weight,
                                 tc.label_smoothing, return_features=True)
        self.opt_r.zero_grad()
        _finite(terms.total, "Re-ID loss").backward()
        self.opt_r.step()
        m.centers.update(feats, labels.repeat(2))
        self.step_trace.append("REID")
        return [terms.id.item(), terms.center.item(), terms.wrt.item()]

    def train_epoch(self, epoch):
        tc = self.cfg.train
        lr = lr_at_epoch(epoch, self.cfg.schedule)
        for opt in (self.opt_g, self.opt_d, self.opt_r):
            _set_lr(opt, lr)
        self.models.train()
        for idx in pk_batches(self.labels.numpy(), tc.P, tc.K, derive_seed(tc.seed, 4, epoch)):
            idx = torch.as_tensor(idx)
            x, y, labels = self.ws.train.raw[idx], self.store[idx], self.labels[idx]
            self.d_step(x, y)
            fake, (adv1, l1_ano, adv2, l1_rec) = self.g_step(x, y, labels)
            id_, center, wrt = self.reid_step(x, fake, labels)
            self.step += 1
            bundle = LossBundle.compose(adv1, l1_ano, adv2, l1_rec, id_, center, wrt, tc.lambda_l1)
            self.losses.append({"epoch": epoch, "step": self.step, **bundle.as_dict()})

    def end_of_epoch(self, epoch):
        tc = self.cfg.train
        snap = validation_snapshot(self.models, self.ws, tc.psnr_cap)
        decision = "skipped"
        if self.upgrade and epoch % tc.upgrade_every == 0:
            decision, self.state = check(self.state, snap)
            if decision == UPGRADED:
                self.store = apply_upgrade(self.store, self.models.gx, self.ws.train.raw, epoch)
        event = UpgradeEvent(epoch, snap.psnr_ano, snap.ssim_ano, snap.r1_raw_ano, decision,
                             self.state.max_r1)
        self.events.append(event)
        log.info("epoch %d: psnr_ano=%.2f ssim_ano=%.3f r1=%.3f %s", epoch, snap.psnr_ano,
                 snap.ssim_ano, snap.r1_raw_ano, decision)
        return event

    def run(self, epochs=None):
        epochs = epochs or self.cfg.train.epochs
        ckpt = None
        for epoch in range(1, epochs + 1):
            self.train_epoch(epoch)
            self.end_of_epoch(epoch)
            if self.run_dir:
                ckpt = save_checkpoint(self.run_dir / "checkpoint.pt", self.cfg, self.models,
                                       epoch, self.state, self.ws.class_map)
                self.write_logs()
        return TrainResult(self.models, self.state, self.store, self.losses, self.events,
                           self.step_trace, ckpt, self.baseline)

    def write_logs(self):
        write_loss_log(self.run_dir / "losses.csv", self.losses)
        with open(self.run_dir / "upgrades.jsonl", "w") as fh:
            for ev in self.events:
                fh.write(json.dumps(asdict(ev)) + "\n")


def write_loss_log(path, records):
    keys = ["epoch", "step"] + LossBundle.field_names()
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        w.writerows(records)


def read_loss_log(path):
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def train_joint(cfg, run_dir=None, ws=None, baseline=None, upgrade=None, epochs=None):
    """Full run: workspace, baseline pretraining (unless given), joint training."""
    ws = ws or prepare_workspace(cfg)
    if run_dir:
        Path(run_dir).mkdir(parents=True, exist_ok=True)
        ws.split.save(Path(run_dir) / "split.json")
    if baseline is None:
        baseline = pretrain_baseline(cfg, ws)
        log.info("baseline: r1_raw_des=%.3f psnr_des=%.2f ssim_des=%.3f",
                 baseline.r1_raw_des, baseline.psnr_des, baseline.ssim_des)
    if run_dir:
        (Path(run_dir) / "baseline.json").write_text(json.dumps({
            "r1_raw_des": baseline.r1_raw_des, "psnr_des": baseline.psnr_des,
            "ssim_des": baseline.ssim_des}, indent=2))
    trainer = JointTrainer(cfg, ws, baseline, run_dir, upgrade)
    return trainer.run(epochs)
