"""Objective terms: adversarial, L1 reconstruction, the Re-ID loss stack and their composition."""
import math
from dataclasses import asdict, dataclass, fields

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import InvalidArgument, TrainingDivergence

LAMBDA_L1 = 100.0
CENTER_WEIGHT = 5e-4
CENTER_LR = 0.5


def _check_probs(t, name):
    if torch.any(t <= 0) or torch.any(t >= 1):
        raise InvalidArgument(f"{name} scores must lie strictly inside (0, 1)")


def adv_loss_pair(d_real_scores, d_fake_scores, non_saturating=True):
    """(generator term, discriminator term) from discriminator probabilities.

    Discriminator: ``-[mean log D(real) + mean log(1 - D(fake))]``.
    Generator: ``-mean log D(fake)`` (non-saturating) or ``mean log(1 - D(fake))``.
    """
    _check_probs(d_real_scores, "real")
    _check_probs(d_fake_scores, "fake")
    d_term = -(torch.log(d_real_scores).mean() + torch.log1p(-d_fake_scores).mean())
    if non_saturating:
        g_term = -torch.log(d_fake_scores).mean()
    else:
        g_term = torch.log1p(-d_fake_scores).mean()
    return g_term, d_term


def discriminator_loss(real_logits, fake_logits):
    """Same value as the discriminator term of :func:`adv_loss_pair`, computed from logits."""
    return (F.binary_cross_entropy_with_logits(real_logits, torch.ones_like(real_logits))
            + F.binary_cross_entropy_with_logits(fake_logits, torch.zeros_like(fake_logits)))


def generator_adv_loss(fake_logits, non_saturating=True):
    if non_saturating:
        return F.binary_cross_entropy_with_logits(fake_logits, torch.ones_like(fake_logits))
    return -F.binary_cross_entropy_with_logits(fake_logits, torch.zeros_like(fake_logits))


def l1_reconstruction(pred, target):
    if pred.shape != target.shape:
        raise InvalidArgument(f"L1 shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    return (pred - target).abs().mean()


def id_loss(logits, labels, label_smoothing=0.0):
    if logits.dim() != 2:
        raise InvalidArgument("logits must be (batch, classes)")
    if labels.numel() and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise InvalidArgument(f"labels out of range for {logits.shape[1]} classes")
    return F.cross_entropy(logits, labels, label_smoothing=label_smoothing)


class CenterLoss(nn.Module):
    """Half the mean squared distance of each feature to its class centre.

    Centres are a buffer, not a parameter: they move by the classic rule
    ``c_j -= alpha * sum_i (c_j - x_i) / (1 + n_j)`` via :meth:`update`.
    """

    def __init__(self, num_classes, feat_dim, alpha=CENTER_LR):
        super().__init__()
        self.alpha = alpha
        self.register_buffer("centers", torch.zeros(num_classes, feat_dim))

    def forward(self, features, labels):
        return center_loss(features, labels, self.centers)

    @torch.no_grad()
    def update(self, features, labels):
        features = features.detach().to(self.centers.dtype)
        _check_labels(labels, self.centers.shape[0])
        for j in labels.unique():
            mask = labels == j
            diff = (self.centers[j] - features[mask]).sum(0)
            self.centers[j] -= self.alpha * diff / (1 + mask.sum())


def _check_labels(labels, n):
    if labels.numel() and (labels.min() < 0 or labels.max() >= n):
        raise InvalidArgument(f"no centre for labels outside [0, {n})")


def center_loss(features, labels, centers):
    _check_labels(labels, centers.shape[0])
    return 0.5 * (features - centers[labels]).pow(2).sum(1).mean()


def _pk_check(labels):
    _, counts = labels.unique(return_counts=True)
    if counts.numel() < 2 or counts.min() < 2:
        raise InvalidArgument("triplet batch needs >= 2 identities with >= 2 samples each")


def pairwise_distance(x):
    d2 = (x.unsqueeze(1) - x.unsqueeze(0)).pow(2).sum(-1)
    # keeps the gradient finite on the zero diagonal
    return torch.sqrt(d2.clamp(min=1e-12))


def _masked_softmax(values, mask):
    values = values.masked_fill(~mask, float("-inf"))
    return torch.softmax(values, dim=1)


def wrt_weights(dist, labels):
    same = labels.unsqueeze(0) == labels.unsqueeze(1)
    eye = torch.eye(len(labels), dtype=torch.bool, device=labels.device)
    pos = same & ~eye
    neg = ~same
    return _masked_softmax(dist, pos), _masked_softmax(-dist, neg)


def wrt_loss(features, labels):
    """Weighted regularization triplet loss.

    Per anchor: ``softplus(sum_p w_p d_p - sum_n w_n d_n)`` with softmax weights
    over positive distances and over negated negative distances. The anchor
    itself is not counted as a positive.
    """
    _pk_check(labels)
    dist = pairwise_distance(features)
    w_pos, w_neg = wrt_weights(dist, labels)
    far_pos = (dist * w_pos).sum(1)
    close_neg = (dist * w_neg).sum(1)
    return F.softplus(far_pos - close_neg).mean()


@dataclass
class ReidTerms:
    id: torch.Tensor
    center: torch.Tensor
    wrt: torch.Tensor

    @property
    def total(self):
        return self.id + self.center + self.wrt


def agw_loss(model, images, labels, centers, center_weight=CENTER_WEIGHT, label_smoothing=0.0):
    """id + center_weight * center + wrt on one image domain. Returns (terms, pooled features)."""
    pooled, _, logits = model(images)
    terms = ReidTerms(id=id_loss(logits, labels, label_smoothing),
                      center=center_weight * centers(pooled, labels),
                      wrt=wrt_loss(pooled, labels))
    return terms, pooled


def reid_loss(model, raw_batch, anon_batch, labels, centers, center_weight=CENTER_WEIGHT,
              label_smoothing=0.0, return_features=False):
    """Re-ID loss on hybrid input: AGW on raw images plus AGW on anonymized images."""
    if raw_batch.shape != anon_batch.shape:
        raise InvalidArgument("raw and anonymized batches must be index-aligned")
    if labels.shape[0] != raw_batch.shape[0]:
        raise InvalidArgument("labels must align with the batch")
    raw, f_raw = agw_loss(model, raw_batch, labels, centers, center_weight, label_smoothing)
    ano, f_ano = agw_loss(model, anon_batch, labels, centers, center_weight, label_smoothing)
    terms = ReidTerms(id=raw.id + ano.id, center=raw.center + ano.center, wrt=raw.wrt + ano.wrt)
    if return_features:
        return terms, torch.cat([f_raw, f_ano])
    return terms


@dataclass
class LossBundle:
    adv1: float = 0.0
    l1_ano: float = 0.0
    ano_total: float = 0.0
    adv2: float = 0.0
    l1_rec: float = 0.0
    rec_total: float = 0.0
    id: float = 0.0
    center: float = 0.0
    wrt: float = 0.0
    reid_total: float = 0.0
    grand_total: float = 0.0
    lambda_l1: float = LAMBDA_L1

    @classmethod
    def compose(cls, adv1, l1_ano, adv2, l1_rec, id, center, wrt, lambda_l1=LAMBDA_L1):
        """Build a bundle from its leaf terms; totals follow by construction."""
        ano_total = adv1 + lambda_l1 * l1_ano
        rec_total = adv2 + lambda_l1 * l1_rec
        reid_total = id + center + wrt
        b = cls(adv1, l1_ano, ano_total, adv2, l1_rec, rec_total, id, center, wrt,
                reid_total, 0.0, lambda_l1)
        b.grand_total = total_objective(b)
        return b

    def as_dict(self):
        return asdict(self)

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


def total_objective(bundle):
    parts = (bundle.ano_total, bundle.rec_total, bundle.reid_total)
    for name, v in zip(("ano_total", "rec_total", "reid_total"), parts):
        v = float(v)
        if math.isnan(v) or math.isinf(v):
            raise TrainingDivergence(f"non-finite loss component {name} = {v}")
    return bundle.ano_total + bundle.rec_total + bundle.reid_total
