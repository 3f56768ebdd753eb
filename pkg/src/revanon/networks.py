"""Anonymization/recovery generators, conditional patch discriminators and the Re-ID model."""
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import InvalidArgument


@dataclass
class GeneratorConfig:
    base_width: int = 32
    depth: int = 4
    norm: str = "batch"
    dropout: float = 0.0
    image_size: tuple = (64, 32)
    channels: int = 3


@dataclass
class DiscriminatorConfig:
    base_width: int = 32
    n_layers: int = 2
    norm: str = "batch"


@dataclass
class ReidConfig:
    backbone: str = "small"  # "small" | "resnet50"
    widths: tuple = (32, 64, 128, 256)
    last_stride: int = 1
    num_classes: int = 8
    gem_p: float = 3.0
    pretrained: bool = False


def _norm(kind, ch):
    if kind == "batch":
        return nn.BatchNorm2d(ch)
    if kind == "instance":
        return nn.InstanceNorm2d(ch, affine=True)
    if kind == "none":
        return nn.Identity()
    raise InvalidArgument(f"unknown norm {kind!r}")


def init_gan_weights(module, std=0.02):
    """Zero-mean Gaussian init (scale 0.02) for conv weights, N(1, 0.02) for norm gains."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.normal_(m.weight, 0.0, std)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, (nn.BatchNorm2d, nn.InstanceNorm2d)) and m.affine:
            nn.init.normal_(m.weight, 1.0, std)
            nn.init.zeros_(m.bias)


class UNetGenerator(nn.Module):
    """Encoder-decoder with skip connections; sigmoid output keeps pixels in [0, 1]."""

    def __init__(self, cfg=None):
        super().__init__()
        cfg = cfg or GeneratorConfig()
        self.cfg = cfg
        h, w = cfg.image_size
        if h % 2 ** cfg.depth or w % 2 ** cfg.depth:
            raise InvalidArgument(f"image size {cfg.image_size} not divisible by 2^{cfg.depth}")
        widths = [cfg.base_width * min(2 ** i, 8) for i in range(cfg.depth)]
        self.down = nn.ModuleList()
        in_ch = cfg.channels
        for i, out_ch in enumerate(widths):
            layers = [] if i == 0 else [nn.LeakyReLU(0.2)]
            layers.append(nn.Conv2d(in_ch, out_ch, 4, 2, 1, bias=cfg.norm != "batch"))
            if 0 < i < cfg.depth - 1:
                layers.append(_norm(cfg.norm, out_ch))
            self.down.append(nn.Sequential(*layers))
            in_ch = out_ch
        self.up = nn.ModuleList()
        for i in reversed(range(cfg.depth)):
            out_ch = widths[i - 1] if i > 0 else cfg.channels
            up_in = widths[i] if i == cfg.depth - 1 else widths[i] * 2
            layers = [nn.ReLU(), nn.ConvTranspose2d(up_in, out_ch, 4, 2, 1)]
            if i > 0:
                layers.append(_norm(cfg.norm, out_ch))
                if cfg.dropout:
                    layers.append(nn.Dropout(cfg.dropout))
            self.up.append(nn.Sequential(*layers))
        init_gan_weights(self)

    def forward(self, x):
        c = self.cfg
        if x.dim() != 4 or x.shape[1] != c.channels or tuple(x.shape[2:]) != tuple(c.image_size):
            raise InvalidArgument(
                f"generator expects (N, {c.channels}, {c.image_size[0]}, {c.image_size[1]}), "
                f"got {tuple(x.shape)}")
        skips = []
        for layer in self.down:
            x = layer(x)
            skips.append(x)
        skips.pop()
        for layer in self.up:
            x = layer(x)
            if skips:
                x = torch.cat([x, skips.pop()], dim=1)
        return torch.sigmoid(x)


class IdentityGenerator(nn.Module):
    """Pass-through stand-in used for sanity checks of the recovery evaluation."""

    def forward(self, x):
        return x


def generate(gen, x):
    return gen(x)


class PatchDiscriminator(nn.Module):
    """Conditional patch discriminator over the 6-channel (condition, candidate) pair."""

    def __init__(self, cfg=None, channels=3):
        super().__init__()
        cfg = cfg or DiscriminatorConfig()
        self.cfg = cfg
        w = cfg.base_width
        layers = [nn.Conv2d(2 * channels, w, 4, 2, 1), nn.LeakyReLU(0.2)]
        ch = w
        for i in range(1, cfg.n_layers):
            nxt = w * min(2 ** i, 8)
            layers += [nn.Conv2d(ch, nxt, 4, 2, 1, bias=cfg.norm != "batch"),
                       _norm(cfg.norm, nxt), nn.LeakyReLU(0.2)]
            ch = nxt
        nxt = w * min(2 ** cfg.n_layers, 8)
        layers += [nn.Conv2d(ch, nxt, 4, 1, 1, bias=cfg.norm != "batch"),
                   _norm(cfg.norm, nxt), nn.LeakyReLU(0.2),
                   nn.Conv2d(nxt, 1, 4, 1, 1)]
        self.net = nn.Sequential(*layers)
        init_gan_weights(self)

    def logits(self, condition, candidate):
        if condition.shape != candidate.shape:
            raise InvalidArgument(
                f"condition {tuple(condition.shape)} and candidate {tuple(candidate.shape)} differ")
        return self.net(torch.cat([condition, candidate], dim=1))

    def forward(self, condition, candidate):
        return torch.sigmoid(self.logits(condition, candidate))

    def score_shape(self, h, w):
        """Spatial size of the score map for an h x w input."""
        for _ in range(self.cfg.n_layers):
            h, w = h // 2, w // 2
        return h - 2, w - 2


def discriminate(disc, condition, candidate):
    return disc(condition, candidate)


class GeM(nn.Module):
    """Generalized-mean pooling with a learnable exponent."""

    def __init__(self, p=3.0, eps=1e-6, learnable=True):
        super().__init__()
        p = torch.tensor(float(p))
        self.p = nn.Parameter(p) if learnable else p
        self.eps = eps

    def forward(self, x):
        p = self.p
        return x.clamp(min=self.eps).pow(p).mean(dim=(2, 3)).pow(1.0 / p)


class SmallBackbone(nn.Module):
    """Four conv stages with stride 2 except the last, whose stride is configurable."""

    def __init__(self, widths=(32, 64, 128, 256), last_stride=1):
        super().__init__()
        stages, in_ch = [], 3
        for i, w in enumerate(widths):
            stride = last_stride if i == len(widths) - 1 else 2
            stages.append(nn.Sequential(
                nn.Conv2d(in_ch, w, 3, stride, 1, bias=False), nn.BatchNorm2d(w), nn.ReLU(),
                nn.Conv2d(w, w, 3, 1, 1, bias=False), nn.BatchNorm2d(w), nn.ReLU()))
            in_ch = w
        self.stages = nn.Sequential(*stages)
        self.out_channels = in_ch
        for m in self.modules():
            if isinstance(m, nn.Conv2d):
                nn.init.kaiming_normal_(m.weight, mode="fan_out", nonlinearity="relu")

    def forward(self, x):
        return self.stages(x)


class ResNet50Backbone(nn.Module):
    def __init__(self, last_stride=1, pretrained=False):
        super().__init__()
        import torchvision

        weights = "IMAGENET1K_V1" if pretrained else None
        net = torchvision.models.resnet50(weights=weights)
        if last_stride == 1:
            net.layer4[0].conv2.stride = (1, 1)
            net.layer4[0].downsample[0].stride = (1, 1)
        self.body = nn.Sequential(net.conv1, net.bn1, net.relu, net.maxpool,
                                  net.layer1, net.layer2, net.layer3, net.layer4)
        self.out_channels = 2048

    def forward(self, x):
        return self.body(x)


def build_backbone(cfg):
    if cfg.backbone == "small":
        return SmallBackbone(cfg.widths, cfg.last_stride)
    if cfg.backbone == "resnet50":
        return ResNet50Backbone(cfg.last_stride, cfg.pretrained)
    raise InvalidArgument(f"unknown backbone {cfg.backbone!r}")


class ReidModel(nn.Module):
    """Backbone -> GeM -> BNNeck -> linear identity classifier."""

    def __init__(self, cfg=None):
        super().__init__()
        cfg = cfg or ReidConfig()
        self.cfg = cfg
        self.backbone = build_backbone(cfg)
        dim = self.backbone.out_channels
        self.pool = GeM(cfg.gem_p)
        self.bnneck = nn.BatchNorm1d(dim)
        self.bnneck.bias.requires_grad_(False)
        self.classifier = nn.Linear(dim, cfg.num_classes, bias=False)
        nn.init.normal_(self.classifier.weight, std=0.001)
        self.embed_dim = dim

    def forward(self, x):
        """Returns (pooled feature, BNNeck feature, identity logits)."""
        if x.dim() != 4 or x.shape[1] != 3:
            raise InvalidArgument(f"Re-ID model expects (N, 3, H, W), got {tuple(x.shape)}")
        pooled = self.pool(self.backbone(x))
        bn = self.bnneck(pooled)
        return pooled, bn, self.classifier(bn)


def reid_embed(model, x):
    return model(x)


def parameter_checksum(module):
    """Order-dependent sum used to confirm a module was not modified."""
    total = 0.0
    for i, t in enumerate(module.state_dict().values()):
        if t.is_floating_point():
            total += (i + 1) * float(t.double().sum())
    return total
