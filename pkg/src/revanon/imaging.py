"""Pixel-level primitives.

Images are ``float64``/``float32`` numpy arrays of shape ``(H, W, 3)`` with
values in ``[0, 1]``. The three conventional desensitizers (box blur,
pixelation, additive Gaussian noise) produce the initial supervision targets
for the anonymization generator.
"""
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import InvalidArgument

CANONICAL_SIZE = (256, 128)
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


def _check_image(img):
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise InvalidArgument(f"expected an HxWx3 image, got shape {img.shape}")
    return img


def _sample_coords(n_in, n_out):
    # half-pixel centres, edge clamped
    pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    pos = np.clip(pos, 0, n_in - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = pos - lo
    return lo, hi, frac


def resize(img, h, w):
    """Bilinear resize to ``(h, w)`` using half-pixel centre alignment."""
    img = _check_image(img)
    if h < 1 or w < 1:
        raise InvalidArgument(f"resize target must be positive, got {(h, w)}")
    if img.shape[:2] == (h, w):
        return img.copy()
    lo, hi, fr = _sample_coords(img.shape[0], h)
    rows = img[lo] * (1 - fr)[:, None, None] + img[hi] * fr[:, None, None]
    lo, hi, fr = _sample_coords(img.shape[1], w)
    out = rows[:, lo] * (1 - fr)[None, :, None] + rows[:, hi] * fr[None, :, None]
    return np.clip(out, 0.0, 1.0)


def blur(img, kernel=12, shape="box", sigma=None):
    """k x k box mean with edge replication.

    For even ``kernel`` the window covers offsets ``-k//2 .. k//2 - 1``
    (12 -> -6..+5). ``shape="gaussian"`` swaps in a Gaussian of standard
    deviation ``sigma`` (default ``kernel / 6``) truncated to the same support.
    """
    img = _check_image(img)
    if kernel < 1:
        raise InvalidArgument(f"blur kernel must be >= 1, got {kernel}")
    if kernel > img.shape[0] and kernel > img.shape[1]:
        raise InvalidArgument(
            f"blur kernel {kernel} exceeds both image dims {img.shape[:2]}")
    if kernel == 1:
        return img.copy()
    if shape == "box":
        out = ndimage.uniform_filter(img.astype(np.float64), size=(kernel, kernel, 1),
                                     mode="nearest")
    elif shape == "gaussian":
        sigma = kernel / 6.0 if sigma is None else sigma
        radius = kernel // 2
        out = ndimage.gaussian_filter(img.astype(np.float64), sigma=(sigma, sigma, 0),
                                      mode="nearest", radius=(radius, radius, 0))
    else:
        raise InvalidArgument(f"unknown blur shape {shape!r}")
    return np.clip(out, 0.0, 1.0)


def pixelate(img, block=24):
    """Replace every block x block tile by its mean. Border tiles may be smaller."""
    img = _check_image(img)
    if block < 1:
        raise InvalidArgument(f"pixel block must be >= 1, got {block}")
    if block == 1:
        return img.copy()
    h, w = img.shape[:2]
    rs = np.arange(0, h, block)
    cs = np.arange(0, w, block)
    sums = np.add.reduceat(np.add.reduceat(img.astype(np.float64), rs, axis=0), cs, axis=1)
    counts = np.outer(np.diff(np.append(rs, h)), np.diff(np.append(cs, w)))
    means = sums / counts[:, :, None]
    out = np.repeat(np.repeat(means, np.diff(np.append(rs, h)), axis=0),
                    np.diff(np.append(cs, w)), axis=1)
    return np.clip(out, 0.0, 1.0)


def gaussian_noise_sample(shape, variance, seed):
    """The raw (unclamped) noise field that :func:`add_gaussian_noise` adds."""
    if variance < 0:
        raise InvalidArgument(f"noise variance must be >= 0, got {variance}")
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, np.sqrt(variance), size=shape)


def add_gaussian_noise(img, variance=0.5, seed=0):
    img = _check_image(img)
    if variance < 0:
        raise InvalidArgument(f"noise variance must be >= 0, got {variance}")
    if variance == 0:
        return img.copy()
    noise = gaussian_noise_sample(img.shape, variance, seed)
    return np.clip(img + noise, 0.0, 1.0)


@dataclass(frozen=True)
class DesensitizeMethod:
    kind: str = "blur"
    blur_kernel: int = 12
    pixel_block: int = 24
    noise_variance: float = 0.5
    blur_shape: str = "box"

    KINDS = ("blur", "pixelate", "gaussian_noise")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise InvalidArgument(f"unknown desensitize kind {self.kind!r}")
        if self.blur_kernel < 1 or self.pixel_block < 1:
            raise InvalidArgument("blur_kernel and pixel_block must be >= 1")
        if self.noise_variance < 0:
            raise InvalidArgument("noise_variance must be >= 0")


def desensitize(img, method, seed=0):
    """Apply ``method``; ``seed`` only matters for Gaussian noise."""
    if not isinstance(method, DesensitizeMethod):
        raise InvalidArgument(f"expected a DesensitizeMethod, got {type(method).__name__}")
    if method.kind == "blur":
        return blur(img, method.blur_kernel, shape=method.blur_shape)
    if method.kind == "pixelate":
        return pixelate(img, method.pixel_block)
    return add_gaussian_noise(img, method.noise_variance, seed)


def to_uint8(img):
    return np.clip(np.round(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)


def from_uint8(arr):
    return np.asarray(arr, dtype=np.float64) / 255.0


def load_image(path, size=None):
    with Image.open(path) as im:
        img = from_uint8(np.asarray(im.convert("RGB")))
    if size is not None:
        img = resize(img, *size)
    return img


def save_image(path, img):
    """Write losslessly (PNG unless the suffix says otherwise)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(img)).save(path)


def list_images(directory):
    directory = Path(directory)
    if not directory.is_dir():
        return []
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
