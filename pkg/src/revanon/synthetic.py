"""Synthetic pedestrian corpus for desk-scale runs.

Each identity has its own hair, shirt and trouser colours, a shirt pattern
and a face layout; each camera has its own background tone and illumination.
Files are written in the Market-1501 naming scheme ``<pid>_c<cam>s1_<n>_00.png``.
"""
from pathlib import Path

import numpy as np

from .imaging import save_image

PALETTE = np.array([
    [0.85, 0.15, 0.15], [0.15, 0.35, 0.85], [0.15, 0.70, 0.25], [0.90, 0.80, 0.15],
    [0.60, 0.20, 0.70], [0.95, 0.55, 0.10], [0.10, 0.75, 0.75], [0.90, 0.90, 0.90],
    [0.20, 0.20, 0.20], [0.55, 0.35, 0.20], [0.95, 0.45, 0.70], [0.45, 0.55, 0.15],
])


def identity_traits(pid, rng):
    shirt, trousers = rng.choice(len(PALETTE), 2, replace=False)
    return {
        "shirt": PALETTE[shirt],
        "trousers": PALETTE[trousers],
        "hair": rng.uniform(0.05, 0.6, 3),
        "skin": np.array([0.92, 0.75, 0.62]) * rng.uniform(0.6, 1.0),
        "pattern": int(rng.integers(0, 4)),
        "period": int(rng.integers(3, 7)),
        "eye_gap": int(rng.integers(2, 4)),
        "width": rng.uniform(0.55, 0.75),
    }


def camera_traits(cam, rng):
    return {
        "bg": rng.uniform(0.25, 0.75, 3),
        "gain": rng.uniform(0.8, 1.15),
        "tint": rng.uniform(-0.05, 0.05, 3),
    }


def render(traits, cam, rng, size=(64, 32)):
    h, w = size
    img = np.empty((h, w, 3))
    yy, xx = np.mgrid[0:h, 0:w] / np.array([h, w])[:, None, None]
    img[:] = cam["bg"] * (0.85 + 0.3 * yy[..., None])
    img += 0.06 * np.sin(xx * rng.uniform(6, 14) + rng.uniform(0, 6))[..., None]

    s = h / 64.0
    cx = w / 2 + rng.uniform(-2, 2) * s
    top = rng.uniform(-1.5, 1.5) * s
    half = traits["width"] * w / 2

    def band(r0, r1, c0, c1):
        r0, r1 = int(round(top + r0 * s)), int(round(top + r1 * s))
        return slice(max(r0, 0), max(min(r1, h), 0)), slice(max(int(round(c0)), 0), min(int(round(c1)), w))

    # head and face
    hr, hc = band(3, 15, cx - 5 * s, cx + 5 * s)
    img[hr, hc] = traits["skin"]
    img[band(2, 6, cx - 5.5 * s, cx + 5.5 * s)] = traits["hair"]
    g = traits["eye_gap"] * s
    for ex in (cx - g, cx + g):
        img[band(8, 10, ex - 1, ex + 1)] = 0.1
    img[band(12, 13, cx - 2 * s, cx + 2 * s)] = [0.6, 0.2, 0.2]

    # shirt with identity pattern
    sr, sc = band(15, 38, cx - half, cx + half)
    shirt = np.broadcast_to(traits["shirt"], img[sr, sc].shape).copy()
    ry, rx = np.mgrid[0:shirt.shape[0], 0:shirt.shape[1]]
    p = traits["period"]
    if traits["pattern"] == 1:
        shirt[(ry // p) % 2 == 0] *= 0.55
    elif traits["pattern"] == 2:
        shirt[(rx // p) % 2 == 0] *= 0.55
    elif traits["pattern"] == 3:
        shirt[((ry // p) + (rx // p)) % 2 == 0] *= 0.55
    img[sr, sc] = shirt

    # legs
    leg = half * 0.45
    stride = rng.uniform(-1.5, 1.5) * s
    img[band(38, 61, cx - half * 0.9 - stride, cx - half * 0.9 + 2 * leg - stride)] = traits["trousers"]
    img[band(38, 61, cx + half * 0.9 - 2 * leg + stride, cx + half * 0.9 + stride)] = traits["trousers"]

    img = img * cam["gain"] + cam["tint"]
    img += rng.normal(0, 0.02, img.shape)
    return np.clip(img, 0.0, 1.0)


def make_toy_corpus(root, n_ids=8, per_id=25, n_cams=4, size=(64, 32), seed=0,
                    subdir="bounding_box_train"):
    """Render ``n_ids * per_id`` images under ``root/subdir``; returns the file paths."""
    rng = np.random.default_rng(seed)
    out_dir = Path(root) / subdir
    out_dir.mkdir(parents=True, exist_ok=True)
    cams = [camera_traits(c, rng) for c in range(n_cams)]
    paths = []
    for pid in range(1, n_ids + 1):
        traits = identity_traits(pid, rng)
        for n in range(per_id):
            cam = n % n_cams
            img = render(traits, cams[cam], rng, size)
            p = out_dir / f"{pid:04d}_c{cam + 1}s1_{n:06d}_00.png"
            save_image(p, img)
            paths.append(p)
    return paths
