"""Query/gallery evaluation over original and protected images, recovery quality, exports."""
import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import metrics
from .imaging import list_images, load_image, save_image
from .pipeline import embed, to_images, to_tensor, translate

log = logging.getLogger(__name__)

LOSSY_SUFFIXES = {".jpg", ".jpeg"}


@dataclass(frozen=True)
class EvalSetting:
    query_domain: str
    gallery_domain: str

    @property
    def name(self):
        return f"query={self.query_domain},gallery={self.gallery_domain}"


SETTINGS = (EvalSetting("OI", "OI"), EvalSetting("OI", "PI"),
            EvalSetting("PI", "OI"), EvalSetting("PI", "PI"))
ORIGINAL, CROSSED_OI_PI, CROSSED_PI_OI, PROTECTED = SETTINGS


def evaluate_four_settings(models, ws, cross_camera=True, psnr_cap=None):
    """One :class:`metrics.EvalReport` per setting.

    Protected images come from the anonymization generator applied to the
    original validation images. PSNR/SSIM fields hold the mean fidelity of the
    protected images to the originals for settings that involve them.
    """
    domains = {
        "OI": {"query": ws.query.raw, "gallery": ws.gallery.raw},
        "PI": {"query": translate(models.gx, ws.query.raw),
               "gallery": translate(models.gx, ws.gallery.raw)},
    }
    feats = {(d, role): embed(models.reid, imgs)
             for d, roles in domains.items() for role, imgs in roles.items()}
    pi_all = torch.cat([domains["PI"]["gallery"], domains["PI"]["query"]])
    oi_all = torch.cat([ws.gallery.raw, ws.query.raw])
    pairs = list(zip(to_images(pi_all), to_images(oi_all)))
    pi_psnr = float(np.mean([metrics.psnr(a, b) if psnr_cap is None
                             else min(metrics.psnr(a, b), psnr_cap) for a, b in pairs]))
    pi_ssim = float(np.mean([metrics.ssim(a, b) for a, b in pairs]))
    reports = {}
    for s in SETTINGS:
        rep = metrics.evaluate_retrieval(
            feats[(s.query_domain, "query")], feats[(s.gallery_domain, "gallery")],
            ws.query.ids, ws.query.cams, ws.gallery.ids, ws.gallery.cams,
            cross_camera=cross_camera, name=s.name)
        if "PI" in (s.query_domain, s.gallery_domain):
            rep.psnr, rep.ssim = pi_psnr, pi_ssim
        else:
            rep.psnr, rep.ssim = float("inf"), 1.0
        reports[s] = rep
    return reports


def full_cmc(models, ws, setting):
    """CMC over every gallery rank, for plotting."""
    q = ws.query.raw if setting.query_domain == "OI" else translate(models.gx, ws.query.raw)
    g = ws.gallery.raw if setting.gallery_domain == "OI" else translate(models.gx, ws.gallery.raw)
    dist = metrics.euclidean_distance(embed(models.reid, q), embed(models.reid, g))
    ranked = metrics.rank_list(dist, ws.query.ids, ws.query.cams, ws.gallery.ids, ws.gallery.cams)
    return metrics.cmc(ranked.flags, ks=range(1, len(ws.gallery.ids) + 1))


def recover(models, images):
    return translate(models.gy, translate(models.gx, images))


def evaluate_recovery(models, ws, psnr_cap=60.0, per_image=False):
    """Mean PSNR/SSIM of G_Y(G_X(x)) against x over the validation images."""
    raw = ws.val_raw
    rec = recover(models, raw)
    ps, ss = [], []
    for a, b in zip(to_images(rec), to_images(raw)):
        ps.append(min(metrics.psnr(a, b), psnr_cap))
        ss.append(metrics.ssim(a, b))
    if per_image:
        return ps, ss
    return float(np.mean(ps)), float(np.mean(ss))


def _out_name(path):
    return path.with_suffix(".png").name if path.suffix.lower() in LOSSY_SUFFIXES else path.name


def translate_dir(gen, in_dir, out_dir, image_size):
    """Translate every image in ``in_dir`` and write it losslessly under ``out_dir``.

    Returns ``(written, failed)``. Images are resized to the generator's size.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = failed = 0
    for p in list_images(in_dir):
        try:
            img = load_image(p, tuple(image_size))
        except OSError as exc:
            log.warning("skipping unreadable %s: %s", p, exc)
            failed += 1
            continue
        out = to_images(translate(gen, to_tensor([img])))[0]
        save_image(out_dir / _out_name(p), out)
        written += 1
    return written, failed


def anonymize_dir(models, in_dir, out_dir, image_size):
    return translate_dir(models.gx, in_dir, out_dir, image_size)


def recover_dir(models, in_dir, out_dir, image_size):
    return translate_dir(models.gy, in_dir, out_dir, image_size)


def export_embeddings(models, ws, path):
    """BNNeck features of validation images in both domains, one CSV row per (image, domain)."""
    samples = ws.gallery.samples + ws.query.samples
    parts = ["gallery"] * len(ws.gallery.samples) + ["query"] * len(ws.query.samples)
    raw = ws.val_raw
    feats = {"raw": embed(models.reid, raw), "protected": embed(models.reid, translate(models.gx, raw))}
    dim = feats["raw"].shape[1]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "person_id", "camera_id", "partition", "domain"]
                   + [f"f{i}" for i in range(dim)])
        for domain, f in feats.items():
            for s, part, vec in zip(samples, parts, f):
                w.writerow([s.path, s.person_id, s.camera_id, part, domain]
                           + [repr(float(v)) for v in vec])
                rows += 1
    return rows


def read_embeddings(path):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        meta, vecs = [], []
        for row in r:
            meta.append({"path": row[0], "person_id": int(row[1]), "camera_id": int(row[2]),
                         "partition": row[3], "domain": row[4]})
            vecs.append([float(v) for v in row[5:]])
    return meta, np.asarray(vecs).reshape(len(meta), len(header) - 5)
