"""Image fidelity (PSNR, SSIM) and retrieval (CMC, mAP, mINP) metrics."""
import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
RANKS = (1, 5, 10)


def psnr(a, b, max_val=1.0):
    """Peak signal-to-noise ratio in dB; ``inf`` for identical inputs."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidArgument(f"psnr shape mismatch: {a.shape} vs {b.shape}")
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return math.inf
    return float(10.0 * np.log10(max_val ** 2 / mse))


def gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2 * sigma ** 2))
    w = np.outer(g, g)
    return w / w.sum()


def _filter_valid(x, win):
    views = np.lib.stride_tricks.sliding_window_view(x, win.shape)
    return np.einsum("ijkl,kl->ij", views, win)


def ssim(a, b, data_range=1.0, window=SSIM_WINDOW, sigma=SSIM_SIGMA):
    """Mean SSIM over all valid window positions, averaged over channels.

    Gaussian window, ``C1 = (0.01 L)^2``, ``C2 = (0.03 L)^2``; only windows fully
    inside the image are used (no padding).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidArgument(f"ssim shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[:, :, None], b[:, :, None]
    if min(a.shape[:2]) < window:
        raise InvalidArgument(f"image {a.shape[:2]} smaller than the {window}x{window} window")
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    win = gaussian_window(window, sigma)
    scores = []
    for ch in range(a.shape[2]):
        x, y = a[:, :, ch], b[:, :, ch]
        mx, my = _filter_valid(x, win), _filter_valid(y, win)
        sxx = _filter_valid(x * x, win) - mx * mx
        syy = _filter_valid(y * y, win) - my * my
        sxy = _filter_valid(x * y, win) - mx * my
        num = (2 * mx * my + c1) * (2 * sxy + c2)
        den = (mx ** 2 + my ** 2 + c1) * (sxx + syy + c2)
        scores.append(np.mean(num / den))
    return float(np.mean(scores))


def mean_image_scores(pairs, psnr_cap=60.0):
    """Arithmetic mean PSNR/SSIM over (a, b) pairs, infinite PSNR capped."""
    ps, ss = [], []
    for a, b in pairs:
        ps.append(min(psnr(a, b), psnr_cap))
        ss.append(ssim(a, b))
    if not ps:
        raise InvalidArgument("no image pairs to score")
    return float(np.mean(ps)), float(np.mean(ss))


def euclidean_distance(query, gallery):
    q = np.asarray(query, dtype=np.float64)
    g = np.asarray(gallery, dtype=np.float64)
    d2 = (q ** 2).sum(1)[:, None] + (g ** 2).sum(1)[None, :] - 2 * q @ g.T
    return np.sqrt(np.maximum(d2, 0.0))


@dataclass
class RankResult:
    flags: list
    dropped: int = 0


def rank_list(dist, query_ids, query_cams, gallery_ids, gallery_cams, cross_camera=True):
    """Per-query match flags, gallery ordered by ascending distance.

    Gallery entries sharing both person and camera with the query are removed
    when ``cross_camera`` is set. Queries left without any true match are
    dropped and counted in ``RankResult.dropped``. Ties keep gallery order.
    """
    dist = np.asarray(dist, dtype=np.float64)
    query_ids, query_cams = np.asarray(query_ids), np.asarray(query_cams)
    gallery_ids, gallery_cams = np.asarray(gallery_ids), np.asarray(gallery_cams)
    if dist.shape != (len(query_ids), len(gallery_ids)):
        raise InvalidArgument(
            f"distance matrix {dist.shape} does not match metadata "
            f"({len(query_ids)}, {len(gallery_ids)})")
    if len(query_cams) != len(query_ids) or len(gallery_cams) != len(gallery_ids):
        raise InvalidArgument("camera ids must align with person ids")
    if not np.all(np.isfinite(dist)) or np.any(dist < 0):
        raise InvalidArgument("distances must be finite and non-negative")
    flags, dropped = [], 0
    for i in range(len(query_ids)):
        order = np.argsort(dist[i], kind="stable")
        keep = np.ones(len(order), dtype=bool)
        if cross_camera:
            keep = ~((gallery_ids[order] == query_ids[i]) & (gallery_cams[order] == query_cams[i]))
        match = (gallery_ids[order][keep] == query_ids[i]).astype(np.int64)
        if match.sum() == 0:
            dropped += 1
            continue
        flags.append(match)
    return RankResult(flags, dropped)


def cmc(flags, ks=RANKS):
    """Rank-k accuracy: share of queries whose first match sits at position <= k."""
    if len(flags) == 0:
        raise InvalidArgument("cmc needs at least one query")
    firsts = []
    for f in flags:
        hits = np.flatnonzero(np.asarray(f))
        firsts.append(hits[0] + 1 if hits.size else math.inf)
    firsts = np.asarray(firsts, dtype=np.float64)
    return {k: float(np.mean(firsts <= k)) for k in ks}


def average_precision(f):
    f = np.asarray(f)
    hits = np.flatnonzero(f)
    if hits.size == 0:
        raise InvalidArgument("average precision needs at least one match")
    return float(np.mean(np.arange(1, hits.size + 1) / (hits + 1)))


def inverse_negative_penalty(f):
    f = np.asarray(f)
    hits = np.flatnonzero(f)
    if hits.size == 0:
        raise InvalidArgument("INP needs at least one match")
    return float(hits.size / (hits[-1] + 1))


def mean_ap(flags):
    return float(np.mean([average_precision(f) for f in flags]))


def mean_inp(flags):
    return float(np.mean([inverse_negative_penalty(f) for f in flags]))


@dataclass
class EvalReport:
    rank_k: dict = field(default_factory=dict)
    mAP: float = float("nan")
    mINP: float = float("nan")
    psnr: float = float("nan")
    ssim: float = float("nan")
    num_queries: int = 0
    dropped: int = 0
    name: str = ""

    @property
    def rank1(self):
        return self.rank_k[1]

    def to_record(self):
        """Flat record; retrieval scores as percentages with one decimal."""
        rec = {"setting": self.name}
        for k in sorted(self.rank_k):
            rec[f"r{k}"] = round(100 * self.rank_k[k], 1)
        rec["mAP"] = round(100 * self.mAP, 1)
        rec["mINP"] = round(100 * self.mINP, 1)
        if math.isinf(self.psnr):
            rec["psnr"] = "inf"
        elif not math.isnan(self.psnr):
            rec["psnr"] = round(self.psnr, 2)
        if not math.isnan(self.ssim):
            rec["ssim"] = round(self.ssim, 4)
        rec["num_queries"] = self.num_queries
        rec["dropped"] = self.dropped
        return rec


def reports_to_json(reports):
    return json.dumps([r.to_record() for r in reports], indent=2)


def reports_to_csv(reports):
    records = [r.to_record() for r in reports]
    keys = []
    for rec in records:
        keys += [k for k in rec if k not in keys]
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=keys)
    writer.writeheader()
    writer.writerows(records)
    return buf.getvalue()


def evaluate_retrieval(query_feats, gallery_feats, query_ids, query_cams,
                       gallery_ids, gallery_cams, cross_camera=True, name=""):
    dist = euclidean_distance(query_feats, gallery_feats)
    ranked = rank_list(dist, query_ids, query_cams, gallery_ids, gallery_cams, cross_camera)
    if not ranked.flags:
        raise InvalidArgument("no query has a valid gallery match")
    return EvalReport(rank_k=cmc(ranked.flags), mAP=mean_ap(ranked.flags),
                      mINP=mean_inp(ranked.flags), num_queries=len(ranked.flags),
                      dropped=ranked.dropped, name=name)
