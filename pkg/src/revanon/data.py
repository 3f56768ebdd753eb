"""Market-1501 style ingestion, validation splits and PK batch iteration."""
import json
import logging
import math
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidArgument
from .imaging import list_images, load_image

log = logging.getLogger(__name__)

_NAME = re.compile(r"^(-?\d+)_c(\d+)")
DISTRACTOR = -1
JUNK = 0


@dataclass(frozen=True)
class LabeledImage:
    path: str
    person_id: int
    camera_id: int

    def load(self, size=None):
        return load_image(self.path, size)


def parse_filename(name):
    """``"0002_c1s1_000451_03.jpg" -> (2, 1)``.

    Person id ``-1`` marks distractors and ``0`` junk; callers drop both via
    :func:`is_excluded`.
    """
    m = _NAME.match(Path(name).name)
    if not m:
        raise FormatError(f"cannot parse person/camera id from file name {name!r}")
    return int(m.group(1)), int(m.group(2))


def is_excluded(person_id):
    return person_id in (DISTRACTOR, JUNK)


def scan_dir(directory, keep_excluded=False):
    out = []
    for p in list_images(directory):
        pid, cam = parse_filename(p.name)
        if is_excluded(pid) and not keep_excluded:
            continue
        out.append(LabeledImage(str(p), pid, cam))
    return out


@dataclass
class SplitSpec:
    train: list
    val_gallery: list
    val_query: list
    seed: int
    report: dict = field(default_factory=dict)

    def partitions(self):
        return {"train": self.train, "val_gallery": self.val_gallery, "val_query": self.val_query}

    def to_manifest(self):
        data = {"seed": self.seed, "report": self.report}
        for name, items in self.partitions().items():
            data[name] = [asdict(s) for s in items]
        return json.dumps(data, indent=2, sort_keys=True)

    def save(self, path):
        Path(path).write_text(self.to_manifest())

    @classmethod
    def from_manifest(cls, text):
        data = json.loads(text)
        parts = {k: [LabeledImage(**s) for s in data[k]]
                 for k in ("train", "val_gallery", "val_query")}
        return cls(seed=data["seed"], report=data.get("report", {}), **parts)

    @classmethod
    def load(cls, path):
        return cls.from_manifest(Path(path).read_text())


def _pick_query(val, n_query):
    """Choose query images so that the remaining gallery keeps another camera if possible."""
    chosen = []
    for s in val:
        if len(chosen) == n_query:
            break
        rest_cams = {t.camera_id for t in val if t is not s and t not in chosen}
        if rest_cams - {s.camera_id}:
            chosen.append(s)
    for s in val:
        if len(chosen) == n_query:
            break
        if s not in chosen:
            chosen.append(s)
    return chosen


def make_splits(samples, seed=0):
    """Per-identity image-level 4:1 train/val split, then 4:1 gallery/query inside val.

    Validation takes ``ceil(n/5)`` images of an identity with ``n`` images and
    the query takes ``ceil(m/5)`` of the ``m`` validation images. A single
    validation image goes to the gallery, since a lone query could never match.
    """
    by_id = {}
    for s in samples:
        by_id.setdefault(s.person_id, []).append(s)
    if len(by_id) < 2:
        raise InvalidArgument("splitting needs at least two identities")
    rng = np.random.default_rng(seed)
    train, gallery, query = [], [], []
    single_image, single_camera = [], []
    for pid in sorted(by_id):
        items = sorted(by_id[pid], key=lambda s: s.path)
        items = [items[i] for i in rng.permutation(len(items))]
        if len({s.camera_id for s in items}) < 2:
            single_camera.append(pid)
        if len(items) == 1:
            log.warning("identity %d has a single image; kept in train only", pid)
            single_image.append(pid)
            train.extend(items)
            continue
        n_val = math.ceil(len(items) / 5)
        val, tr = items[:n_val], items[n_val:]
        train.extend(tr)
        n_query = math.ceil(n_val / 5) if n_val > 1 else 0
        q = _pick_query(val, n_query)
        query.extend(q)
        gallery.extend(s for s in val if s not in q)
    report = {"identities": len(by_id), "single_image_ids": single_image,
              "single_camera_ids": single_camera}
    return SplitSpec(train, gallery, query, seed, report)


def identity_index(samples):
    """Map person ids to contiguous class labels ``0..C-1`` (sorted order)."""
    return {pid: i for i, pid in enumerate(sorted({s.person_id for s in samples}))}


@dataclass
class PairedBatch:
    indices: np.ndarray
    raw: object
    supervision: object
    labels: object
    P: int
    K: int


def pk_batches(labels, P, K, seed):
    """Index batches of P identities x K instances.

    Every identity's images are shuffled and cut into chunks of K (topped up by
    resampling when short); batches draw one chunk each from P identities that
    still have chunks, until fewer than P remain.
    """
    labels = np.asarray(labels)
    ids = np.unique(labels)
    if len(ids) < P:
        raise InvalidArgument(f"need at least P={P} identities, found {len(ids)}")
    rng = np.random.default_rng(seed)
    chunks = {}
    for pid in ids:
        idx = rng.permutation(np.flatnonzero(labels == pid))
        if len(idx) < K:
            idx = np.concatenate([idx, rng.choice(idx, K - len(idx), replace=True)])
        n = len(idx) // K
        chunks[pid] = [idx[i * K:(i + 1) * K] for i in range(n)]
    batches = []
    while True:
        avail = [pid for pid in ids if chunks[pid]]
        if len(avail) < P:
            break
        picked = rng.choice(avail, P, replace=False)
        batches.append(np.concatenate([chunks[pid].pop() for pid in picked]))
    return batches


def iterate_batches(raw, store, labels, P, K, seed):
    """Yield index-aligned :class:`PairedBatch` objects for one epoch.

    ``raw`` and ``store`` are indexable by integer arrays (tensors or arrays);
    ``labels`` holds the class label of every training sample.
    """
    for idx in pk_batches(np.asarray(labels), P, K, seed):
        yield PairedBatch(idx, raw[idx], store[idx], labels[idx], P, K)
