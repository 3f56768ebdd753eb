"""Render evaluation outputs of a run directory to CSV, JSON and plots."""
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

LOSS_KEYS = ("ano_total", "rec_total", "reid_total", "grand_total")


def plot_losses(records, path):
    fig, ax = plt.subplots(figsize=(7, 4))
    steps = [r["step"] for r in records]
    for key in LOSS_KEYS:
        ax.plot(steps, [r[key] for r in records], label=key)
    ax.set_xlabel("step")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def plot_cmc(curves, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, curve in curves.items():
        curve = {int(k): v for k, v in curve.items()}
        ks = sorted(curve)
        ax.plot(ks, [100 * curve[k] for k in ks], marker=".", label=name)
    ax.set_xlabel("rank")
    ax.set_ylabel("matching accuracy (%)")
    ax.set_ylim(0, 101)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def pca_2d(vectors):
    x = vectors - vectors.mean(0)
    _, _, vt = np.linalg.svd(x, full_matrices=False)
    return x @ vt[:2].T


def plot_embeddings(meta, vectors, path):
    """2-D PCA scatter; colour = identity, marker = raw (o) or protected (x)."""
    pts = pca_2d(vectors)
    ids = sorted({m["person_id"] for m in meta})
    cmap = plt.get_cmap("tab20", max(len(ids), 1))
    fig, ax = plt.subplots(figsize=(6, 6))
    for domain, marker in (("raw", "o"), ("protected", "x")):
        sel = [i for i, m in enumerate(meta) if m["domain"] == domain]
        colours = [cmap(ids.index(meta[i]["person_id"])) for i in sel]
        ax.scatter(pts[sel, 0], pts[sel, 1], c=colours, marker=marker, s=18, label=domain)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def render(run_dir, out_dir=None):
    """Write whatever the run directory supports; returns the list of files produced."""
    from .evaluation import read_embeddings
    from .pipeline import read_loss_log

    run_dir = Path(run_dir)
    out_dir = Path(out_dir or run_dir / "report")
    out_dir.mkdir(parents=True, exist_ok=True)
    produced = []
    eval_path = run_dir / "eval.json"
    if eval_path.exists():
        data = json.loads(eval_path.read_text())
        records = data["settings"]
        if "recovery" in data:
            records = records + [{"setting": "recovery", **data["recovery"]}]
        (out_dir / "report.json").write_text(json.dumps(records, indent=2))
        keys = []
        for r in records:
            keys += [k for k in r if k not in keys]
        lines = [",".join(keys)] + [",".join(str(r.get(k, "")) for k in keys) for r in records]
        (out_dir / "report.csv").write_text("\n".join(lines) + "\n")
        produced += [out_dir / "report.json", out_dir / "report.csv"]
        if data.get("cmc"):
            plot_cmc(data["cmc"], out_dir / "cmc.png")
            produced.append(out_dir / "cmc.png")
    if (run_dir / "losses.csv").exists():
        plot_losses(read_loss_log(run_dir / "losses.csv"), out_dir / "losses.png")
        produced.append(out_dir / "losses.png")
    if (run_dir / "embeddings.csv").exists():
        meta, vecs = read_embeddings(run_dir / "embeddings.csv")
        plot_embeddings(meta, vecs, out_dir / "embeddings.png")
        produced.append(out_dir / "embeddings.png")
    return produced
