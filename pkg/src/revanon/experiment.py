"""Toy-scale reproduction: one shared baseline, joint training with and without upgradation."""
import json
import logging
import time
from pathlib import Path

from .config import desk_config
from .evaluation import (CROSSED_OI_PI, CROSSED_PI_OI, PROTECTED, evaluate_four_settings,
                         evaluate_recovery)
from .pipeline import prepare_workspace, pretrain_baseline, train_joint
from .synthetic import make_toy_corpus

log = logging.getLogger(__name__)

ARMS = {"with_upgrade": True, "without_upgrade": False}


def _arm_summary(result, ws, cfg):
    reports = evaluate_four_settings(result.models, ws, psnr_cap=cfg.train.psnr_cap)
    rec_psnr, rec_ssim = evaluate_recovery(result.models, ws, cfg.train.psnr_cap)
    crossed = [reports[CROSSED_OI_PI].rank1, reports[CROSSED_PI_OI].rank1]
    return {
        "settings": [r.to_record() for r in reports.values()],
        "psnr_ano": reports[PROTECTED].psnr,
        "ssim_ano": reports[PROTECTED].ssim,
        "rank1": {"protected": reports[PROTECTED].rank1, "crossed_oi_pi": crossed[0],
                  "crossed_pi_oi": crossed[1]},
        "crossed_rank1_mean": sum(crossed) / 2,
        "recovery": {"psnr": rec_psnr, "ssim": rec_ssim},
        "upgrades": result.state.upgrade_count,
        "events": [e.__dict__ for e in result.events],
    }


def run_toy_reproduction(out_dir, data_root=None, cfg=None, corpus_seed=0):
    """Train both arms on the synthetic corpus and return a JSON-ready summary.

    The corpus is rendered under ``data_root`` (default ``out_dir/data``) if absent.
    """
    out_dir = Path(out_dir)
    data_root = Path(data_root or out_dir / "data")
    if not (data_root / "bounding_box_train").exists():
        make_toy_corpus(data_root, seed=corpus_seed)
    cfg = cfg or desk_config(out_dir=str(out_dir), root=str(data_root))
    cfg.data.root = str(data_root)
    t0 = time.time()
    ws = prepare_workspace(cfg)
    baseline = pretrain_baseline(cfg, ws)
    summary = {
        "baseline": {"r1_raw_des": baseline.r1_raw_des, "psnr_des": baseline.psnr_des,
                     "ssim_des": baseline.ssim_des},
        "chance_rank1": 1 / len(ws.class_map),
        "arms": {},
    }
    log.info("baseline %s", summary["baseline"])
    for name, upgrade in ARMS.items():
        result = train_joint(cfg, run_dir=out_dir / name, ws=ws, baseline=baseline,
                             upgrade=upgrade)
        summary["arms"][name] = _arm_summary(result, ws, cfg)
        log.info("%s done after %.0f s", name, time.time() - t0)
    summary["seconds"] = time.time() - t0
    (out_dir / "toy_summary.json").write_text(json.dumps(summary, indent=2, default=str))
    return summary
