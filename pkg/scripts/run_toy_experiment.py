"""Render the synthetic corpus, train both arms (with / without upgradation) and summarise.

    python3 scripts/run_toy_experiment.py --out runs/toy
"""
import argparse
import json
import logging

from revanon.config import apply_overrides, desk_config
from revanon.experiment import run_toy_reproduction


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/toy")
    ap.add_argument("--data-root", help="existing corpus (default: <out>/data, rendered if absent)")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    ap.add_argument("--corpus-seed", type=int, default=0)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    data_root = args.data_root or f"{args.out}/data"
    cfg = apply_overrides(desk_config(out_dir=args.out, root=data_root), args.overrides)
    summary = run_toy_reproduction(args.out, data_root, cfg, args.corpus_seed)
    base = summary["baseline"]
    print(json.dumps(base, indent=2))
    for name, arm in summary["arms"].items():
        print(f"\n{name}: upgrades={arm['upgrades']}")
        for rec in arm["settings"]:
            print("  ", rec)
        print(f"   recovery psnr={arm['recovery']['psnr']:.2f} ssim={arm['recovery']['ssim']:.4f}")
    print(f"\nsummary -> {args.out}/toy_summary.json ({summary['seconds']:.0f}s)")


if __name__ == "__main__":
    main()
