"""Command-line entry point: ``revanon <command> [options]``."""
import argparse
import json
import logging
import sys
from pathlib import Path

from . import metrics
from .config import load_config, save_config
from .errors import InvalidArgument, RevAnonError

log = logging.getLogger("revanon")


def _add_config_args(p):
    p.add_argument("--config", help="YAML/JSON config file")
    p.add_argument("--preset", default="desk", choices=("desk", "full"))
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="override, e.g. train.epochs=5 (repeatable)")
    p.add_argument("--data-root", help="shortcut for data.root")
    p.add_argument("--out-dir", help="shortcut for out_dir")


def _config(args):
    overrides = list(args.overrides)
    if getattr(args, "data_root", None):
        overrides.append(f"data.root={args.data_root}")
    if getattr(args, "out_dir", None):
        overrides.append(f"out_dir={args.out_dir}")
    return load_config(args.config, overrides, preset=args.preset)


def cmd_make_toy(args):
    from .synthetic import make_toy_corpus

    paths = make_toy_corpus(args.root, n_ids=args.ids, per_id=args.per_id, n_cams=args.cams,
                            size=(args.height, args.width), seed=args.seed)
    print(f"wrote {len(paths)} images to {Path(args.root) / 'bounding_box_train'}")


def cmd_split(args):
    from .pipeline import load_split

    cfg = _config(args)
    cfg.data.manifest = ""
    split = load_split(cfg)
    out = Path(args.out or Path(cfg.out_dir) / "split.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    split.save(out)
    print(f"train={len(split.train)} gallery={len(split.val_gallery)} "
          f"query={len(split.val_query)} -> {out}")


def cmd_desensitize(args):
    from .imaging import DesensitizeMethod, desensitize, list_images, load_image, save_image

    method = DesensitizeMethod(args.kind, args.blur_kernel, args.pixel_block, args.noise_variance)
    n = 0
    for i, p in enumerate(list_images(args.in_dir)):
        out = desensitize(load_image(p), method, seed=args.seed + i)
        save_image(Path(args.out_dir) / p.with_suffix(".png").name, out)
        n += 1
    print(f"desensitized {n} images -> {args.out_dir}")


def cmd_pretrain(args):
    from .checkpoint import save_baseline
    from .pipeline import pretrain_baseline, prepare_workspace

    cfg = _config(args)
    ws = prepare_workspace(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ws.split.save(out / "split.json")
    base = pretrain_baseline(cfg, ws)
    save_baseline(out / "baseline.pt", cfg, base)
    result = {"r1_raw_des": base.r1_raw_des, "psnr_des": base.psnr_des, "ssim_des": base.ssim_des}
    (out / "baseline.json").write_text(json.dumps(result, indent=2))
    print(json.dumps(result))


def cmd_train(args):
    from .checkpoint import load_baseline
    from .pipeline import prepare_workspace, train_joint

    cfg = _config(args)
    if args.no_upgrade:
        cfg.train.upgrade = False
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ws = prepare_workspace(cfg)
    save_config(cfg, out / "config.yaml")
    baseline = load_baseline(args.baseline, cfg) if args.baseline else None
    result = train_joint(cfg, run_dir=out, ws=ws, baseline=baseline)
    print(f"checkpoint: {result.checkpoint}  upgrades: {result.state.upgrade_count}")


def _load_for_eval(args):
    from .checkpoint import load_checkpoint
    from .data import SplitSpec
    from .pipeline import prepare_workspace

    ck = load_checkpoint(args.checkpoint)
    cfg = ck.cfg
    if args.data_root:
        cfg.data.root = args.data_root
    manifest = args.manifest or Path(args.checkpoint).parent / "split.json"
    split = SplitSpec.load(manifest) if Path(manifest).exists() else None
    ws = prepare_workspace(cfg, split)
    return ck, ws


def cmd_evaluate(args):
    from .evaluation import SETTINGS, evaluate_four_settings, evaluate_recovery, full_cmc

    ck, ws = _load_for_eval(args)
    reports = evaluate_four_settings(ck.models, ws, cross_camera=not args.same_camera)
    psnr, ssim = evaluate_recovery(ck.models, ws, ck.cfg.train.psnr_cap)
    out = Path(args.out or Path(args.checkpoint).parent)
    out.mkdir(parents=True, exist_ok=True)
    data = {"settings": [r.to_record() for r in reports.values()],
            "recovery": {"psnr": round(psnr, 2), "ssim": round(ssim, 4)},
            "cmc": {s.name: full_cmc(ck.models, ws, s) for s in SETTINGS}}
    (out / "eval.json").write_text(json.dumps(data, indent=2))
    (out / "eval.csv").write_text(metrics.reports_to_csv(reports.values()))
    print(metrics.reports_to_csv(reports.values()), end="")
    print(f"recovery: psnr={psnr:.2f} ssim={ssim:.4f}")


def _translate(args, which):
    from .checkpoint import load_checkpoint
    from .evaluation import anonymize_dir, recover_dir

    ck = load_checkpoint(args.checkpoint)
    fn = anonymize_dir if which == "anonymize" else recover_dir
    written, failed = fn(ck.models, args.in_dir, args.out_dir, ck.cfg.data.image_size)
    print(f"{which}: wrote {written} images, {failed} failed")
    if failed and not written:
        raise InvalidArgument(f"no readable images in {args.in_dir}")


def cmd_export_embeddings(args):
    from .evaluation import export_embeddings

    ck, ws = _load_for_eval(args)
    path = args.out or Path(args.checkpoint).parent / "embeddings.csv"
    rows = export_embeddings(ck.models, ws, path)
    print(f"wrote {rows} rows -> {path}")


def cmd_report(args):
    from .report import render

    for p in render(args.run_dir, args.out):
        print(p)


def build_parser():
    parser = argparse.ArgumentParser(prog="revanon", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-toy", help="render the synthetic pedestrian corpus")
    p.add_argument("--root", required=True)
    p.add_argument("--ids", type=int, default=8)
    p.add_argument("--per-id", type=int, default=25)
    p.add_argument("--cams", type=int, default=4)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_make_toy)

    p = sub.add_parser("split", help="write the train/gallery/query manifest")
    _add_config_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("desensitize", help="blur / pixelate / add noise to a directory")
    p.add_argument("--in-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--kind", default="blur", choices=("blur", "pixelate", "gaussian_noise"))
    p.add_argument("--blur-kernel", type=int, default=12)
    p.add_argument("--pixel-block", type=int, default=24)
    p.add_argument("--noise-variance", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_desensitize)

    p = sub.add_parser("pretrain", help="train the baseline Re-ID model on raw + desensitized")
    _add_config_args(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="joint training")
    _add_config_args(p)
    p.add_argument("--baseline", help="baseline.pt from `pretrain` (otherwise pretrained here)")
    p.add_argument("--no-upgrade", action="store_true", help="disable supervision upgradation")
    p.set_defaults(func=cmd_train)

    for name, func, helptext in (
            ("evaluate", cmd_evaluate, "four query/gallery settings plus recovery quality"),
            ("export-embeddings", cmd_export_embeddings, "write BNNeck features to CSV")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--manifest", help="split manifest (default: split.json beside checkpoint)")
        p.add_argument("--data-root")
        p.add_argument("--out")
        if name == "evaluate":
            p.add_argument("--same-camera", action="store_true",
                           help="keep same-id same-camera gallery entries")
        p.set_defaults(func=func)

    for name in ("anonymize", "recover"):
        p = sub.add_parser(name, help=f"{name} every image in a directory")
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--in-dir", required=True)
        p.add_argument("--out-dir", required=True)
        p.set_defaults(func=lambda a, n=name: _translate(a, n))

    p = sub.add_parser("report", help="render eval/loss/embedding outputs of a run")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except RevAnonError as exc:
        print(f"error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
