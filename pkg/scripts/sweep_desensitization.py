"""Mean PSNR/SSIM of each desensitization method against the raw images of a directory.

    python3 scripts/sweep_desensitization.py data/toy/bounding_box_train
"""
import argparse

import numpy as np

from revanon import metrics
from revanon.imaging import DesensitizeMethod, desensitize, list_images, load_image

METHODS = [DesensitizeMethod("blur", blur_kernel=k) for k in (4, 8, 12)] + \
          [DesensitizeMethod("pixelate", pixel_block=b) for b in (4, 8)] + \
          [DesensitizeMethod("gaussian_noise", noise_variance=v) for v in (0.05, 0.5)]


def label(m):
    param = {"blur": f"k={m.blur_kernel}", "pixelate": f"block={m.pixel_block}",
             "gaussian_noise": f"var={m.noise_variance}"}[m.kind]
    return f"{m.kind} {param}"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("directory")
    ap.add_argument("--height", type=int, default=64)
    ap.add_argument("--width", type=int, default=32)
    args = ap.parse_args()
    images = [load_image(p, (args.height, args.width)) for p in list_images(args.directory)]
    print(f"{len(images)} images")
    print(f"{'method':<22} {'psnr':>7} {'ssim':>7}")
    for m in METHODS:
        pairs = [(desensitize(img, m, seed=i), img) for i, img in enumerate(images)]
        psnr, ssim = metrics.mean_image_scores(pairs)
        print(f"{label(m):<22} {psnr:7.2f} {ssim:7.3f}")


if __name__ == "__main__":
    main()
