"""Export scikit-image's bundled sample photos as a small PNG corpus.

Writes ``<out>/train`` (20 images) and ``<out>/eval`` (5 images, a stand-in
for Set5 when the real benchmark is not available).

    python scripts/make_desk_corpus.py data/desk
"""

import argparse
import os

import numpy as np
import skimage.data
from PIL import Image

EVAL = ["astronaut", "camera", "chelsea", "coffee", "rocket"]
TRAIN = [
    "brick",
    "cell",
    "checkerboard",
    "clock",
    "coins",
    "colorwheel",
    "grass",
    "gravel",
    "horse",
    "hubble_deep_field",
    "immunohistochemistry",
    "logo",
    "microaneurysms",
    "moon",
    "page",
    "retina",
    "text",
    "shepp_logan_phantom",
    "motorcycle_left",
    "motorcycle_right",
]


def fetch(name: str) -> np.ndarray:
    if name.startswith("motorcycle_"):
        left, right, _ = skimage.data.stereo_motorcycle()
        img = left if name.endswith("left") else right
    else:
        img = getattr(skimage.data, name)()
    if img.dtype == bool:
        img = img.astype(np.uint8) * 255
    elif img.dtype != np.uint8:
        img = np.round(np.clip(img, 0, 1) * 255).astype(np.uint8)
    if img.ndim == 3 and img.shape[2] == 4:
        img = img[..., :3]
    return img


def export(names, directory):
    os.makedirs(directory, exist_ok=True)
    for name in names:
        Image.fromarray(fetch(name)).save(os.path.join(directory, f"{name}.png"))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("out", help="output directory")
    args = parser.parse_args(argv)
    export(TRAIN, os.path.join(args.out, "train"))
    export(EVAL, os.path.join(args.out, "eval"))
    print(f"wrote {len(TRAIN)} training and {len(EVAL)} evaluation images to {args.out}")


if __name__ == "__main__":
    main()
