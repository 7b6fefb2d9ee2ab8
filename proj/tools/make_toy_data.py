#!/usr/bin/env python3
"""Builds the bundled toy luminance dataset from images shipped with
scikit-image and scikit-learn. Output is 8-bit PGM (P5)."""

import argparse
import os

import numpy as np
import skimage.data
import skimage.io
import skimage.transform
import sklearn.datasets

SKIMAGE_DIR = os.path.dirname(skimage.data.__file__)
SKLEARN_DIR = os.path.join(os.path.dirname(sklearn.datasets.__file__), "images")

TRAIN = [
    "astronaut.png", "coffee.png", "rocket.jpg", "hubble_deep_field.jpg",
    "retina.jpg", "motorcycle_left.png", "brick.png", "grass.png",
    "gravel.png", "ihc.png", "page.png", "china.jpg", "flower.jpg",
]
# name -> (rows, cols) center crop
TEST = {
    "camera.png": (256, 384),
    "chelsea.png": (256, 384),
    "coins.png": (256, 384),
    "moon.png": (256, 384),
    "cell.png": (256, 384),
    "motorcycle_right.png": (250, 370),
    "clock_motion.png": (256, 384),
    "text.png": (172, 384),
}


def load_luma(name):
    path = os.path.join(SKIMAGE_DIR, name)
    if not os.path.exists(path):
        path = os.path.join(SKLEARN_DIR, name)
    img = skimage.io.imread(path)
    if img.ndim == 3:
        rgb = img[..., :3].astype(np.float64)
        img = np.floor(0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] +
                       0.114 * rgb[..., 2] + 0.5)
    return np.clip(img, 0, 255).astype(np.uint8)


def downscale(img, max_side):
    scale = max_side / max(img.shape)
    if scale >= 1.0:
        return img
    out = skimage.transform.rescale(img.astype(np.float64) / 255.0, scale,
                                    anti_aliasing=True)
    return np.clip(np.floor(out * 255.0 + 0.5), 0, 255).astype(np.uint8)


def center_crop(img, rows, cols):
    r0 = max(0, (img.shape[0] - rows) // 2)
    c0 = max(0, (img.shape[1] - cols) // 2)
    return img[r0:r0 + rows, c0:c0 + cols]


def write_pgm(path, img):
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (img.shape[1], img.shape[0]))
        f.write(np.ascontiguousarray(img).tobytes())


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default=os.path.join(
        os.path.dirname(os.path.abspath(__file__)), "..", "data"))
    args = parser.parse_args()
    os.makedirs(os.path.join(args.out, "train"), exist_ok=True)
    os.makedirs(os.path.join(args.out, "test"), exist_ok=True)
    for name in TRAIN:
        img = downscale(load_luma(name), 512)
        stem = os.path.splitext(name)[0]
        write_pgm(os.path.join(args.out, "train", stem + ".pgm"), img)
    for name, (rows, cols) in TEST.items():
        img = center_crop(downscale(load_luma(name), 512), rows, cols)
        stem = os.path.splitext(name)[0]
        write_pgm(os.path.join(args.out, "test", stem + ".pgm"), img)


if __name__ == "__main__":
    main()
