"""Seeded synthetic digit dataset in the IDX file format.

Renders the glyphs 0-9 from the font files bundled with matplotlib,
then distorts each sample (affine jitter, elastic warp, stroke and
intensity variation, blur, noise) so the classification task has
handwriting-like variability.  Output files use the standard dataset
names and parse with the IDX loaders; generation is a pure function of
the seed, so regenerating a dataset yields byte-identical files.

This exists so the full training/attack pipeline can run in
environments where the real digit corpus cannot be downloaded.
"""

from __future__ import annotations

import os
from pathlib import Path

import matplotlib
import numpy as np
from PIL import Image, ImageDraw, ImageFont
from scipy.ndimage import gaussian_filter, map_coordinates

from .idx import STANDARD_NAMES, save_idx_images, save_idx_labels

_FONT_NAMES = [
    "DejaVuSans.ttf", "DejaVuSans-Bold.ttf", "DejaVuSans-Oblique.ttf",
    "DejaVuSans-BoldOblique.ttf", "DejaVuSerif.ttf", "DejaVuSerif-Bold.ttf",
    "DejaVuSerif-Italic.ttf", "DejaVuSansMono.ttf", "DejaVuSansMono-Bold.ttf",
    "STIXGeneral.ttf", "STIXGeneralBol.ttf", "cmr10.ttf", "cmb10.ttf",
    "cmss10.ttf", "cmtt10.ttf",
]

_HI = 64  # working canvas side before downsampling to 28


def _font_paths() -> list[str]:
    ttf_dir = Path(matplotlib.get_data_path()) / "fonts" / "ttf"
    paths = [str(ttf_dir / name) for name in _FONT_NAMES]
    return [p for p in paths if os.path.exists(p)]


_FONT_CACHE: dict[tuple[str, int], ImageFont.FreeTypeFont] = {}


def _font(path: str, size: int) -> ImageFont.FreeTypeFont:
    key = (path, size)
    if key not in _FONT_CACHE:
        _FONT_CACHE[key] = ImageFont.truetype(path, size)
    return _FONT_CACHE[key]


def render_digit(digit: int, rng: np.random.Generator,
                 font_paths: list[str] | None = None) -> np.ndarray:
    """One distorted 28x28 sample of ``digit`` as float64 in [0, 1]."""
    fonts = font_paths if font_paths is not None else _font_paths()
    font = _font(fonts[rng.integers(len(fonts))], int(rng.integers(34, 50)))

    img = Image.new("L", (_HI, _HI), 0)
    draw = ImageDraw.Draw(img)
    x0, y0, x1, y1 = draw.textbbox((0, 0), str(digit), font=font)
    cx = (_HI - (x1 - x0)) / 2 - x0 + rng.uniform(-3, 3)
    cy = (_HI - (y1 - y0)) / 2 - y0 + rng.uniform(-3, 3)
    draw.text((cx, cy), str(digit), fill=255, font=font,
              stroke_width=int(rng.integers(0, 3)), stroke_fill=255)

    # affine jitter: rotation, anisotropic scale, shear about the center
    angle = rng.uniform(-0.30, 0.30)
    sx, sy = rng.uniform(0.80, 1.15, size=2)
    shear = rng.uniform(-0.25, 0.25)
    ca, sa = np.cos(angle), np.sin(angle)
    m = np.array([[ca / sx, (-sa + shear) / sx],
                  [sa / sy, ca / sy]])
    c = _HI / 2
    offset = np.array([c, c]) - m @ np.array([c, c])
    img = img.transform((_HI, _HI), Image.AFFINE,
                        (m[0, 0], m[0, 1], offset[0], m[1, 0], m[1, 1], offset[1]),
                        resample=Image.BILINEAR, fillcolor=0)

    arr = np.asarray(img, dtype=np.float64)

    # elastic warp with a smoothed random displacement field
    alpha = rng.uniform(140.0, 260.0)
    sigma = rng.uniform(7.0, 9.0)
    dx = gaussian_filter(rng.uniform(-1, 1, (_HI, _HI)), sigma) * alpha
    dy = gaussian_filter(rng.uniform(-1, 1, (_HI, _HI)), sigma) * alpha
    yy, xx = np.meshgrid(np.arange(_HI), np.arange(_HI), indexing="ij")
    arr = map_coordinates(arr, [yy + dy, xx + dx], order=1, mode="constant")

    small = np.asarray(
        Image.fromarray(arr.clip(0, 255).astype(np.uint8)).resize((28, 28), Image.LANCZOS),
        dtype=np.float64) / 255.0

    small = gaussian_filter(small, rng.uniform(0.0, 0.5))
    peak = small.max()
    if peak > 0:
        small = small / peak * rng.uniform(0.75, 1.0)
    small = small + rng.normal(0.0, 0.015, small.shape)
    return small.clip(0.0, 1.0)


def make_split(count: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """(pixels uint8 (count, 784), labels uint8 (count,))"""
    fonts = _font_paths()
    pixels = np.empty((count, 28 * 28), dtype=np.uint8)
    labels = rng.integers(0, 10, size=count).astype(np.uint8)
    for i in range(count):
        sample = render_digit(int(labels[i]), rng, fonts)
        pixels[i] = np.round(sample.ravel() * 255.0).astype(np.uint8)
    return pixels, labels


def generate_dataset(out_dir, train_count: int = 60000, test_count: int = 10000,
                     seed: int = 0, gzip_files: bool = False, log: bool = False) -> dict:
    """Write the four standard IDX files under ``out_dir``; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_rng, test_rng = [np.random.default_rng(s)
                           for s in np.random.SeedSequence(seed).spawn(2)]
    suffix = ".gz" if gzip_files else ""
    paths = {key: out_dir / (name + suffix) for key, name in STANDARD_NAMES.items()}

    if log:
        print(f"rendering {train_count} training digits", flush=True)
    train_pixels, train_labels = make_split(train_count, train_rng)
    if log:
        print(f"rendering {test_count} test digits", flush=True)
    test_pixels, test_labels = make_split(test_count, test_rng)

    save_idx_images(paths["train_images"], train_pixels)
    save_idx_labels(paths["train_labels"], train_labels)
    save_idx_images(paths["test_images"], test_pixels)
    save_idx_labels(paths["test_labels"], test_labels)
    return paths
