"""Procedural ingredients shared by the generators: textures, shapes, colours."""

from __future__ import annotations

import colorsys

import numpy as np
from PIL import Image, ImageDraw
from scipy import ndimage

SHAPES = ("circle", "square", "star")

NAMED_COLORS = {
    "red": (220, 40, 40),
    "green": (40, 180, 60),
    "blue": (40, 80, 220),
    "yellow": (235, 210, 40),
    "purple": (140, 60, 190),
    "orange": (240, 140, 30),
    "cyan": (40, 200, 210),
    "pink": (240, 120, 180),
    "white": (245, 245, 245),
    "black": (20, 20, 20),
}


def smooth_texture(rng: np.random.Generator, width: int, height: int, color=(150, 140, 120),
                   amplitude: float = 18.0, sigma: float = 12.0) -> np.ndarray:
    """Low-frequency noise around ``color`` as an opaque RGBA image."""
    noise = ndimage.gaussian_filter(rng.standard_normal((height, width, 3)), sigma=(sigma, sigma, 0))
    noise /= max(float(np.abs(noise).max()), 1e-9)
    rgb = np.clip(np.asarray(color, float) + amplitude * noise, 0, 255)
    out = np.empty((height, width, 4), np.uint8)
    out[..., :3] = np.rint(rgb)
    out[..., 3] = 255
    return out


def vivid_color(rng: np.random.Generator) -> tuple[int, int, int]:
    h = rng.random()
    s = rng.uniform(0.65, 1.0)
    v = rng.uniform(0.7, 1.0)
    return tuple(int(round(c * 255)) for c in colorsys.hsv_to_rgb(h, s, v))


def shape_mask(kind: str, cx: float, cy: float, r: float, width: int, height: int,
               angle: float = 0.0) -> np.ndarray:
    """Rasterised filled shape of circumradius ``r``."""
    img = Image.new("L", (width, height), 0)
    draw = ImageDraw.Draw(img)
    if kind == "circle":
        draw.ellipse([cx - r, cy - r, cx + r, cy + r], fill=255)
    elif kind == "square":
        a = r / np.sqrt(2)
        draw.rectangle([cx - a, cy - a, cx + a, cy + a], fill=255)
    elif kind == "star":
        pts = []
        for k in range(10):
            rad = r if k % 2 == 0 else 0.5 * r
            t = angle + np.pi * k / 5 - np.pi / 2
            pts.append((cx + rad * np.cos(t), cy + rad * np.sin(t)))
        draw.polygon(pts, fill=255)
    else:
        raise ValueError(f"unknown shape {kind!r}")
    mask = np.asarray(img) > 0
    # thin star tips can rasterise into stray pixels; keep the main body
    lab, n = ndimage.label(mask)
    if n > 1:
        mask = lab == (np.argmax(np.bincount(lab.ravel())[1:]) + 1)
    return mask


def paint(img: np.ndarray, mask: np.ndarray, color) -> np.ndarray:
    out = img.copy()
    out[mask, :3] = color
    out[mask, 3] = 255
    return out


def inradius(mask: np.ndarray) -> float:
    """Largest Euclidean distance from a mask pixel to the outside."""
    if not mask.any():
        return 0.0
    return float(ndimage.distance_transform_edt(np.pad(mask, 1)).max())


def is_connected(mask: np.ndarray) -> bool:
    return ndimage.label(mask)[1] == 1


def disc(cx: float, cy: float, r: float, width: int, height: int) -> np.ndarray:
    yy, xx = np.mgrid[0:height, 0:width]
    return (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
