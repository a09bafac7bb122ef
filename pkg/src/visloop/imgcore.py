"""Raster primitives shared by the 2D and 3D scenes.

Images are ``(H, W, 4)`` uint8 RGBA arrays in sRGB, masks are ``(H, W)`` bool
arrays and points are ``(x, y)`` integer tuples with the origin at the top-left
corner. Every function here is pure: inputs are never written to.
"""

from __future__ import annotations

import hashlib
import io
import logging
from typing import NamedTuple

import numpy as np
from PIL import Image as PILImage
from scipy import ndimage

logger = logging.getLogger(__name__)

CURSOR_EXTENT = 21
CURSOR_COLOR = (255, 0, 255, 255)
OUTLINE_COLOR = (0, 0, 0, 255)
DEFAULT_TOL = 0.5 / 255
DEFAULT_MAX_ITERS = 2000
HOLE_DILATION = 2


class FullHole(ValueError):
    """Raised when an inpainting hole covers the entire image."""


class Rect(NamedTuple):
    """Inclusive pixel rectangle."""

    x0: int
    y0: int
    x1: int
    y1: int

    @property
    def width(self) -> int:
        return self.x1 - self.x0 + 1

    @property
    def height(self) -> int:
        return self.y1 - self.y0 + 1


def new_image(width: int, height: int, color=(0, 0, 0, 255)) -> np.ndarray:
    if width < 1 or height < 1:
        raise ValueError(f"image size must be positive, got {width}x{height}")
    img = np.empty((height, width, 4), dtype=np.uint8)
    img[...] = np.asarray(color, dtype=np.uint8)
    return img


def as_image(arr) -> np.ndarray:
    """Coerce RGB or RGBA data to a contiguous RGBA uint8 array."""
    arr = np.asarray(arr)
    if arr.ndim != 3 or arr.shape[2] not in (3, 4):
        raise ValueError(f"expected (H, W, 3|4) array, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
    if arr.shape[2] == 3:
        alpha = np.full(arr.shape[:2] + (1,), 255, dtype=np.uint8)
        arr = np.concatenate([arr, alpha], axis=2)
    return np.ascontiguousarray(arr)


def empty_mask(width: int, height: int) -> np.ndarray:
    return np.zeros((height, width), dtype=bool)


def full_mask(width: int, height: int) -> np.ndarray:
    return np.ones((height, width), dtype=bool)


def in_bounds(shape, point) -> bool:
    x, y = point
    return 0 <= x < shape[1] and 0 <= y < shape[0]


# --------------------------------------------------------------------------
# PNG I/O and digests


def encode_png(img: np.ndarray) -> bytes:
    buf = io.BytesIO()
    PILImage.fromarray(as_image(img), mode="RGBA").save(buf, format="PNG", compress_level=1)
    return buf.getvalue()


def decode_png(data: bytes) -> np.ndarray:
    with PILImage.open(io.BytesIO(data)) as im:
        return np.asarray(im.convert("RGBA"), dtype=np.uint8).copy()


def encode_mask_png(mask: np.ndarray) -> bytes:
    buf = io.BytesIO()
    PILImage.fromarray(np.where(mask, 255, 0).astype(np.uint8), mode="L").save(buf, format="PNG")
    return buf.getvalue()


def decode_mask_png(data: bytes) -> np.ndarray:
    with PILImage.open(io.BytesIO(data)) as im:
        return np.asarray(im.convert("L")) >= 128


def encode_label_png(labels: np.ndarray) -> bytes:
    """Instance-id maps are stored as 16-bit grayscale PNG."""
    if labels.max(initial=0) > 65535 or labels.min(initial=0) < 0:
        raise ValueError("instance ids must fit in 16 bits")
    buf = io.BytesIO()
    PILImage.fromarray(labels.astype(np.uint16)).save(buf, format="PNG")
    return buf.getvalue()


def decode_label_png(data: bytes) -> np.ndarray:
    with PILImage.open(io.BytesIO(data)) as im:
        return np.asarray(im).astype(np.int32)


def save_png(path, img: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_png(img))


def load_png(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_png(fh.read())


def save_mask(path, mask: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_mask_png(mask))


def load_mask(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_mask_png(fh.read())


def save_labels(path, labels: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_label_png(labels))


def load_labels(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_label_png(fh.read())


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def image_digest(img: np.ndarray) -> str:
    """SHA-256 of the PNG encoding."""
    return sha256_hex(encode_png(img))


# --------------------------------------------------------------------------
# Compositing


def composite_over(dst: np.ndarray, src: np.ndarray, mask: np.ndarray, offset=(0, 0)) -> np.ndarray:
    """Straight-alpha ``src`` over ``dst`` where ``mask`` is set, placed at ``offset``."""
    if src.shape[:2] != mask.shape:
        raise ValueError(f"src {src.shape[:2]} and mask {mask.shape} differ")
    out = dst.copy()
    ox, oy = int(offset[0]), int(offset[1])
    h, w = mask.shape
    H, W = dst.shape[:2]
    x0, y0 = max(ox, 0), max(oy, 0)
    x1, y1 = min(ox + w, W), min(oy + h, H)
    if x1 <= x0 or y1 <= y0:
        logger.debug("composite at %s fully clipped", (ox, oy))
        return out
    if (x0, y0, x1, y1) != (ox, oy, ox + w, oy + h):
        logger.debug("composite at %s clipped to canvas", (ox, oy))
    sub_m = mask[y0 - oy:y1 - oy, x0 - ox:x1 - ox]
    if not sub_m.any():
        return out
    sub_s = src[y0 - oy:y1 - oy, x0 - ox:x1 - ox]
    region = out[y0:y1, x0:x1]

    s = sub_s[sub_m].astype(np.float64)
    d = region[sub_m].astype(np.float64)
    sa = s[:, 3:4] / 255.0
    da = d[:, 3:4] / 255.0
    oa = sa + da * (1.0 - sa)
    safe = np.where(oa > 0, oa, 1.0)
    rgb = (s[:, :3] * sa + d[:, :3] * da * (1.0 - sa)) / safe
    blended = np.concatenate([rgb, oa * 255.0], axis=1)
    # opaque sources must be bit-exact replacements
    opaque = sub_s[sub_m][:, 3] == 255
    res = np.clip(np.rint(blended), 0, 255).astype(np.uint8)
    res[opaque] = sub_s[sub_m][opaque]
    region[sub_m] = res
    return out


def _cursor_glyph() -> tuple[np.ndarray, np.ndarray]:
    r = CURSOR_EXTENT // 2
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    arms = ((yy == 0) & (np.abs(xx) <= r - 1)) | ((xx == 0) & (np.abs(yy) <= r - 1))
    ring = np.abs(np.hypot(xx, yy) - 6.5) < 0.5
    color = arms | ring
    near = ndimage.binary_dilation(color, structure=np.ones((3, 3), bool))
    outline = near & ~color
    return color, outline


_GLYPH_COLOR, _GLYPH_OUTLINE = _cursor_glyph()


def cursor_support() -> np.ndarray:
    """Boolean footprint of the cursor glyph (``CURSOR_EXTENT`` square)."""
    return _GLYPH_COLOR | _GLYPH_OUTLINE


def draw_cursor(img: np.ndarray, at) -> np.ndarray:
    x, y = int(at[0]), int(at[1])
    if not in_bounds(img.shape, (x, y)):
        raise ValueError(f"cursor {at} outside image {img.shape[1]}x{img.shape[0]}")
    out = img.copy()
    r = CURSOR_EXTENT // 2
    H, W = img.shape[:2]
    x0, y0 = max(x - r, 0), max(y - r, 0)
    x1, y1 = min(x + r + 1, W), min(y + r + 1, H)
    gx0, gy0 = x0 - (x - r), y0 - (y - r)
    sl = (slice(gy0, gy0 + (y1 - y0)), slice(gx0, gx0 + (x1 - x0)))
    region = out[y0:y1, x0:x1]
    region[_GLYPH_OUTLINE[sl]] = OUTLINE_COLOR
    region[_GLYPH_COLOR[sl]] = CURSOR_COLOR
    return out


def draw_contour(img: np.ndarray, mask: np.ndarray, color=(0, 255, 0, 255), width: int = 2) -> np.ndarray:
    """Highlight the inner boundary band of ``mask``."""
    inner = ndimage.binary_erosion(mask, structure=np.ones((3, 3), bool), iterations=width, border_value=0)
    band = mask & ~inner
    out = img.copy()
    out[band] = color
    return out


def draw_box(img: np.ndarray, rect: Rect, color=(255, 200, 0, 255)) -> np.ndarray:
    out = img.copy()
    H, W = out.shape[:2]
    x0, y0 = max(rect.x0, 0), max(rect.y0, 0)
    x1, y1 = min(rect.x1, W - 1), min(rect.y1, H - 1)
    if x1 < x0 or y1 < y0:
        return out
    out[y0, x0:x1 + 1] = color
    out[y1, x0:x1 + 1] = color
    out[y0:y1 + 1, x0] = color
    out[y0:y1 + 1, x1] = color
    return out


def side_by_side(left: np.ndarray, right: np.ndarray, gap: int = 8) -> np.ndarray:
    h = max(left.shape[0], right.shape[0])
    out = new_image(left.shape[1] + gap + right.shape[1], h, (255, 255, 255, 255))
    out[:left.shape[0], :left.shape[1]] = left
    out[:right.shape[0], left.shape[1] + gap:] = right
    return out


# --------------------------------------------------------------------------
# Masks


def mask_dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    """Grow ``mask`` by a Chebyshev ball of ``radius`` pixels."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if radius == 0:
        return mask.copy()
    return ndimage.maximum_filter(mask, size=2 * radius + 1, mode="constant", cval=False)


def mask_bbox(mask: np.ndarray) -> Rect | None:
    ys, xs = np.nonzero(mask)
    if xs.size == 0:
        return None
    return Rect(int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max()))


def mask_centroid(mask: np.ndarray) -> tuple[float, float]:
    ys, xs = np.nonzero(mask)
    if xs.size == 0:
        raise ValueError("centroid of empty mask")
    return float(xs.mean()), float(ys.mean())


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def place_mask(mask: np.ndarray, offset, shape) -> np.ndarray:
    """Paste a local mask into a canvas-sized mask at ``offset`` (clipped)."""
    out = np.zeros(shape[:2], dtype=bool)
    ox, oy = int(offset[0]), int(offset[1])
    h, w = mask.shape
    H, W = out.shape
    x0, y0 = max(ox, 0), max(oy, 0)
    x1, y1 = min(ox + w, W), min(oy + h, H)
    if x1 > x0 and y1 > y0:
        out[y0:y1, x0:x1] = mask[y0 - oy:y1 - oy, x0 - ox:x1 - ox]
    return out


# --------------------------------------------------------------------------
# Inpainting


def inpaint_diffusion(img: np.ndarray, hole: np.ndarray, tol: float = DEFAULT_TOL,
                      max_iters: int = DEFAULT_MAX_ITERS) -> np.ndarray:
    """Fill ``hole`` by Jacobi iteration of the 4-neighbour average.

    Each connected hole component is seeded with the mean of its boundary
    pixels. ``tol`` is in normalised [0, 1] intensity units. Pixels outside
    the hole are returned bit-identical.
    """
    if hole.shape != img.shape[:2]:
        raise ValueError(f"hole {hole.shape} does not match image {img.shape[:2]}")
    if not hole.any():
        return img.copy()
    if hole.all():
        raise FullHole("hole covers every pixel")

    box = mask_bbox(hole)
    H, W = hole.shape
    x0, y0 = max(box.x0 - 1, 0), max(box.y0 - 1, 0)
    x1, y1 = min(box.x1 + 2, W), min(box.y1 + 2, H)
    work = img[y0:y1, x0:x1].astype(np.float64) / 255.0
    h = hole[y0:y1, x0:x1]

    labels, n = ndimage.label(h)
    ring = ndimage.binary_dilation(h, structure=_CROSS) & ~h
    for k in range(1, n + 1):
        comp = labels == k
        border = ndimage.binary_dilation(comp, structure=_CROSS) & ring
        if border.any():
            work[comp] = work[border].mean(axis=0)

    # neighbour counts: pixels on the image edge only average in-bounds neighbours
    ones = np.pad(np.ones(h.shape), 1)
    count = ones[:-2, 1:-1] + ones[2:, 1:-1] + ones[1:-1, :-2] + ones[1:-1, 2:]
    count = count[h][:, None]
    for it in range(max_iters):
        p = np.pad(work, ((1, 1), (1, 1), (0, 0)))
        avg = (p[:-2, 1:-1] + p[2:, 1:-1] + p[1:-1, :-2] + p[1:-1, 2:])[h] / count
        delta = np.abs(avg - work[h]).max()
        work[h] = avg
        if delta < tol:
            break
    else:
        logger.debug("inpaint hit max_iters=%d (last delta %.3g)", max_iters, delta)

    out = img.copy()
    filled = np.clip(np.rint(work * 255.0), 0, 255).astype(np.uint8)
    out[y0:y1, x0:x1][h] = filled[h]
    return out


_CROSS = ndimage.generate_binary_structure(2, 1)
