"""The 2D imagination space: a base layer, lifted object layers and a cursor.

Scenes are immutable; every operator returns a new ``Scene2D``. Numpy arrays
held by a scene are never written to after construction.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import imgcore
from .base import (CURSOR, DegenerateRect, Direction, Focus, SegmentationFailed, StepSchedule,
                   WrongFocus)
from .imgcore import Rect
from .segmenter import ProviderError, SegmentRequest, segment

logger = logging.getLogger(__name__)

RESELECT_OVERLAP = 0.5
BOX_SIZE = 24


@dataclass(frozen=True, eq=False)
class ObjectLayer:
    id: int
    image: np.ndarray
    mask: np.ndarray
    offset: tuple[int, int]
    visible: bool = True
    label: int = 0
    kind: str = "segment"  # segment | rect
    lifted: bool = False
    locked: bool = False
    origin: tuple[int, int] | None = None

    def __post_init__(self):
        if self.image.shape[:2] != self.mask.shape:
            raise ValueError("layer image and mask must have equal size")
        if self.origin is None:
            object.__setattr__(self, "origin", tuple(self.offset))

    def placed_mask(self, shape) -> np.ndarray:
        return imgcore.place_mask(self.mask, self.offset, shape)

    def original_mask(self, shape) -> np.ndarray:
        return imgcore.place_mask(self.mask, self.origin, shape)

    def point(self) -> tuple[float, float]:
        """Mask centroid in canvas coordinates."""
        cx, cy = imgcore.mask_centroid(self.mask)
        return cx + self.offset[0], cy + self.offset[1]


@dataclass(frozen=True, eq=False)
class Scene2D:
    base: np.ndarray
    layers: tuple = ()
    cursor: tuple[int, int] = (0, 0)
    focus: Focus = CURSOR
    region_mask: np.ndarray | None = None
    step: StepSchedule | None = None
    labels: np.ndarray | None = None
    marks: tuple = ()
    last_dir: Direction | None = None
    next_id: int = 1

    @property
    def size(self) -> tuple[int, int]:
        return self.base.shape[1], self.base.shape[0]

    def layer(self, layer_id: int) -> ObjectLayer:
        for lay in self.layers:
            if lay.id == layer_id:
                return lay
        raise KeyError(layer_id)

    @property
    def focused(self) -> ObjectLayer | None:
        if self.focus.layer_id is None:
            return None
        return self.layer(self.focus.layer_id)


def new_scene(image, labels=None, region_mask=None, step: StepSchedule | None = None) -> Scene2D:
    base = imgcore.as_image(image)
    h, w = base.shape[:2]
    if labels is not None:
        labels = np.asarray(labels, dtype=np.int32)
        if labels.shape != (h, w):
            raise ValueError("instance map must match the canvas")
    if region_mask is not None:
        region_mask = np.asarray(region_mask, dtype=bool)
        if region_mask.shape != (h, w):
            raise ValueError("region mask must match the canvas")
    return Scene2D(base=base, cursor=(w // 2, h // 2), labels=labels, region_mask=region_mask,
                   step=step or StepSchedule.for_canvas(w, h))


def _replace_layer(scene: Scene2D, layer: ObjectLayer) -> tuple:
    return tuple(layer if lay.id == layer.id else lay for lay in scene.layers)


# --------------------------------------------------------------------------
# Rendering


def render_clean(scene: Scene2D) -> np.ndarray:
    """Base plus visible layers and box marks; no cursor."""
    out = scene.base
    for lay in scene.layers:
        if lay.visible:
            out = imgcore.composite_over(out, lay.image, lay.mask, lay.offset)
    for rect in scene.marks:
        out = imgcore.draw_box(out, rect)
    return out if out is not scene.base else out.copy()


def render(scene: Scene2D) -> np.ndarray:
    out = render_clean(scene)
    if scene.focus.is_cursor:
        out = imgcore.draw_cursor(out, scene.cursor)
    return out


def render_labels(scene: Scene2D) -> np.ndarray | None:
    """Ground-truth instance ids of the current render (0 = background)."""
    if scene.labels is None:
        return None
    out = scene.labels.copy()
    shape = out.shape
    for lay in scene.layers:
        if not lay.visible or not lay.lifted:
            continue
        if lay.locked:
            out[lay.placed_mask(shape)] = 0
        elif lay.label > 0:
            out[lay.placed_mask(shape)] = lay.label
    return out


def crop_focus(scene: Scene2D) -> np.ndarray:
    """Render cropped to the focused layer's bounding box."""
    lay = scene.focused
    if lay is None:
        raise WrongFocus("nothing is focused")
    box = imgcore.mask_bbox(lay.placed_mask(scene.base.shape))
    if box is None:
        raise WrongFocus("focused layer is off canvas")
    return render_clean(scene)[box.y0:box.y1 + 1, box.x0:box.x1 + 1].copy()


# --------------------------------------------------------------------------
# Operators


def move_cursor(scene: Scene2D, direction) -> Scene2D:
    if not scene.focus.is_cursor:
        raise WrongFocus("cursor moves need cursor focus")
    d = Direction.parse(direction)
    step = scene.step.advance(d, scene.last_dir)
    w, h = scene.size
    dx, dy = d.delta
    x = min(max(scene.cursor[0] + dx * step.pixels, 0), w - 1)
    y = min(max(scene.cursor[1] + dy * step.pixels, 0), h - 1)
    return replace(scene, cursor=(x, y), step=step, last_dir=d)


def request_focus(scene: Scene2D, seg) -> tuple[Scene2D, np.ndarray]:
    """Segment at the cursor; the candidate becomes a pending layer."""
    if not scene.focus.is_cursor:
        raise WrongFocus(f"focus request while focus is {scene.focus.kind}")
    frame = render_clean(scene)
    labels = render_labels(scene)
    req = SegmentRequest.single(frame, scene.cursor, labels)
    try:
        resp = segment(seg, req)
    except ProviderError as exc:
        raise SegmentationFailed(f"provider error: {exc}") from exc
    mask = resp.masks[0]
    area = np.count_nonzero(mask)
    if area == 0:
        raise SegmentationFailed("empty mask")

    for lay in reversed(scene.layers):
        if not lay.visible:
            continue
        if np.count_nonzero(mask & lay.placed_mask(mask.shape)) >= RESELECT_OVERLAP * area:
            if lay.locked:
                raise SegmentationFailed("selected element is fixed in place")
            preview = imgcore.draw_contour(frame, lay.placed_mask(mask.shape))
            return replace(scene, focus=Focus("pending", lay.id, reselect=True), last_dir=None), preview

    box = imgcore.mask_bbox(mask)
    crop = (slice(box.y0, box.y1 + 1), slice(box.x0, box.x1 + 1))
    label = 0
    if labels is not None:
        vals, counts = np.unique(labels[mask], return_counts=True)
        label = int(vals[np.argmax(counts)])
    layer = ObjectLayer(id=scene.next_id, image=frame[crop].copy(), mask=mask[crop].copy(),
                        offset=(box.x0, box.y0), label=label)
    preview = imgcore.draw_contour(frame, mask)
    out = replace(scene, layers=scene.layers + (layer,), focus=Focus("pending", layer.id),
                  next_id=scene.next_id + 1, last_dir=None)
    return out, preview


def _lift(scene: Scene2D, layer: ObjectLayer) -> Scene2D:
    """Cut ``layer`` out of the base, inpainting under its dilated footprint."""
    if layer.lifted:
        return scene
    shape = scene.base.shape
    placed = layer.placed_mask(shape)
    hole = imgcore.mask_dilate(placed, imgcore.HOLE_DILATION)
    try:
        base = imgcore.inpaint_diffusion(scene.base, hole)
    except imgcore.FullHole:
        base = imgcore.new_image(shape[1], shape[0], (128, 128, 128, 255))
    labels = scene.labels
    if labels is not None:
        labels = labels.copy()
        labels[placed] = 0
        if layer.label > 0:
            labels[hole & (labels == layer.label)] = 0
    lifted = replace(layer, lifted=True)
    return replace(scene, base=base, labels=labels, layers=_replace_layer(scene, lifted))


def accept_focus(scene: Scene2D) -> Scene2D:
    if not scene.focus.is_pending:
        raise WrongFocus("nothing pending to accept")
    layer = scene.focused
    if not scene.focus.reselect:
        scene = _lift(scene, layer)
    return replace(scene, focus=Focus("object", layer.id), last_dir=None)


def reject_focus(scene: Scene2D) -> Scene2D:
    if not scene.focus.is_pending:
        raise WrongFocus("nothing pending to reject")
    layers = scene.layers
    if not scene.focus.reselect:
        layers = tuple(lay for lay in layers if lay.id != scene.focus.layer_id)
    return replace(scene, layers=layers, focus=CURSOR, last_dir=None)


def ignore(scene: Scene2D) -> Scene2D:
    if not scene.focus.is_object:
        raise WrongFocus("ignore needs an object in focus")
    scene = _lift(scene, scene.focused)
    hidden = replace(scene.focused, visible=False)
    return replace(scene, layers=_replace_layer(scene, hidden), focus=CURSOR, last_dir=None)


class MoveResult(NamedTuple):
    scene: Scene2D
    refused: bool


def move_object(scene: Scene2D, direction) -> MoveResult:
    """Translate the focused layer by the current step.

    The move is refused (scene returned unchanged) when the layer's point
    would leave the canvas or the region mask.
    """
    if not scene.focus.is_object:
        raise WrongFocus("object moves need an object in focus")
    d = Direction.parse(direction)
    layer = scene.focused
    step = scene.step.advance(d, scene.last_dir)
    dx, dy = d.delta
    offset = (layer.offset[0] + dx * step.pixels, layer.offset[1] + dy * step.pixels)
    moved = replace(layer, offset=offset)
    px, py = moved.point()
    x, y = int(round(px)), int(round(py))
    w, h = scene.size
    if not (0 <= x < w and 0 <= y < h):
        return MoveResult(scene, True)
    if scene.region_mask is not None and not scene.region_mask[y, x]:
        return MoveResult(scene, True)
    scene = _lift(scene, layer)
    moved = replace(scene.focused, offset=offset)
    return MoveResult(replace(scene, layers=_replace_layer(scene, moved), step=step, last_dir=d), False)


def release_object(scene: Scene2D) -> Scene2D:
    if not scene.focus.is_object:
        raise WrongFocus("nothing to release")
    return replace(scene, focus=CURSOR, last_dir=None)


def focus_rect(scene: Scene2D, top_left, bottom_right) -> Scene2D:
    """Focus a rectangle directly; ``bottom_right`` is exclusive."""
    if not scene.focus.is_cursor:
        raise WrongFocus("rectangle focus needs cursor focus")
    w, h = scene.size
    x0, y0 = max(int(top_left[0]), 0), max(int(top_left[1]), 0)
    x1, y1 = min(int(bottom_right[0]), w), min(int(bottom_right[1]), h)
    if x1 <= x0 or y1 <= y0:
        raise DegenerateRect(f"rectangle {tuple(top_left)}-{tuple(bottom_right)} has zero area on canvas")
    frame = render_clean(scene)
    layer = ObjectLayer(id=scene.next_id, image=frame[y0:y1, x0:x1].copy(),
                        mask=np.ones((y1 - y0, x1 - x0), bool), offset=(x0, y0), kind="rect")
    return replace(scene, layers=scene.layers + (layer,), focus=Focus("object", layer.id),
                   next_id=scene.next_id + 1, last_dir=None)


def draw_box_at_cursor(scene: Scene2D) -> Scene2D:
    """Permanent box marker around the cursor (cursor-only-with-boxes baseline)."""
    if not scene.focus.is_cursor:
        raise WrongFocus("box markers are drawn at the cursor")
    x, y = scene.cursor
    r = BOX_SIZE // 2
    return replace(scene, marks=scene.marks + (Rect(x - r, y - r, x + r, y + r),))


def lock_layer(scene: Scene2D, layer_id: int, offset=None) -> Scene2D:
    """Fix a layer in place (used by snapping); locked layers cannot be re-focused."""
    lay = scene.layer(layer_id)
    lay = replace(lay, locked=True, offset=lay.offset if offset is None else tuple(offset))
    return replace(scene, layers=_replace_layer(scene, lay))


def layer_point(scene: Scene2D, layer_id: int) -> tuple[float, float]:
    return scene.layer(layer_id).point()


# --------------------------------------------------------------------------
# Scene descriptor files


@dataclass
class ObjectAnnotation:
    id: int
    mask: str
    label: str = ""


@dataclass
class SceneDescriptor:
    canvas: tuple[int, int]
    base: str
    instance_map: str | None = None
    region_mask: str | None = None
    objects: list = field(default_factory=list)

    def to_json(self) -> str:
        d = asdict(self)
        d["canvas"] = list(self.canvas)
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SceneDescriptor":
        d = json.loads(text)
        objs = [ObjectAnnotation(**o) for o in d.pop("objects", [])]
        d["canvas"] = tuple(d["canvas"])
        return cls(objects=objs, **d)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "SceneDescriptor":
        return cls.from_json(Path(path).read_text())


def load_scene(desc: SceneDescriptor, root=".") -> Scene2D:
    root = Path(root)
    base = imgcore.load_png(root / desc.base)
    if (base.shape[1], base.shape[0]) != tuple(desc.canvas):
        raise ValueError(f"base image is {base.shape[1]}x{base.shape[0]}, descriptor says {desc.canvas}")
    labels = imgcore.load_labels(root / desc.instance_map) if desc.instance_map else None
    region = imgcore.load_mask(root / desc.region_mask) if desc.region_mask else None
    return new_scene(base, labels=labels, region_mask=region)
