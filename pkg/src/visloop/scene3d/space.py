"""The 3D imagination space seen through a top-down working view.

Mirrors the 2D operator set: the cursor lives in the top-down image, a focus
request runs conditional segmentation at the cursor, accepted objects can be
translated in the view plane or removed. Scenes are immutable values.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .. import imgcore
from ..base import CURSOR, Direction, Focus, SegmentationFailed, StepSchedule, WrongFocus
from ..imgcore import Rect
from .gaussians import GaussianScene
from .render import TopDownView, label_map, splat, to_image
from .segment import PlanarRegion, SegConfig, direction_vector, segment_conditional

logger = logging.getLogger(__name__)

RESELECT_OVERLAP = 0.5
BOX_SIZE = 24


@dataclass(frozen=True, eq=False)
class Group:
    """A segmented object: indices into the full scene."""

    id: int
    index: np.ndarray
    label: int = 0


@dataclass(frozen=True, eq=False)
class Scene3D:
    scene: GaussianScene
    view: TopDownView
    visible: np.ndarray
    cursor: tuple[int, int] = (0, 0)
    focus: Focus = CURSOR
    region: PlanarRegion | None = None
    step: StepSchedule | None = None
    groups: tuple = ()
    marks: tuple = ()
    last_dir: Direction | None = None
    next_id: int = 1
    cfg: SegConfig = SegConfig()

    @property
    def size(self) -> tuple[int, int]:
        return self.view.width_px, self.view.height_px

    def group(self, group_id: int) -> Group:
        for g in self.groups:
            if g.id == group_id:
                return g
        raise KeyError(group_id)

    @property
    def focused(self) -> Group | None:
        return None if self.focus.layer_id is None else self.group(self.focus.layer_id)

    @property
    def visible_scene(self) -> GaussianScene:
        return self.scene.subset(np.nonzero(self.visible)[0])


def new_space(scene: GaussianScene, view: TopDownView, region_mask=None, step: StepSchedule | None = None,
              cfg: SegConfig = SegConfig()) -> Scene3D:
    w, h = view.width_px, view.height_px
    region = None
    if region_mask is not None:
        region_mask = np.asarray(region_mask, dtype=bool)
        if region_mask.shape != (h, w):
            raise ValueError("region mask must match the view")
        region = PlanarRegion(region_mask, view)
    return Scene3D(scene=scene, view=view, visible=np.ones(len(scene), bool), cursor=(w // 2, h // 2),
                   region=region, step=step or StepSchedule.for_canvas(w, h), cfg=cfg)


# --------------------------------------------------------------------------
# Rendering


def render_clean(space: Scene3D) -> np.ndarray:
    sub = space.visible_scene
    if len(sub):
        out = to_image(splat(sub, space.view.camera))
    else:
        out = imgcore.new_image(*space.size)
    for rect in space.marks:
        out = imgcore.draw_box(out, rect)
    return out


def render(space: Scene3D) -> np.ndarray:
    out = render_clean(space)
    if space.focus.is_cursor:
        out = imgcore.draw_cursor(out, space.cursor)
    return out


def render_labels(space: Scene3D) -> np.ndarray | None:
    if space.scene.labels is None:
        return None
    sub = space.visible_scene
    if not len(sub):
        return np.zeros((space.size[1], space.size[0]), np.int32)
    return label_map(sub, space.view.camera)


def group_mask(space: Scene3D, group: Group) -> np.ndarray:
    """Top-down footprint of ``group`` alone."""
    idx = group.index[space.visible[group.index]]
    if not len(idx):
        return np.zeros((space.size[1], space.size[0]), bool)
    return splat(space.scene.subset(idx), space.view.camera).alpha >= 0.5


def group_point(space: Scene3D, group_id: int) -> tuple[float, float]:
    """Centroid of the group's centres in view pixel coordinates."""
    g = space.group(group_id)
    x, y = space.scene.centers[g.index, :2].mean(0)
    px, py = space.view.world_to_pixel(x, y)
    return float(px), float(py)


# --------------------------------------------------------------------------
# Operators


def move_cursor(space: Scene3D, direction) -> Scene3D:
    if not space.focus.is_cursor:
        raise WrongFocus("cursor moves need cursor focus")
    d = Direction.parse(direction)
    step = space.step.advance(d, space.last_dir)
    w, h = space.size
    dx, dy = d.delta
    x = min(max(space.cursor[0] + dx * step.pixels, 0), w - 1)
    y = min(max(space.cursor[1] + dy * step.pixels, 0), h - 1)
    return replace(space, cursor=(x, y), step=step, last_dir=d)


def request_focus(space: Scene3D, seg) -> tuple[Scene3D, np.ndarray]:
    if not space.focus.is_cursor:
        raise WrongFocus(f"focus request while focus is {space.focus.kind}")
    vis = np.nonzero(space.visible)[0]
    if not len(vis):
        raise SegmentationFailed("scene is empty")
    result = segment_conditional(space.scene.subset(vis), space.cursor, space.view.camera, seg, space.cfg)
    index = vis[result.object_index]
    frame = render_clean(space)

    for g in reversed(space.groups):
        live = g.index[space.visible[g.index]]
        if len(np.intersect1d(index, live)) >= RESELECT_OVERLAP * len(index):
            preview = imgcore.draw_contour(frame, group_mask(space, g))
            return replace(space, focus=Focus("pending", g.id, reselect=True), last_dir=None), preview

    label = 0
    if space.scene.labels is not None:
        vals, counts = np.unique(space.scene.labels[index], return_counts=True)
        label = int(vals[np.argmax(counts)])
    group = Group(space.next_id, index, label)
    out = replace(space, groups=space.groups + (group,), focus=Focus("pending", group.id),
                  next_id=space.next_id + 1, last_dir=None)
    return out, imgcore.draw_contour(frame, group_mask(out, group))


def accept_focus(space: Scene3D) -> Scene3D:
    if not space.focus.is_pending:
        raise WrongFocus("nothing pending to accept")
    return replace(space, focus=Focus("object", space.focus.layer_id), last_dir=None)


def reject_focus(space: Scene3D) -> Scene3D:
    if not space.focus.is_pending:
        raise WrongFocus("nothing pending to reject")
    groups = space.groups
    if not space.focus.reselect:
        groups = tuple(g for g in groups if g.id != space.focus.layer_id)
    return replace(space, groups=groups, focus=CURSOR, last_dir=None)


def ignore(space: Scene3D) -> Scene3D:
    if not space.focus.is_object:
        raise WrongFocus("ignore needs an object in focus")
    visible = space.visible.copy()
    visible[space.focused.index] = False
    return replace(space, visible=visible, focus=CURSOR, last_dir=None)


class MoveResult(NamedTuple):
    scene: Scene3D
    refused: bool


def move_object(space: Scene3D, direction) -> MoveResult:
    """Translate the focused group by the current step, mapped to world units."""
    if not space.focus.is_object:
        raise WrongFocus("object moves need an object in focus")
    d = Direction.parse(direction)
    g = space.focused
    step = space.step.advance(d, space.last_dir)
    delta = direction_vector(d, space.view.camera) * (step.pixels / space.view.scale)
    cx, cy = space.scene.centers[g.index, :2].mean(0) + delta[:2]
    px, py = space.view.world_to_pixel(cx, cy)
    x, y = int(round(float(px))), int(round(float(py)))
    w, h = space.size
    if not (0 <= x < w and 0 <= y < h):
        return MoveResult(space, True)
    if space.region is not None and not space.region.contains(cx, cy):
        return MoveResult(space, True)
    moved = space.scene.translated(delta, g.index)
    return MoveResult(replace(space, scene=moved, step=step, last_dir=d), False)


def release_object(space: Scene3D) -> Scene3D:
    if not space.focus.is_object:
        raise WrongFocus("nothing to release")
    return replace(space, focus=CURSOR, last_dir=None)


def draw_box_at_cursor(space: Scene3D) -> Scene3D:
    if not space.focus.is_cursor:
        raise WrongFocus("box markers are drawn at the cursor")
    x, y = space.cursor
    r = BOX_SIZE // 2
    return replace(space, marks=space.marks + (Rect(x - r, y - r, x + r, y + r),))
