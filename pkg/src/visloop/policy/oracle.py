"""Ground-truth policies that execute each task plan perfectly.

They read the live scene and the task instance from the observation's
privileged handles, which are never serialised, and they answer only with
legal command text. They serve as the desk-scale verification harness.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

from .. import scene2d
from ..base import Direction, StepSchedule
from ..scene2d import Scene2D
from ..scene3d import space as space3d
from .prompts import CURSOR_MODE, OBJECT_MODE, VERIFY_MODE


def next_move(pos, target, step: StepSchedule, last: Direction | None, inside=None) -> Direction:
    """Direction of the next coarse-to-fine move from ``pos`` towards ``target``.

    Always steps towards the target along the axis with the larger offset.
    Overshooting makes the following move a reversal, which halves the
    step, so the distance converges to within half the floor step.
    ``inside(x, y)`` can veto moves that would be refused.
    """
    dx, dy = target[0] - pos[0], target[1] - pos[1]
    ax = (abs(dx) > abs(dy)) or (abs(dx) == abs(dy) and last in (Direction.LEFT, Direction.RIGHT))
    tx = Direction.RIGHT if dx > 0 else Direction.LEFT
    ty = Direction.DOWN if dy > 0 else Direction.UP
    first, second = (tx, ty) if ax else (ty, tx)
    order = [first]
    if (dy if ax else dx) != 0:
        order.append(second)
    order += [first.opposite, second.opposite]
    if inside is None:
        return order[0]
    for d in order:
        n = step.advance(d, last).pixels
        ddx, ddy = d.delta
        if inside(pos[0] + ddx * n, pos[1] + ddy * n):
            return d
    return order[0]


def interior_point(mask: np.ndarray) -> tuple[int, int]:
    """Pixel of ``mask`` farthest from its boundary (first in raster order on ties)."""
    box = np.argwhere(mask)
    (y0, x0), (y1, x1) = box.min(0), box.max(0)
    crop = np.pad(mask[y0:y1 + 1, x0:x1 + 1], 1)
    edt = ndimage.distance_transform_edt(crop)
    j, i = np.unravel_index(int(np.argmax(edt)), edt.shape)
    return int(x0 + i - 1), int(y0 + j - 1)


def _labels(space) -> np.ndarray:
    if isinstance(space, Scene2D):
        return scene2d.render_labels(space)
    return space3d.render_labels(space)


def _focused_mask(space) -> np.ndarray:
    if isinstance(space, Scene2D):
        return space.focused.placed_mask(space.base.shape)
    return space3d.group_mask(space, space.focused)


def _point(space, object_id) -> tuple[float, float]:
    if isinstance(space, Scene2D):
        return scene2d.layer_point(space, object_id)
    return space3d.group_point(space, object_id)


def _iou(a, b) -> float:
    inter = np.count_nonzero(a & b)
    union = np.count_nonzero(a | b)
    return inter / union if union else 0.0


class OracleBase:
    """Shared cursor navigation: walk to a target label, then FOCUS."""

    def __init__(self):
        self.target: int | None = None
        self._goal: tuple[int, int] | None = None

    def decide(self, req) -> str:
        obs = req.observation
        p = obs.privileged or {}
        return self.act(p["space"], p["task"], p.get("state", {}), obs.mode)

    def act(self, space, task, state, mode) -> str:
        raise NotImplementedError

    def _pick(self, space, labels, candidates) -> None:
        """Nearest candidate label by interior point."""
        cx, cy = space.cursor
        best = None
        for lab in sorted(candidates):
            pt = interior_point(labels == lab)
            d = (pt[0] - cx) ** 2 + (pt[1] - cy) ** 2
            if best is None or d < best[0]:
                best = (d, lab, pt)
        _, self.target, self._goal = best

    def _approach(self, space, labels) -> str:
        x, y = space.cursor
        if labels[y, x] == self.target:
            return "FOCUS"
        if labels[self._goal[1], self._goal[0]] != self.target:
            self._goal = interior_point(labels == self.target)
        d = next_move(space.cursor, self._goal, space.step, space.last_dir)
        return f"MOVE {d.value}"

    def _verify(self, space, labels) -> str:
        lay = space.focused
        ok = lay.label == self.target and _iou(_focused_mask(space), labels == self.target) >= 0.5
        return "ACCEPT" if ok else "REJECT"


class CountingOracle(OracleBase):
    """Remove the nearest remaining object until none are left, then report the count."""

    def act(self, space, task, state, mode) -> str:
        labels = _labels(space)
        if mode == VERIFY_MODE:
            return self._verify(space, labels)
        if mode == OBJECT_MODE:
            return "IGNORE"
        remaining = set(np.unique(labels).tolist()) - {0}
        if not remaining:
            removed = sum(1 for lay in space.layers if not lay.visible)
            return f"ANSWER: {removed}"
        if self.target not in remaining:
            self._pick(space, labels, remaining)
        return self._approach(space, labels)


class JigsawOracle(OracleBase):
    """Carry each tray piece to its slot and release it inside the snap radius."""

    def act(self, space, task, state, mode) -> str:
        inst = task.instance
        labels = _labels(space)
        if mode == VERIFY_MODE:
            return self._verify(space, labels)
        if mode == OBJECT_MODE:
            lay = space.focused
            slot = lay.label - 1
            goal = inst.slot_centers[slot]
            pos = _point(space, lay.id)
            tol = math.floor(inst.snap_radius / math.sqrt(2))
            if abs(pos[0] - goal[0]) <= tol and abs(pos[1] - goal[1]) <= tol:
                return "RELEASE"
            w, h = space.size
            d = next_move(pos, goal, space.step, space.last_dir,
                          inside=lambda x, y: 0 <= round(x) < w and 0 <= round(y) < h)
            return f"MOVE {d.value}"
        remaining = set(np.unique(labels).tolist()) - {0}
        if not remaining:
            return "ANSWER: done"
        if self.target not in remaining:
            self._pick(space, labels, remaining)
        return self._approach(space, labels)


class PlacementOracle(OracleBase):
    """Pick up the named object, carry it into the target region, release, answer."""

    def act(self, space, task, state, mode) -> str:
        inst = task.instance
        self.target = inst.target_id
        labels = _labels(space)
        region = inst.regions[0]
        if mode == VERIFY_MODE:
            return self._verify(space, labels)
        if mode == OBJECT_MODE:
            pos = _point(space, space.focus.layer_id)
            goal = interior_point(region)
            rin = ndimage.distance_transform_edt(np.pad(region, 1))[goal[1] + 1, goal[0] + 1]
            tol = max(math.floor((rin - 1) / math.sqrt(2)), 0)
            if abs(pos[0] - goal[0]) <= tol and abs(pos[1] - goal[1]) <= tol:
                return "RELEASE"
            platform = inst.platform
            h, w = platform.shape

            def inside(x, y):
                i, j = int(round(x)), int(round(y))
                return 0 <= i < w and 0 <= j < h and bool(platform[j, i])

            d = next_move(pos, goal, space.step, space.last_dir, inside=inside)
            return f"MOVE {d.value}"
        if state.get("placed"):
            return "ANSWER: done"
        if self._goal is None or labels[self._goal[1], self._goal[0]] != self.target:
            self._goal = interior_point(labels == self.target)
        return self._approach(space, labels)


class QAOracle(OracleBase):
    """Focus the ground-truth box of the queried object and read off its attribute."""

    def act(self, space, task, state, mode) -> str:
        inst = task.instance
        if inst.bbox is None:
            return f"ANSWER: {inst.answer}"
        if mode == CURSOR_MODE:
            return "RECT {},{},{},{}".format(*inst.bbox)
        return f"ANSWER: {inst.answer}"


class OracleComparator:
    """Prefers the candidate with the higher ground-truth score; left wins ties."""

    def __init__(self, scores):
        self.scores = list(scores)

    def decide(self, req) -> str:
        i, j = req.observation.privileged["pair"]
        return "ANSWER: 1" if self.scores[i] >= self.scores[j] else "ANSWER: 2"


ORACLES = {"counting": CountingOracle, "jigsaw": JigsawOracle, "placement": PlacementOracle, "qa": QAOracle}


def oracle_policy(task) -> OracleBase:
    """Fresh oracle for ``task`` (one instance per episode)."""
    return ORACLES[task.kind]()
