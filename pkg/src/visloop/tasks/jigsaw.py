"""Jigsaw: carry the missing pieces from a side tray into their black slots."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .. import imgcore, scene2d
from ..policy.actions import RELEASE
from ..runtime.episode import BUDGET_EXHAUSTED
from .common import Task
from .synth import paint, shape_mask, smooth_texture, vivid_color

GENERATOR_VERSION = "jigsaw-1"
ROWS_RANGE = (3, 5)
COLS_RANGE = (5, 8)
MISSING_CHOICES = (4, 6)
ATTEMPTS_BUDGET = 20
ACTIONS_PER_PIECE = 40
MARGIN = 10
TRAY_GAP = 10
BACKGROUND = (60, 60, 60, 255)
HOLE = (0, 0, 0, 255)

PLAN = ("Complete the jigsaw. The board has black holes; the missing pieces wait in the tray on the "
        "right. Move the cursor onto a tray piece and FOCUS, ACCEPT it, then MOVE it over the hole "
        "where it belongs and RELEASE. A piece released close to its correct hole snaps into place. "
        "When every hole is filled, reply ANSWER: done.")


@dataclass
class JigsawInstance:
    source: np.ndarray
    rows: int
    cols: int
    cell: int
    missing: tuple
    image: np.ndarray
    labels: np.ndarray
    board_origin: tuple[int, int]
    tray_positions: dict
    slot_centers: dict
    snap_radius: float
    attempts_budget: int = ATTEMPTS_BUDGET
    seed: int | None = None
    params: dict = field(default_factory=dict)

    def slot_origin(self, slot: int) -> tuple[int, int]:
        r, c = divmod(slot, self.cols)
        return self.board_origin[0] + c * self.cell, self.board_origin[1] + r * self.cell

    def piece(self, slot: int) -> np.ndarray:
        r, c = divmod(slot, self.cols)
        k = self.cell
        return self.source[r * k:(r + 1) * k, c * k:(c + 1) * k]


@dataclass(frozen=True)
class Snapped:
    slot: int


@dataclass(frozen=True)
class NoSnap:
    distance: float


def validate_grid(rows: int, cols: int, n_missing: int) -> None:
    if not ROWS_RANGE[0] <= rows <= ROWS_RANGE[1]:
        raise ValueError(f"rows must lie in {ROWS_RANGE}, got {rows}")
    if not COLS_RANGE[0] <= cols <= COLS_RANGE[1]:
        raise ValueError(f"cols must lie in {COLS_RANGE}, got {cols}")
    if n_missing not in MISSING_CHOICES:
        raise ValueError(f"n_missing must be one of {MISSING_CHOICES}, got {n_missing}")


def default_source(rng: np.random.Generator, width: int, height: int) -> np.ndarray:
    """Busy picture so neighbouring pieces look different."""
    img = smooth_texture(rng, width, height, color=(120, 130, 140), amplitude=90.0, sigma=18.0)
    for _ in range(max(width * height // 2500, 4)):
        r = rng.uniform(8, 22)
        m = shape_mask(("circle", "square", "star")[int(rng.integers(3))], rng.uniform(0, width),
                       rng.uniform(0, height), r, width, height, angle=rng.uniform(0, 2 * np.pi))
        img = paint(img, m, vivid_color(rng))
    return img


def gen_jigsaw(seed: int, source: np.ndarray | None = None, rows: int = 3, cols: int = 5,
               n_missing: int = 4, cell: int = 40) -> JigsawInstance:
    """Board with ``n_missing`` black holes and their pieces in a right-hand tray.

    The tray is one column right of the board with fixed gaps. Tray pieces
    carry instance ids ``slot + 1``; the board is background (id 0).
    """
    validate_grid(rows, cols, n_missing)
    rng = np.random.default_rng(seed)
    bw, bh = cols * cell, rows * cell
    if source is None:
        source = default_source(rng, bw, bh)
    else:
        source = imgcore.as_image(source)
        if source.shape[:2] != (bh, bw):
            source = np.asarray(Image.fromarray(source).resize((bw, bh), Image.BILINEAR))
    missing = tuple(sorted(int(s) for s in rng.choice(rows * cols, n_missing, replace=False)))

    board = (MARGIN, MARGIN)
    tray_x = MARGIN + bw + TRAY_GAP
    tray_h = n_missing * cell + (n_missing - 1) * TRAY_GAP
    width = tray_x + cell + MARGIN
    height = max(bh, tray_h) + 2 * MARGIN
    image = imgcore.new_image(width, height, BACKGROUND)
    image[board[1]:board[1] + bh, board[0]:board[0] + bw] = source
    labels = np.zeros((height, width), np.int32)
    # tray order is shuffled so position in the tray gives nothing away
    order = [missing[i] for i in rng.permutation(n_missing)]
    tray, centers = {}, {}
    for k, slot in enumerate(order):
        tray[slot] = (tray_x, MARGIN + k * (cell + TRAY_GAP))
    inst = JigsawInstance(source, rows, cols, cell, missing, image, labels, board, tray, centers,
                          snap_radius=0.5 * cell, seed=seed,
                          params={"rows": rows, "cols": cols, "n_missing": n_missing, "cell": cell,
                                  "version": GENERATOR_VERSION})
    for slot in missing:
        x0, y0 = inst.slot_origin(slot)
        image[y0:y0 + cell, x0:x0 + cell] = HOLE
        tx, ty = tray[slot]
        image[ty:ty + cell, tx:tx + cell] = inst.piece(slot)
        labels[ty:ty + cell, tx:tx + cell] = slot + 1
        centers[slot] = (x0 + (cell - 1) / 2, y0 + (cell - 1) / 2)
    return inst


def snap(instance: JigsawInstance, piece: int, location) -> Snapped | NoSnap:
    """Magnetic snap: within ``snap_radius`` of the piece's own slot centre."""
    if piece not in instance.missing:
        raise ValueError(f"{piece} is not a missing piece")
    cx, cy = instance.slot_centers[piece]
    d = math.hypot(location[0] - cx, location[1] - cy)
    return Snapped(piece) if d <= instance.snap_radius else NoSnap(d)


def completion_from_space(space, instance: JigsawInstance) -> float:
    """Fraction of missing pieces locked into their slots in a scene."""
    locked = {lay.label - 1 for lay in space.layers if lay.locked and lay.label > 0}
    return len(locked & set(instance.missing)) / len(instance.missing)


def completion_from_trace(records, instance: JigsawInstance) -> float:
    snapped = set()
    for rec in records:
        ev = rec.get("event") or {}
        if rec.get("kind") == "step" and ev.get("snapped_slot") is not None:
            snapped.add(ev["snapped_slot"])
    return len(snapped) / len(instance.missing)


class JigsawTask(Task):
    kind = "jigsaw"
    plan = PLAN

    @property
    def default_budget(self) -> int:
        return ACTIONS_PER_PIECE * len(self.instance.missing)

    def initial_space(self):
        return scene2d.new_scene(self.instance.image, labels=self.instance.labels)

    def init_state(self) -> dict:
        return {"attempts": 0, "snapped": []}

    def after_action(self, space, action, event: dict, state: dict):
        if action.kind != RELEASE or "error" in event or event.get("label", 0) <= 0:
            return space, None
        inst = self.instance
        slot = event["label"] - 1
        state["attempts"] += 1
        res = snap(inst, slot, scene2d.layer_point(space, event["object"]))
        if isinstance(res, Snapped):
            space = scene2d.lock_layer(space, event["object"], inst.slot_origin(slot))
            state["snapped"].append(slot)
            event["snap"] = f"snapped into slot {slot}"
            event["snapped_slot"] = slot
        else:
            event["snap"] = "not close enough to snap"
        if state["attempts"] >= inst.attempts_budget and len(state["snapped"]) < len(inst.missing):
            return space, BUDGET_EXHAUSTED
        return space, None

    def evaluate(self, ep) -> dict:
        rate = completion_from_space(ep.space, self.instance)
        return {"snapped": len(set(ep.state.get("snapped", []))), "missing": len(self.instance.missing),
                "completion": rate, "attempts": ep.state.get("attempts", 0), "correct": rate == 1.0}


@dataclass
class JigsawMetrics:
    completion_rate: float
    snapped: int
    missing: int
    n: int


def score_jigsaw(results) -> JigsawMetrics:
    """Snapped pieces over missing pieces, pooled across instances.

    ``results`` are evaluation dicts with ``snapped`` and ``missing`` counts.
    """
    results = list(results)
    snapped = sum(r["snapped"] for r in results)
    missing = sum(r["missing"] for r in results)
    return JigsawMetrics(snapped / missing if missing else 0.0, snapped, missing, len(results))
