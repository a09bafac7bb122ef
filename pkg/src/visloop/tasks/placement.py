"""Object placement: find the named object and move it into a free spot on a platform.

Two flavours share one task class. The 2D flavour is a layered image with a
table platform; the 3D flavour is a Gaussian tabletop seen from above. In
both, the platform is the region mask that constrains object moves.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .. import scene2d
from ..base import CURSOR
from ..policy.actions import ACCEPT, RELEASE
from ..policy.oracle import interior_point
from ..scene2d import Scene2D
from ..scene3d import GaussianScene, TopDownView, new_space
from ..scene3d import space as space3d
from ..scene3d.render import coverage_mask
from ..segmenter import InstanceMapOracle
from .common import PackingFailed, Task
from .synth import NAMED_COLORS, SHAPES, disc, paint, shape_mask, smooth_texture

GENERATOR_VERSION = "placement-1"
RELATIONS = {"left": (-1, 0), "right": (1, 0), "above": (0, -1), "below": (0, 1)}
RELATION_TEXT = {"left": "to the left of", "right": "to the right of", "above": "above", "below": "below"}
PLATFORM_2D = (24, 48, 232, 224)  # x0, y0, x1, y1 exclusive
OFFSET_2D = 50.0
REGION_RADIUS_2D = 14.0
TABLE_3D = (-5.0, 5.0, -3.5, 3.5)
BOUNDS_3D = (-6.0, 6.0, -4.5, 4.5)
VIEW_HEIGHT_3D = 96
OFFSET_3D = 2.6
REGION_RADIUS_3D = 8.0

PLAN = ("Place an object as instructed. Move the cursor onto the object named in the instruction and "
        "FOCUS. ACCEPT only if the highlight is exactly that object; the first object you accept must "
        "be the right one. Then MOVE it to where the instruction asks and RELEASE it there. Moves that "
        "would take the object off the table are refused. When it is in place, reply ANSWER: done.\n"
        "Instruction: ")


@dataclass
class PlacementInstance:
    prompt: str
    target_id: int
    regions: list
    platform: np.ndarray
    dim: int = 2
    image: np.ndarray | None = None
    labels: np.ndarray | None = None
    gaussians: GaussianScene | None = None
    view: TopDownView | None = None
    anchor_id: int | None = None
    relation: str | None = None
    objects: list = field(default_factory=list)
    target_point: tuple | None = None  # used instead of label ids when there is no instance map
    seed: int | None = None
    params: dict = field(default_factory=dict)


def _describe(obj: dict) -> str:
    return f"{obj['color']} {obj['shape']}" if obj.get("shape") else f"{obj['color']} object"


def _prompt(target: dict, anchor: dict, relation: str) -> str:
    return f"Put the {_describe(target)} {RELATION_TEXT[relation]} the {_describe(anchor)}."


def _pick_roles(rng, objects, offset, radius, free_ok, max_tries=50):
    """Target, anchor and relation whose goal disc passes ``free_ok``."""
    n = len(objects)
    for _ in range(max_tries):
        t, a = (int(v) for v in rng.choice(n, 2, replace=False))
        rel = list(RELATIONS)[int(rng.integers(4))]
        dx, dy = RELATIONS[rel]
        ax, ay = objects[a]["center"]
        goal = (ax + dx * offset, ay + dy * offset)
        if free_ok(goal, radius):
            return t, a, rel, goal
    return None


def gen_placement(seed: int, n_objects: int = 4, width: int = 256, height: int = 256,
                  max_tries: int = 200) -> PlacementInstance:
    """2D tabletop with distinct coloured shapes and one placement instruction."""
    if n_objects < 2:
        raise ValueError("placement needs at least two objects")
    rng = np.random.default_rng(seed)
    x0, y0, x1, y1 = PLATFORM_2D
    platform = np.zeros((height, width), bool)
    platform[y0:y1, x0:x1] = True
    image = smooth_texture(rng, width, height, color=(70, 80, 95))
    table = smooth_texture(rng, width, height, color=(170, 140, 100), amplitude=10.0)
    image[platform] = table[platform]
    names = list(NAMED_COLORS)
    for _ in range(max_tries):
        colors = [names[i] for i in rng.choice(len(names), n_objects, replace=False)]
        labels = np.zeros((height, width), np.int32)
        objects, ok = [], True
        for k, color in enumerate(colors, start=1):
            for _ in range(max_tries):
                r = rng.uniform(12, 16)
                cx, cy = rng.uniform(x0 + r + 4, x1 - r - 4), rng.uniform(y0 + r + 4, y1 - r - 4)
                if all(np.hypot(cx - o["center"][0], cy - o["center"][1]) > r + o["radius"] + 8 for o in objects):
                    break
            else:
                ok = False
                break
            kind = SHAPES[int(rng.integers(len(SHAPES)))]
            m = shape_mask(kind, cx, cy, r, width, height, angle=rng.uniform(0, 2 * np.pi))
            labels[m] = k
            objects.append({"id": k, "shape": kind, "color": color, "center": [float(cx), float(cy)],
                            "radius": float(r)})
        if not ok:
            continue
        occupied = ndimage.binary_dilation(labels > 0, iterations=4)

        def free_ok(goal, radius):
            d = disc(goal[0], goal[1], radius, width, height)
            return d.sum() > 0 and not (d & ~platform).any() and not (d & occupied).any()

        roles = _pick_roles(rng, objects, OFFSET_2D, REGION_RADIUS_2D, free_ok)
        if roles is None:
            continue
        t, a, rel, goal = roles
        for o in objects:
            image = paint(image, labels == o["id"], NAMED_COLORS[o["color"]])
        region = disc(goal[0], goal[1], REGION_RADIUS_2D, width, height)
        return PlacementInstance(_prompt(objects[t], objects[a], rel), t + 1, [region], platform, 2, image,
                                 labels, anchor_id=a + 1, relation=rel, objects=objects, seed=seed,
                                 params={"n_objects": n_objects, "width": width, "height": height,
                                         "dim": 2, "version": GENERATOR_VERSION})
    raise PackingFailed(f"could not build a placement scene (seed {seed})")


def _table_gaussians(rng) -> GaussianScene:
    xmin, xmax, ymin, ymax = TABLE_3D
    xs = np.arange(xmin, xmax + 1e-9, 0.25)
    ys = np.arange(ymin, ymax + 1e-9, 0.25)
    gx, gy = np.meshgrid(xs, ys)
    centers = np.stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)], 1)
    base = np.array([0.62, 0.5, 0.36])
    colors = np.clip(base + rng.normal(0, 0.03, (len(centers), 3)), 0, 1)
    return GaussianScene.build(centers, (0.18, 0.18, 0.03), opacities=0.95, colors=colors, labels=0)


def _cluster(rng, center, color, label, n=40, sigma=0.35) -> GaussianScene:
    pts = rng.normal(0.0, sigma, (n, 3)) + np.asarray(center)
    rgb = np.clip(np.asarray(color) / 255.0 + rng.normal(0, 0.02, (n, 3)), 0, 1)
    return GaussianScene.build(pts, 0.2, opacities=0.9, colors=rgb, labels=label)


def gen_placement_3d(seed: int, n_objects: int = 3, max_tries: int = 200) -> PlacementInstance:
    """Gaussian tabletop with blob objects; the top-down view is the working image."""
    if n_objects < 2:
        raise ValueError("placement needs at least two objects")
    rng = np.random.default_rng(seed)
    view = TopDownView(BOUNDS_3D, VIEW_HEIGHT_3D)
    table = _table_gaussians(rng)
    w, h = view.width_px, view.height_px
    platform = ndimage.binary_erosion(coverage_mask(table, view.camera), iterations=3)
    names = list(NAMED_COLORS)
    xmin, xmax, ymin, ymax = TABLE_3D
    for _ in range(max_tries):
        colors = [names[i] for i in rng.choice(len(names), n_objects, replace=False)]
        objects = []
        for k, color in enumerate(colors, start=1):
            for _ in range(max_tries):
                c = (rng.uniform(xmin + 1.2, xmax - 1.2), rng.uniform(ymin + 1.2, ymax - 1.2))
                if all(np.hypot(c[0] - o["world"][0], c[1] - o["world"][1]) > 2.2 for o in objects):
                    break
            else:
                raise PackingFailed(f"could not place object {k} (seed {seed})")
            px, py = view.world_to_pixel(*c)
            objects.append({"id": k, "color": color, "world": [float(c[0]), float(c[1]), 1.2],
                            "center": [float(px), float(py)], "radius": 1.2 * view.scale})
        parts = [table] + [_cluster(rng, o["world"], NAMED_COLORS[o["color"]], o["id"]) for o in objects]
        scene = GaussianScene.concat(parts)
        occupied = np.zeros((h, w), bool)
        for o in objects:
            occupied |= disc(o["center"][0], o["center"][1], o["radius"], w, h)

        def free_ok(goal, radius):
            d = disc(goal[0], goal[1], radius, w, h)
            return d.sum() > 0 and not (d & ~platform).any() and not (d & occupied).any()

        roles = _pick_roles(rng, objects, OFFSET_3D * view.scale, REGION_RADIUS_3D, free_ok)
        if roles is None:
            continue
        t, a, rel, goal = roles
        region = disc(goal[0], goal[1], REGION_RADIUS_3D, w, h)
        return PlacementInstance(_prompt(objects[t], objects[a], rel), t + 1, [region], platform, 3,
                                 gaussians=scene, view=view, anchor_id=a + 1, relation=rel, objects=objects,
                                 seed=seed, params={"n_objects": n_objects, "dim": 3,
                                                    "version": GENERATOR_VERSION})
    raise PackingFailed(f"could not build a 3D placement scene (seed {seed})")


def contact_point(space, handle) -> tuple[float, float]:
    """Lowest point of the object in the working image (its resting contact)."""
    if isinstance(space, Scene2D):
        m = space.layer(handle).placed_mask(space.base.shape)
        ys, xs = np.nonzero(m)
        bottom = ys.max()
        return float(xs[ys == bottom].mean()), float(bottom)
    return space3d.group_point(space, handle)


def object_point(space, handle) -> tuple[float, float]:
    if isinstance(space, Scene2D):
        return scene2d.layer_point(space, handle)
    return space3d.group_point(space, handle)


def in_regions(point, regions) -> bool:
    if point is None:
        return False
    x, y = int(round(point[0])), int(round(point[1]))
    return any(0 <= y < r.shape[0] and 0 <= x < r.shape[1] and bool(r[y, x]) for r in regions)


class PlacementTask(Task):
    kind = "placement"
    default_budget = 60

    @property
    def plan(self) -> str:
        return PLAN + self.instance.prompt

    def initial_space(self):
        inst = self.instance
        if inst.dim == 2:
            return scene2d.new_scene(inst.image, labels=inst.labels, region_mask=inst.platform)
        return new_space(inst.gaussians, inst.view, region_mask=inst.platform)

    def init_state(self) -> dict:
        return {"first_accept": None, "first_layer": None, "placed": False}

    def _is_target(self, space, label: int) -> bool:
        inst = self.instance
        if inst.target_point is None:
            return label == inst.target_id
        x, y = (int(round(v)) for v in inst.target_point)
        if isinstance(space, Scene2D):
            m = space.focused.placed_mask(space.base.shape)
        else:
            m = space3d.group_mask(space, space.focused)
        return 0 <= y < m.shape[0] and 0 <= x < m.shape[1] and bool(m[y, x])

    def after_action(self, space, action, event: dict, state: dict):
        if "error" in event:
            return space, None
        if action.kind == ACCEPT and state["first_layer"] is None:
            state["first_layer"] = space.focus.layer_id
            state["first_accept"] = event.get("label", 0)
            state["locating"] = self._is_target(space, event.get("label", 0))
        elif action.kind == RELEASE and event["object"] == state["first_layer"] and state.get("locating"):
            state["placed"] = True
            event["point"] = list(object_point(space, event["object"]))
            event["contact_point"] = list(contact_point(space, event["object"]))
        return space, None

    def evaluate(self, ep) -> dict:
        locating = bool(ep.state.get("locating"))
        handle = ep.state.get("first_layer")
        point = contact = None
        if handle is not None:
            point = object_point(ep.space, handle)
            contact = contact_point(ep.space, handle)
        placed = locating and in_regions(point, self.instance.regions)
        return {"locating": locating, "placement": placed, "correct": placed,
                "point": None if point is None else list(point),
                "contact_point": None if contact is None else list(contact)}


@dataclass
class PlacementMetrics:
    locating_rate: float
    placement_rate: float
    n: int


def score_placement(results) -> PlacementMetrics:
    """Locating and placement success; placement is gated on locating."""
    results = list(results)
    if not results:
        return PlacementMetrics(0.0, 0.0, 0)
    loc = [bool(r["locating"]) for r in results]
    plc = [bool(r["locating"] and r["placement"]) for r in results]
    return PlacementMetrics(float(np.mean(loc)), float(np.mean(plc)), len(results))


# --------------------------------------------------------------------------
# Candidate locations for the sampling baseline (2D only)


def lift_target(task: PlacementTask):
    """Initial scene with the target cut out as an object layer; returns ``(scene, layer_id)``."""
    inst = task.instance
    if inst.dim != 2 or inst.labels is None:
        raise ValueError("candidate rendering needs a 2D instance with an instance map")
    space = task.initial_space()
    space = replace(space, cursor=interior_point(inst.labels == inst.target_id))
    space, _ = scene2d.request_focus(space, InstanceMapOracle())
    space = scene2d.accept_focus(space)
    return space, space.focus.layer_id


def candidate_points(instance: PlacementInstance, k: int, rng: np.random.Generator,
                     include_truth: bool = False) -> list:
    """``k`` platform pixels drawn uniformly; optionally one is a ground-truth point."""
    ys, xs = np.nonzero(instance.platform)
    pick = rng.choice(len(xs), k, replace=False)
    pts = [(float(xs[i]), float(ys[i])) for i in pick]
    if include_truth:
        pts[int(rng.integers(k))] = tuple(float(v) for v in interior_point(instance.regions[0]))
    return pts


def render_candidate(space, layer_id: int, point) -> tuple[np.ndarray, tuple]:
    """Clean render with the layer translated so its point sits nearest ``point``."""
    lay = space.layer(layer_id)
    px, py = lay.point()
    offset = (lay.offset[0] + int(round(point[0] - px)), lay.offset[1] + int(round(point[1] - py)))
    moved = replace(lay, offset=offset)
    layers = tuple(moved if x.id == layer_id else x for x in space.layers)
    out = replace(space, layers=layers, focus=CURSOR)
    return scene2d.render_clean(out), moved.point()
