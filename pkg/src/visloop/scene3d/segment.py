"""Conditional segmentation of a Gaussian scene from a single pixel selection.

An orbit of cameras is placed around the selected content, a video
segmentation request yields per-frame masks, and every masked pixel casts a
ray that votes for the Gaussians contributing to it. Gaussians with enough
votes form a shell; Gaussians enclosed by the shell are added to it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..base import Direction, SegmentationFailed
from ..segmenter import VIDEO_SEQUENCE, ProviderError, SegmentRequest, segment
from .gaussians import Camera, GaussianScene
from .render import TopDownView, label_map, splat, to_image

logger = logging.getLogger(__name__)

INTERSECT_ALPHA = 1e-4
RAY_CHUNK = 512


class NoVotes(ValueError):
    pass


class MaskShapeMismatch(ValueError):
    pass


@dataclass(frozen=True)
class SegConfig:
    eps1: float = 0.05
    eps2: float = 0.01
    vote_fraction: float = 0.1
    n_frames: int = 24
    orbit_elevation: float = np.deg2rad(20.0)
    orbit_radius_factor: float = 3.0
    orbit_fov: float = np.deg2rad(60.0)
    grid: int = 64
    footprint_sigma: float = 1.0
    max_footprint_voxels: float = 6.0

    def __post_init__(self):
        if not (0 < self.eps1 < 1 and 0 < self.eps2 < 1):
            raise ValueError("eps1 and eps2 must lie in (0, 1)")
        if not 0 < self.vote_fraction <= 1:
            raise ValueError("vote_fraction must lie in (0, 1]")
        if self.n_frames < 1:
            raise ValueError("n_frames must be >= 1")


def make_orbit(target_center, target_radius: float, cfg: SegConfig, width: int = 128,
               height: int = 128) -> list[Camera]:
    """Cameras evenly spaced in azimuth at fixed elevation, all looking at the target."""
    if target_radius <= 0:
        raise ValueError("target_radius must be positive")
    c = np.asarray(target_center, dtype=np.float64)
    dist = cfg.orbit_radius_factor * target_radius
    e = cfg.orbit_elevation
    cams = []
    for k in range(cfg.n_frames):
        az = 2 * np.pi * k / cfg.n_frames
        pos = c + dist * np.array([np.cos(e) * np.cos(az), np.cos(e) * np.sin(az), np.sin(e)])
        cams.append(Camera(tuple(pos), tuple(c), (0.0, 0.0, 1.0), cfg.orbit_fov, width, height))
    return cams


def ray_alphas(scene: GaussianScene, origins: np.ndarray, dirs: np.ndarray):
    """Alpha of every Gaussian on every ray and the depth of its centre along the ray.

    Alpha is evaluated at the ray point nearest (Euclidean) to the Gaussian
    centre. Returns ``(alpha, depth)`` arrays of shape (R, G).
    """
    rel = scene.centers[None, :, :] - origins[:, None, :]
    depth = np.einsum("rgk,rk->rg", rel, dirs)
    d = depth[..., None] * dirs[:, None, :] - rel
    m = np.einsum("rgi,gij,rgj->rg", d, scene.inv_covariances, d)
    alpha = scene.opacities[None, :] * np.exp(-0.5 * m)
    return alpha, depth


def transmittance_chain(alphas: np.ndarray, eps2: float):
    """Contributions along depth-sorted rays.

    ``alphas`` is (R, K) in front-to-back order. Returns ``(contrib, visited)``
    where ``contrib[i] = alpha[i] * prod_{j<i}(1 - alpha[j])`` and ``visited``
    is False once the running transmittance has dropped below ``eps2``.
    """
    alphas = np.atleast_2d(alphas)
    before = np.cumprod(np.concatenate([np.ones((alphas.shape[0], 1)), 1.0 - alphas[:, :-1]], axis=1), axis=1)
    return before * alphas, before >= eps2


def ray_vote(scene: GaussianScene, cam: Camera, mask: np.ndarray, cfg: SegConfig,
             votes: np.ndarray | None = None) -> np.ndarray:
    """Add one vote per ray to every Gaussian whose contribution exceeds ``eps1``."""
    if mask.shape != (cam.height, cam.width):
        raise MaskShapeMismatch(f"mask {mask.shape} vs camera {(cam.height, cam.width)}")
    votes = np.zeros(len(scene), dtype=np.int64) if votes is None else votes.copy()
    py, px = np.nonzero(mask)
    reach2 = _reach(scene) ** 2
    c = scene.centers
    c2 = np.einsum("gk,gk->g", c, c)
    for s in range(0, len(px), RAY_CHUNK):
        origins, dirs = cam.pixel_rays(px[s:s + RAY_CHUNK], py[s:s + RAY_CHUNK])
        # exact cull: beyond its reach a Gaussian cannot reach the hit threshold
        od = np.einsum("rk,rk->r", origins, dirs)
        along = dirs @ c.T - od[:, None]
        dist2 = c2[None, :] - 2 * origins @ c.T + np.einsum("rk,rk->r", origins, origins)[:, None] - along ** 2
        near = np.nonzero(((dist2 <= reach2[None, :]) & (along > 0)).any(axis=0))[0]
        if not len(near):
            continue
        alpha, depth = ray_alphas(scene.subset(near), origins, dirs)
        hit = (alpha > INTERSECT_ALPHA) & (depth > 0)
        key = np.where(hit, depth, np.inf)
        order = np.argsort(key, axis=1, kind="stable")
        a = np.take_along_axis(np.where(hit, alpha, 0.0), order, axis=1)
        h = np.take_along_axis(hit, order, axis=1)
        contrib, visited = transmittance_chain(a, cfg.eps2)
        win = h & visited & (contrib > cfg.eps1)
        np.add.at(votes, near[order[win]], 1)
    return votes


def _reach(scene: GaussianScene) -> np.ndarray:
    """Distance from each centre beyond which alpha stays at or below the hit threshold."""
    op = np.maximum(scene.opacities, INTERSECT_ALPHA)
    return 1.01 * scene.scales.max(axis=1) * np.sqrt(2 * np.log(op / INTERSECT_ALPHA)) + 1e-9


def select_shell(votes: np.ndarray, vote_fraction: float = 0.1) -> np.ndarray:
    """Indices with ``votes >= vote_fraction * max(votes)``."""
    votes = np.asarray(votes)
    top = votes.max(initial=0)
    if top <= 0:
        raise NoVotes("no Gaussian received a vote")
    # tolerance keeps e.g. 0.1 * 30 from rounding above 3
    thresh = vote_fraction * top * (1 - 1e-12)
    return np.nonzero((votes >= thresh) & (votes > 0))[0]


def hull_members(scene: GaussianScene, index, cameras, masks, min_views: int = 3) -> np.ndarray:
    """Subset of ``index`` whose centres project inside the mask of every view that sees them.

    A centre outside a camera's image or behind it says nothing about that
    view. At least ``min_views`` views must see the centre.
    """
    index = np.asarray(index, dtype=np.int64)
    ok = np.ones(len(index), bool)
    seen = np.zeros(len(index), np.int64)
    for cam, m in zip(cameras, masks):
        u, v, z = cam.project(scene.centers[index])
        i, j = np.floor(u).astype(np.int64), np.floor(v).astype(np.int64)
        vis = (z > 0) & (i >= 0) & (i < cam.width) & (j >= 0) & (j < cam.height)
        grown = ndimage.binary_dilation(m)
        inside = np.zeros(len(index), bool)
        inside[vis] = grown[j[vis], i[vis]]
        ok &= ~vis | inside
        seen += vis
    return index[ok & (seen >= min_views)]


def fill_interior(scene: GaussianScene, shell, cfg: SegConfig = SegConfig(),
                  cameras=None, masks=None) -> np.ndarray:
    """Shell plus every Gaussian enclosed by it.

    The shell-centre bounding box is voxelised (``cfg.grid`` cells along its
    longest side, one padding cell around). Voxels within ``footprint_sigma``
    standard deviations of a shell Gaussian are walls; a 6-connected flood
    fill from the padding marks the outside. Non-shell Gaussians whose centre
    lies in the bounding box and in a voxel the flood did not reach are added.
    """
    shell = np.unique(np.asarray(shell, dtype=np.int64))
    if shell.size == 0:
        raise ValueError("shell must be non-empty")
    pts = scene.centers[shell]
    lo, hi = pts.min(0), pts.max(0)
    extent = hi - lo
    vs = max(extent.max(), 1e-9) / cfg.grid
    dims = np.ceil(np.maximum(extent, vs) / vs).astype(int) + 3
    origin = lo - vs  # one padding voxel below

    occ = np.zeros(dims, bool)
    radii = np.clip(cfg.footprint_sigma * scene.scales[shell].max(1) / vs, 0.87, cfg.max_footprint_voxels)
    centers_v = (pts - origin) / vs
    for c, r in zip(centers_v, radii):
        lo_i = np.maximum(np.floor(c - r).astype(int), 0)
        hi_i = np.minimum(np.ceil(c + r).astype(int) + 1, dims)
        gx, gy, gz = np.ogrid[lo_i[0]:hi_i[0], lo_i[1]:hi_i[1], lo_i[2]:hi_i[2]]
        ball = (gx + 0.5 - c[0]) ** 2 + (gy + 0.5 - c[1]) ** 2 + (gz + 0.5 - c[2]) ** 2 <= r * r
        occ[lo_i[0]:hi_i[0], lo_i[1]:hi_i[1], lo_i[2]:hi_i[2]] |= ball
        occ[tuple(np.clip(c.astype(int), 0, dims - 1))] = True

    free_lab, _ = ndimage.label(~occ)
    border = np.unique(np.concatenate([
        free_lab[0].ravel(), free_lab[-1].ravel(), free_lab[:, 0].ravel(), free_lab[:, -1].ravel(),
        free_lab[:, :, 0].ravel(), free_lab[:, :, -1].ravel()]))
    outside = np.isin(free_lab, border[border > 0])

    others = np.setdiff1d(np.arange(len(scene)), shell)
    c = scene.centers[others]
    in_box = np.all((c >= lo) & (c <= hi), axis=1)
    cand = others[in_box]
    vox = np.clip(((scene.centers[cand] - origin) / vs).astype(int), 0, dims - 1)
    inside = ~outside[vox[:, 0], vox[:, 1], vox[:, 2]]
    out = np.union1d(shell, cand[inside])
    if cameras is not None and masks is not None:
        out = np.union1d(out, hull_members(scene, cand, cameras, masks))
    return out


@dataclass
class Segmentation:
    scene: GaussianScene
    object_index: np.ndarray
    votes: np.ndarray
    shell: np.ndarray
    cameras: list
    masks: list
    target_center: np.ndarray
    target_radius: float

    @property
    def remainder_index(self) -> np.ndarray:
        return np.setdiff1d(np.arange(len(self.scene)), self.object_index)

    @property
    def object(self) -> GaussianScene:
        return self.scene.subset(self.object_index)

    @property
    def remainder(self) -> GaussianScene:
        return self.scene.subset(self.remainder_index)


def _selection_hit(scene: GaussianScene, cam: Camera, pixel, cfg: SegConfig):
    origins, dirs = cam.pixel_rays([pixel[0]], [pixel[1]])
    alpha, depth = ray_alphas(scene, origins, dirs)
    hit = (alpha[0] > INTERSECT_ALPHA) & (depth[0] > 0)
    if not hit.any():
        return None
    idx = np.nonzero(hit)[0]
    idx = idx[np.argsort(depth[0, idx], kind="stable")]
    contrib, visited = transmittance_chain(alpha[0, idx][None, :], cfg.eps2)
    contrib = np.where(visited, contrib, 0.0)[0]
    best = idx[int(np.argmax(contrib))]
    return origins[0], dirs[0], depth[0, best]


def _render_frame(scene: GaussianScene, cam: Camera):
    buf = splat(scene, cam)
    labels = label_map(scene, cam, buf) if scene.labels is not None else None
    return to_image(buf), labels, buf.alpha


def _nearest_covered(alpha: np.ndarray, pixel, min_alpha: float = 0.5):
    """``pixel`` itself if covered, else the closest pixel whose coverage reaches ``min_alpha``."""
    x, y = pixel
    covered = alpha >= min_alpha
    if covered[y, x] or not covered.any():
        return pixel
    _, (iy, ix) = ndimage.distance_transform_edt(~covered, return_indices=True)
    return int(ix[y, x]), int(iy[y, x])


def segment_conditional(scene: GaussianScene, pixel, cam: Camera, seg, cfg: SegConfig = SegConfig()) -> Segmentation:
    """Segment the content under ``pixel`` of ``cam``'s view into its own Gaussian set."""
    frame, labels, _ = _render_frame(scene, cam)
    pixel = (int(pixel[0]), int(pixel[1]))
    try:
        first = segment(seg, SegmentRequest.single(frame, pixel, labels)).masks[0]
    except ProviderError as exc:
        raise SegmentationFailed(f"provider error: {exc}") from exc
    if not first.any():
        raise SegmentationFailed("empty mask at selection")
    hit = _selection_hit(scene, cam, pixel, cfg)
    if hit is None:
        raise SegmentationFailed("selection is not on rendered content")
    origin, direction, t = hit
    surface = origin + t * direction
    zc = cam.to_camera(surface[None])[0, 2]
    ys, xs = np.nonzero(first)
    corners = cam.unproject(np.array([xs.min(), xs.max() + 1.0]), np.array([ys.min(), ys.max() + 1.0]), zc)
    radius = 0.5 * float(np.max(np.abs(corners[1] - corners[0])[:3]))
    radius = max(radius, 1e-6)
    center = surface + radius * direction

    cams = make_orbit(center, radius, cfg, cam.width, cam.height)
    frames, maps, alphas = [], [], []
    for c in cams:
        f, lm, a = _render_frame(scene, c)
        frames.append(f)
        maps.append(lm)
        alphas.append(a)
    u, v, _ = cams[0].project(center[None])
    prompt = (int(np.clip(np.floor(u[0]), 0, cam.width - 1)), int(np.clip(np.floor(v[0]), 0, cam.height - 1)))
    # the projected centre can fall in a gap of a sparse object
    prompt = _nearest_covered(alphas[0], prompt)
    req = SegmentRequest(VIDEO_SEQUENCE, frames, prompt, None if labels is None else maps)
    try:
        masks = segment(seg, req).masks
    except ProviderError as exc:
        raise SegmentationFailed(f"provider error: {exc}") from exc
    if not any(m.any() for m in masks):
        raise SegmentationFailed("provider returned empty masks for every frame")

    votes = np.zeros(len(scene), dtype=np.int64)
    for c, m in zip(cams, masks):
        votes = ray_vote(scene, c, m, cfg, votes)
    shell = select_shell(votes, cfg.vote_fraction)
    obj = fill_interior(scene, shell, cfg, cams, masks)
    logger.debug("segmented %d Gaussians (shell %d) of %d", len(obj), len(shell), len(scene))
    return Segmentation(scene, obj, votes, shell, cams, masks, center, radius)


@dataclass(frozen=True)
class PlanarRegion:
    """Pixel mask in a top-down view, used to constrain object moves."""

    mask: np.ndarray
    view: TopDownView

    def contains(self, x: float, y: float) -> bool:
        px, py = self.view.world_to_pixel(x, y)
        i, j = int(round(float(px))), int(round(float(py)))
        h, w = self.mask.shape
        return 0 <= i < w and 0 <= j < h and bool(self.mask[j, i])


def direction_vector(direction, cam: Camera) -> np.ndarray:
    """World-space unit move for a screen direction in ``cam``'s image plane."""
    dx, dy = Direction.parse(direction).delta
    r, d, _ = cam.basis
    return dx * r + dy * d


def transform_3d(obj: GaussianScene, direction, step: float, view: TopDownView,
                 region: PlanarRegion | None = None) -> tuple[GaussianScene, bool]:
    """Translate ``obj`` in the view plane; refuse if its centroid would leave ``region``."""
    if step <= 0:
        raise ValueError("step must be positive")
    delta = direction_vector(direction, view.camera) * step
    if region is not None:
        cx, cy = obj.centers[:, :2].mean(0) + delta[:2]
        if not region.contains(cx, cy):
            return obj, True
    return obj.translated(delta), False
