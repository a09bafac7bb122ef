"""EWA-style splat rasteriser and the top-down working view."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ..imgcore import as_image
from .gaussians import Camera, GaussianScene

NEAR = 1e-3
LOWPASS = 0.3  # px^2 added to every screen covariance
ALPHA_MAX = 0.99
ALPHA_MIN = 1.0 / 255
FRUSTUM_SLACK = 1.3


@dataclass
class SplatBuffers:
    rgb: np.ndarray          # (H, W, 3) in [0, 1], background included
    alpha: np.ndarray        # (H, W) accumulated opacity
    top: np.ndarray          # (H, W) index of max-contribution Gaussian, -1 if none


def project_gaussians(scene: GaussianScene, cam: Camera):
    """Screen means, depths and inverse 2D covariances of every Gaussian."""
    pc = cam.to_camera(scene.centers)
    z = pc[:, 2]
    f = cam.focal
    rc = cam.basis
    cov_cam = np.einsum("ij,njk,lk->nil", rc, scene.covariances, rc)
    n = len(scene)
    jac = np.zeros((n, 2, 3))
    if cam.is_ortho:
        jac[:, 0, 0] = f
        jac[:, 1, 1] = f
        u, v = pc[:, 0] * f, pc[:, 1] * f
    else:
        zs = np.where(z > NEAR, z, NEAR)
        # cull centres well outside the frustum, as splat renderers do
        lim_x = FRUSTUM_SLACK * (cam.width / 2) / f
        lim_y = FRUSTUM_SLACK * (cam.height / 2) / f
        culled = (np.abs(pc[:, 0] / zs) > lim_x) | (np.abs(pc[:, 1] / zs) > lim_y)
        z = np.where(culled, -np.inf, z)
        jac[:, 0, 0] = f / zs
        jac[:, 1, 1] = f / zs
        jac[:, 0, 2] = -f * pc[:, 0] / zs ** 2
        jac[:, 1, 2] = -f * pc[:, 1] / zs ** 2
        u, v = f * pc[:, 0] / zs, f * pc[:, 1] / zs
    cov2 = np.einsum("nij,njk,nlk->nil", jac, cov_cam, jac) + LOWPASS * np.eye(2)
    det = cov2[:, 0, 0] * cov2[:, 1, 1] - cov2[:, 0, 1] ** 2
    inv = np.stack([cov2[:, 1, 1], -cov2[:, 0, 1], cov2[:, 0, 0]], 1) / det[:, None]
    mid = 0.5 * (cov2[:, 0, 0] + cov2[:, 1, 1])
    lam = mid + np.sqrt(np.maximum(mid ** 2 - det, 0))
    radius = np.ceil(3 * np.sqrt(lam))
    return u + cam.width / 2, v + cam.height / 2, z, inv, radius


def visible_depths(scene: GaussianScene, cam: Camera) -> np.ndarray:
    """Camera depth per Gaussian, ``-inf`` where the Gaussian is culled."""
    return project_gaussians(scene, cam)[2]


def splat(scene: GaussianScene, cam: Camera, background=(0.0, 0.0, 0.0)) -> SplatBuffers:
    """Front-to-back alpha compositing of the projected Gaussians."""
    H, W = cam.height, cam.width
    rgb = np.zeros((H, W, 3))
    trans = np.ones((H, W))
    best = np.zeros((H, W))
    top = np.full((H, W), -1, dtype=np.int64)
    if len(scene):
        u, v, z, inv, radius = project_gaussians(scene, cam)
        order = np.argsort(z, kind="stable")
        for i in order:
            if z[i] <= NEAR or scene.opacities[i] < ALPHA_MIN:
                continue
            r = radius[i]
            x0, x1 = int(max(np.floor(u[i] - r), 0)), int(min(np.ceil(u[i] + r), W))
            y0, y1 = int(max(np.floor(v[i] - r), 0)), int(min(np.ceil(v[i] + r), H))
            if x1 <= x0 or y1 <= y0:
                continue
            dx = np.arange(x0, x1) + 0.5 - u[i]
            dy = (np.arange(y0, y1) + 0.5 - v[i])[:, None]
            a, b, c = inv[i]
            power = -0.5 * (a * dx * dx + 2 * b * dx * dy + c * dy * dy)
            alpha = np.minimum(ALPHA_MAX, scene.opacities[i] * np.exp(power))
            alpha[alpha < ALPHA_MIN] = 0.0
            t = trans[y0:y1, x0:x1]
            contrib = t * alpha
            rgb[y0:y1, x0:x1] += contrib[..., None] * scene.colors[i]
            wins = contrib > best[y0:y1, x0:x1]
            best[y0:y1, x0:x1][wins] = contrib[wins]
            top[y0:y1, x0:x1][wins] = i
            trans[y0:y1, x0:x1] = t * (1.0 - alpha)
    rgb += trans[..., None] * np.asarray(background, dtype=np.float64)
    return SplatBuffers(rgb, 1.0 - trans, top)


def to_image(buffers: SplatBuffers) -> np.ndarray:
    return as_image(np.clip(buffers.rgb, 0, 1) * 255.0)


def render_splats(scene: GaussianScene, cam: Camera, background=(0.0, 0.0, 0.0)) -> np.ndarray:
    if len(scene) == 0:
        raise ValueError("cannot render an empty scene")
    return to_image(splat(scene, cam, background))


def label_map(scene: GaussianScene, cam: Camera, buffers: SplatBuffers | None = None,
              min_alpha: float = 0.5) -> np.ndarray:
    """Instance id of the dominant Gaussian per pixel (0 where coverage is thin)."""
    if scene.labels is None:
        raise ValueError("scene carries no labels")
    buffers = buffers or splat(scene, cam)
    out = np.zeros(buffers.top.shape, dtype=np.int32)
    hit = (buffers.top >= 0) & (buffers.alpha >= min_alpha)
    out[hit] = scene.labels[buffers.top[hit]]
    return out


def coverage_mask(scene: GaussianScene, cam: Camera, min_alpha: float = 0.5) -> np.ndarray:
    if len(scene) == 0:
        return np.zeros((cam.height, cam.width), bool)
    return splat(scene, cam).alpha >= min_alpha


@dataclass(frozen=True)
class TopDownView:
    """Orthographic camera looking down -z; image up is world +y."""

    bounds: tuple  # xmin, xmax, ymin, ymax
    height_px: int = 128
    z_top: float = 100.0

    def __post_init__(self):
        xmin, xmax, ymin, ymax = self.bounds
        if not (xmax > xmin and ymax > ymin):
            raise ValueError(f"invalid bounds {self.bounds}")

    @property
    def width_px(self) -> int:
        xmin, xmax, ymin, ymax = self.bounds
        return max(int(round(self.height_px * (xmax - xmin) / (ymax - ymin))), 1)

    @property
    def scale(self) -> float:
        """Pixels per world unit."""
        return self.height_px / (self.bounds[3] - self.bounds[2])

    @cached_property
    def camera(self) -> Camera:
        xmin, xmax, ymin, ymax = self.bounds
        cx, cy = (xmin + xmax) / 2, (ymin + ymax) / 2
        return Camera((cx, cy, self.z_top), (cx, cy, self.z_top - 1.0), (0.0, 1.0, 0.0),
                      width=self.width_px, height=self.height_px, ortho_height=ymax - ymin)

    def world_to_pixel(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        """Pixel coordinates where integers are pixel centres."""
        xmin, xmax, ymin, ymax = self.bounds
        s = self.scale
        px = self.width_px / 2 + (np.asarray(x, float) - (xmin + xmax) / 2) * s - 0.5
        py = self.height_px / 2 - (np.asarray(y, float) - (ymin + ymax) / 2) * s - 0.5
        return px, py

    def pixel_to_world(self, px, py) -> tuple[np.ndarray, np.ndarray]:
        xmin, xmax, ymin, ymax = self.bounds
        s = self.scale
        x = (np.asarray(px, float) + 0.5 - self.width_px / 2) / s + (xmin + xmax) / 2
        y = -(np.asarray(py, float) + 0.5 - self.height_px / 2) / s + (ymin + ymax) / 2
        return x, y

    def encloses(self, scene: GaussianScene) -> bool:
        xmin, xmax, ymin, ymax = self.bounds
        c = scene.centers
        return bool(((c[:, 0] >= xmin) & (c[:, 0] <= xmax) & (c[:, 1] >= ymin) & (c[:, 1] <= ymax)
                     & (c[:, 2] < self.z_top)).all())


def render_topdown(scene: GaussianScene, bounds, height_px: int = 128, background=(0.0, 0.0, 0.0)) -> np.ndarray:
    view = bounds if isinstance(bounds, TopDownView) else TopDownView(tuple(bounds), height_px)
    if not view.encloses(scene):
        raise ValueError("bounds do not enclose the scene")
    return to_image(splat(scene, view.camera, background))
