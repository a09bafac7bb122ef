"""Gaussian scene and camera types plus their on-disk formats."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

MAGIC = b"GSPL"
FORMAT_VERSION = 1
RECORD_FIELDS = 14  # center 3, scale 3, quaternion 4, opacity 1, rgb 3
SH_C0 = 0.28209479177387814


class DegenerateCamera(ValueError):
    pass


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """(N, 4) unit quaternions in w, x, y, z order to (N, 3, 3) rotations."""
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    return np.stack([
        np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], -1),
        np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], -1),
        np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], -1),
    ], axis=1)


@dataclass(frozen=True, eq=False)
class GaussianScene:
    """Anisotropic Gaussians. ``ids`` are stable indices into the source scene."""

    centers: np.ndarray
    scales: np.ndarray
    rotations: np.ndarray
    opacities: np.ndarray
    colors: np.ndarray
    labels: np.ndarray | None = None
    ids: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.centers)
        for name in ("centers", "scales", "colors"):
            if getattr(self, name).shape != (n, 3):
                raise ValueError(f"{name} must have shape ({n}, 3)")
        if self.rotations.shape != (n, 4) or self.opacities.shape != (n,):
            raise ValueError("rotations must be (N, 4) and opacities (N,)")
        if n and (self.scales <= 0).any():
            raise ValueError("scales must be positive")
        if n and (np.abs(np.linalg.norm(self.rotations, axis=1) - 1) > 1e-6).any():
            raise ValueError("rotations must be unit quaternions")
        if n and ((self.opacities < 0) | (self.opacities > 1)).any():
            raise ValueError("opacities must lie in [0, 1]")
        if self.ids is None:
            object.__setattr__(self, "ids", np.arange(n))
        if self.labels is not None and self.labels.shape != (n,):
            raise ValueError("labels must have shape (N,)")

    @classmethod
    def build(cls, centers, scales, rotations=None, opacities=None, colors=None, labels=None):
        """Convenience constructor; quaternions are normalised here."""
        centers = np.asarray(centers, dtype=np.float64).reshape(-1, 3)
        n = len(centers)
        scales = np.broadcast_to(np.asarray(scales, dtype=np.float64), (n, 3)).copy()
        if rotations is None:
            rotations = np.tile([1.0, 0.0, 0.0, 0.0], (n, 1))
        rotations = np.asarray(rotations, dtype=np.float64).reshape(n, 4)
        rotations = rotations / np.linalg.norm(rotations, axis=1, keepdims=True)
        opacities = np.broadcast_to(np.asarray(1.0 if opacities is None else opacities, dtype=np.float64), (n,)).copy()
        colors = np.broadcast_to(np.asarray(0.5 if colors is None else colors, dtype=np.float64), (n, 3)).copy()
        if labels is not None:
            labels = np.broadcast_to(np.asarray(labels, dtype=np.int64), (n,)).copy()
        return cls(centers, scales, rotations, opacities, colors, labels)

    def __len__(self) -> int:
        return len(self.centers)

    @cached_property
    def rotation_matrices(self) -> np.ndarray:
        return quat_to_matrix(self.rotations)

    @cached_property
    def covariances(self) -> np.ndarray:
        r = self.rotation_matrices
        s2 = self.scales ** 2
        return np.einsum("nij,nj,nkj->nik", r, s2, r)

    @cached_property
    def inv_covariances(self) -> np.ndarray:
        r = self.rotation_matrices
        s2 = 1.0 / self.scales ** 2
        return np.einsum("nij,nj,nkj->nik", r, s2, r)

    def subset(self, index) -> "GaussianScene":
        index = np.asarray(index)
        return GaussianScene(self.centers[index], self.scales[index], self.rotations[index],
                             self.opacities[index], self.colors[index],
                             None if self.labels is None else self.labels[index], self.ids[index])

    def translated(self, delta, index=None) -> "GaussianScene":
        centers = self.centers.copy()
        if index is None:
            centers += np.asarray(delta, dtype=np.float64)
        else:
            centers[index] += np.asarray(delta, dtype=np.float64)
        return GaussianScene(centers, self.scales, self.rotations, self.opacities, self.colors,
                             self.labels, self.ids)

    @staticmethod
    def concat(parts) -> "GaussianScene":
        parts = [p for p in parts if len(p)]
        labels = None
        if parts and all(p.labels is not None for p in parts):
            labels = np.concatenate([p.labels for p in parts])
        return GaussianScene(
            np.concatenate([p.centers for p in parts]), np.concatenate([p.scales for p in parts]),
            np.concatenate([p.rotations for p in parts]), np.concatenate([p.opacities for p in parts]),
            np.concatenate([p.colors for p in parts]), labels, np.concatenate([p.ids for p in parts]))


@dataclass(frozen=True)
class Camera:
    position: tuple
    look_at: tuple
    up: tuple = (0.0, 0.0, 1.0)
    fov_y: float = np.pi / 3
    width: int = 128
    height: int = 128
    ortho_height: float | None = None  # world units spanned vertically; None = perspective

    def __post_init__(self):
        p, t = np.asarray(self.position, float), np.asarray(self.look_at, float)
        if np.allclose(p, t):
            raise DegenerateCamera("camera position equals look_at")
        if self.ortho_height is None and not 0 < self.fov_y < np.pi:
            raise DegenerateCamera(f"fov {self.fov_y} outside (0, pi)")
        if self.ortho_height is not None and self.ortho_height <= 0:
            raise DegenerateCamera("ortho_height must be positive")
        if self.width < 1 or self.height < 1:
            raise DegenerateCamera("resolution must be positive")
        f = (t - p) / np.linalg.norm(t - p)
        if np.linalg.norm(np.cross(f, np.asarray(self.up, float))) < 1e-9:
            raise DegenerateCamera("up vector is parallel to the view direction")

    @property
    def is_ortho(self) -> bool:
        return self.ortho_height is not None

    @cached_property
    def basis(self) -> np.ndarray:
        """Rows: image-right, image-down, forward (world coordinates)."""
        p, t = np.asarray(self.position, float), np.asarray(self.look_at, float)
        f = (t - p) / np.linalg.norm(t - p)
        r = np.cross(f, np.asarray(self.up, float))
        r /= np.linalg.norm(r)
        d = np.cross(f, r)
        return np.stack([r, d, f])

    @property
    def focal(self) -> float:
        """Pixels per unit of x/z (perspective) or per world unit (ortho)."""
        if self.is_ortho:
            return self.height / self.ortho_height
        return (self.height / 2) / np.tan(self.fov_y / 2)

    def to_camera(self, points) -> np.ndarray:
        return (np.asarray(points, float) - np.asarray(self.position, float)) @ self.basis.T

    def project(self, points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Continuous pixel coordinates (pixel i spans [i, i+1)) and depth."""
        pc = np.atleast_2d(self.to_camera(points))
        z = pc[:, 2]
        f = self.focal
        if self.is_ortho:
            u, v = pc[:, 0] * f, pc[:, 1] * f
        else:
            safe = np.where(np.abs(z) > 1e-12, z, 1e-12)
            u, v = f * pc[:, 0] / safe, f * pc[:, 1] / safe
        return u + self.width / 2, v + self.height / 2, z

    def unproject(self, u, v, depth) -> np.ndarray:
        """World points at camera-space depth ``depth`` behind continuous pixel coords."""
        u = np.asarray(u, float) - self.width / 2
        v = np.asarray(v, float) - self.height / 2
        f = self.focal
        depth = np.broadcast_to(np.asarray(depth, float), u.shape)
        if self.is_ortho:
            pc = np.stack([u / f, v / f, depth], -1)
        else:
            pc = np.stack([u / f * depth, v / f * depth, depth], -1)
        return pc @ self.basis + np.asarray(self.position, float)

    def pixel_rays(self, px, py) -> tuple[np.ndarray, np.ndarray]:
        """World ray origins and unit directions through integer pixel centres."""
        u = np.asarray(px, float) + 0.5 - self.width / 2
        v = np.asarray(py, float) + 0.5 - self.height / 2
        r, d, f = self.basis
        pos = np.asarray(self.position, float)
        if self.is_ortho:
            s = self.focal
            origins = pos + np.outer(u / s, r) + np.outer(v / s, d)
            dirs = np.broadcast_to(f, origins.shape).copy()
        else:
            fl = self.focal
            dirs = np.outer(u / fl, r) + np.outer(v / fl, d) + f
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            origins = np.broadcast_to(pos, dirs.shape).copy()
        return origins, dirs

    def to_dict(self) -> dict:
        return {"position": list(map(float, self.position)), "look_at": list(map(float, self.look_at)),
                "up": list(map(float, self.up)), "fov": float(self.fov_y), "width": self.width,
                "height": self.height, "ortho_height": self.ortho_height}

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        return cls(tuple(d["position"]), tuple(d["look_at"]), tuple(d.get("up", (0, 0, 1))),
                   float(d.get("fov", np.pi / 3)), int(d["width"]), int(d["height"]), d.get("ortho_height"))


def save_trajectory(path, cameras) -> None:
    Path(path).write_text(json.dumps([c.to_dict() for c in cameras], indent=2))


def load_trajectory(path) -> list:
    return [Camera.from_dict(d) for d in json.loads(Path(path).read_text())]


# --------------------------------------------------------------------------
# Binary scene format: b"GSPL", u32 header length, JSON header, f32 records


def save_scene(path, scene: GaussianScene, extra: dict | None = None) -> None:
    records = np.concatenate([scene.centers, scene.scales, scene.rotations, scene.opacities[:, None],
                              scene.colors], axis=1).astype("<f4")
    header = {"version": FORMAT_VERSION, "count": len(scene), "fields": RECORD_FIELDS,
              "labels": scene.labels is not None}
    if extra:
        header["extra"] = extra
    hb = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(hb)))
        fh.write(hb)
        fh.write(records.tobytes())
        if scene.labels is not None:
            fh.write(scene.labels.astype("<i4").tobytes())


def load_scene(path) -> tuple[GaussianScene, dict]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ValueError(f"{path} is not a Gaussian scene file")
    (hlen,) = struct.unpack("<I", data[4:8])
    header = json.loads(data[8:8 + hlen])
    n = header["count"]
    off = 8 + hlen
    rec = np.frombuffer(data, dtype="<f4", count=n * RECORD_FIELDS, offset=off).reshape(n, RECORD_FIELDS)
    rec = rec.astype(np.float64)
    labels = None
    if header.get("labels"):
        labels = np.frombuffer(data, dtype="<i4", count=n, offset=off + rec.size * 4).astype(np.int64)
    rot = rec[:, 6:10]
    rot = rot / np.linalg.norm(rot, axis=1, keepdims=True)
    scene = GaussianScene(rec[:, 0:3], rec[:, 3:6], rot, np.clip(rec[:, 10], 0, 1), rec[:, 11:14], labels)
    return scene, header.get("extra", {})


_PLY_TYPES = {"float": "f4", "float32": "f4", "double": "f8", "uchar": "u1", "uint8": "u1",
              "int": "i4", "int32": "i4", "uint": "u4", "short": "i2", "ushort": "u2"}


def read_ply(path) -> GaussianScene:
    """Import the usual splat PLY layout (logit opacity, log scale, DC colour)."""
    data = Path(path).read_bytes()
    end = data.index(b"end_header\n") + len(b"end_header\n")
    lines = data[:end].decode("ascii").splitlines()
    if lines[0] != "ply" or "format binary_little_endian 1.0" not in lines:
        raise ValueError("only binary little-endian PLY is supported")
    props, count, in_vertex = [], 0, False
    for line in lines:
        parts = line.split()
        if parts[:2] == ["element", "vertex"]:
            count, in_vertex = int(parts[2]), True
        elif parts and parts[0] == "element":
            in_vertex = False
        elif parts and parts[0] == "property" and in_vertex:
            props.append((parts[2], "<" + _PLY_TYPES[parts[1]]))
    v = np.frombuffer(data, dtype=np.dtype(props), count=count, offset=end)
    centers = np.stack([v["x"], v["y"], v["z"]], 1).astype(np.float64)
    scales = np.exp(np.stack([v[f"scale_{i}"] for i in range(3)], 1).astype(np.float64))
    rot = np.stack([v[f"rot_{i}"] for i in range(4)], 1).astype(np.float64)
    rot /= np.linalg.norm(rot, axis=1, keepdims=True)
    opacity = 1.0 / (1.0 + np.exp(-v["opacity"].astype(np.float64)))
    colors = np.clip(0.5 + SH_C0 * np.stack([v[f"f_dc_{i}"] for i in range(3)], 1).astype(np.float64), 0, 1)
    return GaussianScene(centers, scales, rot, opacity, colors)


def write_ply(path, scene: GaussianScene) -> None:
    names = (["x", "y", "z"] + [f"f_dc_{i}" for i in range(3)] + ["opacity"]
             + [f"scale_{i}" for i in range(3)] + [f"rot_{i}" for i in range(4)])
    op = np.clip(scene.opacities, 1e-6, 1 - 1e-6)
    cols = np.concatenate([scene.centers, (scene.colors - 0.5) / SH_C0, np.log(op / (1 - op))[:, None],
                           np.log(scene.scales), scene.rotations], axis=1).astype("<f4")
    header = "ply\nformat binary_little_endian 1.0\n" + f"element vertex {len(scene)}\n"
    header += "".join(f"property float {n}\n" for n in names) + "end_header\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(cols.tobytes())
