"""Instance bundles on disk and the dataset manifest.

A bundle is one directory holding ``instance.json`` plus PNG files for the
array fields (RGBA images, boolean masks, 16-bit instance maps) and a
``scene.gspl`` file for Gaussian scenes. A dataset is a directory of
bundles with a ``manifest.json`` that lists seeds, generator versions and
the SHA-256 of every file.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from pathlib import Path

import numpy as np

from .. import imgcore
from ..scene3d import GaussianScene, TopDownView
from ..scene3d.gaussians import load_scene, save_scene
from . import counting, jigsaw, placement, qa
from .common import MalformedDataset

logger = logging.getLogger(__name__)

MANIFEST_VERSION = 1

INSTANCE_TYPES = {
    "counting": counting.CountingInstance,
    "jigsaw": jigsaw.JigsawInstance,
    "placement": placement.PlacementInstance,
    "qa": qa.QAInstance,
}

TASK_TYPES = {
    "counting": counting.CountingTask,
    "jigsaw": jigsaw.JigsawTask,
    "placement": placement.PlacementTask,
    "qa": qa.QATask,
}

GENERATOR_VERSIONS = {
    "counting": counting.GENERATOR_VERSION,
    "jigsaw": jigsaw.GENERATOR_VERSION,
    "placement": placement.GENERATOR_VERSION,
    "qa": qa.GENERATOR_VERSION,
}


def generate(kind: str, seed: int, params: dict):
    """One instance from the named generator."""
    params = dict(params)
    if kind == "counting":
        return counting.gen_counting(seed, **params)
    if kind == "jigsaw":
        return jigsaw.gen_jigsaw(seed, **params)
    if kind == "placement":
        dim = params.pop("dim", 2)
        gen = placement.gen_placement if dim == 2 else placement.gen_placement_3d
        return gen(seed, **params)
    if kind == "qa":
        return qa.gen_multiobject_qa(seed, **params)
    raise ValueError(f"unknown task kind {kind!r}")


def make_task(kind: str, instance, instance_id: str = ""):
    return TASK_TYPES[kind](instance, instance_id)


# --------------------------------------------------------------------------
# Field encoding


def _encode(value, name: str, root: Path, files: dict):
    if isinstance(value, np.ndarray):
        if value.ndim == 3 and value.dtype == np.uint8:
            fname = f"{name}.png"
            imgcore.save_png(root / fname, value)
            kind = "image"
        elif value.dtype == bool:
            fname = f"{name}.mask.png"
            imgcore.save_mask(root / fname, value)
            kind = "mask"
        elif np.issubdtype(value.dtype, np.integer):
            fname = f"{name}.labels.png"
            imgcore.save_labels(root / fname, value)
            kind = "labels"
        else:
            raise TypeError(f"cannot store array field {name} of dtype {value.dtype}")
        files[fname] = kind
        return {"$file": fname, "$kind": kind}
    if isinstance(value, GaussianScene):
        fname = f"{name}.gspl"
        save_scene(root / fname, value)
        files[fname] = "gaussians"
        return {"$file": fname, "$kind": "gaussians"}
    if isinstance(value, TopDownView):
        return {"$view": {"bounds": list(value.bounds), "height_px": value.height_px, "z_top": value.z_top}}
    if isinstance(value, dict):
        if value and all(isinstance(k, (int, np.integer)) for k in value):
            return {"$intkeys": [[int(k), _encode(v, f"{name}_{k}", root, files)] for k, v in value.items()]}
        return {str(k): _encode(v, f"{name}_{k}", root, files) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_encode(v, f"{name}_{i}", root, files) for i, v in enumerate(value)]
    if isinstance(value, np.generic):
        return value.item()
    return value


def _decode(value, root: Path):
    if isinstance(value, dict):
        if "$file" in value:
            path = root / value["$file"]
            if not path.is_file():
                raise MalformedDataset(f"bundle file {path} is missing")
            kind = value["$kind"]
            if kind == "image":
                return imgcore.load_png(path)
            if kind == "mask":
                return imgcore.load_mask(path)
            if kind == "labels":
                return imgcore.load_labels(path)
            if kind == "gaussians":
                return load_scene(path)[0]
            raise MalformedDataset(f"unknown file kind {kind!r}")
        if "$view" in value:
            v = value["$view"]
            return TopDownView(tuple(v["bounds"]), v["height_px"], v["z_top"])
        if "$intkeys" in value:
            return {int(k): _decode(v, root) for k, v in value["$intkeys"]}
        return {k: _decode(v, root) for k, v in value.items()}
    if isinstance(value, list):
        return [_decode(v, root) for v in value]
    return value


def _tuples(value):
    """JSON lists back to tuples for coordinate-like values."""
    if isinstance(value, list) and all(isinstance(v, (int, float)) for v in value):
        return tuple(value)
    if isinstance(value, dict):
        return {k: _tuples(v) for k, v in value.items()}
    return value


def save_instance(kind: str, instance, directory) -> dict:
    """Write one bundle; returns ``{filename: sha256}`` for its files."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    files: dict = {}
    fields = {f.name: _encode(getattr(instance, f.name), f.name, root, files)
              for f in dataclasses.fields(instance)}
    doc = {"kind": kind, "fields": fields}
    (root / "instance.json").write_text(json.dumps(doc, indent=2, sort_keys=True))
    names = sorted(files) + ["instance.json"]
    return {n: imgcore.sha256_hex((root / n).read_bytes()) for n in names}


def load_instance(directory) -> tuple[str, object]:
    root = Path(directory)
    path = root / "instance.json"
    if not path.is_file():
        raise MalformedDataset(f"{path} not found")
    doc = json.loads(path.read_text())
    kind = doc.get("kind")
    if kind not in INSTANCE_TYPES:
        raise MalformedDataset(f"unknown instance kind {kind!r}")
    fields = {k: _tuples(_decode(v, root)) for k, v in doc["fields"].items()}
    try:
        return kind, INSTANCE_TYPES[kind](**fields)
    except TypeError as exc:
        raise MalformedDataset(f"{path}: {exc}") from exc


# --------------------------------------------------------------------------
# Datasets


def write_dataset(kind: str, specs, out_dir) -> dict:
    """Generate ``specs`` (dicts with ``seed`` and ``params``) into ``out_dir``.

    Bundles are named ``<kind>-<index>``. The manifest is returned and
    written as ``manifest.json``.
    """
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, spec in enumerate(specs):
        seed, params = int(spec["seed"]), dict(spec.get("params", {}))
        inst = generate(kind, seed, params)
        iid = f"{kind}-{i:04d}"
        digests = save_instance(kind, inst, root / iid)
        entries.append({"id": iid, "seed": seed, "params": params, "files": digests})
    manifest = {"manifest_version": MANIFEST_VERSION, "kind": kind,
                "generator_version": GENERATOR_VERSIONS[kind], "count": len(entries), "instances": entries}
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    logger.info("wrote %d %s instances to %s", len(entries), kind, root)
    return manifest


def read_manifest(directory) -> dict:
    path = Path(directory) / "manifest.json"
    if not path.is_file():
        raise MalformedDataset(f"{path} not found")
    return json.loads(path.read_text())


def load_dataset(directory, verify: bool = True) -> tuple[str, list]:
    """``(kind, [(instance_id, instance), ...])`` in manifest order."""
    root = Path(directory)
    manifest = read_manifest(root)
    out = []
    for e in manifest["instances"]:
        bdir = root / e["id"]
        if verify:
            for name, digest in e["files"].items():
                p = bdir / name
                if not p.is_file() or imgcore.sha256_hex(p.read_bytes()) != digest:
                    raise MalformedDataset(f"{p} is missing or does not match the manifest")
        kind, inst = load_instance(bdir)
        out.append((e["id"], inst))
    return manifest["kind"], out
