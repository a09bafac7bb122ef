"""Read-only importers for external benchmark layouts.

Imported instances carry no instance maps, so episodes on them need a real
segmentation provider.

CLEVR layout::

    <dir>/scenes.json            {"scenes": [{"image_filename": ..., "objects": [...]}, ...]}
    <dir>/images/<image_filename>

Any single ``*scenes*.json`` file is accepted in place of ``scenes.json``.

Where2Place layout::

    <dir>/annotations.json       [{"id", "image", "prompt", "regions": [...], "platform"?, "target_point"?}]
    <dir>/<image>                RGB(A) PNG
    <dir>/<regions[i]>           ground-truth region masks (non-zero = inside)
    <dir>/<platform>             optional platform mask; defaults to the whole image

Paths inside ``annotations.json`` are relative to ``<dir>``.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from .. import imgcore
from .common import MalformedDataset
from .counting import CountingInstance
from .placement import PlacementInstance

logger = logging.getLogger(__name__)


def _read_json(path: Path):
    try:
        return json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise MalformedDataset(f"missing annotation file {path}") from exc
    except json.JSONDecodeError as exc:
        raise MalformedDataset(f"{path} is not valid JSON: {exc}") from exc


def _load(root: Path, rel, what: str, loader):
    if not isinstance(rel, str):
        raise MalformedDataset(f"{what} path must be a string, got {rel!r}")
    path = root / rel
    if not path.is_file():
        raise MalformedDataset(f"{what} file {path} not found")
    try:
        return loader(path)
    except (OSError, ValueError) as exc:
        raise MalformedDataset(f"cannot read {what} {path}: {exc}") from exc


def _scenes_file(root: Path) -> Path:
    direct = root / "scenes.json"
    if direct.is_file():
        return direct
    found = sorted(root.glob("*scenes*.json"))
    if len(found) != 1:
        raise MalformedDataset(f"expected scenes.json (or one *scenes*.json) in {root}")
    return found[0]


def import_clevr(directory) -> list[CountingInstance]:
    """CLEVR scenes as counting instances; the count is the length of ``objects``."""
    root = Path(directory)
    if not root.is_dir():
        raise MalformedDataset(f"{root} is not a directory")
    data = _read_json(_scenes_file(root))
    scenes = data.get("scenes") if isinstance(data, dict) else None
    if not isinstance(scenes, list):
        raise MalformedDataset("scenes file must hold a 'scenes' list")
    out = []
    for k, sc in enumerate(scenes):
        if not isinstance(sc, dict) or not isinstance(sc.get("objects"), list):
            raise MalformedDataset(f"scene {k} has no objects list")
        name = sc.get("image_filename")
        image = _load(root / "images", name, "image", imgcore.load_png)
        out.append(CountingInstance(image, None, len(sc["objects"]), None,
                                    params={"source": "clevr", "image_filename": name,
                                            "image_index": sc.get("image_index", k)}))
    logger.info("imported %d CLEVR scenes from %s", len(out), root)
    return out


def import_where2place(directory) -> list[PlacementInstance]:
    """Where2Place-style prompts with ground-truth free-space regions."""
    root = Path(directory)
    if not root.is_dir():
        raise MalformedDataset(f"{root} is not a directory")
    entries = _read_json(root / "annotations.json")
    if not isinstance(entries, list):
        raise MalformedDataset("annotations.json must hold a list")
    out = []
    for k, e in enumerate(entries):
        if not isinstance(e, dict) or "image" not in e or "prompt" not in e:
            raise MalformedDataset(f"entry {k} needs 'image' and 'prompt'")
        image = _load(root, e["image"], "image", imgcore.load_png)
        h, w = image.shape[:2]
        rels = e.get("regions") or ([e["mask"]] if "mask" in e else [])
        if not rels:
            raise MalformedDataset(f"entry {k} has no ground-truth regions")
        regions = [_load(root, r, "region mask", imgcore.load_mask) for r in rels]
        platform = (_load(root, e["platform"], "platform mask", imgcore.load_mask)
                    if e.get("platform") else np.ones((h, w), bool))
        for m in regions + [platform]:
            if m.shape != (h, w):
                raise MalformedDataset(f"entry {k}: mask size {m.shape} differs from image {(h, w)}")
        tp = e.get("target_point")
        out.append(PlacementInstance(str(e["prompt"]), 0, regions, platform, 2, image, None,
                                     target_point=None if tp is None else tuple(tp),
                                     params={"source": "where2place", "id": e.get("id", k)}))
    logger.info("imported %d Where2Place entries from %s", len(out), root)
    return out
