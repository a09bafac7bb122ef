"""Episode traces: JSON Lines records plus a content-addressed PNG store."""

from __future__ import annotations

import json
import logging
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..imgcore import decode_mask_png, encode_mask_png, encode_png, sha256_hex

logger = logging.getLogger(__name__)


class ImageStore:
    """PNG files named by the SHA-256 of their bytes.

    With ``root=None`` only digests are computed and nothing is kept, which
    is what large batch runs use when frames are not needed.
    """

    def __init__(self, root=None):
        self.root = None if root is None else Path(root)
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)

    def put_bytes(self, data: bytes, suffix: str = ".png") -> str:
        digest = sha256_hex(data)
        if self.root is not None:
            path = self.root / f"{digest}{suffix}"
            if not path.exists():
                # write-then-rename so parallel episodes never see a partial file
                tmp = path.with_name(f".{digest}.{os.getpid()}.{threading.get_ident()}.tmp")
                tmp.write_bytes(data)
                os.replace(tmp, path)
        return digest

    def put_image(self, img: np.ndarray) -> str:
        return self.put_bytes(encode_png(img))

    def put_mask(self, mask: np.ndarray) -> str:
        return self.put_bytes(encode_mask_png(mask))

    def get_bytes(self, digest: str, suffix: str = ".png") -> bytes:
        if self.root is None:
            raise FileNotFoundError("image store keeps digests only")
        return (self.root / f"{digest}{suffix}").read_bytes()

    def get_mask(self, digest: str) -> np.ndarray:
        return decode_mask_png(self.get_bytes(digest))

    @property
    def keeps_data(self) -> bool:
        return self.root is not None


@dataclass
class TraceWriter:
    """Collects records in memory and mirrors them to a JSONL file if ``path`` is set."""

    path: Path | None = None
    store: ImageStore = field(default_factory=ImageStore)
    records: list = field(default_factory=list)

    def __post_init__(self):
        if self.path is not None:
            self.path = Path(self.path)
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("")

    def write(self, record: dict) -> None:
        self.records.append(record)
        if self.path is not None:
            with self.path.open("a") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")

    @property
    def steps(self) -> list:
        return [r for r in self.records if r.get("kind") == "step"]


def load_trace(path) -> list:
    with Path(path).open() as fh:
        return [json.loads(line) for line in fh if line.strip()]


def trace_digests(records) -> list:
    """``(obs_digest, post_digest)`` per step record, the replay comparison key."""
    return [(r["obs_digest"], r["post_digest"]) for r in records if r.get("kind") == "step"]
