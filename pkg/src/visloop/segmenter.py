"""Segmentation providers.

Every provider exposes ``segment(request) -> SegmentResponse``. Two real
implementations live here: an oracle that reads ground-truth instance maps and
an HTTP client for a SAM2-style service. ``RecordingProvider`` and
``ReplayProvider`` wrap either one so that episodes can be replayed without
the live provider.
"""

from __future__ import annotations

import base64
import email.parser
import email.policy
import json
import logging
import os
import time
from dataclasses import dataclass, field
from typing import Protocol

import httpx
import numpy as np
from scipy import ndimage

from .imgcore import decode_mask_png, decode_png, encode_mask_png, encode_png, in_bounds

logger = logging.getLogger(__name__)

SINGLE_IMAGE = "single_image"
VIDEO_SEQUENCE = "video_sequence"
TOKEN_ENV = "VISLOOP_SEGMENTER_TOKEN"


class ProviderError(Exception):
    pass


class ProviderUnavailable(ProviderError):
    pass


class ProviderRejected(ProviderError):
    pass


class ProviderTimeout(ProviderError, TimeoutError):
    pass


@dataclass
class SegmentRequest:
    mode: str
    frames: list
    prompt: tuple[int, int]
    # ground-truth instance ids per frame; consumed by oracle providers only
    # and never put on the wire
    label_maps: list | None = None

    def __post_init__(self):
        if self.mode not in (SINGLE_IMAGE, VIDEO_SEQUENCE):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not self.frames:
            raise ValueError("request needs at least one frame")
        if self.mode == SINGLE_IMAGE and len(self.frames) != 1:
            raise ValueError("single-image request must carry exactly one frame")
        if not in_bounds(self.frames[0].shape, self.prompt):
            raise ValueError(f"prompt {self.prompt} outside frame 0")
        if self.label_maps is not None and len(self.label_maps) != len(self.frames):
            raise ValueError("label_maps must align with frames")

    @classmethod
    def single(cls, frame, prompt, label_map=None) -> "SegmentRequest":
        return cls(SINGLE_IMAGE, [frame], tuple(int(v) for v in prompt),
                   None if label_map is None else [label_map])


@dataclass
class SegmentResponse:
    masks: list
    confidence: float | None = None

    def validate(self, req: SegmentRequest) -> "SegmentResponse":
        if len(self.masks) != len(req.frames):
            raise ProviderRejected(f"expected {len(req.frames)} masks, got {len(self.masks)}")
        for i, (m, f) in enumerate(zip(self.masks, req.frames)):
            if m.shape != f.shape[:2]:
                raise ProviderRejected(f"mask {i} has shape {m.shape}, frame is {f.shape[:2]}")
        if self.confidence is not None and not 0.0 <= self.confidence <= 1.0:
            raise ProviderRejected(f"confidence {self.confidence} outside [0, 1]")
        return self


class SegmentationProvider(Protocol):
    def segment(self, req: SegmentRequest) -> SegmentResponse: ...


def segment(provider: SegmentationProvider, req: SegmentRequest) -> SegmentResponse:
    """Call ``provider`` and enforce the all-or-nothing mask contract."""
    return provider.segment(req).validate(req)


# --------------------------------------------------------------------------
# Oracle


class InstanceMapOracle:
    """Returns the connected instance region under the prompt.

    Id 0 is background. Requests carrying ``label_maps`` are answered from
    those maps; otherwise the static map given at construction is used.
    """

    def __init__(self, instance_map: np.ndarray | None = None):
        self.instance_map = None if instance_map is None else np.asarray(instance_map)

    def segment(self, req: SegmentRequest) -> SegmentResponse:
        maps = req.label_maps
        if maps is None:
            if self.instance_map is None or req.mode != SINGLE_IMAGE:
                raise ProviderRejected("oracle needs per-frame label maps")
            maps = [self.instance_map]
        first = np.asarray(maps[0])
        if first.shape != req.frames[0].shape[:2]:
            raise ProviderRejected("instance map does not match frame size")
        x, y = req.prompt
        target = int(first[y, x])
        if target == 0:
            return SegmentResponse([np.zeros(f.shape[:2], bool) for f in req.frames], 1.0)
        comp, _ = ndimage.label(first == target)
        masks = [comp == comp[y, x]]
        masks += [np.asarray(m) == target for m in maps[1:]]
        return SegmentResponse(masks, 1.0)


def oracle_from_instance_map(instance_map: np.ndarray) -> InstanceMapOracle:
    return InstanceMapOracle(instance_map)


# --------------------------------------------------------------------------
# HTTP wire format


def encode_request(req: SegmentRequest) -> tuple[list, dict]:
    """Multipart ``files`` and form ``data`` for an HTTP POST."""
    files = [("frames", (f"frame_{i:04d}.png", encode_png(f), "image/png")) for i, f in enumerate(req.frames)]
    meta = {"mode": req.mode, "prompt": {"x": int(req.prompt[0]), "y": int(req.prompt[1])}}
    return files, {"request": json.dumps(meta)}


def decode_request(content_type: str, body: bytes) -> SegmentRequest:
    """Server-side parse of a multipart request produced by ``encode_request``."""
    msg = email.parser.BytesParser(policy=email.policy.HTTP).parsebytes(
        b"Content-Type: " + content_type.encode() + b"\r\n\r\n" + body)
    if not msg.is_multipart():
        raise ProviderRejected("request body is not multipart")
    meta, frames = None, []
    for part in msg.iter_parts():
        name = part.get_param("name", header="content-disposition")
        payload = part.get_payload(decode=True)
        if name == "request":
            meta = json.loads(payload.decode())
        elif name == "frames":
            frames.append(decode_png(payload))
    if meta is None:
        raise ProviderRejected("missing request metadata")
    prompt = (int(meta["prompt"]["x"]), int(meta["prompt"]["y"]))
    return SegmentRequest(meta["mode"], frames, prompt)


def encode_response(resp: SegmentResponse) -> dict:
    return {
        "confidence": resp.confidence,
        "masks": [base64.b64encode(encode_mask_png(m)).decode("ascii") for m in resp.masks],
    }


def decode_response(payload: dict) -> SegmentResponse:
    try:
        masks = [decode_mask_png(base64.b64decode(m)) for m in payload["masks"]]
    except (KeyError, TypeError, ValueError, OSError) as exc:
        raise ProviderRejected(f"malformed response: {exc}") from exc
    conf = payload.get("confidence")
    return SegmentResponse(masks, None if conf is None else float(conf))


class RemoteSegmenter:
    """Client for a segmentation service speaking the multipart contract."""

    def __init__(self, endpoint: str, token: str | None = None, timeout: float = 60.0,
                 retries: int = 3, backoff: float = 0.5, client: httpx.Client | None = None):
        self.endpoint = endpoint
        self.token = token if token is not None else os.environ.get(TOKEN_ENV)
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self._client = client or httpx.Client()
        self.calls = 0

    def _headers(self) -> dict:
        return {"Authorization": f"Bearer {self.token}"} if self.token else {}

    def segment(self, req: SegmentRequest) -> SegmentResponse:
        files, data = encode_request(req)
        last_error = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            self.calls += 1
            try:
                r = self._client.post(self.endpoint, files=files, data=data,
                                      headers=self._headers(), timeout=self.timeout)
            except httpx.TimeoutException as exc:
                raise ProviderTimeout(f"segmentation request exceeded {self.timeout}s") from exc
            except httpx.TransportError as exc:
                last_error = f"transport error: {exc}"
                logger.warning("segmenter attempt %d failed: %s", attempt + 1, last_error)
                continue
            if r.status_code >= 500 or r.status_code == 429:
                last_error = f"HTTP {r.status_code}"
                logger.warning("segmenter attempt %d failed: %s", attempt + 1, last_error)
                continue
            if r.status_code >= 400:
                raise ProviderRejected(f"HTTP {r.status_code}: {r.text[:200]}")
            try:
                payload = r.json()
            except ValueError as exc:
                raise ProviderRejected("response is not JSON") from exc
            return decode_response(payload).validate(req)
        raise ProviderUnavailable(f"giving up after {self.retries} retries ({last_error})")


def remote_provider(endpoint: str, auth: str | None = None, **kwargs) -> RemoteSegmenter:
    return RemoteSegmenter(endpoint, token=auth, **kwargs)


# --------------------------------------------------------------------------
# Recording / replay


@dataclass
class RecordingProvider:
    inner: SegmentationProvider
    log: list = field(default_factory=list)

    def segment(self, req: SegmentRequest) -> SegmentResponse:
        resp = segment(self.inner, req)
        self.log.append(resp)
        return resp

    def drain(self) -> list:
        out, self.log = self.log, []
        return out


@dataclass
class ReplayProvider:
    """Serves previously recorded responses in order."""

    responses: list

    def segment(self, req: SegmentRequest) -> SegmentResponse:
        if not self.responses:
            raise ProviderRejected("replay log exhausted")
        return self.responses.pop(0).validate(req)
