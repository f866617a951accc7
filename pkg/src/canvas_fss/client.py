"""HTTP client for a segmentation backend speaking the wire protocol.

Transport faults (connection refused, timeouts, 5xx) are retried with
exponential backoff up to the attempt cap, then surface as TransportError.
Capability mismatches are checked locally against /v1/info and never
retried; a 400 means this client produced a malformed body, which is a
protocol bug rather than a transient fault.
"""
from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import requests

from . import pngio, protocol
from .backends import Box, ScoredMask, SegmenterCapabilities, SegmentRequest
from .errors import CapabilityError, ProtocolError, TransportError


@dataclass
class RemoteSegmenter:
    endpoint: str
    timeout: float = 30.0
    max_attempts: int = 3
    backoff: float = 0.2
    _caps: SegmenterCapabilities | None = field(default=None, repr=False)
    _ids: itertools.count = field(default_factory=itertools.count, repr=False)

    def __post_init__(self) -> None:
        self.endpoint = self.endpoint.rstrip("/")
        self._session = requests.Session()

    def _next_id(self) -> str:
        return f"r{next(self._ids):06d}"

    def _request(self, method: str, path: str, body: bytes | None = None) -> bytes:
        url = f"{self.endpoint}{path}"
        last: Exception | None = None
        for attempt in range(self.max_attempts):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                if method == "GET":
                    resp = self._session.get(url, timeout=self.timeout)
                else:
                    resp = self._session.post(
                        url,
                        data=body,
                        headers={"Content-Type": "application/json; charset=utf-8"},
                        timeout=self.timeout,
                    )
            except (requests.ConnectionError, requests.Timeout) as exc:
                last = exc
                continue
            if resp.status_code == 400:
                detail = self._error_detail(resp.content)
                raise ProtocolError(f"backend rejected request: {detail}")
            if resp.status_code >= 500:
                last = TransportError(f"HTTP {resp.status_code} from {url}")
                continue
            if resp.status_code != 200:
                raise ProtocolError(f"unexpected HTTP {resp.status_code} from {url}")
            return resp.content
        raise TransportError(f"backend unreachable after {self.max_attempts} attempts: {last}")

    @staticmethod
    def _error_detail(raw: bytes) -> str:
        try:
            obj = protocol.parse_json(raw)
            return str(obj.get("error", raw[:200]))
        except ProtocolError:
            return repr(raw[:200])

    def capabilities(self) -> SegmenterCapabilities:
        if self._caps is None:
            self._caps = protocol.info_from_wire(protocol.parse_json(self._request("GET", "/v1/info")))
        return self._caps

    def segment(self, request: SegmentRequest) -> list[ScoredMask]:
        caps = self.capabilities()
        if request.text is not None and not caps.supports_text:
            raise CapabilityError(f"{caps.model_name} does not accept text prompts")
        if request.negatives and not caps.supports_negative_boxes:
            raise CapabilityError(f"{caps.model_name} does not accept negative boxes")
        request_id = self._next_id()
        payload = protocol.segment_request_to_wire(
            request_id=request_id,
            image_png=pngio.encode_png(request.image),
            boxes=list(request.box_prompts),
            text=request.text,
            max_masks=request.max_masks,
        )
        raw = self._request("POST", "/v1/segment", protocol.canonical_json(payload))
        resp_id, masks = protocol.segment_response_from_wire(protocol.parse_json(raw))
        if resp_id != request_id:
            raise ProtocolError(f"response id {resp_id!r} does not match request {request_id!r}")
        h, w = request.image.shape[:2]
        for sm in masks:
            if sm.mask.size != (h, w):
                raise ProtocolError(
                    f"mask size {sm.mask.size} does not match request image {(h, w)}"
                )
        return masks[: request.max_masks]

    def score_labels(
        self, image: np.ndarray, box: Box, labels: Sequence[str]
    ) -> list[tuple[str, float]]:
        caps = self.capabilities()
        if not caps.supports_label_scoring:
            raise CapabilityError(f"{caps.model_name} does not score labels")
        request_id = self._next_id()
        payload = protocol.score_labels_request_to_wire(
            request_id=request_id,
            image_png=pngio.encode_png(image),
            box=box,
            labels=list(labels),
        )
        raw = self._request("POST", "/v1/score_labels", protocol.canonical_json(payload))
        resp_id, scores = protocol.score_labels_response_from_wire(protocol.parse_json(raw))
        if resp_id != request_id:
            raise ProtocolError(f"response id {resp_id!r} does not match request {request_id!r}")
        return scores
