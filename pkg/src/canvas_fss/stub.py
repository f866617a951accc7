"""In-process HTTP server exposing any Segmenter over the wire protocol.

Used by tests and `protocol-check` to exercise the transport without a real
model server. MockBoxBackend implements the reference mock rules any bridge
must reproduce byte-for-byte in mock mode:

- /v1/segment returns one mask, the interior of the first positive box,
  score 0.9; a text-only request gets the centered half-size box.
- /v1/score_labels scores each label as (fnv1a32(label) % 10000) / 10000,
  descending, ties by label.

Failure injection (503 runs, corrupt RLE, disabled label scoring) exists so
conformance checking itself can be tested.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Sequence

import numpy as np

from . import pngio, protocol
from .backends import (
    Box,
    ScoredMask,
    Segmenter,
    SegmenterCapabilities,
    SegmentRequest,
)
from .errors import CanvasFSSError, ProtocolError
from .rle import encode_rle


def fnv1a32(text: str) -> int:
    h = 0x811C9DC5
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * 0x01000193) & 0xFFFFFFFF
    return h


def mock_label_score(label: str) -> float:
    return (fnv1a32(label) % 10000) / 10000


class MockBoxBackend:
    """Reference mock: deterministic, model-free, bridge-compatible."""

    def capabilities(self) -> SegmenterCapabilities:
        return SegmenterCapabilities(
            supports_text=True,
            supports_negative_boxes=True,
            supports_label_scoring=True,
            model_name="bridge-mock",
        )

    def segment(self, request: SegmentRequest) -> list[ScoredMask]:
        h, w = request.image.shape[:2]
        box = next((b for b, p in request.box_prompts if p == "positive"), None)
        if box is None:
            box = (w // 4, h // 4, (3 * w) // 4, (3 * h) // 4)
        grid = np.zeros((h, w), dtype=np.bool_)
        grid[box[1] : box[3], box[0] : box[2]] = True
        return [ScoredMask(mask=encode_rle(grid), score=0.9)][: request.max_masks]

    def score_labels(
        self, image: np.ndarray, box: Box, labels: Sequence[str]
    ) -> list[tuple[str, float]]:
        scored = [(lab, mock_label_score(lab)) for lab in labels]
        scored.sort(key=lambda pair: (-pair[1], pair[0]))
        return scored


@dataclass
class StubConfig:
    fail_requests: int = 0  # first N requests answer 503
    always_unavailable: bool = False
    corrupt: str | None = None  # "bad_rle" emits a counts-sum mismatch
    label_scoring: bool = True


class StubServer:
    """Threaded protocol server around a Segmenter; for tests and checks."""

    def __init__(
        self, backend: Segmenter, config: StubConfig | None = None, port: int = 0
    ) -> None:
        self.backend = backend
        self.config = config or StubConfig()
        self._port = port
        self._lock = threading.Lock()
        stub = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, fmt, *args):  # quiet by design
                pass

            def _send(self, status: int, body: bytes) -> None:
                self.send_response(status)
                self.send_header("Content-Type", "application/json; charset=utf-8")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def _unavailable(self) -> bool:
                with stub._lock:
                    if stub.config.always_unavailable:
                        down = True
                    elif stub.config.fail_requests > 0:
                        stub.config.fail_requests -= 1
                        down = True
                    else:
                        down = False
                if down:
                    self._send(
                        503, protocol.canonical_json(protocol.error_to_wire("model not loaded"))
                    )
                return down

            def _fail(self, status: int, message: str) -> None:
                self._send(status, protocol.canonical_json(protocol.error_to_wire(message)))

            def do_GET(self) -> None:
                if self._unavailable():
                    return
                if self.path != "/v1/info":
                    self._fail(404, f"unknown path {self.path}")
                    return
                caps = stub.backend.capabilities()
                if not stub.config.label_scoring:
                    caps = SegmenterCapabilities(
                        supports_text=caps.supports_text,
                        supports_negative_boxes=caps.supports_negative_boxes,
                        supports_label_scoring=False,
                        model_name=caps.model_name,
                    )
                self._send(200, protocol.canonical_json(protocol.info_to_wire(caps)))

            def do_POST(self) -> None:
                if self._unavailable():
                    return
                try:
                    length = int(self.headers.get("Content-Length", "0"))
                    raw = self.rfile.read(length)
                    if self.path == "/v1/segment":
                        body = self._segment(raw)
                    elif self.path == "/v1/score_labels":
                        body = self._score_labels(raw)
                    else:
                        self._fail(404, f"unknown path {self.path}")
                        return
                except CanvasFSSError as exc:
                    self._fail(400, str(exc))
                    return
                self._send(200, body)

            def _segment(self, raw: bytes) -> bytes:
                req = protocol.segment_request_from_wire(protocol.parse_json(raw))
                image = pngio.decode_png(req["image_png"])
                request = SegmentRequest(
                    image=image,
                    box_prompts=tuple(req["boxes"]),
                    text=req["text"],
                    max_masks=req["max_masks"],
                )
                masks = stub.backend.segment(request)
                wire = protocol.segment_response_to_wire(req["request_id"], masks)
                if stub.config.corrupt == "bad_rle":
                    for m in wire["masks"]:
                        m["counts"] = [c + 1 for c in m["counts"]]
                return protocol.canonical_json(wire)

            def _score_labels(self, raw: bytes) -> bytes:
                if not stub.config.label_scoring:
                    raise ProtocolError("label scoring unsupported")
                req = protocol.score_labels_request_from_wire(protocol.parse_json(raw))
                image = pngio.decode_png(req["image_png"])
                scores = stub.backend.score_labels(image, req["box"], req["labels"])
                return protocol.canonical_json(
                    protocol.score_labels_response_to_wire(req["request_id"], scores)
                )

        self._server = ThreadingHTTPServer(("127.0.0.1", self._port), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "StubServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()

    def __enter__(self) -> "StubServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def main(argv: list[str] | None = None) -> int:
    """Serve the mock backend for manual probing: python3 -m canvas_fss.stub"""
    import argparse

    parser = argparse.ArgumentParser(description="mock segmentation endpoint")
    parser.add_argument("--port", type=int, default=0, help="0 picks a free port")
    parser.add_argument(
        "--no-label-scoring", action="store_true", help="answer score_labels with 400"
    )
    args = parser.parse_args(argv)

    config = StubConfig(label_scoring=not args.no_label_scoring)
    with StubServer(MockBoxBackend(), config, port=args.port) as server:
        print(f"serving {server.url}", flush=True)
        try:
            threading.Event().wait()
        except KeyboardInterrupt:
            pass
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
