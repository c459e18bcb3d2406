"""Client contract for the external dual-stylization service, plus a
deterministic mock server for tests.

Wire contract: HTTP POST /v1/stylize with a multipart body holding part
"image" (PNG) and part "params" (key=value lines: prompt, strength, edge,
identity as decimal strings). Success is a 200 with a PNG body and headers
X-Latency-Seconds and X-Service-Mode; failures are 4xx/5xx with a text body.
"""

from __future__ import annotations

import io
import threading
import time
from dataclasses import dataclass, field
from email.parser import BytesParser
from email.policy import HTTP
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import requests
from PIL import Image

STYLIZE_PATH = "/v1/stylize"
MOCK_MODES = ("echo", "tint", "fail", "slow")
# The tint mode's per-channel pixel shift at strength 1 (values are clipped
# to [0, 255] afterwards). Tests verify against this exact formula.
TINT_DELTA = (40, -25, 10)


class StylizerError(Exception):
    """Base error for stylization failures."""


class StylizeTimeout(StylizerError):
    pass


class ServiceError(StylizerError):
    """Non-2xx status passed through from the service."""

    def __init__(self, status: int, body: str):
        self.status = status
        self.body = body
        super().__init__(f"service returned {status}: {body[:200]}")


class DimensionMismatch(StylizerError):
    pass


@dataclass
class StylizeRequest:
    image_png: bytes
    prompt: str
    style_strength: float = 0.5
    edge_preservation: float = 0.5
    identity_consistency: float = 0.5
    timeout: float = 30.0

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        for name in ("style_strength", "edge_preservation", "identity_consistency"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")

    @classmethod
    def from_array(cls, rgb: np.ndarray, prompt: str, **kw) -> "StylizeRequest":
        img = Image.fromarray(
            (np.clip(np.asarray(rgb, np.float64), 0, 1) * 255.0 + 0.5).astype(np.uint8), "RGB")
        buf = io.BytesIO()
        img.save(buf, format="PNG")
        return cls(image_png=buf.getvalue(), prompt=prompt, **kw)


@dataclass
class StylizeResponse:
    image_png: bytes
    latency: float
    metadata: dict = field(default_factory=dict)

    def to_array(self) -> np.ndarray:
        img = Image.open(io.BytesIO(self.image_png)).convert("RGB")
        return np.asarray(img, np.float32) / 255.0


def encode_params(req: StylizeRequest) -> str:
    return (f"prompt={req.prompt}\n"
            f"strength={req.style_strength!r}\n"
            f"edge={req.edge_preservation!r}\n"
            f"identity={req.identity_consistency!r}\n")


def decode_params(text: str, image_png: bytes, timeout: float = 30.0) -> StylizeRequest:
    fields = {}
    for line in text.splitlines():
        if "=" in line:
            key, _, val = line.partition("=")
            fields[key.strip()] = val
    return StylizeRequest(
        image_png=image_png,
        prompt=fields.get("prompt", ""),
        style_strength=float(fields.get("strength", "0.5")),
        edge_preservation=float(fields.get("edge", "0.5")),
        identity_consistency=float(fields.get("identity", "0.5")),
        timeout=timeout,
    )


def _png_size(png: bytes):
    with Image.open(io.BytesIO(png)) as im:
        return im.size


def stylize(req: StylizeRequest, endpoint: str) -> StylizeResponse:
    """POST the request to ``endpoint`` and validate the response.

    Raises StylizeTimeout if the service does not answer within req.timeout,
    ServiceError on non-2xx statuses, and DimensionMismatch when the returned
    image size differs from the request image.
    """
    url = endpoint.rstrip("/") + STYLIZE_PATH
    files = {
        "image": ("image.png", req.image_png, "image/png"),
        "params": ("params", encode_params(req), "text/plain"),
    }
    start = time.monotonic()
    try:
        resp = requests.post(url, files=files, timeout=req.timeout)
    except requests.Timeout as e:
        raise StylizeTimeout(f"no response within {req.timeout}s") from e
    except requests.RequestException as e:
        raise StylizerError(str(e)) from e
    elapsed = time.monotonic() - start
    if resp.status_code != 200:
        raise ServiceError(resp.status_code, resp.text)
    out = resp.content
    if _png_size(out) != _png_size(req.image_png):
        raise DimensionMismatch(
            f"response {_png_size(out)} != request {_png_size(req.image_png)}")
    latency = float(resp.headers.get("X-Latency-Seconds", elapsed))
    meta = {k: v for k, v in resp.headers.items() if k.lower().startswith("x-")}
    return StylizeResponse(image_png=out, latency=latency, metadata=meta)


def apply_tint(rgb_u8: np.ndarray, strength: float) -> np.ndarray:
    """The mock's documented tint: shift each channel by round(strength *
    TINT_DELTA), clipped to [0, 255]."""
    shift = np.round(strength * np.array(TINT_DELTA)).astype(np.int64)
    return np.clip(rgb_u8.astype(np.int64) + shift, 0, 255).astype(np.uint8)


class _MockHandler(BaseHTTPRequestHandler):
    def log_message(self, *args):  # quiet test output
        pass

    def do_POST(self):
        server: MockStylizerServer = self.server.owner
        if self.path != STYLIZE_PATH:
            self._text(404, "unknown path")
            return
        started = time.monotonic()
        try:
            length = int(self.headers.get("Content-Length", "0"))
            body = self.rfile.read(length)
            ctype = self.headers.get("Content-Type", "")
            image, params_text = _parse_multipart(body, ctype)
            req = decode_params(params_text, image)
        except Exception as e:
            self._text(400, f"bad request: {e}")
            return
        mode = server.mode
        if mode == "fail":
            self._text(500, "stylization backend unavailable")
            return
        if mode == "slow":
            time.sleep(server.slow_seconds)
        if mode == "tint":
            img = Image.open(io.BytesIO(req.image_png)).convert("RGB")
            arr = apply_tint(np.asarray(img), req.style_strength)
            buf = io.BytesIO()
            Image.fromarray(arr, "RGB").save(buf, format="PNG")
            out = buf.getvalue()
        else:  # echo / slow
            out = req.image_png
        self.send_response(200)
        self.send_header("Content-Type", "image/png")
        self.send_header("Content-Length", str(len(out)))
        self.send_header("X-Latency-Seconds", f"{time.monotonic() - started:.6f}")
        self.send_header("X-Service-Mode", mode)
        self.end_headers()
        self.wfile.write(out)

    def _text(self, status: int, message: str):
        data = message.encode()
        self.send_response(status)
        self.send_header("Content-Type", "text/plain")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)


def _parse_multipart(body: bytes, content_type: str):
    msg = BytesParser(policy=HTTP).parsebytes(
        b"Content-Type: " + content_type.encode() + b"\r\n\r\n" + body)
    if not msg.is_multipart():
        raise ValueError("expected multipart body")
    image = params = None
    for part in msg.iter_parts():
        name = part.get_param("name", header="content-disposition")
        if name == "image":
            image = part.get_payload(decode=True)
        elif name == "params":
            payload = part.get_payload(decode=True)
            params = payload.decode()
    if image is None or params is None:
        raise ValueError("multipart body must carry 'image' and 'params' parts")
    return image, params


class MockStylizerServer:
    """Deterministic in-process service double; stateless across requests."""

    def __init__(self, port: int = 0, mode: str = "echo", slow_seconds: float = 5.0):
        if mode not in MOCK_MODES:
            raise ValueError(f"mode must be one of {MOCK_MODES}")
        self.mode = mode
        self.slow_seconds = slow_seconds
        self._httpd = ThreadingHTTPServer(("127.0.0.1", port), _MockHandler)
        self._httpd.owner = self
        self._httpd.daemon_threads = True
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def endpoint(self) -> str:
        return f"http://127.0.0.1:{self.port}"

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        self._thread.join(timeout=5)

    def __enter__(self) -> "MockStylizerServer":
        return self

    def __exit__(self, *exc) -> None:
        self.stop()


def run_mock_server(port: int = 0, mode: str = "echo", **kw) -> MockStylizerServer:
    """Start the mock service; raises OSError if the port is busy."""
    return MockStylizerServer(port=port, mode=mode, **kw)
