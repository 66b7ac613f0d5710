"""HTTP inference service backing the browser UI.

Stateless across requests: the model weights and the pre-encoded reference
library are loaded once and shared read-only between handler threads.
Uploads are processed in memory and never persisted.

Routes:
    GET  /health      -> {"status": "ok", "ckpt": ..., "arch": {...}} or 503
    GET  /references  -> JSON array of {id, mean_v, thumbnail_png_base64},
                         sorted by mean_v ascending
    POST /enhance     -> multipart with file field "low" and exactly one of
                         text field "ref_id" or file field "ref"; responds
                         with PNG bytes and an X-Mean-V header
"""

from __future__ import annotations

import base64
import json
import logging
import re
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from . import imaging, model, training
from .errors import DecodeError

log = logging.getLogger(__name__)

DEFAULT_MAX_UPLOAD_MB = 16
THUMBNAIL_MAX_SIDE = 96


@dataclass
class ReferenceEntry:
    id: str
    mean_v: float
    thumbnail_png: bytes
    luminance: torch.Tensor  # cached l_r span

    def to_json_obj(self) -> dict:
        return {
            "id": self.id,
            "mean_v": self.mean_v,
            "thumbnail_png_base64": base64.b64encode(self.thumbnail_png).decode("ascii"),
        }


def _thumbnail(img: torch.Tensor) -> bytes:
    arr = np.rint(np.clip(img.numpy(), 0, 1) * 255).astype(np.uint8)
    pil = Image.fromarray(arr, mode="RGB")
    pil.thumbnail((THUMBNAIL_MAX_SIDE, THUMBNAIL_MAX_SIDE))
    import io

    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return buf.getvalue()


def load_reference_library(refs_dir, params: model.ModelParams) -> list[ReferenceEntry]:
    """Scan a directory of images, pre-encoding each one's luminance span.

    Non-image files are skipped with a warning; entries come back sorted by
    mean_v ascending.
    """
    entries = []
    refs_dir = Path(refs_dir)
    for path in sorted(refs_dir.iterdir()):
        if not path.is_file():
            continue
        try:
            img = imaging.load_image(path)
        except (DecodeError, FileNotFoundError):
            log.warning("skipping non-image file in reference library: %s", path)
            continue
        with torch.no_grad():
            padded, _ = model.pad_to_divisible(img, params.arch.divisor)
            latent, _ = model.encode(padded, params)
            _, l_ref = model.split(latent, params.arch)
        entries.append(
            ReferenceEntry(
                id=path.stem,
                mean_v=imaging.mean_v(img),
                thumbnail_png=_thumbnail(img),
                luminance=l_ref.clone(),
            )
        )
    entries.sort(key=lambda e: e.mean_v)
    return entries


def parse_multipart(body: bytes, content_type: str) -> dict[str, tuple[str | None, bytes]]:
    """Parse a multipart/form-data body into {field: (filename, payload)}.

    Byte-exact on payloads (no line-ending normalization), which matters
    for the PNG uploads every client sends here.
    """
    match = re.search(r'boundary="?([^";,]+)"?', content_type)
    if not match:
        raise ValueError("multipart content type without boundary")
    delimiter = b"--" + match.group(1).encode("utf-8")
    fields: dict[str, tuple[str | None, bytes]] = {}
    sections = body.split(delimiter)
    for section in sections[1:]:
        if section.startswith(b"--"):
            break  # closing delimiter
        part = section.removeprefix(b"\r\n")
        if part.endswith(b"\r\n"):
            part = part[:-2]
        header_blob, sep, payload = part.partition(b"\r\n\r\n")
        if not sep:
            continue
        disposition = ""
        for line in header_blob.split(b"\r\n"):
            key, _, value = line.partition(b":")
            if key.strip().lower() == b"content-disposition":
                disposition = value.decode("utf-8", errors="replace")
        name = re.search(r'name="([^"]*)"', disposition)
        if not name:
            continue
        filename = re.search(r'filename="([^"]*)"', disposition)
        fields[name.group(1)] = (filename.group(1) if filename else None, payload)
    return fields


class EnhanceService:
    """Shared state for the request handlers."""

    def __init__(
        self,
        params: model.ModelParams | None = None,
        ckpt_id: str = "",
        references: list[ReferenceEntry] | None = None,
        max_upload_mb: int = DEFAULT_MAX_UPLOAD_MB,
        cors_origin: str = "*",
    ):
        self.params = params
        self.ckpt_id = ckpt_id
        self.references = references or []
        self.max_upload_bytes = max_upload_mb * 1024 * 1024
        self.cors_origin = cors_origin
        self._ref_by_id = {e.id: e for e in self.references}

    @property
    def loaded(self) -> bool:
        return self.params is not None

    def reference(self, ref_id: str) -> ReferenceEntry | None:
        return self._ref_by_id.get(ref_id)

    def enhance_with_luminance(self, low: torch.Tensor, l_ref: torch.Tensor) -> torch.Tensor:
        """One encoder pass on the upload plus a decode; l_ref is pre-cached."""
        params = self.params
        with torch.no_grad():
            low_p, (h, w) = model.pad_to_divisible(low, params.arch.divisor)
            f_low, skips = model.encode(low_p, params)
            c_low, _ = model.split(f_low, params.arch)
            merged = model.concat_features(c_low, l_ref, params.arch)
            fmap = model.expand(merged, model.bottleneck_shape_for(skips, params.arch), params)
            out = model.decode(fmap, skips, params)
        return out[:h, :w, :]

    def enhance_with_image(self, low: torch.Tensor, ref: torch.Tensor) -> torch.Tensor:
        with torch.no_grad():
            return model.enhance(low, ref, self.params)


class _Handler(BaseHTTPRequestHandler):
    service: EnhanceService  # set on the server class

    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):
        log.debug("%s - %s", self.address_string(), fmt % args)

    def _cors(self):
        self.send_header("Access-Control-Allow-Origin", self.server.service.cors_origin)
        self.send_header("Access-Control-Expose-Headers", "X-Mean-V")

    def _respond(self, code: int, body: bytes, content_type: str, extra: dict | None = None):
        self.send_response(code)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self._cors()
        for k, v in (extra or {}).items():
            self.send_header(k, v)
        self.end_headers()
        self.wfile.write(body)

    def _json(self, code: int, obj):
        self._respond(code, json.dumps(obj).encode("utf-8"), "application/json")

    def do_OPTIONS(self):
        self.send_response(204)
        self._cors()
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self):
        svc = self.server.service
        if self.path == "/health":
            if not svc.loaded:
                self._json(503, {"status": "loading"})
                return
            self._json(
                200, {"status": "ok", "ckpt": svc.ckpt_id, "arch": svc.params.arch.to_dict()}
            )
        elif self.path == "/references":
            self._json(200, [e.to_json_obj() for e in svc.references])
        else:
            self._json(404, {"error": f"unknown route {self.path}"})

    def do_POST(self):
        try:
            self._handle_post()
        except Exception:
            log.exception("unhandled error in POST %s", self.path)
            self._json(500, {"error": "internal error"})

    def _handle_post(self):
        svc = self.server.service
        if self.path != "/enhance":
            self._json(404, {"error": f"unknown route {self.path}"})
            return
        if not svc.loaded:
            self._json(503, {"status": "loading"})
            return
        length = int(self.headers.get("Content-Length", 0))
        if length > svc.max_upload_bytes:
            self._json(413, {"error": f"upload exceeds {svc.max_upload_bytes} bytes"})
            return
        ctype = self.headers.get("Content-Type", "")
        if "multipart/form-data" not in ctype:
            self._json(400, {"error": "expected multipart/form-data"})
            return
        body = self.rfile.read(length)
        try:
            fields = parse_multipart(body, ctype)
        except Exception:
            self._json(400, {"error": "malformed multipart body"})
            return

        if "low" not in fields:
            self._json(400, {"error": "missing file field 'low'"})
            return
        has_ref_id = "ref_id" in fields
        has_ref_file = "ref" in fields
        if has_ref_id == has_ref_file:
            self._json(400, {"error": "supply exactly one of 'ref_id' or a 'ref' file"})
            return

        try:
            low = imaging.decode_image_bytes(fields["low"][1])
        except DecodeError:
            self._json(400, {"error": "field 'low' is not a decodable image"})
            return

        if has_ref_id:
            ref_id = fields["ref_id"][1].decode("utf-8", errors="replace").strip()
            entry = svc.reference(ref_id)
            if entry is None:
                self._json(404, {"error": f"unknown ref_id '{ref_id}'"})
                return
            out = svc.enhance_with_luminance(low, entry.luminance)
        else:
            try:
                ref = imaging.decode_image_bytes(fields["ref"][1])
            except DecodeError:
                self._json(400, {"error": "field 'ref' is not a decodable image"})
                return
            out = svc.enhance_with_image(low, ref)

        png = imaging.encode_png(out)
        self._respond(200, png, "image/png", extra={"X-Mean-V": f"{imaging.mean_v(out):.6f}"})


class EnhanceServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address, service: EnhanceService):
        super().__init__(address, _Handler)
        self.service = service


def build_service(
    ckpt_path,
    refs_dir,
    max_upload_mb: int = DEFAULT_MAX_UPLOAD_MB,
    cors_origin: str = "*",
) -> EnhanceService:
    params = training.load_params(ckpt_path)
    refs = load_reference_library(refs_dir, params)
    return EnhanceService(
        params=params,
        ckpt_id=Path(ckpt_path).name,
        references=refs,
        max_upload_mb=max_upload_mb,
        cors_origin=cors_origin,
    )


def serve(service: EnhanceService, host: str = "127.0.0.1", port: int = 8765) -> EnhanceServer:
    """Create the server (call serve_forever on the result)."""
    return EnhanceServer((host, port), service)


def serve_in_thread(service: EnhanceService, host: str = "127.0.0.1", port: int = 0):
    """Start on a background thread; returns (server, thread). Port 0 picks
    a free port (server.server_address[1])."""
    server = serve(service, host, port)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, thread
