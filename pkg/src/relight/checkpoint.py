"""Checkpoint container: JSON manifest + raw little-endian float32 arrays.

Layout (documented for alternate-language readers in docs/checkpoint_format.md):

    bytes 0..8    magic b"RELIGHT1"
    bytes 8..16   little-endian uint64: manifest length in bytes
    manifest      UTF-8 JSON
    data          the arrays listed in manifest["arrays"], concatenated in
                  order, each as raw little-endian float32

The manifest always carries "kind" ("model" or "train"), "arch", "step",
"created", and "arrays" (name/shape/dtype per entry). Training checkpoints
add "epoch" and "seed" (the rng-state: all stream positions derive from
seed, epoch and step) plus the Adam moment arrays.
"""

from __future__ import annotations

import json
import os
import struct
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import torch

from .errors import CheckpointFormatError

MAGIC = b"RELIGHT1"
REQUIRED_FIELDS = ("kind", "arch", "step", "arrays")


def write_container(path, manifest: dict, arrays: dict[str, torch.Tensor]) -> Path:
    """Atomically write a checkpoint file (temp + rename)."""
    path = Path(path)
    manifest = dict(manifest)
    manifest.setdefault("created", datetime.now(timezone.utc).isoformat())
    entries = []
    blobs = []
    for name, tensor in arrays.items():
        arr = tensor.detach().cpu().numpy().astype("<f4")
        entries.append({"name": name, "shape": list(arr.shape), "dtype": "float32"})
        blobs.append(arr.tobytes())
    manifest["arrays"] = entries
    payload = json.dumps(manifest).encode("utf-8")

    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(payload)))
        fh.write(payload)
        for blob in blobs:
            fh.write(blob)
    os.replace(tmp, path)
    return path


def read_container(path) -> tuple[dict, dict[str, torch.Tensor]]:
    """Read and validate a checkpoint; returns (manifest, arrays)."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointFormatError(f"bad magic in {path}: {magic!r}")
        (mlen,) = struct.unpack("<Q", fh.read(8))
        raw = fh.read(mlen)
        try:
            manifest = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointFormatError(f"manifest is not valid JSON in {path}") from exc
        for field in REQUIRED_FIELDS:
            if field not in manifest:
                raise CheckpointFormatError(f"manifest missing field '{field}' in {path}")
        arrays = {}
        for entry in manifest["arrays"]:
            for field in ("name", "shape", "dtype"):
                if field not in entry:
                    raise CheckpointFormatError(f"array entry missing field '{field}' in {path}")
            if entry["dtype"] != "float32":
                raise CheckpointFormatError(f"unsupported dtype '{entry['dtype']}' in {path}")
            count = int(np.prod(entry["shape"])) if entry["shape"] else 1
            blob = fh.read(4 * count)
            if len(blob) != 4 * count:
                raise CheckpointFormatError(
                    f"truncated data for array '{entry['name']}' in {path}"
                )
            arr = np.frombuffer(blob, dtype="<f4").reshape(entry["shape"])
            arrays[entry["name"]] = torch.from_numpy(arr.copy())
    return manifest, arrays
