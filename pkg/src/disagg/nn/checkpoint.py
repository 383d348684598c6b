"""Parameter checkpoint container.

A checkpoint is a single self-describing file: one JSON header line
(tensor names, shapes, dtypes, byte offsets, plus free-form metadata
such as the manifest hash) followed by the concatenated little-endian
tensor bytes.  Writing is fully deterministic, so identical parameters
and metadata always produce identical files.
"""

from __future__ import annotations

import json

import numpy as np

from ..errors import DataError

FORMAT_TAG = "disagg-checkpoint-v1"


def save_checkpoint(path, params: dict, meta: dict | None = None):
    names = sorted(params)
    entries = []
    blobs = []
    offset = 0
    for name in names:
        arr = np.ascontiguousarray(params[name], dtype="<f8")
        blob = arr.tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset,
                        "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    header = {"format": FORMAT_TAG, "meta": meta or {}, "tensors": entries}
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True, separators=(",", ":")).encode())
        f.write(b"\n")
        for blob in blobs:
            f.write(blob)


def load_checkpoint(path):
    """Returns (params dict, meta dict)."""
    with open(path, "rb") as f:
        header_line = f.readline()
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: not a checkpoint file ({exc})") from None
        if header.get("format") != FORMAT_TAG:
            raise DataError(f"{path}: unknown checkpoint format {header.get('format')!r}")
        body = f.read()
    params = {}
    for entry in header["tensors"]:
        lo, hi = entry["offset"], entry["offset"] + entry["nbytes"]
        if hi > len(body):
            raise DataError(f"{path}: truncated checkpoint (tensor {entry['name']!r})")
        arr = np.frombuffer(body[lo:hi], dtype="<f8").reshape(entry["shape"])
        params[entry["name"]] = arr.astype(np.float64)
    return params, header["meta"]
