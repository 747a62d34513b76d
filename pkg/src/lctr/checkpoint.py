"""Flat binary checkpoint container with a text manifest.

Layout: the line ``lctr-ckpt-v1``, one manifest line per buffer
(``name shape offset`` with shape as comma-joined extents and offset in
bytes into the data section), a blank line, then the raw little-endian
float64 buffers back to back.
"""

from __future__ import annotations

import numpy as np

from .errors import ManifestError
from .tensor import Parameter

FORMAT_TAG = "lctr-ckpt-v1"


def save_checkpoint(params: dict, path):
    """Write named parameter buffers; iteration order fixes the layout."""
    lines = [FORMAT_TAG]
    blobs = []
    offset = 0
    for name, param in params.items():
        arr = np.ascontiguousarray(param.data, dtype="<f8")
        shape = ",".join(str(s) for s in arr.shape)
        lines.append(f"{name} {shape} {offset}")
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n\n").encode("ascii"))
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path) -> dict:
    """Read a checkpoint back into a name -> ndarray mapping."""
    with open(path, "rb") as fh:
        raw = fh.read()
    sep = raw.find(b"\n\n")
    if sep < 0:
        raise ManifestError(f"{path}: missing manifest terminator")
    manifest = raw[:sep].decode("ascii").splitlines()
    data = raw[sep + 2 :]
    if not manifest or manifest[0] != FORMAT_TAG:
        head = manifest[0] if manifest else ""
        raise ManifestError(f"{path}: expected tag {FORMAT_TAG!r}, found {head!r}")
    out = {}
    for line in manifest[1:]:
        name, shape_s, offset_s = line.rsplit(" ", 2)
        shape = tuple(int(s) for s in shape_s.split(","))
        offset = int(offset_s)
        count = int(np.prod(shape))
        buf = data[offset : offset + 8 * count]
        if len(buf) != 8 * count:
            raise ManifestError(f"{path}: truncated buffer for {name!r}")
        out[name] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    return out


def load_into(params: dict, path):
    """Load a checkpoint into existing parameters, validating the manifest.

    Raises ManifestError listing every missing, unexpected, or
    shape-mismatched entry.
    """
    loaded = load_checkpoint(path)
    problems = []
    for name in params:
        if name not in loaded:
            problems.append(f"missing {name} {tuple(params[name].shape)}")
    for name in loaded:
        if name not in params:
            problems.append(f"unexpected {name} {loaded[name].shape}")
    for name, param in params.items():
        if name in loaded and loaded[name].shape != tuple(param.shape):
            problems.append(
                f"shape mismatch {name}: checkpoint {loaded[name].shape}, model {tuple(param.shape)}"
            )
    if problems:
        raise ManifestError(f"{path}: " + "; ".join(problems))
    for name, param in params.items():
        param.data[...] = loaded[name]
