"""Checkpoint container.

Layout::

    PARAREP-CHECKPOINT
    format_version=1
    <key>=<value>            (configuration header, one pair per line)
    ---
    <name> <d0>x<d1>...      (manifest, one parameter per line)
    ---
    <raw little-endian float32 buffers in manifest order>

Values are written with ``repr`` so that floats round-trip exactly.
"""
from __future__ import annotations

import os
import tempfile

import numpy as np

from .errors import FormatError

MAGIC = b"PARAREP-CHECKPOINT\n"
FORMAT_VERSION = 1
_SEP = b"---\n"


def _encode_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return "None"
    return str(v)


def save_checkpoint(path, params: dict, header: dict) -> None:
    """Write atomically: the file appears complete or not at all."""
    lines = [MAGIC, f"format_version={FORMAT_VERSION}\n".encode()]
    for k, v in header.items():
        s = _encode_value(v)
        if "\n" in s or "=" in k:
            raise FormatError(f"header entry {k!r} cannot be serialised")
        lines.append(f"{k}={s}\n".encode())
    lines.append(_SEP)
    for name, arr in params.items():
        dims = "x".join(str(d) for d in arr.shape) or "scalar"
        lines.append(f"{name} {dims}\n".encode())
    lines.append(_SEP)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ckpt-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.writelines(lines)
            for arr in params.values():
                fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path) -> tuple[dict, dict]:
    """Return ``(header, params)``; header values are strings."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(MAGIC):
        raise FormatError(f"{path}: not a checkpoint file")
    pos = len(MAGIC)
    header: dict[str, str] = {}
    while True:
        end = blob.index(b"\n", pos)
        line = blob[pos:end + 1]
        pos = end + 1
        if line == _SEP:
            break
        k, _, v = line.decode().rstrip("\n").partition("=")
        header[k] = v
    if int(header.get("format_version", -1)) != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {header.get('format_version')}")
    manifest = []
    while True:
        end = blob.index(b"\n", pos)
        line = blob[pos:end + 1]
        pos = end + 1
        if line == _SEP:
            break
        name, dims = line.decode().split()
        shape = () if dims == "scalar" else tuple(int(d) for d in dims.split("x"))
        manifest.append((name, shape))
    params = {}
    for name, shape in manifest:
        count = int(np.prod(shape)) if shape else 1
        nbytes = 4 * count
        if pos + nbytes > len(blob):
            raise FormatError(f"{path}: truncated buffer for {name}")
        params[name] = np.frombuffer(blob, dtype="<f4", count=count, offset=pos).astype(np.float32).reshape(shape)
        pos += nbytes
    if pos != len(blob):
        raise FormatError(f"{path}: {len(blob) - pos} trailing bytes")
    return header, params
