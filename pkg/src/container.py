"""
場容器格式 (Field Container)

Binary layout of a ``.ncf`` file:

    NCFIELD\\n
    {"K": .., "boundary": .., "d": .., "dtype": "<c16", "format": 1, "n": .., "shape": [..]}\\n
    <row-major cell array, little-endian complex128 (interleaved re/im doubles)>

Round trips are bit-exact. A decomposition dump is a directory holding one
container per component plus ``manifest.json``.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from dyadic_field import DyadicGrid, MatrixField
from errors import ContainerError, InvalidConfig
from utils.log import add_log

MAGIC = b"NCFIELD\n"
FORMAT_VERSION = 1
DTYPE = "<c16"
MANIFEST_NAME = "manifest.json"
SUFFIX = ".ncf"


def write_atomic(path, data: bytes) -> Path:
    """Write to a temporary sibling then rename over the target."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
        try:
            with os.fdopen(fd, "wb") as handle:
                handle.write(data)
                handle.flush()
                os.fsync(handle.fileno())
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise ContainerError(f"cannot write {path}: {exc}", path=str(path)) from exc
    return path


def write_text_atomic(path, text: str) -> Path:
    return write_atomic(path, text.encode("utf-8"))


def dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def encode_field(field: MatrixField) -> bytes:
    header = dict(field.grid.to_dict(), dtype=DTYPE, format=FORMAT_VERSION, shape=list(field.grid.shape))
    line = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("ascii") + b"\n"
    payload = np.ascontiguousarray(field.values, dtype=DTYPE).tobytes(order="C")
    return MAGIC + line + payload


def decode_field(data: bytes, source: str = "<bytes>") -> MatrixField:
    if not data.startswith(MAGIC):
        raise ContainerError(f"{source}: not a field container (bad magic)", path=source)
    end = data.find(b"\n", len(MAGIC))
    if end < 0:
        raise ContainerError(f"{source}: truncated header", path=source)
    try:
        header = json.loads(data[len(MAGIC):end].decode("ascii"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"{source}: unreadable header: {exc}", path=source) from exc
    if header.get("format") != FORMAT_VERSION or header.get("dtype") != DTYPE:
        raise ContainerError(f"{source}: unsupported container version or dtype", path=source)
    try:
        grid = DyadicGrid(int(header["d"]), int(header["K"]), int(header["n"]), header["boundary"])
    except (KeyError, TypeError, ValueError, InvalidConfig) as exc:
        raise ContainerError(f"{source}: invalid grid header: {exc}", path=source) from exc
    if list(grid.shape) != header.get("shape"):
        raise ContainerError(f"{source}: shape does not match grid", path=source)
    payload = data[end + 1:]
    expected = int(np.prod(grid.shape)) * np.dtype(DTYPE).itemsize
    if len(payload) != expected:
        raise ContainerError(f"{source}: payload has {len(payload)} bytes, expected {expected}", path=source)
    values = np.frombuffer(payload, dtype=DTYPE).reshape(grid.shape)
    return MatrixField(grid, values)


def save_field(path, field: MatrixField) -> Path:
    out = write_atomic(path, encode_field(field))
    add_log("debug", f"wrote field {out}", "io")
    return out


def load_field(path) -> MatrixField:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ContainerError(f"cannot read {path}: {exc}", path=str(path)) from exc
    return decode_field(data, str(path))


def save_components(directory, fields: dict[str, MatrixField], manifest: dict) -> Path:
    """One container per component, then the manifest (written last)."""
    directory = Path(directory)
    names = sorted(fields)
    for name in names:
        save_field(directory / f"{name}{SUFFIX}", fields[name])
    body = dict(manifest, components=names)
    write_text_atomic(directory / MANIFEST_NAME, dump_json(body))
    add_log("info", f"wrote {len(names)} components to {directory}", "io")
    return directory


def load_components(directory) -> tuple[dict, dict[str, MatrixField]]:
    directory = Path(directory)
    try:
        manifest = json.loads((directory / MANIFEST_NAME).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ContainerError(f"cannot read manifest in {directory}: {exc}", path=str(directory)) from exc
    except json.JSONDecodeError as exc:
        raise ContainerError(f"corrupt manifest in {directory}: {exc}", path=str(directory)) from exc
    fields = {name: load_field(directory / f"{name}{SUFFIX}") for name in manifest.get("components", [])}
    return manifest, fields
