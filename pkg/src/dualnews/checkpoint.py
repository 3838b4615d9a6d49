"""Binary checkpoint container.

Layout (all integers little-endian)::

    b"MWPB"                 magic
    uint32                  format version (1)
    uint64                  header length in bytes
    header                  UTF-8 JSON, keys sorted
    payload                 concatenated float32 little-endian tensors

The header holds ``model_config``, ``train_config``, ``meta`` (free-form),
``optimizer_step`` and ``tensors``: a manifest of
``{"name", "shape", "offset", "nbytes"}`` with offsets relative to the
payload start.  Optimizer moments are stored as tensors named
``adam.m/<param>`` and ``adam.v/<param>``.

The same container doubles as the weight-import format: any tool that
writes tensors under the parameter names documented in ``encoder.py``
(prefixed ``headline.``, ``body.``, ``shared.`` or ``encoder.``, plus
``head.w``/``head.b``) can be loaded with ``import_weights``.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .training import OptimizerState

MAGIC = b"MWPB"
VERSION = 1
_PREFIX = struct.Struct("<4sIQ")
M_PREFIX, V_PREFIX = "adam.m/", "adam.v/"


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    params: dict[str, np.ndarray]
    model_config: dict | None = None
    train_config: dict | None = None
    optimizer: OptimizerState | None = None
    meta: dict = field(default_factory=dict)


def to_bytes(ckpt: Checkpoint) -> bytes:
    tensors: list[tuple[str, np.ndarray]] = list(ckpt.params.items())
    if ckpt.optimizer is not None:
        tensors += [(M_PREFIX + k, v) for k, v in ckpt.optimizer.m.items()]
        tensors += [(V_PREFIX + k, v) for k, v in ckpt.optimizer.v.items()]
    manifest = []
    chunks = []
    offset = 0
    for name, arr in tensors:
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(data)})
        chunks.append(data)
        offset += len(data)
    header = {
        "model_config": ckpt.model_config,
        "train_config": ckpt.train_config,
        "optimizer_step": ckpt.optimizer.step if ckpt.optimizer is not None else None,
        "meta": ckpt.meta,
        "tensors": manifest,
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _PREFIX.pack(MAGIC, VERSION, len(hbytes)) + hbytes + b"".join(chunks)


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> None:
    """Atomic write: temp file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = to_bytes(ckpt)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def from_bytes(data: bytes, dtype=np.float64) -> Checkpoint:
    if len(data) < _PREFIX.size:
        raise CheckpointError("truncated checkpoint: missing prefix")
    magic, version, hlen = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    start = _PREFIX.size
    if start + hlen > len(data):
        raise CheckpointError("truncated checkpoint: header extends past end of file")
    try:
        header = json.loads(data[start : start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from exc
    payload = memoryview(data)[start + hlen :]
    spans = []
    tensors: dict[str, np.ndarray] = {}
    for entry in header.get("tensors", []):
        name, shape = entry["name"], tuple(entry["shape"])
        off, nbytes = int(entry["offset"]), int(entry["nbytes"])
        expected = 4 * int(np.prod(shape, dtype=np.int64))
        if nbytes != expected:
            raise CheckpointError(f"tensor {name}: {nbytes} bytes for shape {shape}")
        if off < 0 or off + nbytes > len(payload):
            raise CheckpointError(
                f"tensor {name}: offset {off}+{nbytes} out of bounds (payload {len(payload)} bytes)"
            )
        spans.append((off, off + nbytes, name))
        if name in tensors:
            raise CheckpointError(f"duplicate tensor {name}")
        arr = np.frombuffer(payload[off : off + nbytes], dtype="<f4").reshape(shape)
        tensors[name] = np.array(arr, dtype=dtype)
    spans.sort()
    for (s0, e0, n0), (s1, e1, n1) in zip(spans, spans[1:]):
        if s1 < e0:
            raise CheckpointError(f"tensors {n0} and {n1} overlap")
    params = {k: v for k, v in tensors.items() if not k.startswith(("adam.m/", "adam.v/"))}
    optimizer = None
    if header.get("optimizer_step") is not None:
        m = {k[len(M_PREFIX):]: v for k, v in tensors.items() if k.startswith(M_PREFIX)}
        v = {k[len(V_PREFIX):]: v for k, v in tensors.items() if k.startswith(V_PREFIX)}
        optimizer = OptimizerState(int(header["optimizer_step"]), m, v)
    return Checkpoint(params, header.get("model_config"), header.get("train_config"),
                      optimizer, header.get("meta") or {})


def load_checkpoint(path: str | Path, dtype=np.float64) -> Checkpoint:
    return from_bytes(Path(path).read_bytes(), dtype)


def import_weights(path: str | Path, params: dict[str, np.ndarray], strict: bool = True) -> list[str]:
    """Copy tensors from a container file into ``params`` by name.

    Shapes must match exactly.  With ``strict`` every model parameter must
    be present in the file.  Returns the names that were not found.
    """
    ckpt = load_checkpoint(path)
    missing = []
    for name, target in params.items():
        src = ckpt.params.get(name)
        if src is None:
            missing.append(name)
            continue
        if src.shape != target.shape:
            raise CheckpointError(f"{name}: file shape {src.shape}, model shape {target.shape}")
        target[...] = src
    if strict and missing:
        raise CheckpointError(f"{len(missing)} parameters missing from {path}: {missing[:5]}...")
    return missing
