"""Flat binary container for trained parameters.

Layout (all integers unsigned 64-bit, all reals float64, little-endian)::

    b"MDM1"
    M, d                               relation count, embedding width
    d, n, k, L                         hyper block
    3 x (len, utf-8)                   window, relation_sum, components
    count                              number of tensors
    per tensor: len, name, ndim, shape..., data (row-major)

The relation matrix is written first, then the encoder, then the rest in
``PARAM_KEYS`` order, so the first part of the file is readable by tools
that only need embeddings.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

from .embed import ENCODER_KEYS, RELATION_KEY
from .mdm import PARAM_KEYS, MdmConfig, MdmParams

MAGIC = b"MDM1"
_U64 = struct.Struct("<Q")
TENSOR_ORDER = (RELATION_KEY,) + ENCODER_KEYS + tuple(
    k for k in PARAM_KEYS if k != RELATION_KEY and k not in ENCODER_KEYS)


class CheckpointError(ValueError):
    pass


def _put_int(out, value: int) -> None:
    out.write(_U64.pack(int(value)))


def _put_str(out, text: str) -> None:
    raw = text.encode("utf-8")
    _put_int(out, len(raw))
    out.write(raw)


def _get_int(buf) -> int:
    raw = buf.read(_U64.size)
    if len(raw) != _U64.size:
        raise CheckpointError("truncated checkpoint")
    return _U64.unpack(raw)[0]


def _get_str(buf) -> str:
    n = _get_int(buf)
    raw = buf.read(n)
    if len(raw) != n:
        raise CheckpointError("truncated checkpoint")
    return raw.decode("utf-8")


def dumps(params: MdmParams) -> bytes:
    cfg = params.config
    out = io.BytesIO()
    out.write(MAGIC)
    for v in (cfg.n_relations, cfg.d, cfg.d, cfg.n, cfg.k, cfg.L):
        _put_int(out, v)
    for s in (cfg.window, cfg.relation_sum, cfg.components):
        _put_str(out, s)
    _put_int(out, len(TENSOR_ORDER))
    for name in TENSOR_ORDER:
        arr = np.ascontiguousarray(params.tensors[name], dtype="<f8")
        _put_str(out, name)
        _put_int(out, arr.ndim)
        for dim in arr.shape:
            _put_int(out, dim)
        out.write(arr.tobytes(order="C"))
    return out.getvalue()


def loads(data: bytes) -> MdmParams:
    buf = io.BytesIO(data)
    if buf.read(len(MAGIC)) != MAGIC:
        raise CheckpointError("not an MDM1 checkpoint")
    M, d, d2, n, k, L = (_get_int(buf) for _ in range(6))
    if d != d2:
        raise CheckpointError(f"width mismatch: {d} vs {d2}")
    window, relation_sum, components = (_get_str(buf) for _ in range(3))
    cfg = MdmConfig(d=d, n=n, k=k, L=L, n_relations=M, window=window,
                    relation_sum=relation_sum, components=components)
    tensors = {}
    for _ in range(_get_int(buf)):
        name = _get_str(buf)
        shape = tuple(_get_int(buf) for _ in range(_get_int(buf)))
        size = int(np.prod(shape, dtype=np.int64)) * 8
        raw = buf.read(size)
        if len(raw) != size:
            raise CheckpointError(f"truncated tensor {name}")
        tensors[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)
    missing = set(PARAM_KEYS) - set(tensors)
    if missing:
        raise CheckpointError(f"missing tensors: {sorted(missing)}")
    if buf.read(1):
        raise CheckpointError("trailing bytes after last tensor")
    return MdmParams(cfg, tensors)


def save(params: MdmParams, path) -> None:
    Path(path).write_bytes(dumps(params))


def load(path) -> MdmParams:
    return loads(Path(path).read_bytes())
