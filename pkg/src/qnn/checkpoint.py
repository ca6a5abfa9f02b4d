"""Binary model checkpoints.

Container layout (all integers little-endian):

    magic "QNN1"
    digest length u32 | config digest bytes (UTF-8 hex)
    parameter count u32
    per parameter: name length u32 | name UTF-8 | dtype tag u8
                   | rank u32 | dims u32 each | raw little-endian data

The digest ties a checkpoint to the exact configuration that produced it;
loading refuses on mismatch so weights are never silently poured into a
different architecture. Round-trips are bit-exact.
"""

from __future__ import annotations

import struct

import numpy as np

from qnn.errors import ContractError, FormatError

MAGIC = b"QNN1"
_DTYPE_TAGS = {np.dtype("<f4"): 0, np.dtype("<f8"): 1}
_TAG_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def save_checkpoint(path: str, named_params, digest: str) -> None:
    params = list(named_params)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        raw_digest = digest.encode("utf-8")
        fh.write(struct.pack("<I", len(raw_digest)))
        fh.write(raw_digest)
        fh.write(struct.pack("<I", len(params)))
        for name, tensor in params:
            data = np.ascontiguousarray(tensor.data)
            dtype = data.dtype.newbyteorder("<")
            if np.dtype(dtype) not in _DTYPE_TAGS:
                raise ContractError(f"parameter '{name}' has unsupported dtype {data.dtype}")
            raw_name = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw_name)))
            fh.write(raw_name)
            fh.write(struct.pack("<B", _DTYPE_TAGS[np.dtype(dtype)]))
            fh.write(struct.pack("<I", data.ndim))
            for dim in data.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(data.astype(dtype, copy=False).tobytes())


class _Reader:
    def __init__(self, fh):
        self.fh = fh
        self.offset = 0

    def take(self, n: int, what: str) -> bytes:
        chunk = self.fh.read(n)
        if len(chunk) != n:
            raise FormatError(
                f"truncated checkpoint: wanted {n} bytes for {what} at byte offset {self.offset}"
            )
        self.offset += n
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]


def load_checkpoint(path: str):
    """Returns (digest, dict of name -> ndarray)."""
    with open(path, "rb") as fh:
        reader = _Reader(fh)
        magic = reader.take(4, "magic")
        if magic != MAGIC:
            raise FormatError(f"bad checkpoint magic {magic!r} at byte offset 0 (expected {MAGIC!r})")
        digest = reader.take(reader.u32("digest length"), "digest").decode("utf-8")
        count = reader.u32("parameter count")
        params = {}
        for index in range(count):
            name = reader.take(reader.u32(f"name length of parameter {index}"), "name").decode("utf-8")
            tag = reader.take(1, f"dtype tag of '{name}'")[0]
            if tag not in _TAG_DTYPES:
                raise FormatError(f"unknown dtype tag {tag} for parameter '{name}'")
            rank = reader.u32(f"rank of '{name}'")
            shape = tuple(reader.u32(f"dim {d} of '{name}'") for d in range(rank))
            dtype = _TAG_DTYPES[tag]
            n_items = int(np.prod(shape, dtype=np.int64)) if shape else 1
            raw = reader.take(n_items * dtype.itemsize, f"data of '{name}'")
            params[name] = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
        return digest, params


def load_into_model(path: str, model, expected_digest: str) -> None:
    """Copy checkpointed buffers into a freshly built model, verifying the
    config digest and every name/shape/dtype."""
    digest, params = load_checkpoint(path)
    if digest != expected_digest:
        raise ContractError(
            f"checkpoint digest {digest} does not match model config digest {expected_digest}"
        )
    model_params = dict(model.named_parameters())
    missing = sorted(set(model_params) - set(params))
    extra = sorted(set(params) - set(model_params))
    if missing or extra:
        raise ContractError(f"checkpoint parameter mismatch: missing {missing}, unexpected {extra}")
    for name, tensor in model_params.items():
        stored = params[name]
        if stored.shape != tensor.data.shape or stored.dtype != tensor.data.dtype:
            raise ContractError(
                f"parameter '{name}': checkpoint has {stored.dtype}{stored.shape}, "
                f"model has {tensor.data.dtype}{tensor.data.shape}"
            )
        tensor.data[...] = stored
