"""CSPK model files.

Layout (little-endian): magic ``CSPK``, u16 version, architecture descriptor
(u32 in_channels, u32 height, u32 width, u32 n_blocks, u32 kernels per block),
u32 n_speakers, u32 n_tensors, then per tensor: u8 ndim, u32 dims, float32 values.
Tensors follow the model's parameter declaration order, then the batch-norm
running statistics.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .model import SpeakerModel

MAGIC = b"CSPK"
VERSION = 1


class ModelFormatError(ValueError):
    pass


def tensor_order(model: SpeakerModel) -> list[str]:
    return list(model.params) + list(model.buffers)


def model_to_bytes(model: SpeakerModel) -> bytes:
    out = bytearray(MAGIC)
    out += struct.pack("<H", VERSION)
    c, h, w = model.input_shape
    out += struct.pack("<IIII", c, h, w, len(model.blocks))
    out += struct.pack(f"<{len(model.blocks)}I", *model.blocks)
    out += struct.pack("<I", model.n_speakers)
    names = tensor_order(model)
    out += struct.pack("<I", len(names))
    tensors = {**model.params, **model.buffers}
    for name in names:
        t = tensors[name]
        out += struct.pack("<B", t.ndim) + struct.pack(f"<{t.ndim}I", *t.shape)
        out += np.ascontiguousarray(t, dtype="<f4").tobytes()
    return bytes(out)


def save_model(model: SpeakerModel, path) -> None:
    Path(path).write_bytes(model_to_bytes(model))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise ModelFormatError("truncated model file")
        b = self.buf[self.pos:self.pos + n]
        self.pos += n
        return b

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_header(buf: bytes) -> dict:
    r = _Reader(buf)
    if r.take(4) != MAGIC:
        raise ModelFormatError("not a CSPK model file")
    (version,) = r.unpack("<H")
    if version != VERSION:
        raise ModelFormatError(f"unsupported CSPK version {version}")
    c, h, w, nb = r.unpack("<IIII")
    blocks = r.unpack(f"<{nb}I")
    (n_speakers,) = r.unpack("<I")
    return {"version": version, "input_shape": (c, h, w), "blocks": tuple(blocks),
            "n_speakers": n_speakers, "_offset": r.pos}


def model_from_bytes(buf: bytes) -> SpeakerModel:
    hdr = read_header(buf)
    try:
        model = SpeakerModel.create(hdr["n_speakers"], hdr["input_shape"], hdr["blocks"],
                                    dtype=np.float32)
    except ValueError as exc:
        raise ModelFormatError(f"inconsistent architecture header: {exc}") from exc
    r = _Reader(buf)
    r.pos = hdr["_offset"]
    (n_tensors,) = r.unpack("<I")
    names = tensor_order(model)
    if n_tensors != len(names):
        raise ModelFormatError(f"expected {len(names)} tensors, file has {n_tensors}")
    tensors = {**model.params, **model.buffers}
    for name in names:
        (ndim,) = r.unpack("<B")
        dims = r.unpack(f"<{ndim}I")
        if tuple(dims) != tensors[name].shape:
            raise ModelFormatError(f"shape mismatch for {name}: file {dims}, "
                                   f"architecture {tensors[name].shape}")
        n = int(np.prod(dims)) if ndim else 1
        tensors[name][...] = np.frombuffer(r.take(4 * n), dtype="<f4").reshape(dims)
    if r.pos != len(buf):
        raise ModelFormatError("trailing bytes after model tensors")
    return model.eval()


def load_model(path) -> SpeakerModel:
    return model_from_bytes(Path(path).read_bytes())
