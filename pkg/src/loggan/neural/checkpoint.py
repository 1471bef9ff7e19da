"""Binary checkpoint container for networks plus their vocabulary.

Layout (all integers little-endian)::

    b"LOGF"  u32 version
    u8 len, mode                     tokenization mode ("word" / "char")
    u32 n_tokens, then per token: u16 len, utf-8 bytes
    u32 len, utf-8 JSON               {net name: {"kind": ..., "config": {...}}}
    u32 n_params, then per param:
        u16 len, utf-8 name           "<net>/<param>"
        u8 ndim, u32 * ndim shape
        float32 * prod(shape)
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

from loggan.corpus import RESERVED, TokenMode, Vocabulary
from loggan.neural.nets import DiscriminatorNet, GeneratorNet, MediatorNet, Module

MAGIC = b"LOGF"
VERSION = 1
_KINDS = {cls.kind: cls for cls in (GeneratorNet, MediatorNet, DiscriminatorNet)}


class CheckpointError(ValueError):
    pass


def save_checkpoint(path: str | Path, nets: dict[str, Module], vocab: Vocabulary) -> None:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    mode = vocab.mode.value.encode()
    buf.write(struct.pack("<B", len(mode)) + mode)
    buf.write(struct.pack("<I", len(vocab)))
    for tok in vocab.tokens:
        b = tok.encode("utf-8")
        buf.write(struct.pack("<H", len(b)) + b)
    meta = json.dumps({name: {"kind": net.kind, "config": net.config()} for name, net in nets.items()},
                      sort_keys=True).encode()
    buf.write(struct.pack("<I", len(meta)) + meta)
    records = [(f"{name}/{k}", v.data) for name in sorted(nets) for k, v in nets[name].params.items()]
    buf.write(struct.pack("<I", len(records)))
    for name, arr in records:
        b = name.encode()
        buf.write(struct.pack("<H", len(b)) + b)
        buf.write(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    tmp = Path(str(path) + ".tmp")
    tmp.write_bytes(buf.getvalue())
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> tuple[dict[str, Module], Vocabulary]:
    data = Path(path).read_bytes()
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise CheckpointError("not a LOGF checkpoint")
    version = r.unpack("<I")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    mode = TokenMode(r.take(r.unpack("<B")).decode())
    tokens = tuple(r.take(r.unpack("<H")).decode("utf-8") for _ in range(r.unpack("<I")))
    if tokens[:4] != RESERVED:
        raise CheckpointError("vocabulary block lacks reserved tokens")
    vocab = Vocabulary(tokens, mode)
    meta = json.loads(r.take(r.unpack("<I")).decode())
    nets: dict[str, Module] = {name: _KINDS[m["kind"]](**m["config"]) for name, m in meta.items()}
    states: dict[str, dict[str, np.ndarray]] = {name: {} for name in nets}
    for _ in range(r.unpack("<I")):
        full = r.take(r.unpack("<H")).decode()
        ndim = r.unpack("<B")
        shape = struct.unpack(f"<{ndim}I", r.take(4 * ndim))
        count = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(shape).astype(np.float32)
        net_name, _, pname = full.partition("/")
        states[net_name][pname] = arr
    for name, net in nets.items():
        net.load_state_dict(states[name])
    if r.pos != len(data):
        raise CheckpointError("trailing bytes in checkpoint")
    return nets, vocab


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError("truncated checkpoint")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str) -> int:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))[0]
