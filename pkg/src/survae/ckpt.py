"""Single-file checkpoints. The byte layout is documented in docs/FORMAT.md.

All integers are little-endian. A CRC32 trailer covers every preceding
byte, so truncation and bit flips are reported as corruption rather than
producing a partial flow.
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .flow import Flow, build_from_spec
from .layers import ConfigError
from .train import AdamState

MAGIC = b"SURVAE01"


class CheckpointError(ValueError):
    pass


class CorruptCheckpointError(CheckpointError):
    pass


@dataclass
class TrainerState:
    adam: Optional[AdamState] = None
    rng_state: bytes = b""
    iteration: int = 0
    extra: dict = field(default_factory=dict)


def _pack_entries(entries: dict) -> bytes:
    out = [struct.pack("<Q", len(entries))]
    for name, value in entries.items():
        arr = np.ascontiguousarray(value, dtype="<f8")
        raw = name.encode("utf-8")
        out.append(struct.pack("<I", len(raw)) + raw)
        out.append(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
        out.append(arr.tobytes())
    return b"".join(out)


def _encode(flow: Flow, state: TrainerState) -> bytes:
    desc = json.dumps(flow.descriptor(), sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<Q", len(desc)), desc]
    parts.append(_pack_entries({name: p.value for name, p in flow.named_parameters().items()}))
    if state.adam is None:
        parts.append(b"\x00")
    else:
        moments = {}
        for name in state.adam.m:
            moments["m/" + name] = state.adam.m[name]
            moments["v/" + name] = state.adam.v[name]
        parts.append(b"\x01" + struct.pack("<Q", state.adam.step) + _pack_entries(moments))
    parts.append(struct.pack("<Q", len(state.rng_state)) + bytes(state.rng_state))
    parts.append(struct.pack("<Q", state.iteration))
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def save(flow: Flow, trainer_state: Optional[TrainerState], path) -> None:
    data = _encode(flow, trainer_state or TrainerState())
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.buf):
            raise CorruptCheckpointError("checkpoint is truncated")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def entries(self) -> dict:
        (count,) = self.unpack("<Q")
        out = {}
        for _ in range(count):
            (nlen,) = self.unpack("<I")
            name = self.take(nlen).decode("utf-8")
            (ndim,) = self.unpack("<I")
            shape = self.unpack(f"<{ndim}Q") if ndim else ()
            size = int(np.prod(shape)) if ndim else 1
            out[name] = np.frombuffer(self.take(8 * size), dtype="<f8").reshape(shape).astype(np.float64)
        return out


def load(path) -> tuple:
    """Return (flow, trainer_state); raise CheckpointError on any mismatch."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < len(MAGIC) or buf[:len(MAGIC)] != MAGIC:
        if MAGIC.startswith(buf[:len(MAGIC)]):
            raise CorruptCheckpointError("checkpoint is truncated")
        raise CheckpointError("not a checkpoint or unsupported version (bad magic tag)")
    if len(buf) < len(MAGIC) + 4:
        raise CorruptCheckpointError("checkpoint is truncated")
    body, (crc,) = buf[:-4], struct.unpack("<I", buf[-4:])
    if zlib.crc32(body) != crc:
        raise CorruptCheckpointError("checksum mismatch: file is truncated or damaged")
    r = _Reader(body)
    r.take(len(MAGIC))
    (dlen,) = r.unpack("<Q")
    try:
        descriptor = json.loads(r.take(dlen).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise CorruptCheckpointError(f"descriptor is not valid JSON: {err}") from None
    params = r.entries()
    (has_opt,) = r.unpack("<B")
    adam = None
    if has_opt:
        (step,) = r.unpack("<Q")
        moments = r.entries()
        adam = AdamState(step=step)
        for key, value in moments.items():
            kind, name = key.split("/", 1)
            (adam.m if kind == "m" else adam.v)[name] = value
    (rlen,) = r.unpack("<Q")
    rng_state = r.take(rlen)
    (iteration,) = r.unpack("<Q")
    if r.pos != len(body):
        raise CorruptCheckpointError("trailing bytes after the iteration field")

    try:
        flow = build_from_spec(descriptor)
    except ConfigError as err:
        raise CheckpointError(f"descriptor rejected: {err}") from None
    named = flow.named_parameters()
    if set(named) != set(params):
        missing = sorted(set(named) - set(params))
        extra = sorted(set(params) - set(named))
        raise CheckpointError(f"parameter names differ from the descriptor (missing {missing}, unexpected {extra})")
    for name, p in named.items():
        if p.value.shape != params[name].shape:
            raise CheckpointError(f"shape mismatch for {name}: file {params[name].shape}, flow {p.value.shape}")
        p.value[...] = params[name]
    return flow, TrainerState(adam=adam, rng_state=bytes(rng_state), iteration=int(iteration))
