"""Bit-exact binary checkpoints.

Layout (all integers and floats little-endian)::

    offset  size  field
    0       8     magic b"RSPHCKPT"
    8       4     uint32 format version (1)
    12      1     uint8 arithmetic: 0 = fixpa, 1 = flopa
    13      1     uint8 scheme: 0 = sym, 1 = std
    14      2     uint16 flags: bit 0 = velocities currently reversed
    16      8     uint64 particle count n
    24      8     uint64 step (since start or last reversal)
    32      8     uint64 total steps
    40      8     float64 time
    48      8     float64 dissipated energy
    56      32    SHA-256 of the canonical configuration text
    88      ...   payload
    end-4   4     uint32 CRC-32 (zlib) of every preceding byte

Payload, in order: positions ``(n, 2)`` and velocities ``(n, 2)`` as int64
raws (fixpa) or float64 (flopa), row-major; density ``n`` float64; mass
``n`` float64; kind ``n`` int8.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"RSPHCKPT"
VERSION = 1
_HEADER = struct.Struct("<8sIBBHQQQdd32s")
_MODES = ("fixpa", "flopa")
_SCHEMES = ("sym", "std")


class CheckpointError(ValueError):
    pass


class ChecksumError(CheckpointError):
    pass


class TruncatedError(CheckpointError):
    pass


class ModeMismatchError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    arithmetic: str
    scheme: str
    r: np.ndarray
    u: np.ndarray
    rho: np.ndarray
    mass: np.ndarray
    kind: np.ndarray
    step: int = 0
    total_steps: int = 0
    time: float = 0.0
    dissipated: float = 0.0
    reversed: bool = False
    config_hash: bytes = b"\0" * 32

    @property
    def n(self) -> int:
        return len(self.mass)

    def positions(self) -> np.ndarray:
        from .fixedpoint import decode_array
        return decode_array(self.r) if self.arithmetic == "fixpa" else self.r

    def velocities(self) -> np.ndarray:
        from .fixedpoint import decode_array
        return decode_array(self.u) if self.arithmetic == "fixpa" else self.u


def from_state(state, physics, scheme: str, config_hash: bytes = b"\0" * 32) -> Checkpoint:
    return Checkpoint(state.arithmetic, scheme, state.r, state.u, state.rho, physics.mass,
                      physics.kind, state.step, state.total_steps, state.time, state.dissipated,
                      state.reversed, config_hash)


def to_bytes(c: Checkpoint) -> bytes:
    if c.arithmetic not in _MODES or c.scheme not in _SCHEMES:
        raise CheckpointError("unknown arithmetic or scheme")
    if len(c.config_hash) != 32:
        raise CheckpointError("config hash must be 32 bytes")
    n = c.n
    vec = "<i8" if c.arithmetic == "fixpa" else "<f8"
    parts = [_HEADER.pack(MAGIC, VERSION, _MODES.index(c.arithmetic), _SCHEMES.index(c.scheme),
                          1 if c.reversed else 0, n, c.step, c.total_steps, float(c.time),
                          float(c.dissipated), bytes(c.config_hash))]
    for arr, dt, shape in ((c.r, vec, (n, 2)), (c.u, vec, (n, 2)), (c.rho, "<f8", (n,)),
                           (c.mass, "<f8", (n,)), (c.kind, "<i1", (n,))):
        a = np.asarray(arr)
        if a.shape != shape:
            raise CheckpointError(f"array of shape {a.shape}, expected {shape}")
        if a.dtype.kind != np.dtype(dt).kind:
            raise CheckpointError(f"array of dtype {a.dtype}, expected {np.dtype(dt)}")
        parts.append(np.ascontiguousarray(a, dtype=dt).tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def from_bytes(data: bytes, expected_mode: str | None = None,
               expected_hash: bytes | None = None) -> Checkpoint:
    if len(data) < _HEADER.size + 4:
        raise TruncatedError(f"checkpoint is {len(data)} bytes, shorter than its header")
    magic, version, mode, scheme, flags, n, step, total, t, diss, chash = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    if mode >= len(_MODES) or scheme >= len(_SCHEMES):
        raise CheckpointError("corrupt header (mode or scheme out of range)")
    need = _HEADER.size + n * (2 * 8 + 2 * 8 + 8 + 8 + 1) + 4
    if len(data) < need:
        raise TruncatedError(f"checkpoint truncated: {len(data)} of {need} bytes")
    if len(data) > need:
        raise CheckpointError(f"trailing bytes after checkpoint ({len(data) - need})")
    (crc,) = struct.unpack_from("<I", data, need - 4)
    if zlib.crc32(data[: need - 4]) != crc:
        raise ChecksumError("checkpoint checksum mismatch")
    arith = _MODES[mode]
    if expected_mode is not None and arith != expected_mode:
        raise ModeMismatchError(f"checkpoint holds {arith} state, {expected_mode} requested")
    if expected_hash is not None and chash != expected_hash:
        raise CheckpointError("checkpoint was written by a different configuration")
    vec = "<i8" if arith == "fixpa" else "<f8"
    off = _HEADER.size

    def take(dt, count, shape):
        nonlocal off
        a = np.frombuffer(data, dtype=dt, count=count, offset=off).reshape(shape)
        off += a.nbytes
        return a.astype(np.dtype(dt).newbyteorder("="), copy=True)

    r = take(vec, 2 * n, (n, 2))
    u = take(vec, 2 * n, (n, 2))
    rho = take("<f8", n, (n,))
    mass = take("<f8", n, (n,))
    kind = take("<i1", n, (n,))
    return Checkpoint(arith, _SCHEMES[scheme], r, u, rho, mass, kind, int(step), int(total),
                      float(t), float(diss), bool(flags & 1), bytes(chash))


def write_checkpoint(path, c: Checkpoint) -> None:
    Path(path).write_bytes(to_bytes(c))


def read_checkpoint(path, expected_mode: str | None = None,
                    expected_hash: bytes | None = None) -> Checkpoint:
    return from_bytes(Path(path).read_bytes(), expected_mode, expected_hash)
