"""Versioned binary checkpoints.

Layout (all integers little-endian unsigned):

    magic   4 bytes  b"AMSA"
    version u32      format version, currently 1
    epoch   u64
    step    u64
    count   u32      number of named tensors
    entry*  count times:
        name_len u32
        name     UTF-8 bytes
        rank     u32
        dims     u32 * rank
        payload  float64 little-endian, prod(dims) values

Entries keep insertion order, so save -> load -> save is byte-identical.
"""

import struct

import numpy as np

from amsaunet.errors import CheckpointError

MAGIC = b"AMSA"
VERSION = 1
_MAX_NAME = 4096
_MAX_RANK = 8


def save_checkpoint(path, epoch, step, arrays):
    """Write named float64 arrays plus training counters."""
    parts = [MAGIC, struct.pack("<I", VERSION),
             struct.pack("<QQ", int(epoch), int(step)),
             struct.pack("<I", len(arrays))]
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(np.asarray(arr, dtype=np.float64))
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.astype("<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_checkpoint(path):
    """Read (epoch, step, {name: array}); validates structure throughout."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc

    def need(n, what):
        nonlocal pos
        if pos + n > len(blob):
            raise CheckpointError(
                f"{path}: truncated while reading {what} at offset {pos}")
        piece = blob[pos:pos + n]
        pos += n
        return piece

    pos = 0
    if need(4, "magic") != MAGIC:
        raise CheckpointError(f"{path}: bad magic (not an AMSA checkpoint)")
    (version,) = struct.unpack("<I", need(4, "version"))
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    epoch, step = struct.unpack("<QQ", need(16, "counters"))
    (count,) = struct.unpack("<I", need(4, "tensor count"))
    arrays = {}
    for i in range(count):
        (name_len,) = struct.unpack("<I", need(4, f"name length #{i}"))
        if name_len == 0 or name_len > _MAX_NAME:
            raise CheckpointError(f"{path}: implausible name length {name_len}")
        name = need(name_len, f"name #{i}").decode("utf-8")
        (rank,) = struct.unpack("<I", need(4, f"rank of {name}"))
        if rank > _MAX_RANK:
            raise CheckpointError(f"{path}: implausible rank {rank} for {name}")
        dims = struct.unpack(f"<{rank}I", need(4 * rank, f"dims of {name}"))
        total = 1
        for d in dims:
            if d == 0:
                raise CheckpointError(f"{path}: zero dimension in {name}")
            total *= d
        payload = need(8 * total, f"payload of {name}")
        arrays[name] = np.frombuffer(payload, dtype="<f8").reshape(dims).copy()
    if pos != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - pos} trailing bytes")
    return int(epoch), int(step), arrays
