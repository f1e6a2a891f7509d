"""Named-array checkpoint container.

Layout (all integers little-endian):
  magic 'FNTC' | version u32 | record count u32 | records...
  record: name_len u16 | name utf-8 | ndim u8 | dims u32 each | payload f64

Loading parses the whole file into a fresh dict before returning, so a
truncated or corrupt file never yields partial state.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import CheckpointError

MAGIC = b"FNTC"
VERSION = 1


def save_params(path, params: dict[str, np.ndarray]) -> None:
    chunks = [MAGIC, struct.pack("<II", VERSION, len(params))]
    for name, arr in params.items():
        # np.ascontiguousarray would promote 0-d arrays to shape (1,);
        # asarray keeps scalar records scalar and tobytes handles layout.
        arr = np.asarray(arr, dtype=np.float64)
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b"")
        chunks.append(arr.astype("<f8").tobytes())
    with open(path, "wb") as f:
        f.write(b"".join(chunks))


def load_params(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        data = f.read()
    pos = 0

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise CheckpointError(f"checkpoint truncated while reading {what} at byte {pos}")
        out = data[pos : pos + n]
        pos += n
        return out

    if take(4, "magic") != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    (version,) = struct.unpack("<I", take(4, "version"))
    if version != VERSION:
        raise CheckpointError(f"checkpoint version {version} not supported (want {VERSION})")
    (count,) = struct.unpack("<I", take(4, "record count"))
    params: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2, "name length"))
        name = take(name_len, "name").decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1, "ndim"))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim, "shape")) if ndim else ()
        n_items = 1
        for s in shape:
            n_items *= s
        payload = take(8 * n_items, f"payload of {name!r}")
        params[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
    if pos != len(data):
        raise CheckpointError(f"trailing bytes after last record at byte {pos}")
    return params
