"""Single-file binary checkpoint archive.

Layout (all header integers little-endian)::

    magic        8 bytes   b"FANUCKPT"
    version      u32       1
    endianness   1 byte    b"<" (payloads little-endian) or b">"
    meta_len     u32
    meta         meta_len bytes of UTF-8 JSON (config echo and run state)
    n_tensors    u32
    repeated n_tensors times:
        name_len u16, name (UTF-8)
        dtype    u8        0 = float32, 1 = float64
        ndim     u8
        dims     ndim x u32
        payload  prod(dims) * itemsize bytes, C order
"""

from __future__ import annotations

import json
import struct
import sys
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

MAGIC = b"FANUCKPT"
VERSION = 1
_DTYPES = {0: np.float32, 1: np.float64}
_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, meta: dict, tensors: Dict[str, np.ndarray]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    endian = b"<" if sys.byteorder == "little" else b">"
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    chunks = [MAGIC, struct.pack("<I", VERSION), endian, struct.pack("<I", len(meta_bytes)), meta_bytes]
    chunks.append(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr)
        if arr.dtype not in _CODES:
            raise CheckpointError(f"{name}: unsupported dtype {arr.dtype}")
        nb = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(nb)) + nb)
        chunks.append(struct.pack("<BB", _CODES[arr.dtype], arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes(order="C"))
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(b"".join(chunks))
    tmp.replace(path)


def load_checkpoint(path) -> Tuple[dict, Dict[str, np.ndarray]]:
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    if buf[:8] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint (bad magic)")
    try:
        (version,) = struct.unpack_from("<I", buf, 8)
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        endian = buf[12:13].decode()
        (meta_len,) = struct.unpack_from("<I", buf, 13)
        off = 17
        meta = json.loads(buf[off : off + meta_len].decode("utf-8"))
        off += meta_len
        (n,) = struct.unpack_from("<I", buf, off)
        off += 4
        tensors = {}
        for _ in range(n):
            (name_len,) = struct.unpack_from("<H", buf, off)
            off += 2
            name = buf[off : off + name_len].decode("utf-8")
            off += name_len
            code, ndim = struct.unpack_from("<BB", buf, off)
            off += 2
            dims = struct.unpack_from(f"<{ndim}I", buf, off)
            off += 4 * ndim
            dt = np.dtype(_DTYPES[code]).newbyteorder(endian)
            count = int(np.prod(dims)) if ndim else 1
            arr = np.frombuffer(buf, dtype=dt, count=count, offset=off).reshape(dims)
            off += count * dt.itemsize
            tensors[name] = arr.astype(arr.dtype.newbyteorder("="))
    except (struct.error, KeyError, ValueError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: {exc}") from None
    return meta, tensors
