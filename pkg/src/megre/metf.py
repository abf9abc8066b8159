"""METF v1 tensor file format.

Little-endian layout:

    offset 0   magic bytes 4D 45 54 46 ("METF")
    offset 4   u32 version (= 1)
    offset 8   u32 dtype code (1 = real64, 2 = complex128 interleaved re,im)
    offset 12  u32 ndim
    offset 16  ndim x u64 extents, row-major
    then       raw payload, no padding, no compression

Round trips are bit-exact.  A directory of METF files plus a
``manifest.json`` serves as the archive format for network checkpoints.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

MAGIC = b"METF"
VERSION = 1

_DTYPE_CODES = {1: np.float64, 2: np.complex128}
_CODE_OF_DTYPE = {np.dtype(np.float64): 1, np.dtype(np.complex128): 2}


class MetfError(ValueError):
    """Malformed METF data; ``offset`` is the byte position of the problem."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def write_tensor(x, path):
    """Write a real64 or complex128 array to ``path`` in METF v1 format."""
    x = np.asarray(x)
    if x.dtype not in _CODE_OF_DTYPE:
        if np.iscomplexobj(x):
            x = x.astype(np.complex128)
        else:
            x = np.asarray(x, dtype=np.float64)
    code = _CODE_OF_DTYPE[x.dtype]
    header = MAGIC + struct.pack("<III", VERSION, code, x.ndim)
    header += struct.pack(f"<{x.ndim}Q", *x.shape)
    payload = np.ascontiguousarray(x).astype(x.dtype.newbyteorder("<")).tobytes()
    _atomic_write_bytes(path, header + payload)


def read_tensor(path):
    """Read a METF v1 file, returning a float64 or complex128 array."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16:
        raise MetfError("file shorter than fixed header", len(blob))
    if blob[:4] != MAGIC:
        raise MetfError(f"bad magic {blob[:4]!r}, expected {MAGIC!r}", 0)
    version, code, ndim = struct.unpack("<III", blob[4:16])
    if version != VERSION:
        raise MetfError(f"unsupported version {version}", 4)
    if code not in _DTYPE_CODES:
        raise MetfError(f"unknown dtype code {code}", 8)
    ext_end = 16 + 8 * ndim
    if len(blob) < ext_end:
        raise MetfError("truncated extents block", len(blob))
    shape = struct.unpack(f"<{ndim}Q", blob[16:ext_end])
    if any(s < 1 for s in shape):
        raise MetfError(f"extent < 1 in shape {shape}", 16)
    dtype = np.dtype(_DTYPE_CODES[code]).newbyteorder("<")
    count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
    need = count * dtype.itemsize
    if len(blob) - ext_end != need:
        raise MetfError(
            f"payload holds {(len(blob) - ext_end) // dtype.itemsize} elements, "
            f"header declares {count}",
            ext_end,
        )
    data = np.frombuffer(blob, dtype=dtype, count=count, offset=ext_end)
    return data.astype(_DTYPE_CODES[code]).reshape(shape)


def write_archive(tensors, meta, dirpath):
    """Write named tensors plus a JSON manifest into directory ``dirpath``.

    ``meta`` is an arbitrary JSON-serializable dict stored alongside the
    ordered layer list, so a checkpoint is self-describing.
    """
    os.makedirs(dirpath, exist_ok=True)
    manifest = {
        "meta": meta,
        "tensors": [
            {"name": k, "file": f"{k}.metf", "shape": list(np.asarray(v).shape)}
            for k, v in tensors.items()
        ],
    }
    for k, v in tensors.items():
        write_tensor(v, os.path.join(dirpath, f"{k}.metf"))
    _atomic_write_bytes(
        os.path.join(dirpath, "manifest.json"),
        json.dumps(manifest, indent=1).encode(),
    )


def read_archive(dirpath):
    """Read an archive directory; returns (tensors dict, meta dict)."""
    with open(os.path.join(dirpath, "manifest.json"), "rb") as fh:
        manifest = json.loads(fh.read())
    tensors = {}
    for entry in manifest["tensors"]:
        t = read_tensor(os.path.join(dirpath, entry["file"]))
        if list(t.shape) != entry["shape"]:
            raise MetfError(
                f"tensor {entry['name']} shape {t.shape} != manifest {entry['shape']}", 0
            )
        tensors[entry["name"]] = t
    return tensors, manifest["meta"]


def _atomic_write_bytes(path, blob):
    tmp = f"{path}.tmp-{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)
