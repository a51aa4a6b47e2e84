"""Read and write uint8 tensor files.

Two containers are supported:

* HDF5 with a single dataset named ``array`` (``.h5``/``.hdf5``), optionally
  chunked and gzip-compressed.
* A flat binary fallback: magic ``T4CT``, one byte rank, ``rank`` little-endian
  u64 dimensions, then the raw row-major payload.

Readers sniff the magic bytes, so the extension only matters when writing.
"""

import json
import struct
from pathlib import Path

import numpy as np

from ._validation import InvalidInputError

DATASET = "array"
MAGIC = b"T4CT"
HDF5_MAGIC = b"\x89HDF\r\n\x1a\n"
HDF5_SUFFIXES = {".h5", ".hdf5"}


class TensorFileError(InvalidInputError):
    pass


class MissingDatasetError(TensorFileError):
    pass


class DTypeMismatchError(TensorFileError):
    pass


class TruncatedPayloadError(TensorFileError):
    pass


class UnknownFormatError(TensorFileError):
    pass


def _format_for(path, fmt):
    if fmt is not None:
        if fmt not in ("hdf5", "t4ct"):
            raise InvalidInputError(f"unknown tensor format {fmt!r}")
        return fmt
    return "hdf5" if Path(path).suffix.lower() in HDF5_SUFFIXES else "t4ct"


def write_tensor(path, tensor, compress=False, fmt=None):
    """Write a uint8 tensor. ``compress`` only applies to HDF5."""
    tensor = np.asarray(tensor)
    if tensor.dtype != np.uint8:
        raise DTypeMismatchError(f"tensors must be uint8, got {tensor.dtype}")
    fmt = _format_for(path, fmt)
    if fmt == "hdf5":
        import h5py

        with h5py.File(path, "w") as f:
            if compress and tensor.size:
                f.create_dataset(DATASET, data=tensor, chunks=True, compression="gzip", compression_opts=1)
            else:
                f.create_dataset(DATASET, data=tensor)
        return
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<B", tensor.ndim))
        f.write(struct.pack(f"<{tensor.ndim}Q", *tensor.shape))
        f.write(np.ascontiguousarray(tensor).tobytes())


def _read_t4ct(path):
    with open(path, "rb") as f:
        head = f.read(5)
        if len(head) < 5:
            raise TruncatedPayloadError(f"{path}: truncated header")
        rank = head[4]
        dims_raw = f.read(8 * rank)
        if len(dims_raw) < 8 * rank:
            raise TruncatedPayloadError(f"{path}: truncated shape header")
        shape = struct.unpack(f"<{rank}Q", dims_raw)
        n = int(np.prod(shape, dtype=np.int64))
        payload = f.read(n)
        if len(payload) < n:
            raise TruncatedPayloadError(f"{path}: payload has {len(payload)} of {n} bytes")
        if f.read(1):
            raise TensorFileError(f"{path}: trailing bytes after payload")
    return np.frombuffer(payload, dtype=np.uint8).reshape(shape).copy()


def read_tensor(path):
    with open(path, "rb") as f:
        magic = f.read(8)
    if magic[:4] == MAGIC:
        return _read_t4ct(path)
    if magic == HDF5_MAGIC:
        import h5py

        with h5py.File(path, "r") as f:
            if DATASET not in f:
                raise MissingDatasetError(f"{path}: no dataset named {DATASET!r}")
            ds = f[DATASET]
            if ds.dtype != np.uint8:
                raise DTypeMismatchError(f"{path}: dataset dtype is {ds.dtype}, expected uint8")
            return ds[()]
    raise UnknownFormatError(f"{path}: not a recognised tensor file")


def load_manifest(path):
    """Load ``{"city": str, "days": {"YYYY-MM-DD": path}}``; relative paths resolve against the manifest."""
    path = Path(path)
    with open(path) as f:
        doc = json.load(f)
    if "days" not in doc:
        raise InvalidInputError(f"{path}: manifest has no 'days' mapping")
    days = {}
    for date, p in sorted(doc["days"].items()):
        p = Path(p)
        days[date] = p if p.is_absolute() else path.parent / p
    return doc.get("city", ""), days


def write_manifest(path, city, days):
    with open(path, "w") as f:
        json.dump({"city": city, "days": {d: str(p) for d, p in sorted(days.items())}}, f, indent=2)
