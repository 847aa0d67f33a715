"""Binary tensor file format (QTT1).

Layout, all little-endian:

    bytes 0-7    magic "QTTENSR1"
    byte  8      dtype code: 0 = float32, 1 = float64
    byte  9      rank r
    bytes 10-11  zero padding
    then         r extents as unsigned 64-bit integers
    then         row-major payload

Round-trips are bit-exact. Malformed files raise TensorFileError carrying the
byte offset of the first inconsistency.
"""

import struct

import numpy as np

from .errors import TensorFileError

MAGIC = b"QTTENSR1"

_DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODE_FOR = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


def write_tensor(path, array):
    """Write a float32/float64 numpy array (or .data of a Tensor) to path."""
    data = getattr(array, "data", array)
    arr = np.ascontiguousarray(data)
    if arr.dtype not in _CODE_FOR:
        raise TensorFileError(path, 8, f"unsupported dtype {arr.dtype}")
    if arr.ndim > 255:
        raise TensorFileError(path, 9, f"rank {arr.ndim} exceeds 255")
    code = _CODE_FOR[arr.dtype]
    le = arr.astype("<f4" if code == 0 else "<f8", copy=False)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<BBH", code, arr.ndim, 0))
        for extent in arr.shape:
            fh.write(struct.pack("<Q", extent))
        fh.write(le.tobytes(order="C"))


def read_tensor(path):
    """Read a QTT1 file back into a numpy array (native byte order)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MAGIC):
        raise TensorFileError(path, len(blob), "truncated before end of magic")
    if blob[:8] != MAGIC:
        raise TensorFileError(path, 0, f"bad magic {blob[:8]!r}")
    if len(blob) < 12:
        raise TensorFileError(path, len(blob), "truncated header")
    code, rank = blob[8], blob[9]
    if code not in _DTYPE_CODES:
        raise TensorFileError(path, 8, f"unknown dtype code {code}")
    if blob[10:12] != b"\x00\x00":
        raise TensorFileError(path, 10, "nonzero header padding")
    header_end = 12 + 8 * rank
    if len(blob) < header_end:
        raise TensorFileError(path, len(blob), "truncated extent list")
    shape = tuple(
        struct.unpack_from("<Q", blob, 12 + 8 * i)[0] for i in range(rank))
    dtype = _DTYPE_CODES[code]
    expected = int(np.prod(shape, dtype=object)) * dtype.itemsize if rank else dtype.itemsize
    got = len(blob) - header_end
    if got != expected:
        raise TensorFileError(
            path, header_end,
            f"payload of {got} bytes does not match extents {shape} "
            f"({expected} bytes expected)")
    arr = np.frombuffer(blob[header_end:], dtype=dtype).reshape(shape)
    return arr.astype(arr.dtype.newbyteorder("="), copy=True)
