"""GVT1 tensor blobs and the named-tensor container.

Single tensor (all integers little-endian):

    magic "GVT1" | dtype byte (4=fp32, 8=fp64) | rank u64 | extents u64 each
    | raw element bytes

Container: a text header line ``gvtc1 <n_manifest> <n_tensors>``, the
manifest lines, then per tensor a line ``tensor <name> <nbytes>`` followed
by that many bytes of GVT1 blob.
"""
from __future__ import annotations

import io

import numpy as np

from ..errors import InputError

MAGIC = b"GVT1"
_DTYPES = {4: np.dtype("<f4"), 8: np.dtype("<f8")}


def write_tensor(f, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    if arr.dtype == np.float32:
        code, le = 4, arr.astype("<f4", copy=False)
    elif arr.dtype == np.float64:
        code, le = 8, arr.astype("<f8", copy=False)
    else:
        raise InputError(f"GVT1 stores fp32/fp64 tensors, got {arr.dtype}")
    f.write(MAGIC)
    f.write(bytes([code]))
    f.write(np.uint64(arr.ndim).tobytes())
    f.write(np.asarray(arr.shape, dtype="<u8").tobytes())
    f.write(np.ascontiguousarray(le).tobytes())


def read_tensor(f) -> np.ndarray:
    magic = f.read(4)
    if magic != MAGIC:
        raise InputError(f"bad GVT1 magic {magic!r}")
    code = f.read(1)[0]
    if code not in _DTYPES:
        raise InputError(f"bad GVT1 dtype byte {code}")
    rank = int(np.frombuffer(f.read(8), dtype="<u8")[0])
    shape = tuple(int(x) for x in np.frombuffer(f.read(8 * rank), dtype="<u8"))
    dtype = _DTYPES[code]
    count = 1
    for s in shape:
        count *= s
    data = np.frombuffer(f.read(count * dtype.itemsize), dtype=dtype, count=count)
    return np.ascontiguousarray(data.reshape(shape)).astype(dtype.newbyteorder("="))


def tensor_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    write_tensor(buf, arr)
    return buf.getvalue()


def save_container(path, manifest: list[str], tensors: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as f:
        f.write(f"gvtc1 {len(manifest)} {len(tensors)}\n".encode())
        for line in manifest:
            f.write(line.encode() + b"\n")
        for name, arr in tensors.items():
            blob = tensor_bytes(arr)
            f.write(f"tensor {name} {len(blob)}\n".encode())
            f.write(blob)


def load_container(path) -> tuple[list[str], dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        head = f.readline().decode().split()
        if len(head) != 3 or head[0] != "gvtc1":
            raise InputError(f"{path}: not a gvtc1 container")
        n_manifest, n_tensors = int(head[1]), int(head[2])
        manifest = [f.readline().decode().rstrip("\n") for _ in range(n_manifest)]
        tensors: dict[str, np.ndarray] = {}
        for _ in range(n_tensors):
            parts = f.readline().decode().split()
            if len(parts) != 3 or parts[0] != "tensor":
                raise InputError(f"{path}: corrupt tensor record")
            tensors[parts[1]] = read_tensor(io.BytesIO(f.read(int(parts[2]))))
    return manifest, tensors
