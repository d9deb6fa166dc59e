"""
Tensor container file.

Layout::

    <count>\\n
    <name> <dtype> <d0> <d1> ...\\n
    <row-major little-endian payload>
    ... repeated <count> times

``dtype`` is ``f64`` or ``f32``. The file must end exactly after the last
payload; anything else is rejected as corrupt.
"""

import logging
from pathlib import Path
from typing import BinaryIO, Dict, Union

import numpy as np

from app.core.exceptions import CheckpointError

logger = logging.getLogger(__name__)

DTYPES = {"f64": np.dtype("<f8"), "f32": np.dtype("<f4")}


def write_tensors(path: Union[str, Path], tensors: Dict[str, np.ndarray], dtype: str = "f64") -> None:
    if dtype not in DTYPES:
        raise CheckpointError(f"Unsupported checkpoint dtype: {dtype}")
    target = DTYPES[dtype]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(f"{len(tensors)}\n".encode("ascii"))
        for name, value in tensors.items():
            if not name or any(ch.isspace() for ch in name):
                raise CheckpointError(f"Tensor name may not be empty or contain whitespace: {name!r}")
            array = np.ascontiguousarray(np.asarray(value), dtype=target)
            dims = " ".join(str(d) for d in array.shape)
            header = f"{name} {dtype} {dims}".rstrip()
            fh.write(f"{header}\n".encode("ascii"))
            fh.write(array.tobytes(order="C"))
    logger.debug(f"Wrote {len(tensors)} tensors to {path}")


def _read_line(fh: BinaryIO, path: Path) -> str:
    line = fh.readline()
    if not line.endswith(b"\n"):
        raise CheckpointError(f"{path}: truncated header")
    try:
        return line[:-1].decode("ascii")
    except UnicodeDecodeError:
        raise CheckpointError(f"{path}: header is not ASCII")


def read_tensors(path: Union[str, Path]) -> Dict[str, np.ndarray]:
    """Read a container; arrays keep the stored precision (f32 or f64)."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"Checkpoint file not found: {path}")
    out: Dict[str, np.ndarray] = {}
    with open(path, "rb") as fh:
        first = _read_line(fh, path)
        try:
            count = int(first)
        except ValueError:
            raise CheckpointError(f"{path}: bad entry count {first!r}")
        if count < 0:
            raise CheckpointError(f"{path}: negative entry count")
        for _ in range(count):
            fields = _read_line(fh, path).split(" ")
            if len(fields) < 2 or fields[1] not in DTYPES:
                raise CheckpointError(f"{path}: malformed entry header {' '.join(fields)!r}")
            name, dtype = fields[0], DTYPES[fields[1]]
            try:
                shape = tuple(int(d) for d in fields[2:])
            except ValueError:
                raise CheckpointError(f"{path}: bad shape in header for {name}")
            if any(d <= 0 for d in shape):
                raise CheckpointError(f"{path}: non-positive dimension for {name}")
            if name in out:
                raise CheckpointError(f"{path}: duplicate entry {name}")
            nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
            payload = fh.read(nbytes)
            if len(payload) != nbytes:
                raise CheckpointError(f"{path}: payload of {name} truncated ({len(payload)}/{nbytes} bytes)")
            out[name] = np.frombuffer(payload, dtype=dtype).reshape(shape).copy()
        if fh.read(1):
            raise CheckpointError(f"{path}: trailing bytes after {count} entries")
    return out
