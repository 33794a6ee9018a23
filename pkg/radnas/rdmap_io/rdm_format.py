"""
`.rdm` codec: 16-byte header (magic "RDM1", height u32 LE, width u32 LE,
reserved u32 = 0) followed by height*width float32 LE values, row-major.
"""

import struct
from pathlib import Path
from typing import Union

import numpy as np

from radnas.exceptions import RDFormatError
from radnas.rdmap_io.records import RDMap

MAGIC = b"RDM1"
HEADER = struct.Struct("<4sIII")


def write_rdm(path: Union[str, Path], rd: RDMap) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    height, width = rd.intensity.shape
    payload = np.ascontiguousarray(rd.intensity, dtype="<f4").tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, height, width, 0))
        fh.write(payload)
    return path


def read_rdm(path: Union[str, Path]) -> RDMap:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < HEADER.size:
        raise RDFormatError(f"{path}: truncated header ({len(data)} bytes)")
    magic, height, width, reserved = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise RDFormatError(f"{path}: bad magic {magic!r}")
    if reserved != 0:
        raise RDFormatError(f"{path}: reserved header field must be 0, got {reserved}")
    expected = HEADER.size + 4 * height * width
    if len(data) != expected:
        raise RDFormatError(f"{path}: expected {expected} bytes for {height}x{width}, found {len(data)}")
    intensity = np.frombuffer(data, dtype="<f4", offset=HEADER.size).reshape(height, width)
    return RDMap(intensity.astype(np.float32))
