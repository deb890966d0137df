"""Single-file checkpoints: magic, JSON header, then float64 parameter blobs.

Layout::

    b"SECK" | uint32 LE header length | header JSON (utf-8) | blobs

The header lists every parameter name with its shape in storage order; each
blob is the row-major little-endian float64 encoding of one parameter.
"""

import json
import os
import struct
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np

from model.params import ModelParams
from utils.logger_config import get_logger

logger = get_logger("model")

MAGIC = b"SECK"
FORMAT_VERSION = 1
BLOB_DTYPE = np.dtype("<f8")

PathLike = Union[str, Path]


class CheckpointFormatError(ValueError):
    """Raised when a checkpoint file cannot be decoded."""


def save_checkpoint(params: ModelParams, path: PathLike) -> Path:
    """Write ``params`` atomically to ``path``."""
    header: Dict[str, Any] = {
        "version": FORMAT_VERSION,
        "d": params.d,
        "H": params.hidden,
        "heads": params.heads,
        "t_agnostic": True,
        "seed": params.seed,
        "role": params.role,
        "mu1": params.mu1,
        "mu2": params.mu2,
        "params": [{"name": n, "shape": list(a.shape)} for n, a in params.arrays.items()],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    chunks = [MAGIC, struct.pack("<I", len(header_bytes)), header_bytes]
    chunks.extend(np.ascontiguousarray(a, dtype=BLOB_DTYPE).tobytes() for a in params.arrays.values())

    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp = target.with_name(target.name + ".tmp")
    tmp.write_bytes(b"".join(chunks))
    os.replace(tmp, target)
    logger.info(f"💾 Saved {params.role} checkpoint ({params.num_parameters} values) to {target}")
    return target


def load_checkpoint(path: PathLike) -> ModelParams:
    """Read a checkpoint written by ``save_checkpoint``.

    Raises:
        CheckpointFormatError: On bad magic, truncated data, or an inconsistent header
    """
    source = Path(path)
    raw = source.read_bytes()
    if raw[:4] != MAGIC:
        raise CheckpointFormatError(f"{source}: bad magic at offset 0, not a checkpoint file")
    if len(raw) < 8:
        raise CheckpointFormatError(f"{source}: unexpected end of data at offset {len(raw)}")
    (header_len,) = struct.unpack("<I", raw[4:8])
    if len(raw) < 8 + header_len:
        raise CheckpointFormatError(f"{source}: unexpected end of data at offset {len(raw)} in header")
    try:
        header = json.loads(raw[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"{source}: unreadable header at offset 8: {exc}")

    offset = 8 + header_len
    arrays: Dict[str, np.ndarray] = {}
    try:
        entries = header["params"]
        for entry in entries:
            shape = tuple(int(s) for s in entry["shape"])
            nbytes = int(np.prod(shape, dtype=np.int64)) * BLOB_DTYPE.itemsize
            if offset + nbytes > len(raw):
                raise CheckpointFormatError(
                    f"{source}: unexpected end of data at offset {len(raw)} reading {entry['name']}"
                )
            arrays[entry["name"]] = (
                np.frombuffer(raw, dtype=BLOB_DTYPE, count=nbytes // 8, offset=offset)
                .astype(np.float64)
                .reshape(shape)
            )
            offset += nbytes
        if offset != len(raw):
            raise CheckpointFormatError(f"{source}: trailing data at offset {offset}")
        params = ModelParams(
            d=int(header["d"]),
            hidden=int(header["H"]),
            heads=int(header["heads"]),
            arrays=arrays,
            mu1=float(header.get("mu1", 1.0)),
            mu2=float(header.get("mu2", 1.0)),
            seed=header.get("seed"),
            role=str(header.get("role", "baseline")),
        )
    except CheckpointFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointFormatError(f"{source}: inconsistent header: {exc}")
    logger.info(f"📂 Loaded {params.role} checkpoint from {source}")
    return params
