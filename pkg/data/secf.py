"""SECF on-disk format: a JSON manifest plus one float32 blob per video.

Layout of a dataset directory::

    manifest.json
    <video_id>.bin   little-endian float32, object features (T*n*d, row-major
                     frame -> object -> dim) followed by context features (T*d)
"""

import json
import os
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

import numpy as np

from data.dataset import Dataset, FeatureSequence, VideoLabel
from utils.logger_config import get_logger

logger = get_logger("data")

MANIFEST_NAME = "manifest.json"
FORMAT_TAG = "SECF"
FORMAT_VERSION = 1
BLOB_DTYPE = np.dtype("<f4")

PathLike = Union[str, Path]


class DatasetFormatError(ValueError):
    """Raised when an SECF directory is malformed or inconsistent."""


def save_dataset(ds: Dataset, path: PathLike) -> Path:
    """Write ``ds`` as an SECF directory.

    Args:
        ds: Dataset to store
        path: Target directory, created if missing

    Returns:
        Path of the written manifest
    """
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    entries: List[Dict[str, Any]] = []
    for seq, label in ds:
        blob_file = f"{seq.video_id}.bin"
        payload = np.concatenate(
            [seq.obj_feats.reshape(-1), seq.ctx_feats.reshape(-1)]
        ).astype(BLOB_DTYPE)
        (root / blob_file).write_bytes(payload.tobytes())
        entries.append(
            {
                "video_id": seq.video_id,
                "l_v": label.accident,
                "tau": label.tau,
                "blob_file": blob_file,
                "shape": list(seq.shape),
            }
        )

    manifest = {
        "format": FORMAT_TAG,
        "version": FORMAT_VERSION,
        "split": ds.split,
        "seed": ds.seed,
        "T": ds.T,
        "n": ds.n,
        "d": ds.d,
        "fps": ds.fps,
        "videos": entries,
    }
    target = root / MANIFEST_NAME
    tmp = target.with_suffix(".json.tmp")
    tmp.write_text(json.dumps(manifest, indent=2))
    os.replace(tmp, target)
    logger.info(f"💾 Saved {len(ds)} videos to {root}")
    return target


def _read_manifest(root: Path) -> Dict[str, Any]:
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.is_file():
        raise DatasetFormatError(f"{manifest_path}: manifest not found")
    text = manifest_path.read_text()
    try:
        manifest = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"{manifest_path}: invalid JSON at offset {exc.pos}: {exc.msg}")
    if not isinstance(manifest, dict):
        raise DatasetFormatError(f"{manifest_path}: top level must be an object")
    if manifest.get("format", FORMAT_TAG) != FORMAT_TAG:
        raise DatasetFormatError(f"{manifest_path}: unknown format tag {manifest.get('format')!r}")
    for key in ("T", "n", "d", "fps", "videos"):
        if key not in manifest:
            raise DatasetFormatError(f"{manifest_path}: missing field {key!r}")
    return manifest


def _read_blob(root: Path, entry: Dict[str, Any], dims: Tuple[int, int, int]) -> FeatureSequence:
    T, n, d = dims
    video_id = str(entry["video_id"])
    blob_path = root / str(entry.get("blob_file", f"{video_id}.bin"))
    if not blob_path.is_file():
        raise DatasetFormatError(f"video {video_id}: blob {blob_path.name} is missing")
    raw = blob_path.read_bytes()
    obj_count, ctx_count = T * n * d, T * d
    expected = (obj_count + ctx_count) * BLOB_DTYPE.itemsize
    if len(raw) < expected:
        raise DatasetFormatError(
            f"video {video_id}: unexpected end of data at offset {len(raw)} "
            f"in {blob_path.name} (expected {expected} bytes)"
        )
    if len(raw) > expected:
        raise DatasetFormatError(
            f"video {video_id}: trailing data at offset {expected} in {blob_path.name}"
        )
    values = np.frombuffer(raw, dtype=BLOB_DTYPE).astype(np.float64)
    obj = values[:obj_count].reshape(T, n, d)
    ctx = values[obj_count:].reshape(T, d)
    try:
        return FeatureSequence(obj, ctx, video_id=video_id)
    except ValueError as exc:
        raise DatasetFormatError(str(exc))


def load_dataset(path: PathLike) -> Dataset:
    """Read an SECF directory written by ``save_dataset``.

    Raises:
        DatasetFormatError: On malformed manifests, missing or truncated blobs,
            or videos whose shape disagrees with the dataset header
    """
    root = Path(path)
    manifest = _read_manifest(root)
    try:
        dims = (int(manifest["T"]), int(manifest["n"]), int(manifest["d"]))
        fps = int(manifest["fps"])
    except (TypeError, ValueError) as exc:
        raise DatasetFormatError(f"{root}: non-integer shape field: {exc}")

    videos: List[Tuple[FeatureSequence, VideoLabel]] = []
    for position, entry in enumerate(manifest["videos"]):
        if not isinstance(entry, dict) or "video_id" not in entry:
            raise DatasetFormatError(f"{root}: video entry {position} has no video_id")
        video_id = entry["video_id"]
        shape = tuple(entry.get("shape", dims))
        if shape != dims:
            raise DatasetFormatError(
                f"video {video_id}: shape {list(shape)} inconsistent with dataset {list(dims)}"
            )
        try:
            label = VideoLabel(accident=int(entry["l_v"]), tau=int(entry.get("tau", 0)), fps=fps)
        except (KeyError, ValueError) as exc:
            raise DatasetFormatError(f"video {video_id}: bad label: {exc}")
        videos.append((_read_blob(root, entry, dims), label))

    try:
        ds = Dataset(videos=videos, split=str(manifest.get("split", "train")), seed=manifest.get("seed"))
    except ValueError as exc:
        raise DatasetFormatError(f"{root}: {exc}")
    logger.info(f"📂 Loaded {len(ds)} videos from {root}")
    return ds
