"""In-memory accident-scenario datasets."""

from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np


@dataclass(frozen=True)
class VideoLabel:
    """Accident flag, accident frame (1-based) and frame rate of one video."""

    accident: int
    tau: int
    fps: int

    def __post_init__(self) -> None:
        if self.accident not in (0, 1):
            raise ValueError(f"accident flag must be 0 or 1, got {self.accident}")
        if self.fps <= 0:
            raise ValueError(f"fps must be positive, got {self.fps}")


@dataclass(frozen=True, eq=False)
class FeatureSequence:
    """Per-frame object features (T x n x d) and context features (T x d)."""

    obj_feats: np.ndarray
    ctx_feats: np.ndarray
    video_id: str

    def __post_init__(self) -> None:
        obj, ctx = self.obj_feats, self.ctx_feats
        if obj.ndim != 3 or ctx.ndim != 2:
            raise ValueError(
                f"{self.video_id}: expected obj T x n x d and ctx T x d, "
                f"got {obj.shape} and {ctx.shape}"
            )
        T, n, d = obj.shape
        if T < 2 or n < 1 or d < 1:
            raise ValueError(f"{self.video_id}: need T >= 2, n >= 1, d >= 1, got {obj.shape}")
        if ctx.shape != (T, d):
            raise ValueError(f"{self.video_id}: ctx shape {ctx.shape} does not match ({T}, {d})")
        if not (np.all(np.isfinite(obj)) and np.all(np.isfinite(ctx))):
            raise ValueError(f"{self.video_id}: features contain non-finite values")

    @property
    def shape(self) -> Tuple[int, int, int]:
        T, n, d = self.obj_feats.shape
        return T, n, d

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeatureSequence):
            return NotImplemented
        return (
            self.video_id == other.video_id
            and np.array_equal(self.obj_feats, other.obj_feats)
            and np.array_equal(self.ctx_feats, other.ctx_feats)
        )


@dataclass(frozen=True)
class LabelBatch:
    """Column view of a batch of VideoLabels."""

    accident: np.ndarray
    tau: np.ndarray
    fps: np.ndarray

    @classmethod
    def from_labels(cls, labels: Sequence[VideoLabel]) -> "LabelBatch":
        if not labels:
            raise ValueError("label batch must not be empty")
        return cls(
            accident=np.array([lb.accident for lb in labels], dtype=np.float64),
            tau=np.array([lb.tau for lb in labels], dtype=np.int64),
            fps=np.array([lb.fps for lb in labels], dtype=np.float64),
        )

    def __len__(self) -> int:
        return int(self.accident.shape[0])


@dataclass(frozen=True)
class FeatureBatch:
    """Stacked features of several videos: obj (B,T,n,d), ctx (B,T,d)."""

    obj: np.ndarray
    ctx: np.ndarray
    labels: LabelBatch
    video_ids: Tuple[str, ...]

    def __len__(self) -> int:
        return int(self.obj.shape[0])


@dataclass(eq=False)
class Dataset:
    """Ordered (FeatureSequence, VideoLabel) pairs sharing T, n, d and fps."""

    videos: List[Tuple[FeatureSequence, VideoLabel]]
    split: str = "train"
    seed: Optional[int] = None
    _stacked: Optional[Tuple[np.ndarray, np.ndarray]] = field(default=None, init=False, repr=False)

    def __post_init__(self) -> None:
        if not self.videos:
            raise ValueError("dataset must contain at least one video")
        shape = self.videos[0][0].shape
        fps = self.videos[0][1].fps
        for seq, label in self.videos:
            if seq.shape != shape:
                raise ValueError(
                    f"video {seq.video_id} has shape {seq.shape}, dataset uses {shape}"
                )
            if label.fps != fps:
                raise ValueError(f"video {seq.video_id} has fps {label.fps}, dataset uses {fps}")
            if label.accident == 1 and not 1 <= label.tau <= shape[0]:
                raise ValueError(f"video {seq.video_id}: tau {label.tau} outside 1..{shape[0]}")
        flags = {label.accident for _, label in self.videos}
        if flags != {0, 1}:
            raise ValueError("dataset must contain at least one positive and one negative video")

    @property
    def T(self) -> int:
        return self.videos[0][0].shape[0]

    @property
    def n(self) -> int:
        return self.videos[0][0].shape[1]

    @property
    def d(self) -> int:
        return self.videos[0][0].shape[2]

    @property
    def fps(self) -> int:
        return self.videos[0][1].fps

    @property
    def labels(self) -> List[VideoLabel]:
        return [label for _, label in self.videos]

    def __len__(self) -> int:
        return len(self.videos)

    def __iter__(self) -> Iterator[Tuple[FeatureSequence, VideoLabel]]:
        return iter(self.videos)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.split == other.split and self.seed == other.seed and self.videos == other.videos

    def stacked(self) -> Tuple[np.ndarray, np.ndarray]:
        """All features as (N,T,n,d) and (N,T,d) arrays (cached)."""
        if self._stacked is None:
            obj = np.stack([seq.obj_feats for seq, _ in self.videos])
            ctx = np.stack([seq.ctx_feats for seq, _ in self.videos])
            obj.flags.writeable = False
            ctx.flags.writeable = False
            self._stacked = (obj, ctx)
        return self._stacked

    def batch(self, indices: Sequence[int]) -> FeatureBatch:
        idx = np.asarray(indices, dtype=np.int64)
        obj, ctx = self.stacked()
        return FeatureBatch(
            obj=obj[idx],
            ctx=ctx[idx],
            labels=LabelBatch.from_labels([self.videos[i][1] for i in idx]),
            video_ids=tuple(self.videos[i][0].video_id for i in idx),
        )

    def batches(self, batch_size: int) -> Iterator[FeatureBatch]:
        """Consecutive batches in dataset order."""
        if batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {batch_size}")
        for start in range(0, len(self), batch_size):
            yield self.batch(range(start, min(start + batch_size, len(self))))
