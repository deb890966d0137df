"""Per-step loss rows and per-epoch evaluation snapshots of a training run."""

import csv
import threading
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from losses.robustness import LossBreakdown

PathLike = Union[str, Path]

LOSS_COLUMNS = [f.name for f in fields(LossBreakdown)]
STEP_COLUMNS = ["epoch", "step"] + LOSS_COLUMNS
SNAPSHOT_COLUMNS = ["epoch", "ap", "mtta_seconds"]


@dataclass(frozen=True)
class StepRecord:
    epoch: int
    step: int
    losses: LossBreakdown

    def as_row(self) -> Dict[str, Any]:
        return {"epoch": self.epoch, "step": self.step, **self.losses.as_row()}


@dataclass(frozen=True)
class EvalSnapshot:
    epoch: int
    ap: float
    mtta_seconds: float


@dataclass
class RunLog:
    """Ordered training history.

    Rows are strictly increasing in (epoch, step). Wall-clock stamps stay in
    memory and only reach the run manifest.
    """

    phase: str
    config: Dict[str, Any] = field(default_factory=dict)
    rows: List[StepRecord] = field(default_factory=list)
    snapshots: List[EvalSnapshot] = field(default_factory=list)
    epoch_stamps: List[Tuple[int, str]] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    def append(self, epoch: int, step: int, losses: LossBreakdown) -> None:
        """Add one step row.

        Raises:
            ValueError: If (epoch, step) does not follow the previous row
        """
        with self._lock:
            if self.rows and (epoch, step) <= (self.rows[-1].epoch, self.rows[-1].step):
                last = self.rows[-1]
                raise ValueError(
                    f"run log rows must increase: ({epoch}, {step}) after ({last.epoch}, {last.step})"
                )
            self.rows.append(StepRecord(epoch, step, losses))

    def add_snapshot(self, epoch: int, ap: float, mtta_seconds: float) -> None:
        with self._lock:
            self.snapshots.append(EvalSnapshot(epoch, ap, mtta_seconds))

    def stamp_epoch(self, epoch: int) -> None:
        with self._lock:
            self.epoch_stamps.append((epoch, datetime.now(timezone.utc).isoformat()))

    @property
    def epochs(self) -> List[int]:
        return sorted({r.epoch for r in self.rows})

    def epoch_means(self, epoch: int) -> Dict[str, float]:
        """Mean of every loss column over the steps of ``epoch``."""
        selected = [r.losses.as_row() for r in self.rows if r.epoch == epoch]
        if not selected:
            raise KeyError(f"no rows for epoch {epoch}")
        return {col: float(np.mean([row[col] for row in selected])) for col in LOSS_COLUMNS}

    def column(self, name: str) -> np.ndarray:
        return np.array([r.losses.as_row()[name] for r in self.rows])

    # Serialization

    def write_csv(self, path: PathLike) -> Path:
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        with target.open("w", newline="") as handle:
            writer = csv.DictWriter(handle, fieldnames=STEP_COLUMNS)
            writer.writeheader()
            for record in self.rows:
                writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in record.as_row().items()})
        return target

    def write_snapshots_csv(self, path: PathLike) -> Path:
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        with target.open("w", newline="") as handle:
            writer = csv.DictWriter(handle, fieldnames=SNAPSHOT_COLUMNS)
            writer.writeheader()
            for snap in self.snapshots:
                writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in asdict(snap).items()})
        return target

    @classmethod
    def read_csv(cls, path: PathLike, phase: str = "unknown", snapshots_path: Optional[PathLike] = None) -> "RunLog":
        """Rebuild a log from the files written by ``write_csv``/``write_snapshots_csv``.

        Raises:
            ValueError: If a required column is missing
        """
        log = cls(phase=phase)
        with Path(path).open(newline="") as handle:
            reader = csv.DictReader(handle)
            missing = set(STEP_COLUMNS) - set(reader.fieldnames or [])
            if missing:
                raise ValueError(f"{path}: missing columns {sorted(missing)}")
            for row in reader:
                losses = LossBreakdown(**{col: float(row[col]) for col in LOSS_COLUMNS})
                log.append(int(row["epoch"]), int(row["step"]), losses)
        if snapshots_path is not None and Path(snapshots_path).is_file():
            with Path(snapshots_path).open(newline="") as handle:
                for row in csv.DictReader(handle):
                    log.add_snapshot(int(row["epoch"]), float(row["ap"]), float(row["mtta_seconds"]))
        return log

    def manifest_entry(self) -> Dict[str, Any]:
        """Config echo and wall-clock stamps for the run manifest."""
        return {
            "phase": self.phase,
            "steps": len(self.rows),
            "config": self.config,
            "epoch_stamps": [{"epoch": e, "utc": t} for e, t in self.epoch_stamps],
        }
