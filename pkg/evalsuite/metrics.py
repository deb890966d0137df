"""Video-level Average Precision and mean Time-to-Accident over a threshold sweep.

A threshold q raises an alarm on a video at frame t when p_t >= q. A positive
video counts as a true positive only if it alarms at or before its accident
frame; a negative counts as a false positive if it alarms anywhere. The sweep
visits every distinct strictly positive observed probability, highest first.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from data.dataset import Dataset, VideoLabel
from model.crash import forward_batch
from model.params import ModelParams

Predictions = Union[np.ndarray, Sequence[np.ndarray]]


@dataclass(frozen=True, eq=False)
class PrecisionRecall:
    """Sweep table: one entry per threshold, thresholds descending."""

    ap: float
    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    true_positives: np.ndarray
    false_positives: np.ndarray


@dataclass(frozen=True, eq=False)
class MetricResult:
    """AP, mTTA and the per-threshold precision/recall/TTA table."""

    ap: float
    mtta_seconds: float
    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    tta: np.ndarray

    def table(self) -> List[Dict[str, float]]:
        return [
            {
                "threshold": float(q),
                "precision": float(p),
                "recall": float(r),
                "tta": float(t),
            }
            for q, p, r, t in zip(self.thresholds, self.precision, self.recall, self.tta)
        ]


def _as_matrix(predictions: Predictions, count: int) -> np.ndarray:
    matrix = np.asarray(predictions, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != count:
        raise ValueError(f"expected {count} probability sequences of equal length, got shape {matrix.shape}")
    return matrix


def _split_classes(labels: Sequence[VideoLabel]) -> np.ndarray:
    accident = np.array([lb.accident for lb in labels], dtype=bool)
    if accident.all() or not accident.any():
        raise ValueError("metrics need at least one positive and one negative video")
    return accident


def _thresholds(matrix: np.ndarray) -> np.ndarray:
    observed = matrix[matrix > 0.0]
    return np.unique(observed)[::-1]


def _alarm_scores(matrix: np.ndarray, labels: Sequence[VideoLabel]) -> np.ndarray:
    """Highest probability that can still count for each video."""
    scores = np.empty(matrix.shape[0])
    for i, (row, label) in enumerate(zip(matrix, labels)):
        scores[i] = row[: label.tau].max() if label.accident else row.max()
    return scores


def average_precision(predictions: Predictions, labels: Sequence[VideoLabel]) -> PrecisionRecall:
    """Area under the video-level precision-recall sweep.

    AP = sum_i (r_i - r_{i-1}) * precision_i with r_0 = 0; a threshold with
    no alarms at all has precision 1.

    Raises:
        ValueError: If all videos share one class
    """
    accident = _split_classes(labels)
    matrix = _as_matrix(predictions, len(labels))
    thresholds = _thresholds(matrix)
    scores = _alarm_scores(matrix, labels)

    alarms = scores[None, :] >= thresholds[:, None]
    tp = (alarms & accident[None, :]).sum(axis=1)
    fp = (alarms & ~accident[None, :]).sum(axis=1)
    predicted = tp + fp
    precision = np.divide(tp, predicted, out=np.ones(len(thresholds)), where=predicted > 0)
    recall = tp / accident.sum()

    gains = np.diff(np.concatenate([[0.0], recall]))
    ap = float(np.sum(gains * precision))
    return PrecisionRecall(
        ap=ap,
        thresholds=thresholds,
        precision=precision,
        recall=recall,
        true_positives=tp,
        false_positives=fp,
    )


def _tta_per_threshold(
    matrix: np.ndarray, labels: Sequence[VideoLabel], thresholds: np.ndarray
) -> np.ndarray:
    lead_sum = np.zeros(len(thresholds))
    hits = np.zeros(len(thresholds))
    for row, label in zip(matrix, labels):
        if not label.accident:
            continue
        running = np.maximum.accumulate(row[: label.tau])
        first = np.searchsorted(running, thresholds, side="left")
        alarmed = first < label.tau
        lead = (label.tau - (first + 1)) / label.fps
        lead_sum += np.where(alarmed, lead, 0.0)
        hits += alarmed
    return np.divide(lead_sum, hits, out=np.full(len(thresholds), np.nan), where=hits > 0)


def mtta(predictions: Predictions, labels: Sequence[VideoLabel]) -> float:
    """Mean over thresholds (with at least one true positive) of the mean lead time in seconds.

    Raises:
        ValueError: If there is no positive video
    """
    if not any(lb.accident for lb in labels):
        raise ValueError("mTTA needs at least one positive video")
    matrix = _as_matrix(predictions, len(labels))
    tta = _tta_per_threshold(matrix, labels, _thresholds(matrix))
    valid = tta[~np.isnan(tta)]
    return float(valid.mean()) if valid.size else 0.0


def compute_metrics(predictions: Predictions, labels: Sequence[VideoLabel]) -> MetricResult:
    """AP and mTTA sharing one threshold sweep."""
    pr = average_precision(predictions, labels)
    matrix = _as_matrix(predictions, len(labels))
    tta = _tta_per_threshold(matrix, labels, pr.thresholds)
    valid = tta[~np.isnan(tta)]
    return MetricResult(
        ap=pr.ap,
        mtta_seconds=float(valid.mean()) if valid.size else 0.0,
        thresholds=pr.thresholds,
        precision=pr.precision,
        recall=pr.recall,
        tta=tta,
    )


def predict(
    params: ModelParams,
    dataset: Dataset,
    obj: Optional[np.ndarray] = None,
    ctx: Optional[np.ndarray] = None,
    batch_size: int = 50,
) -> np.ndarray:
    """Frame probabilities (N, T) for every video, optionally on replacement features.

    Args:
        params: Model to run
        dataset: Supplies the features (and the video count)
        obj: Optional (N, T, n, d) features used instead of the dataset's
        ctx: Optional (N, T, d) features used instead of the dataset's
        batch_size: Videos per forward pass
    """
    base_obj, base_ctx = dataset.stacked()
    obj = base_obj if obj is None else obj
    ctx = base_ctx if ctx is None else ctx
    tensors = params.as_tensors()
    chunks = []
    for start in range(0, len(dataset), batch_size):
        stop = min(start + batch_size, len(dataset))
        trace = forward_batch(obj[start:stop], ctx[start:stop], params, tensors)
        chunks.append(trace.p.numpy())
    return np.concatenate(chunks, axis=0)


def evaluate(params: ModelParams, dataset: Dataset, batch_size: int = 50) -> MetricResult:
    """Clean AP/mTTA of ``params`` on ``dataset``."""
    return compute_metrics(predict(params, dataset, batch_size=batch_size), dataset.labels)
