"""Task objectives: time-weighted anticipation loss, enhancement loss, uncertainty weighting."""

from typing import Sequence, Union

import numpy as np

from data.dataset import LabelBatch, VideoLabel
from numerics.tensor import (
    ArrayLike,
    DomainError,
    ShapeError,
    Tensor,
    as_tensor,
    clip,
    exp,
    log,
    multiply,
    subtract,
    sum_,
)

PROB_EPS = 1e-7

Labels = Union[LabelBatch, Sequence[VideoLabel]]


def _label_batch(labels: Labels) -> LabelBatch:
    if isinstance(labels, LabelBatch):
        return labels
    if len(labels) == 0:
        raise ValueError("label batch must not be empty")
    return LabelBatch.from_labels(labels)


def clamp_probabilities(p: ArrayLike) -> Tensor:
    """Clamp into [1e-7, 1 - 1e-7] ahead of any log."""
    return clip(p, PROB_EPS, 1.0 - PROB_EPS)


def frame_weights(tau: np.ndarray, fps: np.ndarray, T: int) -> np.ndarray:
    """Positive-frame penalty exp(-0.5 * max((tau - t) / f, 0)) for t = 1..T.

    Args:
        tau: (B,) accident frames, 1-based
        fps: (B,) frame rates
        T: Sequence length

    Returns:
        (B, T) weights, exactly 1 from the accident frame on
    """
    t = np.arange(1, T + 1, dtype=np.float64)[None, :]
    lead = (np.asarray(tau, dtype=np.float64)[:, None] - t) / np.asarray(fps, dtype=np.float64)[:, None]
    return np.exp(-0.5 * np.maximum(lead, 0.0))


def anticipation_loss(p: ArrayLike, labels: Labels) -> Tensor:
    """Time-weighted frame-level cross entropy averaged over the batch.

    Args:
        p: Frame probabilities (B, T)
        labels: One label per video

    Raises:
        ShapeError: If ``p`` is not (B, T) with B matching the labels
    """
    batch = _label_batch(labels)
    probs = as_tensor(p)
    if probs.ndim != 2 or probs.shape[0] != len(batch):
        raise ShapeError(f"anticipation_loss: expected ({len(batch)}, T) probabilities, got {probs.shape}")
    B, T = probs.shape
    clamped = clamp_probabilities(probs)

    accident = batch.accident[:, None]
    positive_w = accident * frame_weights(np.maximum(batch.tau, 1), batch.fps, T)
    negative_w = np.broadcast_to(1.0 - accident, (B, T))

    positive = sum_(multiply(log(clamped), positive_w))
    negative = sum_(multiply(log(subtract(1.0, clamped)), negative_w))
    return (positive + negative) * (-1.0 / B)


def enhancement_loss(p_e: ArrayLike, labels: Labels) -> Tensor:
    """Video-level cross entropy of the auxiliary probability, averaged over the batch."""
    batch = _label_batch(labels)
    probs = as_tensor(p_e)
    if probs.shape != (len(batch),):
        raise ShapeError(f"enhancement_loss: expected ({len(batch)},) probabilities, got {probs.shape}")
    clamped = clamp_probabilities(probs)
    accident = batch.accident
    positive = sum_(multiply(log(clamped), accident))
    negative = sum_(multiply(log(subtract(1.0, clamped)), 1.0 - accident))
    return (positive + negative) * (-1.0 / len(batch))


def task_loss(
    l_a: ArrayLike,
    l_e: ArrayLike,
    rho1: ArrayLike,
    rho2: ArrayLike,
    mu1: float = 1.0,
    mu2: float = 1.0,
) -> Tensor:
    """mu1/(2 rho1^2) L_a + mu2/(2 rho2^2) L_e + log(rho1 rho2), differentiable in rho.

    Raises:
        DomainError: If either rho is not strictly positive
    """
    r1, r2 = as_tensor(rho1), as_tensor(rho2)
    for name, value in (("rho1", r1), ("rho2", r2)):
        if np.any(value.data <= 0.0):
            raise DomainError(f"task_loss: {name} must be positive, got {value.data!r}")
    log_r1, log_r2 = log(r1), log(r2)
    weight_a = exp(log_r1 * -2.0) * (0.5 * mu1)
    weight_e = exp(log_r2 * -2.0) * (0.5 * mu2)
    return multiply(weight_a, l_a) + multiply(weight_e, l_e) + log_r1 + log_r2
