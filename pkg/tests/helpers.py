"""Builders for hand-made datasets used across the test modules."""

from typing import List, Sequence

import numpy as np

from data.dataset import Dataset, FeatureSequence, VideoLabel

TINY_D = 4
TINY_HIDDEN = 4
TINY_HEADS = 2


def make_dataset(labels: Sequence[VideoLabel], T: int = 10, n: int = 2, d: int = TINY_D, seed: int = 0) -> Dataset:
    """Random-feature dataset with the given labels."""
    rng = np.random.default_rng(seed)
    videos = [
        (FeatureSequence(rng.standard_normal((T, n, d)), rng.standard_normal((T, d)), f"v{i}"), label)
        for i, label in enumerate(labels)
    ]
    return Dataset(videos=videos, split="test", seed=seed)


def labels_for(flags: Sequence[int], taus: Sequence[int], fps: int = 10) -> List[VideoLabel]:
    return [VideoLabel(accident=f, tau=t, fps=fps) for f, t in zip(flags, taus)]
