"""Synthetic accident scenarios with a planted risk direction."""

import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Tuple

import numpy as np

from data.dataset import Dataset, FeatureSequence, VideoLabel
from utils.logger_config import get_logger

logger = get_logger("data")

# seed-sequence streams: the risk direction is shared by every split of a seed
RISK_DIRECTION_STREAM = 0
SPLIT_STREAMS = {"train": 1, "test": 2}


@dataclass(frozen=True)
class SyntheticConfig:
    """Shape and signal parameters of a generated dataset."""

    num_videos: int = 200
    positive_fraction: float = 0.5
    T: int = 50
    n: int = 5
    d: int = 32
    fps: int = 10
    signal_strength: float = 2.0
    noise_std: float = 1.0
    ramp_len: int = 15

    def __post_init__(self) -> None:
        checks = [
            ("num_videos", self.num_videos >= 2, "must be >= 2"),
            ("positive_fraction", 0.0 < self.positive_fraction < 1.0, "must lie in (0, 1)"),
            ("T", self.T >= 10, "must be >= 10"),
            ("n", self.n >= 1, "must be >= 1"),
            ("d", self.d >= 1, "must be >= 1"),
            ("fps", self.fps >= 1, "must be >= 1"),
            ("signal_strength", self.signal_strength >= 0.0, "must be >= 0"),
            ("noise_std", self.noise_std >= 0.0, "must be >= 0"),
            ("ramp_len", self.ramp_len >= 1, "must be >= 1"),
        ]
        for name, ok, reason in checks:
            if not ok:
                raise ValueError(f"SyntheticConfig.{name} {reason}, got {getattr(self, name)!r}")

    @property
    def num_positive(self) -> int:
        count = int(round(self.num_videos * self.positive_fraction))
        return min(max(count, 1), self.num_videos - 1)

    @property
    def tau_range(self) -> Tuple[int, int]:
        """Inclusive 1-based accident-frame range [0.6T, 0.9T]."""
        return math.ceil(0.6 * self.T), math.floor(0.9 * self.T)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def risk_direction(d: int, seed: int) -> np.ndarray:
    """Unit vector u planted into positive videos of every split of ``seed``."""
    rng = np.random.default_rng([seed, RISK_DIRECTION_STREAM])
    u = rng.standard_normal(d)
    return u / np.linalg.norm(u)


def ramp_coefficients(T: int, tau: int, ramp_len: int, strength: float) -> np.ndarray:
    """c_t for t = 1..T: 0 before the ramp, linear up to ``strength`` at tau, flat after."""
    start = max(1, tau - ramp_len)
    t = np.arange(1, T + 1, dtype=np.float64)
    if tau == start:
        coeff = np.where(t >= tau, strength, 0.0)
    else:
        coeff = strength * np.clip((t - start) / (tau - start), 0.0, 1.0)
    return coeff


def generate_synthetic(cfg: SyntheticConfig, seed: int, split: str = "train") -> Dataset:
    """Generate a labelled dataset as a pure function of (cfg, seed, split).

    Every video starts from N(0, noise_std^2) features. Positive videos add
    ``c_t * u`` to one risky object and to the context features, with c_t
    ramping up to ``signal_strength`` at tau; negatives keep the plain noise.

    Raises:
        ValueError: If ``split`` is unknown
    """
    if split not in SPLIT_STREAMS:
        raise ValueError(f"split must be one of {sorted(SPLIT_STREAMS)}, got {split!r}")
    u = risk_direction(cfg.d, seed)
    rng = np.random.default_rng([seed, SPLIT_STREAMS[split]])

    flags = np.zeros(cfg.num_videos, dtype=np.int64)
    flags[: cfg.num_positive] = 1
    flags = rng.permutation(flags)
    tau_lo, tau_hi = cfg.tau_range

    videos: List[Tuple[FeatureSequence, VideoLabel]] = []
    for index, flag in enumerate(flags):
        obj = cfg.noise_std * rng.standard_normal((cfg.T, cfg.n, cfg.d))
        ctx = cfg.noise_std * rng.standard_normal((cfg.T, cfg.d))
        tau = 0
        if flag == 1:
            tau = int(rng.integers(tau_lo, tau_hi + 1))
            risky = int(rng.integers(cfg.n))
            planted = np.multiply.outer(
                ramp_coefficients(cfg.T, tau, cfg.ramp_len, cfg.signal_strength), u
            )
            obj[:, risky, :] += planted
            ctx += planted
        # stored at float32 precision so a save/load round trip is exact
        obj = obj.astype(np.float32).astype(np.float64)
        ctx = ctx.astype(np.float32).astype(np.float64)
        videos.append(
            (
                FeatureSequence(obj, ctx, video_id=f"{split}-{index:05d}"),
                VideoLabel(accident=int(flag), tau=tau, fps=cfg.fps),
            )
        )

    logger.info(
        f"Generated {split} split: {cfg.num_videos} videos "
        f"({cfg.num_positive} positive), T={cfg.T} n={cfg.n} d={cfg.d}, seed={seed}"
    )
    return Dataset(videos=videos, split=split, seed=seed)
