"""Empirical robustness certificate of a model against its frozen reference.

The four reported numbers are maxima over the evaluated videos (and, for the
stability pair, over the probed offsets). They are lower bounds on the true
suprema, found by search, and never a formal proof.
"""

import csv
import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from adversary.pgd import NORM_KINDS, PgdConfig, find_worst_case
from data.dataset import Dataset
from model.crash import BatchTrace, forward_batch
from model.params import ModelParams
from numerics.tensor import ShapeError
from utils.logger_config import get_logger

logger = get_logger("certify")

PathLike = Union[str, Path]

PROBE_STREAM = 3
ATTACK_STREAM = 4
CERTIFIED_PGD = PgdConfig(step_rule="normalized")


@dataclass(frozen=True)
class CertificationResult:
    """Largest observed divergences within the epsilon ball.

    gamma1_hat/beta1_hat compare the model with the reference on clean input
    (outputs, latents). gamma2_hat/beta2_hat compare the model with itself
    under perturbation and are the larger of the PGD and random-probe maxima.
    """

    gamma1_hat: float
    gamma2_hat: float
    beta1_hat: float
    beta2_hat: float
    epsilon: float
    norm_kind: str
    num_videos: int
    random_probes: int
    pgd_iterations: int
    gamma2_pgd: float
    gamma2_random: float
    beta2_pgd: float
    beta2_random: float
    bound: str = "empirical lower bound"

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def write_csv(self, path: PathLike) -> Path:
        row = self.to_dict()
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        with target.open("w", newline="") as handle:
            writer = csv.DictWriter(handle, fieldnames=list(row))
            writer.writeheader()
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
        return target

    def write_json(self, path: PathLike) -> Path:
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))
        return target

    @classmethod
    def read_json(cls, path: PathLike) -> "CertificationResult":
        return cls(**json.loads(Path(path).read_text()))


def per_video_divergences(a: BatchTrace, b: BatchTrace) -> Tuple[np.ndarray, np.ndarray]:
    """Per-video (d_out, d_feat) between two traces of the same batch."""
    p_a, p_b = a.p.numpy(), b.p.numpy()
    v_a, v_b = a.latent().numpy(), b.latent().numpy()
    if p_a.shape != p_b.shape or v_a.shape != v_b.shape:
        raise ShapeError(f"traces disagree: p {p_a.shape} vs {p_b.shape}, latent {v_a.shape} vs {v_b.shape}")
    return np.mean((p_a - p_b) ** 2, axis=1), np.mean((v_a - v_b) ** 2, axis=1)


def probe_offsets(
    obj_shape: Tuple[int, ...], epsilon: float, norm_kind: str, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    """Random offsets on the epsilon sphere (L2) or in the epsilon cube (Linf).

    Directions are drawn independently of ``epsilon``, so a shared generator
    state probes the same directions at every radius.
    """
    B, T, n, d = obj_shape
    width = T * n * d + T * d
    if norm_kind == "Linf":
        rows = rng.uniform(-1.0, 1.0, size=(B, width))
    else:
        rows = rng.standard_normal((B, width))
        rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    rows = rows * epsilon
    split = T * n * d
    return rows[:, :split].reshape(B, T, n, d), rows[:, split:].reshape(B, T, d)


def certify_secure(
    params: ModelParams,
    reference: ModelParams,
    dataset: Dataset,
    epsilon: float,
    pgd_cfg: Optional[PgdConfig] = None,
    probes: int = 50,
    seed: int = 0,
    batch_size: int = 50,
) -> CertificationResult:
    """Search for the largest consistency and stability divergences of ``params``.

    Args:
        params: Model being certified
        reference: Frozen reference (the baseline for a fine-tuned model)
        dataset: Videos the maxima are taken over
        epsilon: Radius of the perturbation ball
        pgd_cfg: Attack settings; the radius is replaced by ``epsilon``
            (normalized ascent steps by default)
        probes: Random offsets tried per video in addition to PGD
        seed: Seeds the PGD starts and the probe directions
        batch_size: Videos per forward pass

    Returns:
        CertificationResult with every maximum >= 0

    Raises:
        ShapeError: If the model and the reference architectures differ
        ValueError: If epsilon < 0, probes < 0 or the norm is unknown
    """
    if (params.d, params.hidden, params.heads) != (reference.d, reference.hidden, reference.heads):
        raise ShapeError(
            f"model (d={params.d}, H={params.hidden}, heads={params.heads}) and reference "
            f"(d={reference.d}, H={reference.hidden}, heads={reference.heads}) differ"
        )
    if dataset.d != params.d:
        raise ShapeError(f"dataset feature size d={dataset.d} does not match model d={params.d}")
    if not epsilon >= 0.0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon!r}")
    if probes < 0:
        raise ValueError(f"probes must be >= 0, got {probes!r}")
    cfg = replace(pgd_cfg or CERTIFIED_PGD, epsilon=float(epsilon), mode="per_sample")
    if cfg.norm_kind not in NORM_KINDS:
        raise ValueError(f"unknown norm {cfg.norm_kind!r}")

    logger.info(
        f"🛡️ Certifying {len(dataset)} videos: eps={epsilon} ({cfg.norm_kind}), "
        f"PGD P={cfg.iterations} {cfg.step_rule}, {probes} random probes"
    )
    obj_all, ctx_all = dataset.stacked()
    model_tensors = params.as_tensors()
    reference_tensors = reference.as_tensors()
    probe_rng = np.random.default_rng([seed, PROBE_STREAM])
    attack_rng = np.random.default_rng([seed, ATTACK_STREAM])

    gamma1 = beta1 = 0.0
    gamma2_pgd = beta2_pgd = gamma2_random = beta2_random = 0.0
    for start in range(0, len(dataset), batch_size):
        obj = obj_all[start : start + batch_size]
        ctx = ctx_all[start : start + batch_size]
        clean = forward_batch(obj, ctx, params, model_tensors)
        anchored = forward_batch(obj, ctx, reference, reference_tensors)
        out_gap, feat_gap = per_video_divergences(clean, anchored)
        gamma1 = max(gamma1, float(out_gap.max()))
        beta1 = max(beta1, float(feat_gap.max()))

        attack_seed = int(attack_rng.integers(2**32))
        if epsilon == 0.0:
            continue
        worst = find_worst_case(obj, ctx, params, reference, cfg, seed=attack_seed)
        attacked = forward_batch(*worst.apply(obj, ctx), params, model_tensors)
        out_gap, feat_gap = per_video_divergences(clean, attacked)
        gamma2_pgd = max(gamma2_pgd, float(out_gap.max()))
        beta2_pgd = max(beta2_pgd, float(feat_gap.max()))

        for _ in range(probes):
            delta_obj, delta_ctx = probe_offsets(obj.shape, epsilon, cfg.norm_kind, probe_rng)
            probed = forward_batch(obj + delta_obj, ctx + delta_ctx, params, model_tensors)
            out_gap, feat_gap = per_video_divergences(clean, probed)
            gamma2_random = max(gamma2_random, float(out_gap.max()))
            beta2_random = max(beta2_random, float(feat_gap.max()))

    result = CertificationResult(
        gamma1_hat=gamma1,
        gamma2_hat=max(gamma2_pgd, gamma2_random),
        beta1_hat=beta1,
        beta2_hat=max(beta2_pgd, beta2_random),
        epsilon=float(epsilon),
        norm_kind=cfg.norm_kind,
        num_videos=len(dataset),
        random_probes=probes,
        pgd_iterations=cfg.iterations,
        gamma2_pgd=gamma2_pgd,
        gamma2_random=gamma2_random,
        beta2_pgd=beta2_pgd,
        beta2_random=beta2_random,
    )
    logger.info(
        f"✅ Certificate: gamma1={result.gamma1_hat:.3e} gamma2={result.gamma2_hat:.3e} "
        f"beta1={result.beta1_hat:.3e} beta2={result.beta2_hat:.3e}"
    )
    return result
