"""Baseline training on the task loss and robust fine-tuning against a frozen reference."""

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, Mapping, Optional, Tuple

import numpy as np

from adversary.pgd import PgdConfig, find_worst_case
from data.dataset import Dataset
from evalsuite.metrics import evaluate
from losses.robustness import LossBreakdown, LossWeights, robustness_terms, total_loss
from losses.task import anticipation_loss, enhancement_loss, task_loss
from model.crash import forward_batch
from model.params import ModelParams, init_params
from numerics.tensor import ComputationRecord, ShapeError, Tensor, backward
from trainer.optimizer import AdamState, adam_update, clip_gradients
from trainer.run_log import RunLog
from utils.logger_config import get_logger

logger = get_logger("trainer")

# seed-sequence streams: batch order and attack starts never share draws
SHUFFLE_STREAM = 1
PGD_STREAM = 2


class DivergenceError(RuntimeError):
    """Raised when a training loss becomes non-finite."""


@dataclass(frozen=True)
class TrainConfig:
    """Optimization, architecture and robustness settings of one run."""

    learning_rate: float = 1e-4
    batch_size: int = 10
    epochs: int = 30
    seed: int = 0
    hidden: int = 64
    heads: int = 4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip: float = 10.0
    pgd: PgdConfig = field(default_factory=PgdConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    eval_batch_size: int = 50

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise ValueError(f"TrainConfig.learning_rate must be > 0, got {self.learning_rate!r}")
        if self.batch_size < 1:
            raise ValueError(f"TrainConfig.batch_size must be >= 1, got {self.batch_size!r}")
        if self.epochs < 0:
            raise ValueError(f"TrainConfig.epochs must be >= 0, got {self.epochs!r}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError(f"TrainConfig betas must lie in [0, 1), got {self.beta1}, {self.beta2}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: Mapping[str, Any]) -> "TrainConfig":
        """Build from a (possibly partial) nested dictionary such as a JSON config."""
        data = dict(values)
        if isinstance(data.get("pgd"), Mapping):
            data["pgd"] = PgdConfig(**data["pgd"])
        if isinstance(data.get("weights"), Mapping):
            data["weights"] = LossWeights.from_dict(data["weights"])
        return cls(**data)

    def with_overrides(self, **changes: Any) -> "TrainConfig":
        return replace(self, **changes)


def _step_losses(
    params: ModelParams,
    tensors: Mapping[str, Tensor],
    obj: np.ndarray,
    ctx: np.ndarray,
    labels: Any,
    weights: LossWeights,
    reference: Optional[ModelParams],
    perturbed: Optional[Tuple[np.ndarray, np.ndarray]],
) -> Tuple[Tensor, LossBreakdown]:
    clean = forward_batch(obj, ctx, params, tensors)
    l_a = anticipation_loss(clean.p, labels)
    l_e = enhancement_loss(clean.p_e, labels)
    l_task = task_loss(l_a, l_e, tensors["rho1"], tensors["rho2"], params.mu1, params.mu2)

    reference_trace = None
    if weights.needs_reference and reference is not None:
        reference_trace = forward_batch(obj, ctx, reference)
    perturbed_trace = None
    if weights.needs_perturbation and perturbed is not None:
        perturbed_trace = forward_batch(perturbed[0], perturbed[1], params, tensors)

    terms = robustness_terms(clean, weights, reference=reference_trace, perturbed=perturbed_trace)
    l_total = total_loss(l_task, terms, weights)

    def value(term: str) -> float:
        return terms[term].item() if term in terms else 0.0

    breakdown = LossBreakdown(
        L_a=l_a.item(),
        L_e=l_e.item(),
        L_task=l_task.item(),
        L_cps=value("cps"),
        L_spd=value("spd"),
        L_clm=value("clm"),
        L_sld=value("sld"),
        L_total=l_total.item(),
    )
    return l_total, breakdown


def _fit(
    params: ModelParams,
    dataset: Dataset,
    cfg: TrainConfig,
    weights: LossWeights,
    log: RunLog,
    reference: Optional[ModelParams] = None,
    eval_dataset: Optional[Dataset] = None,
) -> ModelParams:
    if dataset.d != params.d:
        raise ShapeError(f"dataset feature size d={dataset.d} does not match model d={params.d}")
    shuffle_rng = np.random.default_rng([cfg.seed, SHUFFLE_STREAM])
    pgd_rng = np.random.default_rng([cfg.seed, PGD_STREAM])
    reference_checksum = reference.checksum() if reference is not None else None
    state = AdamState.zeros(params)

    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(len(dataset))
        for step, start in enumerate(range(0, len(dataset), cfg.batch_size), start=1):
            batch = dataset.batch(order[start : start + cfg.batch_size])

            perturbed = None
            if weights.needs_perturbation:
                worst = find_worst_case(
                    batch.obj, batch.ctx, params, reference, cfg.pgd, seed=int(pgd_rng.integers(2**32))
                )
                perturbed = worst.apply(batch.obj, batch.ctx)

            with ComputationRecord() as record:
                tensors = params.as_tensors(requires_grad=True)
                l_total, breakdown = _step_losses(
                    params, tensors, batch.obj, batch.ctx, batch.labels, weights, reference, perturbed
                )
            if not math.isfinite(breakdown.L_total):
                logger.error(f"❌ Non-finite loss at epoch {epoch}, step {step}: {breakdown}")
                raise DivergenceError(
                    f"loss became non-finite at epoch {epoch}, step {step} "
                    f"(L_task={breakdown.L_task!r}, L_total={breakdown.L_total!r})"
                )

            grads = backward(record, l_total)
            grad_arrays = {name: grads.get(t, np.zeros(t.shape)) for name, t in tensors.items()}
            grad_arrays, grad_norm = clip_gradients(grad_arrays, cfg.grad_clip)
            params, state = adam_update(
                params, grad_arrays, state, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps
            )
            log.append(epoch, step, breakdown)
            logger.debug(
                f"epoch {epoch} step {step}: L_total={breakdown.L_total:.5f} grad_norm={grad_norm:.3f}"
            )

        if reference is not None and reference.checksum() != reference_checksum:
            raise RuntimeError("frozen reference parameters changed during fine-tuning")
        log.stamp_epoch(epoch)
        means = log.epoch_means(epoch)
        message = (
            f"[{log.phase}] epoch {epoch}/{cfg.epochs}: L_total={means['L_total']:.5f} "
            f"L_task={means['L_task']:.5f} L_spd={means['L_spd']:.3e} L_sld={means['L_sld']:.3e}"
        )
        if eval_dataset is not None:
            result = evaluate(params, eval_dataset, cfg.eval_batch_size)
            log.add_snapshot(epoch, result.ap, result.mtta_seconds)
            message += f" | eval AP={result.ap:.4f} mTTA={result.mtta_seconds:.3f}s"
        logger.info(message)
    return params


def train_baseline(
    dataset: Dataset,
    cfg: TrainConfig,
    init: Optional[ModelParams] = None,
    eval_dataset: Optional[Dataset] = None,
) -> Tuple[ModelParams, RunLog]:
    """Minimize the uncertainty-weighted task loss over seeded mini-batches.

    Args:
        dataset: Training videos
        cfg: Run settings; robustness weights are ignored here
        init: Starting point (fresh ``init_params`` from ``cfg.seed`` by default)
        eval_dataset: Optional split evaluated after every epoch

    Returns:
        Tuple of (trained parameters, run log)

    Raises:
        DivergenceError: If the loss becomes non-finite
    """
    params = init if init is not None else init_params(dataset.d, cfg.hidden, cfg.heads, cfg.seed)
    log = RunLog(phase="baseline", config=cfg.to_dict())
    logger.info(
        f"🚀 Baseline training: {len(dataset)} videos, {cfg.epochs} epochs, "
        f"batch {cfg.batch_size}, lr {cfg.learning_rate}"
    )
    params = _fit(params, dataset, cfg, LossWeights.none(), log, eval_dataset=eval_dataset)
    logger.info(f"✅ Baseline training finished after {len(log.rows)} steps")
    return params, log


def secure_finetune(
    baseline: ModelParams,
    dataset: Dataset,
    cfg: TrainConfig,
    reference: Optional[ModelParams] = None,
    eval_dataset: Optional[Dataset] = None,
) -> Tuple[ModelParams, RunLog]:
    """Fine-tune ``baseline`` on the task loss plus the weighted robustness terms.

    The reference (the baseline itself unless given) is frozen: its arrays are
    read-only and its checksum is verified after every epoch.

    Raises:
        ShapeError: If the reference architecture differs from the baseline
        DivergenceError: If the loss becomes non-finite
    """
    frozen = (reference if reference is not None else baseline).frozen()
    if (frozen.d, frozen.hidden, frozen.heads) != (baseline.d, baseline.hidden, baseline.heads):
        raise ShapeError(
            f"reference (d={frozen.d}, H={frozen.hidden}, heads={frozen.heads}) does not match "
            f"model (d={baseline.d}, H={baseline.hidden}, heads={baseline.heads})"
        )
    params = baseline.copy(role="secure")
    log = RunLog(phase="secure", config=cfg.to_dict())
    logger.info(
        f"🛡️ Robust fine-tuning: {len(dataset)} videos, {cfg.epochs} epochs, "
        f"active terms {list(cfg.weights.active_terms) or ['none']}, "
        f"PGD eps={cfg.pgd.epsilon} P={cfg.pgd.iterations} ({cfg.pgd.mode})"
    )
    params = _fit(params, dataset, cfg, cfg.weights, log, reference=frozen, eval_dataset=eval_dataset)
    logger.info(f"✅ Fine-tuning finished after {len(log.rows)} steps")
    return params, log
