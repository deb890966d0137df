"""Projected gradient ascent for worst-case additive input perturbations.

Perturbations are handled internally as one flat row per video: the object
offsets (T*n*d) followed by the context offsets (T*d). The norm ball applies
to that joint row.
"""

from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from model.crash import forward_batch
from model.params import ModelParams
from losses.robustness import d_feat, d_out
from numerics.tensor import ComputationRecord, ShapeError, Tensor, add, backward, reshape
from utils.logger_config import get_logger

logger = get_logger("pgd")

NORM_KINDS = ("L2", "Linf")
MODES = ("per_sample", "shared_batch")
STEP_RULES = ("raw", "normalized")

# L2 rescaling only triggers beyond this relative margin, so projecting twice is a no-op
_L2_SLACK = 1e-12

Objective = Callable[[np.ndarray], Tuple[float, np.ndarray]]


@dataclass(frozen=True)
class PgdConfig:
    """Inner-maximization settings (defaults are the full-preset attack budget)."""

    epsilon: float = 0.01
    alpha: float = 0.002
    iterations: int = 20
    norm_kind: str = "L2"
    mode: str = "per_sample"
    step_rule: str = "normalized"
    random_start: bool = True

    def __post_init__(self) -> None:
        if not self.epsilon >= 0.0:
            raise ValueError(f"PgdConfig.epsilon must be >= 0, got {self.epsilon!r}")
        if not self.alpha > 0.0:
            raise ValueError(f"PgdConfig.alpha must be > 0, got {self.alpha!r}")
        if self.iterations < 1:
            raise ValueError(f"PgdConfig.iterations must be >= 1, got {self.iterations!r}")
        if self.norm_kind not in NORM_KINDS:
            raise ValueError(f"PgdConfig.norm_kind must be one of {NORM_KINDS}, got {self.norm_kind!r}")
        if self.mode not in MODES:
            raise ValueError(f"PgdConfig.mode must be one of {MODES}, got {self.mode!r}")
        if self.step_rule not in STEP_RULES:
            raise ValueError(f"PgdConfig.step_rule must be one of {STEP_RULES}, got {self.step_rule!r}")

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class Perturbation:
    """Additive offsets for a batch: delta_obj (B, T, n, d), delta_ctx (B, T, d)."""

    delta_obj: np.ndarray
    delta_ctx: np.ndarray
    norm_kind: str
    epsilon: float
    history: Tuple[float, ...] = field(default=())

    def __post_init__(self) -> None:
        if self.delta_obj.ndim != 4 or self.delta_ctx.shape != self.delta_obj.shape[:2] + self.delta_obj.shape[3:]:
            raise ShapeError(
                f"perturbation parts {self.delta_obj.shape} / {self.delta_ctx.shape} do not pair"
            )

    @classmethod
    def zeros(cls, obj_shape: Tuple[int, ...], norm_kind: str = "L2", epsilon: float = 0.0) -> "Perturbation":
        B, T, _, d = obj_shape
        return cls(np.zeros(obj_shape), np.zeros((B, T, d)), norm_kind, epsilon)

    @classmethod
    def from_flat(
        cls, flat: np.ndarray, obj_shape: Tuple[int, ...], norm_kind: str, epsilon: float, history: Tuple[float, ...] = ()
    ) -> "Perturbation":
        B, T, n, d = obj_shape
        split = T * n * d
        return cls(
            delta_obj=np.array(flat[:, :split]).reshape(B, T, n, d),
            delta_ctx=np.array(flat[:, split:]).reshape(B, T, d),
            norm_kind=norm_kind,
            epsilon=epsilon,
            history=history,
        )

    def flat(self) -> np.ndarray:
        B = self.delta_obj.shape[0]
        return np.concatenate([self.delta_obj.reshape(B, -1), self.delta_ctx.reshape(B, -1)], axis=1)

    def norms(self) -> np.ndarray:
        """Per-video norm of the joint offset in ``norm_kind``."""
        rows = self.flat()
        if self.norm_kind == "Linf":
            return np.max(np.abs(rows), axis=1)
        return np.linalg.norm(rows, axis=1)

    def project(self) -> "Perturbation":
        projected = project(self.flat(), self.epsilon, self.norm_kind, batched=True)
        return Perturbation.from_flat(projected, self.delta_obj.shape, self.norm_kind, self.epsilon, self.history)

    def apply(self, obj: np.ndarray, ctx: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        if obj.shape != self.delta_obj.shape or ctx.shape != self.delta_ctx.shape:
            raise ShapeError(
                f"perturbation {self.delta_obj.shape} does not fit inputs {obj.shape} / {ctx.shape}"
            )
        return obj + self.delta_obj, ctx + self.delta_ctx


def project(delta: np.ndarray, epsilon: float, norm_kind: str = "L2", batched: bool = False) -> np.ndarray:
    """Euclidean-nearest point of the epsilon ball.

    Args:
        delta: Offsets; one vector, or one row per sample when ``batched``
        epsilon: Ball radius
        norm_kind: "L2" (radial rescale when outside) or "Linf" (coordinate clamp)
        batched: Project every row of a 2-D array independently

    Returns:
        Projected copy; points inside the ball come back unchanged
    """
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    if norm_kind not in NORM_KINDS:
        raise ValueError(f"norm_kind must be one of {NORM_KINDS}, got {norm_kind!r}")
    values = np.array(delta, dtype=np.float64)
    if norm_kind == "Linf":
        return np.clip(values, -epsilon, epsilon)

    rows = values.reshape(values.shape[0], -1) if batched and values.ndim > 1 else values.reshape(1, -1)
    norms = np.linalg.norm(rows, axis=1)
    outside = norms > epsilon * (1.0 + _L2_SLACK)
    if np.any(outside):
        rows = rows.copy()
        rows[outside] *= (epsilon / norms[outside])[:, None]
    return rows.reshape(values.shape)


def _step_direction(gradient: np.ndarray, step_rule: str, norm_kind: str) -> np.ndarray:
    if step_rule == "raw":
        return gradient
    if norm_kind == "Linf":
        return np.sign(gradient)
    rows = gradient.reshape(gradient.shape[0], -1) if gradient.ndim > 1 else gradient.reshape(1, -1)
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    unit = np.divide(rows, norms, out=np.zeros_like(rows), where=norms > 0)
    return unit.reshape(gradient.shape)


def pgd_step(
    delta_prev: np.ndarray,
    gradient: np.ndarray,
    alpha: float,
    mode: str = "per_sample",
    step_rule: str = "raw",
    norm_kind: str = "L2",
) -> np.ndarray:
    """One ascent step, before projection.

    per_sample: ``delta_prev`` and ``gradient`` share a shape (rows of a 2-D
    array are samples) and each sample moves by alpha * its own gradient.
    shared_batch: ``delta_prev`` is one vector (D,) and ``gradient`` holds one
    row per sample (B, D); the shared offset moves by alpha * the batch mean.

    Raises:
        ShapeError: If the shapes do not conform to ``mode``
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if step_rule not in STEP_RULES:
        raise ValueError(f"step_rule must be one of {STEP_RULES}, got {step_rule!r}")
    delta = np.asarray(delta_prev, dtype=np.float64)
    grad = np.asarray(gradient, dtype=np.float64)
    if mode == "shared_batch":
        if grad.ndim != delta.ndim + 1 or grad.shape[1:] != delta.shape:
            raise ShapeError(
                f"shared_batch step needs gradient (B, *{delta.shape}), got {grad.shape}"
            )
        grad = grad.mean(axis=0)
        return delta + alpha * _step_direction(grad, step_rule, norm_kind).reshape(delta.shape)
    if grad.shape != delta.shape:
        raise ShapeError(f"per_sample step: gradient {grad.shape} does not match delta {delta.shape}")
    return delta + alpha * _step_direction(grad, step_rule, norm_kind)


def random_start(shape: Tuple[int, ...], epsilon: float, norm_kind: str, rng: np.random.Generator) -> np.ndarray:
    """Starting point in the ball: on the L2 sphere per row, or uniform in the Linf cube."""
    if epsilon == 0.0:
        return np.zeros(shape)
    if norm_kind == "Linf":
        return rng.uniform(-epsilon, epsilon, size=shape)
    draw = rng.standard_normal(shape)
    rows = draw.reshape(shape[0], -1) if len(shape) > 1 else draw.reshape(1, -1)
    rows = rows / np.linalg.norm(rows, axis=1, keepdims=True) * epsilon
    return rows.reshape(shape)


def pgd_maximize(
    objective: Objective,
    delta0: np.ndarray,
    cfg: PgdConfig,
    batch_size: Optional[int] = None,
) -> Tuple[np.ndarray, List[float]]:
    """Run ``cfg.iterations`` alternations of ascent step and projection.

    Args:
        objective: Maps per-sample offsets (B, D) to (value, gradient (B, D))
        delta0: Start, (B, D) in per_sample mode or (D,) in shared_batch mode
        cfg: Step size, radius, norm, mode and step rule
        batch_size: B, required in shared_batch mode

    Returns:
        Tuple of (final projected offsets in the shape of ``delta0``,
        objective value at every iterate including start and end)
    """
    shared = cfg.mode == "shared_batch"
    if shared and batch_size is None:
        raise ValueError("shared_batch mode needs batch_size")

    def expand(delta: np.ndarray) -> np.ndarray:
        return np.tile(delta, (batch_size, 1)) if shared else delta

    delta = project(delta0, cfg.epsilon, cfg.norm_kind, batched=not shared)
    history: List[float] = []
    for iteration in range(cfg.iterations):
        value, grad = objective(expand(delta))
        history.append(value)
        stepped = pgd_step(delta, grad, cfg.alpha, cfg.mode, cfg.step_rule, cfg.norm_kind)
        delta = project(stepped, cfg.epsilon, cfg.norm_kind, batched=not shared)
        logger.debug(f"PGD iteration {iteration + 1}/{cfg.iterations}: objective {value:.6e}")
    final_value, _ = objective(expand(delta))
    history.append(final_value)
    return delta, history


def stability_objective(
    obj: np.ndarray,
    ctx: np.ndarray,
    params: ModelParams,
) -> Objective:
    """Per-sample d_out + d_feat between clean and perturbed passes of ``params``.

    The consistency terms do not depend on the offset, so their gradient is
    zero and they are left out of the ascent objective.

    Returns:
        Callable mapping offsets (B, D) to (batch-mean objective, per-sample gradient)
    """
    B, T, n, d = obj.shape
    split = T * n * d
    constants = params.as_tensors()
    clean = forward_batch(obj, ctx, params, constants)
    clean_p, clean_latent = clean.p.detach(), clean.latent().detach()

    def evaluate(flat: np.ndarray) -> Tuple[float, np.ndarray]:
        if flat.shape != (B, split + T * d):
            raise ShapeError(f"offsets must be ({B}, {split + T * d}), got {flat.shape}")
        with ComputationRecord() as record:
            delta = Tensor(flat, requires_grad=True)
            x_obj = add(obj, reshape(delta[:, :split], (B, T, n, d)))
            x_ctx = add(ctx, reshape(delta[:, split:], (B, T, d)))
            perturbed = forward_batch(x_obj, x_ctx, params, constants)
            # batch means times B: each row's gradient is its own sample's
            summed = (d_out(clean_p, perturbed.p) + d_feat(clean_latent, perturbed.latent())) * float(B)
        grads = backward(record, summed)
        return summed.item() / B, grads.get(delta, np.zeros_like(flat))

    return evaluate


def find_worst_case(
    obj: np.ndarray,
    ctx: np.ndarray,
    params: ModelParams,
    reference: Optional[ModelParams],
    cfg: PgdConfig,
    seed: int,
) -> Perturbation:
    """Search the epsilon ball for the offsets that most destabilize ``params``.

    ``params`` stays fixed throughout. ``reference`` only anchors the
    consistency terms, whose gradient with respect to the offset is zero; it is
    accepted so callers can pass the full training state.

    Args:
        obj: Clean object features (B, T, n, d)
        ctx: Clean context features (B, T, d)
        params: Model under attack
        reference: Frozen reference (unused by the ascent)
        cfg: Attack settings
        seed: Seeds the random start

    Returns:
        Projected worst-case offsets with the objective history
    """
    obj = np.asarray(obj, dtype=np.float64)
    ctx = np.asarray(ctx, dtype=np.float64)
    if reference is not None and (reference.d, reference.hidden) != (params.d, params.hidden):
        raise ShapeError("reference architecture differs from the attacked model")
    B, T, n, d = obj.shape
    if cfg.epsilon == 0.0:
        return Perturbation.zeros(obj.shape, cfg.norm_kind, 0.0)

    width = T * n * d + T * d
    shared = cfg.mode == "shared_batch"
    start_shape = (width,) if shared else (B, width)
    rng = np.random.default_rng(seed)
    delta0 = random_start(start_shape, cfg.epsilon, cfg.norm_kind, rng) if cfg.random_start else np.zeros(start_shape)

    delta, history = pgd_maximize(stability_objective(obj, ctx, params), delta0, cfg, batch_size=B)
    rows = np.tile(delta, (B, 1)) if shared else delta
    logger.debug(f"PGD finished: objective {history[0]:.3e} -> {history[-1]:.3e}")
    return Perturbation.from_flat(rows, obj.shape, cfg.norm_kind, cfg.epsilon, tuple(history))
