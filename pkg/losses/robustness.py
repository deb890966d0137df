"""Consistency and stability objectives against a frozen reference and a perturbed input."""

from dataclasses import asdict, dataclass, fields
from typing import Dict, Mapping, Optional, Tuple, Union

from model.crash import BatchTrace, forward_batch
from model.params import ModelParams
from numerics.tensor import ArrayLike, ShapeError, Tensor, as_tensor, mean, square, subtract

# term -> (lambda field, enable flag field)
TERMS: Dict[str, Tuple[str, str]] = {
    "cps": ("lambda_c_out", "use_cps"),
    "spd": ("lambda_s_out", "use_spd"),
    "clm": ("lambda_c_feat", "use_clm"),
    "sld": ("lambda_s_feat", "use_sld"),
}

LossValue = Union[Tensor, float]


def _mse(a: ArrayLike, b: ArrayLike, what: str) -> Tensor:
    ta, tb = as_tensor(a), as_tensor(b)
    if ta.shape != tb.shape:
        raise ShapeError(f"{what}: length mismatch, {ta.shape} vs {tb.shape}")
    return mean(square(subtract(ta, tb)))


def d_out(p_a: ArrayLike, p_b: ArrayLike) -> Tensor:
    """Mean squared difference of frame probabilities (batched inputs give the batch mean)."""
    return _mse(p_a, p_b, "d_out")


def d_feat(v_a: ArrayLike, v_b: ArrayLike) -> Tensor:
    """Mean squared difference of latent views."""
    return _mse(v_a, v_b, "d_feat")


@dataclass(frozen=True)
class LossWeights:
    """Robustness coefficients and per-term enable flags."""

    lambda_c_out: float = 50.0
    lambda_s_out: float = 50.0
    lambda_c_feat: float = 0.01
    lambda_s_feat: float = 0.01
    use_cps: bool = True
    use_spd: bool = True
    use_clm: bool = True
    use_sld: bool = True

    def __post_init__(self) -> None:
        for lam_field, _ in TERMS.values():
            value = getattr(self, lam_field)
            if not value >= 0.0:
                raise ValueError(f"LossWeights.{lam_field} must be >= 0, got {value!r}")

    @classmethod
    def none(cls) -> "LossWeights":
        """Every robustness term disabled."""
        return cls(use_cps=False, use_spd=False, use_clm=False, use_sld=False)

    @classmethod
    def only(cls, *terms: str, **lambdas: float) -> "LossWeights":
        """Enable just ``terms`` (e.g. ``only("cps", "sld")``)."""
        unknown = set(terms) - set(TERMS)
        if unknown:
            raise ValueError(f"unknown robustness terms {sorted(unknown)}, choose from {list(TERMS)}")
        flags = {flag: term in terms for term, (_, flag) in TERMS.items()}
        return cls(**flags, **lambdas)

    def coefficient(self, term: str) -> float:
        return float(getattr(self, TERMS[term][0]))

    def is_active(self, term: str) -> bool:
        lam_field, flag = TERMS[term]
        return bool(getattr(self, flag)) and getattr(self, lam_field) > 0.0

    @property
    def active_terms(self) -> Tuple[str, ...]:
        return tuple(term for term in TERMS if self.is_active(term))

    @property
    def needs_perturbation(self) -> bool:
        return self.is_active("spd") or self.is_active("sld")

    @property
    def needs_reference(self) -> bool:
        return self.is_active("cps") or self.is_active("clm")

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: Mapping[str, object]) -> "LossWeights":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"unknown LossWeights fields {sorted(unknown)}")
        return cls(**values)  # type: ignore[arg-type]


@dataclass(frozen=True)
class LossBreakdown:
    """Scalar values of every objective for one step (inactive terms are 0)."""

    L_a: float
    L_e: float
    L_task: float
    L_cps: float
    L_spd: float
    L_clm: float
    L_sld: float
    L_total: float

    def as_row(self) -> Dict[str, float]:
        return asdict(self)


def robustness_terms(
    clean: BatchTrace,
    weights: LossWeights,
    reference: Optional[BatchTrace] = None,
    perturbed: Optional[BatchTrace] = None,
) -> Dict[str, Tensor]:
    """The active consistency/stability losses for one batch.

    Args:
        clean: Trace of the trained model on clean inputs (may carry gradients)
        weights: Selects which terms are computed
        reference: Trace of the frozen reference on the clean inputs
        perturbed: Trace of the trained model on perturbed inputs

    Returns:
        Mapping term -> scalar Tensor, for active terms only

    Raises:
        ValueError: If an active term lacks the trace it needs
        ShapeError: If the reference's T or H differ from the model's
    """
    terms: Dict[str, Tensor] = {}
    if weights.needs_reference:
        if reference is None:
            raise ValueError("consistency terms need a reference trace")
        if reference.h2.shape != clean.h2.shape:
            raise ShapeError(
                f"reference hidden states {reference.h2.shape} do not match model {clean.h2.shape}"
            )
        if weights.is_active("cps"):
            terms["cps"] = d_out(clean.p, reference.p.detach())
        if weights.is_active("clm"):
            terms["clm"] = d_feat(clean.latent(), reference.latent().detach())
    if weights.needs_perturbation:
        if perturbed is None:
            raise ValueError("stability terms need a perturbed trace")
        if weights.is_active("spd"):
            terms["spd"] = d_out(clean.p, perturbed.p)
        if weights.is_active("sld"):
            terms["sld"] = d_feat(clean.latent(), perturbed.latent())
    return terms


def total_loss(l_task: LossValue, terms: Mapping[str, LossValue], weights: LossWeights) -> Tensor:
    """L_task plus the weighted robustness terms; inactive terms contribute nothing."""
    total = as_tensor(l_task)
    for term in TERMS:
        if weights.is_active(term) and term in terms:
            total = total + as_tensor(terms[term]) * weights.coefficient(term)
    return total


def robustness_losses(
    params: ModelParams,
    reference: ModelParams,
    obj: ArrayLike,
    ctx: ArrayLike,
    perturbed_obj: ArrayLike,
    perturbed_ctx: ArrayLike,
    tensors: Optional[Mapping[str, Tensor]] = None,
) -> Tuple[Tensor, Tensor, Tensor, Tensor]:
    """(L_cps, L_spd, L_clm, L_sld) of ``params`` against ``reference`` from raw inputs.

    Raises:
        ShapeError: If the two parameter sets disagree on d or H
    """
    if (params.d, params.hidden) != (reference.d, reference.hidden):
        raise ShapeError(
            f"model (d={params.d}, H={params.hidden}) and reference "
            f"(d={reference.d}, H={reference.hidden}) differ"
        )
    clean = forward_batch(obj, ctx, params, tensors)
    ref = forward_batch(obj, ctx, reference)
    perturbed = forward_batch(perturbed_obj, perturbed_ctx, params, tensors)
    all_on = LossWeights(1.0, 1.0, 1.0, 1.0)
    terms = robustness_terms(clean, all_on, reference=ref, perturbed=perturbed)
    return terms["cps"], terms["spd"], terms["clm"], terms["sld"]
