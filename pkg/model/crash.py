"""Full anticipation forward pass: attention, refinement, dual GRU, heads.

Everything here operates on a name -> Tensor mapping, so callers choose
whether gradients are recorded (``ModelParams.as_tensors(requires_grad=True)``
inside a ``ComputationRecord``) or not.
"""

from dataclasses import dataclass
from typing import TYPE_CHECKING, Dict, Mapping, Optional, Tuple, Union

import numpy as np

from data.dataset import FeatureSequence
from numerics.tensor import ArrayLike, ShapeError, Tensor, as_tensor, concat, reshape
from model.attention import ObjectFocusAttention
from model.base_module import ParamShapes
from model.context import ContextRefiner
from model.gru import GRULayer
from model.heads import AuxiliaryHead, MLPHead

if TYPE_CHECKING:
    from model.params import ModelParams

UNCERTAINTY_NAMES = ("rho1", "rho2")

ParamSource = Union["ModelParams", Mapping[str, Tensor]]


@dataclass(frozen=True)
class PredictionTrace:
    """Per-video forward results as plain arrays."""

    p: np.ndarray
    p_e: float
    h1: np.ndarray
    h2: np.ndarray
    refined_obj: np.ndarray
    refined_ctx: np.ndarray
    attention: np.ndarray
    aux_attention: np.ndarray


@dataclass(frozen=True)
class BatchTrace:
    """Batched forward results kept as Tensors so losses can differentiate them.

    Shapes: p (B, T), p_e (B,), h1/h2 (B, T, H), refined_obj/refined_ctx (B, T, d),
    attention (B, T, n), aux_attention (B, heads, T, T).
    """

    p: Tensor
    p_e: Tensor
    h1: Tensor
    h2: Tensor
    refined_obj: Tensor
    refined_ctx: Tensor
    attention: Tensor
    aux_attention: Tensor

    def __len__(self) -> int:
        return self.p.shape[0]

    def latent(self) -> Tensor:
        """Flattened h2 per video, shape (B, T * H)."""
        B, T, H = self.h2.shape
        return reshape(self.h2, (B, T * H))

    def video(self, index: int) -> PredictionTrace:
        return PredictionTrace(
            p=np.array(self.p.data[index]),
            p_e=float(self.p_e.data[index]),
            h1=np.array(self.h1.data[index]),
            h2=np.array(self.h2.data[index]),
            refined_obj=np.array(self.refined_obj.data[index]),
            refined_ctx=np.array(self.refined_ctx.data[index]),
            attention=np.array(self.attention.data[index]),
            aux_attention=np.array(self.aux_attention.data[index]),
        )


class CrashModel:
    """Composition of the sub-networks for feature size d and hidden size H."""

    def __init__(self, d: int, hidden: int, heads: int, use_positional_encoding: bool = True) -> None:
        if d < 1:
            raise ValueError(f"feature size d must be >= 1, got {d}")
        if hidden < 2 or hidden % 2:
            raise ValueError(f"hidden size H must be even and >= 2, got {hidden}")
        if heads < 1 or hidden % heads:
            raise ValueError(f"heads ({heads}) must divide hidden size ({hidden})")
        self.d = d
        self.hidden = hidden
        self.heads = heads
        self.ofa = ObjectFocusAttention(d)
        self.context = ContextRefiner(d)
        self.gru1 = GRULayer(2 * d, hidden, prefix="gru1")
        self.gru2 = GRULayer(hidden, hidden, prefix="gru2")
        self.head = MLPHead(hidden, prefix="head")
        self.aux = AuxiliaryHead(hidden, heads, use_positional_encoding)

    def parameter_shapes(self) -> ParamShapes:
        """All parameter shapes in storage order, with fan-in for initialization."""
        shapes: ParamShapes = {}
        for module in (self.ofa, self.context, self.gru1, self.gru2, self.head, self.aux):
            shapes.update(module.qualified_shapes())
        for name in UNCERTAINTY_NAMES:
            shapes[name] = ((), 1)
        return shapes

    def __call__(self, tensors: Mapping[str, Tensor], obj: ArrayLike, ctx: ArrayLike) -> BatchTrace:
        """Forward a batch.

        Args:
            tensors: Parameter tensors by qualified name
            obj: Object features (B, T, n, d)
            ctx: Context features (B, T, d)

        Raises:
            ShapeError: If the inputs do not match each other or the parameters
        """
        obj_t, ctx_t = as_tensor(obj), as_tensor(ctx)
        if obj_t.ndim != 4 or ctx_t.ndim != 3:
            raise ShapeError(
                f"forward expects obj (B, T, n, d) and ctx (B, T, d), got {obj_t.shape} and {ctx_t.shape}"
            )
        if obj_t.shape[-1] != self.d or ctx_t.shape != obj_t.shape[:2] + (self.d,):
            raise ShapeError(
                f"forward: inputs {obj_t.shape} / {ctx_t.shape} do not match model feature size d={self.d}"
            )

        refined_obj, attention = self.ofa(tensors, obj_t, ctx_t)
        refined_ctx = self.context(tensors, ctx_t)
        h1 = self.gru1(tensors, concat([refined_obj, refined_ctx], axis=-1))
        h2 = self.gru2(tensors, h1)
        p = self.head(tensors, h2)
        p_e, aux_attention = self.aux(tensors, h2)
        return BatchTrace(
            p=p,
            p_e=p_e,
            h1=h1,
            h2=h2,
            refined_obj=refined_obj,
            refined_ctx=refined_ctx,
            attention=attention,
            aux_attention=aux_attention,
        )


def _resolve(params: ParamSource) -> Tuple[Mapping[str, Tensor], Dict[str, int]]:
    if hasattr(params, "as_tensors"):
        return params.as_tensors(), params.dims()  # type: ignore[union-attr]
    tensors = params  # type: ignore[assignment]
    d = tensors["ofa.w_query"].shape[0]
    H = tensors["gru2.u_z"].shape[0]
    return tensors, {"d": d, "H": H}


def ofa_attention(obj_t: ArrayLike, ctx_t: ArrayLike, params: ParamSource) -> Tensor:
    """Refined object summary (d,) for one frame's objects (n, d) and context (d,)."""
    tensors, dims = _resolve(params)
    refined, _ = ObjectFocusAttention(dims["d"])(tensors, as_tensor(obj_t), as_tensor(ctx_t))
    return refined


def context_refine(ctx_t: ArrayLike, params: ParamSource) -> Tensor:
    tensors, dims = _resolve(params)
    return ContextRefiner(dims["d"])(tensors, as_tensor(ctx_t))


def gru_cell(x_t: ArrayLike, h_prev: ArrayLike, params: ParamSource, layer: str = "gru1") -> Tensor:
    """One step of ``layer`` ("gru1" or "gru2")."""
    tensors, dims = _resolve(params)
    input_size = tensors[f"{layer}.w_z"].shape[0]
    return GRULayer(input_size, dims["H"], prefix=layer).cell(
        tensors, as_tensor(x_t), as_tensor(h_prev)
    )


def aux_head(
    h2: ArrayLike, params: ParamSource, heads: int, use_positional_encoding: bool = True
) -> Tensor:
    """p_e for hidden states (B, T, H)."""
    tensors, dims = _resolve(params)
    p_e, _ = AuxiliaryHead(dims["H"], heads, use_positional_encoding)(tensors, as_tensor(h2))
    return p_e


def forward_batch(
    obj: ArrayLike,
    ctx: ArrayLike,
    params: "ModelParams",
    tensors: Optional[Mapping[str, Tensor]] = None,
    use_positional_encoding: bool = True,
) -> BatchTrace:
    """Batched forward with ``params``' architecture.

    Args:
        obj: (B, T, n, d) object features, array or Tensor
        ctx: (B, T, d) context features
        params: Parameter set defining the architecture
        tensors: Optional pre-built tensors (e.g. with gradients enabled)
        use_positional_encoding: Off only for the frame-permutation diagnostic
    """
    if tensors is None:
        tensors = params.as_tensors()
    return params.model(use_positional_encoding)(tensors, obj, ctx)


def forward(x: FeatureSequence, params: "ModelParams") -> PredictionTrace:
    """Forward one video."""
    trace = forward_batch(x.obj_feats[None], x.ctx_feats[None], params)
    return trace.video(0)


def latent_view(trace: PredictionTrace) -> np.ndarray:
    """h(x; theta): h2 flattened frame-major, length T * H."""
    return np.asarray(trace.h2).reshape(-1).copy()


def unflatten_latent(view: np.ndarray, hidden: int) -> np.ndarray:
    if view.ndim != 1 or view.size % hidden:
        raise ShapeError(f"latent of shape {view.shape} does not split into rows of {hidden}")
    return view.reshape(-1, hidden)
