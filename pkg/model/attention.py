"""Object-focus attention over detected objects and multi-head self-attention over frames."""

import math
from typing import Mapping, Tuple

from numerics.tensor import (
    ShapeError,
    Tensor,
    matmul,
    multiply,
    reshape,
    softmax,
    sum_,
    transpose,
)
from model.base_module import BaseModule, ParamShapes


class ObjectFocusAttention(BaseModule):
    """Scaled dot-product attention with the frame context as the single query.

    For each frame, the context vector is projected to a query, the object rows
    to keys and values; the attention-weighted value sum is output-projected
    into one refined object summary per frame.
    """

    def __init__(self, d: int, prefix: str = "ofa") -> None:
        super().__init__(prefix)
        self.d = d

    def parameter_shapes(self) -> ParamShapes:
        d = self.d
        return {
            "w_query": ((d, d), d),
            "w_key": ((d, d), d),
            "w_value": ((d, d), d),
            "w_out": ((d, d), d),
        }

    def __call__(
        self, tensors: Mapping[str, Tensor], obj: Tensor, ctx: Tensor
    ) -> Tuple[Tensor, Tensor]:
        """Attend over objects.

        Args:
            tensors: Parameter tensors by qualified name
            obj: Object features (..., n, d)
            ctx: Context features (..., d) with the same leading axes

        Returns:
            Tuple of (refined summary (..., d), attention weights (..., n))
        """
        self.require_last_dim(obj, self.d, "object features")
        self.require_last_dim(ctx, self.d, "context features")
        if obj.ndim < 2 or obj.shape[:-2] != ctx.shape[:-1]:
            raise ShapeError(
                f"{self.prefix}: object shape {obj.shape} does not pair with context shape {ctx.shape}"
            )
        lead = obj.shape[:-2]
        n = obj.shape[-2]

        query = matmul(ctx, self.param(tensors, "w_query"))
        keys = matmul(obj, self.param(tensors, "w_key"))
        values = matmul(obj, self.param(tensors, "w_value"))

        scores = matmul(keys, reshape(query, lead + (self.d, 1)))
        scores = reshape(scores, lead + (n,)) * (1.0 / math.sqrt(self.d))
        weights = softmax(scores, axis=-1)

        pooled = sum_(multiply(values, reshape(weights, lead + (n, 1))), axis=-2)
        return matmul(pooled, self.param(tensors, "w_out")), weights


class MultiHeadSelfAttention(BaseModule):
    """Multi-head self-attention over the frames of a (B, T, H) sequence."""

    def __init__(self, hidden: int, heads: int, prefix: str = "aux") -> None:
        super().__init__(prefix)
        if heads < 1 or hidden % heads != 0:
            raise ValueError(f"heads ({heads}) must divide hidden size ({hidden})")
        self.hidden = hidden
        self.heads = heads
        self.head_dim = hidden // heads

    def parameter_shapes(self) -> ParamShapes:
        H = self.hidden
        return {
            "w_query": ((H, H), H),
            "w_key": ((H, H), H),
            "w_value": ((H, H), H),
            "w_out": ((H, H), H),
        }

    def _split_heads(self, x: Tensor) -> Tensor:
        B, T, _ = x.shape
        return transpose(reshape(x, (B, T, self.heads, self.head_dim)), (0, 2, 1, 3))

    def __call__(self, tensors: Mapping[str, Tensor], x: Tensor) -> Tuple[Tensor, Tensor]:
        """Self-attend across frames.

        Returns:
            Tuple of (output (B, T, H), attention weights (B, heads, T, T))
        """
        if x.ndim != 3:
            raise ShapeError(f"{self.prefix}: expected (B, T, H) input, got {x.shape}")
        self.require_last_dim(x, self.hidden, "sequence")
        B, T, H = x.shape

        q = self._split_heads(matmul(x, self.param(tensors, "w_query")))
        k = self._split_heads(matmul(x, self.param(tensors, "w_key")))
        v = self._split_heads(matmul(x, self.param(tensors, "w_value")))

        scores = matmul(q, transpose(k, (0, 1, 3, 2))) * (1.0 / math.sqrt(self.head_dim))
        weights = softmax(scores, axis=-1)
        mixed = transpose(matmul(weights, v), (0, 2, 1, 3))
        out = matmul(reshape(mixed, (B, T, H)), self.param(tensors, "w_out"))
        return out, weights
