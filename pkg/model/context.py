"""Lightweight two-layer refinement of the per-frame context features."""

from typing import Mapping

from numerics.tensor import Tensor, tanh
from model.base_module import BaseModule, ParamShapes


class ContextRefiner(BaseModule):
    """F̃_c = tanh(F_c W1 + b1) W2 + b2, applied frame-wise."""

    def __init__(self, d: int, prefix: str = "ctx") -> None:
        super().__init__(prefix)
        self.d = d

    def parameter_shapes(self) -> ParamShapes:
        d = self.d
        return {
            "w1": ((d, d), d),
            "b1": ((d,), d),
            "w2": ((d, d), d),
            "b2": ((d,), d),
        }

    def __call__(self, tensors: Mapping[str, Tensor], ctx: Tensor) -> Tensor:
        self.require_last_dim(ctx, self.d, "context features")
        hidden = tanh(self.affine(ctx, self.param(tensors, "w1"), self.param(tensors, "b1")))
        return self.affine(hidden, self.param(tensors, "w2"), self.param(tensors, "b2"))
