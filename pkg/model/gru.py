"""Gated recurrent unit layers for the dual-layer temporal fusion."""

from typing import Mapping

import numpy as np

from numerics.tensor import ShapeError, Tensor, add, multiply, sigmoid, stack, subtract, tanh
from model.base_module import BaseModule, ParamShapes

GATES = ("z", "r", "h")


class GRULayer(BaseModule):
    """Single GRU layer with the update convention h' = (1 - z) * h + z * h~.

    Parameters per gate g in {z, r, h}: ``w_g`` (input x H), ``u_g`` (H x H), ``b_g`` (H).
    """

    def __init__(self, input_size: int, hidden: int, prefix: str) -> None:
        super().__init__(prefix)
        self.input_size = input_size
        self.hidden = hidden

    def parameter_shapes(self) -> ParamShapes:
        shapes: ParamShapes = {}
        for gate in GATES:
            shapes[f"w_{gate}"] = ((self.input_size, self.hidden), self.input_size)
            shapes[f"u_{gate}"] = ((self.hidden, self.hidden), self.hidden)
            shapes[f"b_{gate}"] = ((self.hidden,), self.hidden)
        return shapes

    def cell(self, tensors: Mapping[str, Tensor], x_t: Tensor, h_prev: Tensor) -> Tensor:
        """One recurrence step.

        Args:
            tensors: Parameter tensors by qualified name
            x_t: Input (..., input_size)
            h_prev: Previous hidden state (..., H)

        Returns:
            Next hidden state (..., H)
        """
        self.require_last_dim(x_t, self.input_size, "input")
        self.require_last_dim(h_prev, self.hidden, "hidden state")

        def gate_input(gate: str, h: Tensor) -> Tensor:
            return add(
                self.affine(x_t, self.param(tensors, f"w_{gate}"), self.param(tensors, f"b_{gate}")),
                self.affine(h, self.param(tensors, f"u_{gate}")),
            )

        z = sigmoid(gate_input("z", h_prev))
        r = sigmoid(gate_input("r", h_prev))
        candidate = tanh(gate_input("h", multiply(r, h_prev)))
        return add(h_prev, multiply(z, subtract(candidate, h_prev)))

    def __call__(self, tensors: Mapping[str, Tensor], x: Tensor) -> Tensor:
        """Run the layer over a (B, T, input_size) sequence from a zero state.

        Returns:
            Hidden states (B, T, H)
        """
        if x.ndim != 3:
            raise ShapeError(f"{self.prefix}: expected (B, T, input) sequence, got {x.shape}")
        B, T, _ = x.shape
        h = Tensor(np.zeros((B, self.hidden)))
        states = []
        for t in range(T):
            h = self.cell(tensors, x[:, t, :], h)
            states.append(h)
        return stack(states, axis=1)
