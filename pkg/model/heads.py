"""Frame-wise probability head and the auxiliary enhancement head."""

from typing import Mapping, Tuple

import numpy as np

from numerics.tensor import ShapeError, Tensor, add, mean, reshape, sigmoid, tanh
from model.attention import MultiHeadSelfAttention
from model.base_module import BaseModule, ParamShapes


def positional_encoding(T: int, H: int) -> np.ndarray:
    """Sinusoidal table: PE[t, 2i] = sin(t / 10000^(2i/H)), PE[t, 2i+1] = cos(...).

    Rows are indexed from t = 0.

    Raises:
        ValueError: If H is odd or either size is not positive
    """
    if T < 1 or H < 2:
        raise ValueError(f"positional encoding needs T >= 1 and H >= 2, got T={T}, H={H}")
    if H % 2:
        raise ValueError(f"positional encoding needs an even hidden size, got H={H}")
    positions = np.arange(T, dtype=np.float64)[:, None]
    rates = np.power(10000.0, np.arange(0, H, 2, dtype=np.float64) / H)
    table = np.empty((T, H))
    table[:, 0::2] = np.sin(positions / rates)
    table[:, 1::2] = np.cos(positions / rates)
    return table


class MLPHead(BaseModule):
    """sigmoid(tanh(x W1 + b1) W2 + b2) mapping H features to one probability."""

    def __init__(self, hidden: int, prefix: str) -> None:
        super().__init__(prefix)
        self.hidden = hidden

    def parameter_shapes(self) -> ParamShapes:
        H = self.hidden
        return {
            "w1": ((H, H), H),
            "b1": ((H,), H),
            "w2": ((H, 1), H),
            "b2": ((1,), H),
        }

    def __call__(self, tensors: Mapping[str, Tensor], x: Tensor) -> Tensor:
        """Probabilities with the trailing feature axis removed: (..., H) -> (...)."""
        self.require_last_dim(x, self.hidden, "features")
        hidden = tanh(self.affine(x, self.param(tensors, "w1"), self.param(tensors, "b1")))
        logits = self.affine(hidden, self.param(tensors, "w2"), self.param(tensors, "b2"))
        probs = sigmoid(logits)
        return reshape(probs, x.shape[:-1]) if x.ndim > 1 else reshape(probs, (1,))


class AuxiliaryHead(BaseModule):
    """p_e = MLP(mean over frames of MHA(h2 + PE)).

    With ``use_positional_encoding=False`` the head is invariant to frame order,
    which is how the permutation diagnostic runs.
    """

    def __init__(self, hidden: int, heads: int, use_positional_encoding: bool = True) -> None:
        super().__init__("aux")
        self.hidden = hidden
        self.use_positional_encoding = use_positional_encoding
        self.attention = MultiHeadSelfAttention(hidden, heads, prefix="aux_mha")
        self.mlp = MLPHead(hidden, prefix="aux_mlp")

    def parameter_shapes(self) -> ParamShapes:
        return {}

    def qualified_shapes(self) -> ParamShapes:
        return {**self.attention.qualified_shapes(), **self.mlp.qualified_shapes()}

    def __call__(self, tensors: Mapping[str, Tensor], h2: Tensor) -> Tuple[Tensor, Tensor]:
        """Auxiliary probability per sequence.

        Args:
            h2: Second-layer hidden states (B, T, H)

        Returns:
            Tuple of (p_e (B,), self-attention weights (B, heads, T, T))
        """
        if h2.ndim != 3:
            raise ShapeError(f"aux: expected (B, T, H) hidden states, got {h2.shape}")
        x = h2
        if self.use_positional_encoding:
            x = add(h2, positional_encoding(h2.shape[1], self.hidden))
        mixed, weights = self.attention(tensors, x)
        pooled = mean(mixed, axis=1)
        return self.mlp(tensors, pooled), weights
