"""Base module class providing shared parameter lookup and affine helpers."""

from typing import Dict, Mapping, Optional, Tuple

from numerics.tensor import ShapeError, Tensor, add, matmul
from utils.logger_config import get_logger

ParamShapes = Dict[str, Tuple[Tuple[int, ...], int]]


class BaseModule:
    """Base class for every sub-network of the anticipation model.

    A module owns a name prefix (``"ofa"``, ``"gru1"`` ...) and knows the shapes
    of the parameters stored under that prefix. Parameter values are never held
    by the module itself; they are passed in as a name -> Tensor mapping so the
    same module instance serves the trained model, the frozen reference and
    finite-difference probes alike.
    """

    def __init__(self, prefix: str) -> None:
        """Initialize base module.

        Args:
            prefix: Namespace of this module's parameters
        """
        self.prefix = prefix
        self.logger = get_logger(f"model.{prefix}")

    def parameter_shapes(self) -> ParamShapes:
        """Parameter shapes and fan-in, keyed by local name.

        Returns:
            Mapping local name -> (shape, fan_in used for initialization)
        """
        raise NotImplementedError

    def qualified_shapes(self) -> ParamShapes:
        return {f"{self.prefix}.{name}": spec for name, spec in self.parameter_shapes().items()}

    # Common parameter and shape utilities

    def param(self, tensors: Mapping[str, Tensor], name: str) -> Tensor:
        """Look up one of this module's parameters.

        Raises:
            KeyError: If the parameter is absent from ``tensors``
        """
        key = f"{self.prefix}.{name}"
        try:
            return tensors[key]
        except KeyError:
            raise KeyError(f"parameter {key!r} missing from parameter set")

    @staticmethod
    def affine(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
        """x @ weight (+ bias), broadcasting over leading axes."""
        out = matmul(x, weight)
        return out if bias is None else add(out, bias)

    def require_last_dim(self, x: Tensor, size: int, what: str) -> None:
        """Raise ShapeError unless the trailing axis of ``x`` has ``size`` entries."""
        if x.ndim == 0 or x.shape[-1] != size:
            raise ShapeError(
                f"{self.prefix}: {what} must end in dimension {size}, got shape {x.shape}"
            )

    def __repr__(self) -> str:
        return f"{type(self).__name__}(prefix={self.prefix!r})"
