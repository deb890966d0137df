"""Named parameter sets for the anticipation model."""

import hashlib
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from numerics.tensor import Tensor
from model.base_module import ParamShapes
from model.crash import UNCERTAINTY_NAMES, CrashModel
from utils.logger_config import get_logger

logger = get_logger("model")

ROLES = ("baseline", "secure", "reference")


def parameter_shapes(d: int, hidden: int, heads: int) -> ParamShapes:
    """Storage-ordered parameter shapes (and fan-in) of the architecture (d, H, heads)."""
    return CrashModel(d, hidden, heads).parameter_shapes()


@dataclass(eq=False)
class ModelParams:
    """Every learnable array of the model, keyed by qualified name.

    ``rho1``/``rho2`` are the learnable uncertainty coefficients; ``mu1``/``mu2``
    are fixed loss weights carried as metadata.
    """

    d: int
    hidden: int
    heads: int
    arrays: Dict[str, np.ndarray]
    mu1: float = 1.0
    mu2: float = 1.0
    seed: Optional[int] = None
    role: str = "baseline"
    _shapes: ParamShapes = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._shapes = parameter_shapes(self.d, self.hidden, self.heads)
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        if self.mu1 <= 0 or self.mu2 <= 0:
            raise ValueError(f"mu1 and mu2 must be positive, got {self.mu1}, {self.mu2}")
        missing = [name for name in self._shapes if name not in self.arrays]
        extra = [name for name in self.arrays if name not in self._shapes]
        if missing or extra:
            raise ValueError(f"parameter names differ from architecture: missing={missing} extra={extra}")
        ordered: Dict[str, np.ndarray] = {}
        for name, (shape, _) in self._shapes.items():
            array = np.array(self.arrays[name], dtype=np.float64)
            if array.shape != shape:
                raise ValueError(f"parameter {name} has shape {array.shape}, expected {shape}")
            if not np.all(np.isfinite(array)):
                raise ValueError(f"parameter {name} contains non-finite values")
            ordered[name] = array
        self.arrays = ordered
        for name in UNCERTAINTY_NAMES:
            if float(self.arrays[name]) <= 0.0:
                raise ValueError(f"{name} must be positive, got {float(self.arrays[name])}")

    # Architecture

    def dims(self) -> Dict[str, int]:
        return {"d": self.d, "H": self.hidden, "heads": self.heads}

    def model(self, use_positional_encoding: bool = True) -> CrashModel:
        return CrashModel(self.d, self.hidden, self.heads, use_positional_encoding)

    @property
    def names(self) -> List[str]:
        return list(self.arrays)

    @property
    def num_parameters(self) -> int:
        return int(sum(a.size for a in self.arrays.values()))

    @property
    def rho1(self) -> float:
        return float(self.arrays["rho1"])

    @property
    def rho2(self) -> float:
        return float(self.arrays["rho2"])

    def fan_in(self, name: str) -> int:
        return self._shapes[name][1]

    # Views and copies

    def as_tensors(self, requires_grad: bool = False) -> Dict[str, Tensor]:
        """Fresh Tensors over copies of the arrays."""
        return {name: Tensor(array, requires_grad=requires_grad) for name, array in self.arrays.items()}

    def with_arrays(self, arrays: Mapping[str, np.ndarray], role: Optional[str] = None) -> "ModelParams":
        """New parameter set with some arrays replaced."""
        merged = {**self.arrays, **arrays}
        return ModelParams(
            d=self.d,
            hidden=self.hidden,
            heads=self.heads,
            arrays=merged,
            mu1=self.mu1,
            mu2=self.mu2,
            seed=self.seed,
            role=role or self.role,
        )

    def copy(self, role: Optional[str] = None) -> "ModelParams":
        return self.with_arrays({}, role=role)

    def frozen(self) -> "ModelParams":
        """Copy tagged as the reference snapshot, with read-only arrays."""
        snapshot = self.copy(role="reference")
        for array in snapshot.arrays.values():
            array.flags.writeable = False
        return snapshot

    def flat(self) -> np.ndarray:
        return np.concatenate([a.reshape(-1) for a in self.arrays.values()])

    def checksum(self) -> str:
        """sha256 over names, shapes and raw float64 bytes in storage order."""
        digest = hashlib.sha256()
        for name, array in self.arrays.items():
            digest.update(name.encode())
            digest.update(str(array.shape).encode())
            digest.update(np.ascontiguousarray(array, dtype="<f8").tobytes())
        return digest.hexdigest()

    def equals(self, other: "ModelParams") -> bool:
        """Bit-exact comparison of architecture, metadata and every array."""
        return (
            (self.d, self.hidden, self.heads, self.mu1, self.mu2)
            == (other.d, other.hidden, other.heads, other.mu1, other.mu2)
            and self.names == other.names
            and all(np.array_equal(self.arrays[n], other.arrays[n]) for n in self.names)
        )

    def max_abs_difference(self, other: "ModelParams") -> float:
        return float(np.max(np.abs(self.flat() - other.flat())))

    def norms(self, prefix: str = "") -> Tuple[float, int]:
        """(L2 norm, entry count) over parameters whose name starts with ``prefix``."""
        selected = [a for n, a in self.arrays.items() if n.startswith(prefix)]
        if not selected:
            raise KeyError(f"no parameters start with {prefix!r}")
        flat = np.concatenate([a.reshape(-1) for a in selected])
        return float(np.linalg.norm(flat)), int(flat.size)


def init_params(
    d: int,
    hidden: int,
    heads: int,
    seed: int,
    mu1: float = 1.0,
    mu2: float = 1.0,
) -> ModelParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, rho1 = rho2 = 1.

    Raises:
        ValueError: If H is odd or heads does not divide H
    """
    shapes = parameter_shapes(d, hidden, heads)
    rng = np.random.default_rng(seed)
    arrays: Dict[str, np.ndarray] = {}
    for name, (shape, fan_in) in shapes.items():
        if name in UNCERTAINTY_NAMES:
            arrays[name] = np.array(1.0)
            continue
        bound = 1.0 / np.sqrt(fan_in)
        arrays[name] = rng.uniform(-bound, bound, size=shape)
    params = ModelParams(d=d, hidden=hidden, heads=heads, arrays=arrays, mu1=mu1, mu2=mu2, seed=seed)
    logger.debug(f"Initialized {params.num_parameters} parameters (d={d}, H={hidden}, heads={heads})")
    return params
