"""Central finite-difference verification of recorded gradients."""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from numerics.tensor import ComputationRecord, Tensor, backward

# denominators below this are treated as absolute error
RELATIVE_FLOOR = 1e-7


@dataclass(frozen=True)
class CoordinateCheck:
    """Analytic vs numeric derivative for one coordinate."""

    label: str
    analytic: float
    numeric: float
    rel_error: float
    kink_suspect: bool
    passed: bool


@dataclass
class FiniteDiffReport:
    """Per-coordinate finite-difference comparison."""

    step: float
    tolerance: float
    checks: List[CoordinateCheck] = field(default_factory=list)

    @property
    def max_rel_error(self) -> float:
        return max((c.rel_error for c in self.checks), default=0.0)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> List[CoordinateCheck]:
        return [c for c in self.checks if not c.passed]


def relative_error(analytic: float, numeric: float) -> float:
    denom = max(abs(analytic), abs(numeric), RELATIVE_FLOOR)
    return abs(analytic - numeric) / denom


def _compare(
    label: str,
    analytic: float,
    f_plus: float,
    f_minus: float,
    f_center: float,
    step: float,
    tolerance: float,
    kink_tolerance: float,
) -> CoordinateCheck:
    numeric = (f_plus - f_minus) / (2.0 * step)
    forward = (f_plus - f_center) / step
    backward_diff = (f_center - f_minus) / step
    # one-sided slopes disagree at kinks even when the central difference looks fine;
    # on smooth functions they differ only by O(h * curvature)
    kink = abs(forward - backward_diff) > kink_tolerance * max(1.0, abs(forward), abs(backward_diff))
    err = relative_error(analytic, numeric)
    return CoordinateCheck(
        label=label,
        analytic=analytic,
        numeric=numeric,
        rel_error=err,
        kink_suspect=kink,
        passed=err <= tolerance and not kink,
    )


def finite_diff_check(
    function: Callable[[Tensor], Tensor],
    point: Union[np.ndarray, Sequence[float], Tensor],
    step: float = 1e-5,
    tolerance: float = 1e-6,
    kink_tolerance: float = 1e-2,
    coordinates: Optional[Sequence[int]] = None,
) -> FiniteDiffReport:
    """Compare the recorded gradient of a scalar function against central differences.

    Args:
        function: Maps a Tensor to a scalar Tensor
        point: Where to evaluate
        step: Central-difference half width h
        tolerance: Maximum relative error for a coordinate to pass
        kink_tolerance: Relative disagreement of one-sided slopes that flags a kink
        coordinates: Flat indices to check (all by default)

    Returns:
        Report with one entry per checked coordinate
    """
    if step <= 0 or tolerance <= 0:
        raise ValueError("step and tolerance must be positive")
    base = np.array(point.data if isinstance(point, Tensor) else point, dtype=np.float64)

    with ComputationRecord() as record:
        x = Tensor(base, requires_grad=True)
        y = function(x)
    grads = backward(record, y)
    analytic = grads.get(x, np.zeros_like(base)).reshape(-1)

    def evaluate(values: np.ndarray) -> float:
        return function(Tensor(values)).item()

    f_center = evaluate(base)
    flat = base.reshape(-1)
    indices = range(flat.size) if coordinates is None else coordinates
    report = FiniteDiffReport(step=step, tolerance=tolerance)
    for i in indices:
        shifted = flat.copy()
        shifted[i] += step
        f_plus = evaluate(shifted.reshape(base.shape))
        shifted[i] = flat[i] - step
        f_minus = evaluate(shifted.reshape(base.shape))
        report.checks.append(
            _compare(
                str(i), float(analytic[i]), f_plus, f_minus, f_center, step, tolerance, kink_tolerance
            )
        )
    return report


def check_named_gradients(
    function: Callable[[Dict[str, Tensor]], Tensor],
    arrays: Mapping[str, np.ndarray],
    coordinates: Sequence[Tuple[str, int]],
    step: float = 1e-5,
    tolerance: float = 1e-4,
    kink_tolerance: float = 1e-2,
) -> FiniteDiffReport:
    """Finite-difference check over selected coordinates of a named parameter set.

    Args:
        function: Maps a name -> Tensor dictionary to a scalar Tensor
        arrays: Parameter values by name
        coordinates: (name, flat index) pairs to perturb

    Returns:
        Report labelled ``name[index]``
    """
    with ComputationRecord() as record:
        tensors = {k: Tensor(v, requires_grad=True) for k, v in arrays.items()}
        y = function(tensors)
    grads = backward(record, y)

    def evaluate(override: Mapping[str, np.ndarray]) -> float:
        return function({k: Tensor(v) for k, v in override.items()}).item()

    f_center = evaluate(arrays)
    report = FiniteDiffReport(step=step, tolerance=tolerance)
    for name, index in coordinates:
        grad = grads.get(tensors[name])
        analytic = 0.0 if grad is None else float(grad.reshape(-1)[index])
        values = dict(arrays)
        flat = np.array(arrays[name], dtype=np.float64).reshape(-1)

        shifted = flat.copy()
        shifted[index] += step
        values[name] = shifted.reshape(np.shape(arrays[name]))
        f_plus = evaluate(values)
        shifted[index] = flat[index] - step
        values[name] = shifted.reshape(np.shape(arrays[name]))
        f_minus = evaluate(values)
        report.checks.append(
            _compare(
                f"{name}[{index}]", analytic, f_plus, f_minus, f_center, step, tolerance, kink_tolerance
            )
        )
    return report


def sample_coordinates(
    arrays: Mapping[str, np.ndarray], count: int, rng: np.random.Generator
) -> List[Tuple[str, int]]:
    """Draw ``count`` distinct (name, flat index) pairs uniformly over all entries."""
    names = list(arrays)
    sizes = np.array([np.size(arrays[n]) for n in names])
    total = int(sizes.sum())
    picks = rng.choice(total, size=min(count, total), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    coords = []
    for flat in sorted(int(p) for p in picks):
        slot = int(np.searchsorted(offsets, flat, side="right")) - 1
        coords.append((names[slot], flat - int(offsets[slot])))
    return coords
