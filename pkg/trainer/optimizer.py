"""Adam with bias correction, functional over ModelParams."""

from dataclasses import dataclass
from typing import Dict, Mapping, Tuple

import numpy as np

from model.crash import UNCERTAINTY_NAMES
from model.params import ModelParams

RHO_FLOOR = 1e-4


@dataclass
class AdamState:
    """First/second moment estimates and the number of completed steps."""

    step: int
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]

    @classmethod
    def zeros(cls, params: ModelParams) -> "AdamState":
        return cls(
            step=0,
            m={name: np.zeros_like(a) for name, a in params.arrays.items()},
            v={name: np.zeros_like(a) for name, a in params.arrays.items()},
        )


def adam_update(
    params: ModelParams,
    gradients: Mapping[str, np.ndarray],
    state: AdamState,
    learning_rate: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> Tuple[ModelParams, AdamState]:
    """One bias-corrected Adam step; rho1/rho2 are clamped to at least 1e-4 afterwards.

    Args:
        params: Current parameters (left untouched)
        gradients: Gradient per parameter name; missing names count as zero
        state: Moments from the previous step
        learning_rate: Step size

    Returns:
        Tuple of (updated parameters, updated state)

    Raises:
        ValueError: If a gradient or moment shape disagrees with its parameter
    """
    step = state.step + 1
    new_m: Dict[str, np.ndarray] = {}
    new_v: Dict[str, np.ndarray] = {}
    updated: Dict[str, np.ndarray] = {}
    for name, value in params.arrays.items():
        grad = np.asarray(gradients.get(name, np.zeros_like(value)), dtype=np.float64)
        if grad.shape != value.shape or state.m[name].shape != value.shape:
            raise ValueError(f"adam_update: shape mismatch for {name}: {grad.shape} vs {value.shape}")
        m = beta1 * state.m[name] + (1.0 - beta1) * grad
        v = beta2 * state.v[name] + (1.0 - beta2) * grad * grad
        m_hat = m / (1.0 - beta1**step)
        v_hat = v / (1.0 - beta2**step)
        new_value = value - learning_rate * m_hat / (np.sqrt(v_hat) + eps)
        if name in UNCERTAINTY_NAMES:
            new_value = np.maximum(new_value, RHO_FLOOR)
        new_m[name], new_v[name], updated[name] = m, v, new_value
    return params.with_arrays(updated), AdamState(step=step, m=new_m, v=new_v)


def clip_gradients(
    gradients: Mapping[str, np.ndarray], max_norm: float
) -> Tuple[Dict[str, np.ndarray], float]:
    """Rescale all gradients together when their global L2 norm exceeds ``max_norm``.

    Returns:
        Tuple of (possibly rescaled gradients, norm before clipping)
    """
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in gradients.values())))
    if max_norm > 0 and norm > max_norm:
        factor = max_norm / norm
        return {name: g * factor for name, g in gradients.items()}, norm
    return dict(gradients), norm
