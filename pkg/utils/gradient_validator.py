"""Finite-difference validation of every gradient the training loop relies on."""

import json
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np

from adversary.pgd import stability_objective
from data.dataset import FeatureBatch
from data.synthetic import SyntheticConfig, generate_synthetic
from losses.robustness import robustness_losses
from losses.task import anticipation_loss, enhancement_loss, task_loss
from model.crash import forward_batch
from model.params import ModelParams, init_params
from numerics.gradcheck import (
    CoordinateCheck,
    FiniteDiffReport,
    check_named_gradients,
    finite_diff_check,
    relative_error,
    sample_coordinates,
)
from numerics.tensor import Tensor, exp, log, matmul, mean, sigmoid, softmax, square, sum_, tanh
from utils.experiment_presets import ExperimentPresets
from utils.logger_config import get_logger

NamedLoss = Callable[[Dict[str, Tensor]], Tensor]


class GradientCheckFailure(RuntimeError):
    """Raised when a recorded gradient disagrees with finite differences."""


class GradientValidator:
    """Checks recorded gradients against central differences on a tiny seeded fixture."""

    def __init__(
        self,
        seed: int = 0,
        tolerance: float = 1e-4,
        coordinates: int = 10,
        seeds: int = 5,
        step: float = 1e-5,
    ) -> None:
        """Initialize validator with the smoke-preset shapes.

        Args:
            seed: First fixture seed; seeds ``seed .. seed + seeds - 1`` are checked
            tolerance: Maximum relative error per coordinate
            coordinates: Parameter coordinates sampled per seed and loss
            seeds: Number of fixture seeds
            step: Central-difference half width
        """
        self.logger = get_logger("gradient_validator")
        self.seed = seed
        self.tolerance = tolerance
        self.coordinates = coordinates
        self.seeds = seeds
        self.step = step
        self.reports: Dict[str, List[FiniteDiffReport]] = {}
        preset = ExperimentPresets.get_smoke()
        data = dict(preset["data"])
        data.pop("test_videos")
        self.data_config = SyntheticConfig(**data)
        self.hidden = preset["train"]["hidden"]
        self.heads = preset["train"]["heads"]

    def _fixture(self, seed: int) -> Tuple[ModelParams, ModelParams, FeatureBatch]:
        dataset = generate_synthetic(self.data_config, seed)
        batch = dataset.batch(range(4))
        params = init_params(dataset.d, self.hidden, self.heads, seed, mu1=1.0, mu2=1.0)
        # rho away from 1 so the uncertainty terms have non-trivial gradients
        params = params.with_arrays({"rho1": np.array(1.3), "rho2": np.array(0.8)})
        reference = init_params(dataset.d, self.hidden, self.heads, seed + 1000)
        return params, reference, batch

    def _record(self, name: str, reports: List[FiniteDiffReport]) -> Tuple[bool, str]:
        self.reports[name] = reports
        failures = [c for r in reports for c in r.failures]
        worst = max((r.max_rel_error for r in reports), default=0.0)
        checked = sum(len(r.checks) for r in reports)
        if failures:
            first = failures[0]
            self.logger.error(
                f"❌ {name}: {len(failures)}/{checked} coordinates failed "
                f"(first {first.label}: analytic {first.analytic:.6e} vs numeric {first.numeric:.6e})"
            )
            return False, f"{len(failures)} of {checked} coordinates exceed tolerance {self.tolerance}"
        self.logger.info(f"✅ {name}: {checked} coordinates, max relative error {worst:.2e}")
        return True, f"{checked} coordinates within {self.tolerance} (max {worst:.2e})"

    def _check_named(self, name: str, build: Callable[[int], Tuple[NamedLoss, Dict[str, np.ndarray]]]) -> Tuple[bool, str]:
        reports = []
        for offset in range(self.seeds):
            seed = self.seed + offset
            loss, arrays = build(seed)
            coords = sample_coordinates(arrays, self.coordinates, np.random.default_rng(seed))
            reports.append(check_named_gradients(loss, arrays, coords, self.step, self.tolerance))
        return self._record(name, reports)

    def validate_primitives(self) -> Tuple[bool, str]:
        """Composite of the smooth primitive operations.

        Returns:
            Tuple of (success: bool, message: str)
        """
        self.logger.info("Validating primitive operations...")
        reports = []
        for offset in range(self.seeds):
            rng = np.random.default_rng(self.seed + offset)
            w = rng.standard_normal((4, 3))

            def composite(x: Tensor) -> Tensor:
                hidden = tanh(matmul(x, w))
                weights = softmax(hidden, axis=-1)
                gated = sigmoid(hidden) * weights
                return mean(square(gated)) + sum_(exp(hidden * 0.1)) + mean(log(sigmoid(hidden)))

            point = rng.standard_normal((2, 4))
            reports.append(finite_diff_check(composite, point, self.step, self.tolerance))
        return self._record("primitives", reports)

    def validate_task_loss(self) -> Tuple[bool, str]:
        """Uncertainty-weighted task loss with respect to model parameters and rho.

        Returns:
            Tuple of (success: bool, message: str)
        """
        self.logger.info("Validating task loss gradients...")

        def build(seed: int) -> Tuple[NamedLoss, Dict[str, np.ndarray]]:
            params, _, batch = self._fixture(seed)

            def loss(tensors: Dict[str, Tensor]) -> Tensor:
                trace = forward_batch(batch.obj, batch.ctx, params, tensors)
                l_a = anticipation_loss(trace.p, batch.labels)
                l_e = enhancement_loss(trace.p_e, batch.labels)
                return task_loss(l_a, l_e, tensors["rho1"], tensors["rho2"], params.mu1, params.mu2)

            return loss, dict(params.arrays)

        return self._check_named("task_loss", build)

    def validate_robustness_losses(self) -> Tuple[bool, str]:
        """Each consistency and stability term with respect to model parameters.

        Returns:
            Tuple of (success: bool, message: str)
        """
        self.logger.info("Validating robustness loss gradients...")
        results = []
        for index, term in enumerate(("cps", "spd", "clm", "sld")):

            def build(seed: int, index: int = index) -> Tuple[NamedLoss, Dict[str, np.ndarray]]:
                params, reference, batch = self._fixture(seed)
                rng = np.random.default_rng([seed, 7])
                p_obj = batch.obj + 0.05 * rng.standard_normal(batch.obj.shape)
                p_ctx = batch.ctx + 0.05 * rng.standard_normal(batch.ctx.shape)

                def loss(tensors: Dict[str, Tensor]) -> Tensor:
                    terms = robustness_losses(params, reference, batch.obj, batch.ctx, p_obj, p_ctx, tensors)
                    return terms[index]

                return loss, dict(params.arrays)

            results.append(self._check_named(f"L_{term}", build))
        ok = all(r[0] for r in results)
        return ok, "; ".join(msg for _, msg in results)

    def validate_input_gradient(self) -> Tuple[bool, str]:
        """Gradient of the attack objective with respect to the input offsets.

        Returns:
            Tuple of (success: bool, message: str)
        """
        self.logger.info("Validating attack objective gradients...")
        reports = []
        for offset in range(self.seeds):
            seed = self.seed + offset
            params, _, batch = self._fixture(seed)
            objective = stability_objective(batch.obj, batch.ctx, params)
            B = batch.obj.shape[0]
            rng = np.random.default_rng(seed)
            width = int(np.prod(batch.obj.shape[1:])) + int(np.prod(batch.ctx.shape[1:]))
            delta = 0.05 * rng.standard_normal((B, width))

            _, analytic = objective(delta)
            coords = rng.choice(delta.size, size=min(self.coordinates, delta.size), replace=False)
            report = FiniteDiffReport(step=self.step, tolerance=self.tolerance)
            for flat_index in coords:
                row, col = np.unravel_index(int(flat_index), delta.shape)
                shifted = delta.copy()
                shifted[row, col] += self.step
                f_plus, _ = objective(shifted)
                shifted[row, col] = delta[row, col] - self.step
                f_minus, _ = objective(shifted)
                # the objective reports the batch mean; its gradient is that of the sum
                numeric = (f_plus - f_minus) / (2.0 * self.step) * B
                err = relative_error(float(analytic[row, col]), numeric)
                report.checks.append(
                    CoordinateCheck(
                        label=f"delta[{row},{col}]",
                        analytic=float(analytic[row, col]),
                        numeric=numeric,
                        rel_error=err,
                        kink_suspect=False,
                        passed=err <= self.tolerance,
                    )
                )
            reports.append(report)
        return self._record("attack_objective", reports)

    def full_validation(self, raise_on_failure: bool = False) -> bool:
        """Run every gradient validation.

        Args:
            raise_on_failure: Raise GradientCheckFailure instead of returning False

        Returns:
            True if all validations pass, False otherwise
        """
        self.logger.info("🔍 Starting full gradient validation...")
        checks = [
            ("primitives", self.validate_primitives),
            ("task loss", self.validate_task_loss),
            ("robustness losses", self.validate_robustness_losses),
            ("attack objective", self.validate_input_gradient),
        ]
        failed = []
        for label, check in checks:
            ok, message = check()
            if not ok:
                self.logger.error(f"Gradient validation failed for {label}: {message}")
                failed.append(label)
        if failed:
            if raise_on_failure:
                raise GradientCheckFailure(f"gradient checks failed: {', '.join(failed)}")
            return False
        self.logger.info("✅ Gradient validation completed successfully")
        return True

    def write_report(self, path: Union[str, Path]) -> Path:
        """Per-check summaries as JSON."""
        summary = {
            name: {
                "coordinates": sum(len(r.checks) for r in reports),
                "failures": [c.label for r in reports for c in r.failures],
                "max_rel_error": max((r.max_rel_error for r in reports), default=0.0),
                "tolerance": self.tolerance,
            }
            for name, reports in self.reports.items()
        }
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(json.dumps(summary, indent=2, sort_keys=True))
        return target


def validate_gradients(seed: int = 0, tolerance: float = 1e-4, validator: Optional[GradientValidator] = None) -> bool:
    """Convenience function to run the full gradient validation.

    Returns:
        True if validation passes, False otherwise
    """
    return (validator or GradientValidator(seed=seed, tolerance=tolerance)).full_validation()
