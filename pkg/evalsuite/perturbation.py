"""Gaussian input-feature (IP) and second-layer GRU parameter (LP) perturbation benchmarks."""

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from data.dataset import Dataset
from evalsuite.metrics import MetricResult, compute_metrics, predict
from model.params import ModelParams
from utils.logger_config import get_logger

logger = get_logger("evalsuite")

PathLike = Union[str, Path]

LATENT_PREFIX = "gru2."
BENCH_COLUMNS = [
    "model",
    "condition",
    "sigma",
    "ap_mean",
    "ap_std",
    "mtta_mean",
    "mtta_std",
    "seeds",
]


@dataclass(frozen=True)
class BenchRow:
    """Metrics of one model under one condition, aggregated over seeds."""

    model: str
    condition: str
    sigma: float
    ap_mean: float
    ap_std: float
    mtta_mean: float
    mtta_std: float
    seeds: int
    ap_per_seed: Tuple[float, ...] = field(default=())
    mtta_per_seed: Tuple[float, ...] = field(default=())

    @classmethod
    def from_results(cls, model: str, condition: str, sigma: float, results: Sequence[MetricResult]) -> "BenchRow":
        ap = np.array([r.ap for r in results])
        tta = np.array([r.mtta_seconds for r in results])
        return cls(
            model=model,
            condition=condition,
            sigma=sigma,
            ap_mean=float(ap.mean()),
            ap_std=float(ap.std()),
            mtta_mean=float(tta.mean()),
            mtta_std=float(tta.std()),
            seeds=len(results),
            ap_per_seed=tuple(float(a) for a in ap),
            mtta_per_seed=tuple(float(t) for t in tta),
        )

    def as_row(self) -> Dict[str, Any]:
        return {k: getattr(self, k) for k in BENCH_COLUMNS}


@dataclass
class BenchReport:
    """Rows of a benchmark; every model in the report has a Clean row."""

    rows: List[BenchRow] = field(default_factory=list)

    @property
    def models(self) -> List[str]:
        return list(dict.fromkeys(r.model for r in self.rows))

    @property
    def conditions(self) -> List[str]:
        return list(dict.fromkeys(r.condition for r in self.rows))

    def get(self, model: str, condition: str) -> BenchRow:
        for row in self.rows:
            if row.model == model and row.condition == condition:
                return row
        raise KeyError(f"no row for model {model!r} under {condition!r}")

    def validate(self) -> None:
        for model in self.models:
            self.get(model, "Clean")

    def extend(self, other: "BenchReport") -> None:
        self.rows.extend(other.rows)

    def wide_table(self) -> List[Dict[str, Any]]:
        """One row per model with ``<condition> AP`` / ``<condition> mTTA`` columns."""
        table = []
        for model in self.models:
            entry: Dict[str, Any] = {"model": model}
            for row in self.rows:
                if row.model == model:
                    entry[f"{row.condition} AP"] = row.ap_mean
                    entry[f"{row.condition} mTTA"] = row.mtta_mean
            table.append(entry)
        return table

    def write_csv(self, path: PathLike) -> Path:
        self.validate()
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        with target.open("w", newline="") as handle:
            writer = csv.DictWriter(handle, fieldnames=BENCH_COLUMNS)
            writer.writeheader()
            for row in self.rows:
                writer.writerow(row.as_row())
        return target

    def write_wide_csv(self, path: PathLike) -> Path:
        table = self.wide_table()
        columns = ["model"] + [f"{c} {m}" for c in self.conditions for m in ("AP", "mTTA")]
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        with target.open("w", newline="") as handle:
            writer = csv.DictWriter(handle, fieldnames=columns, restval="")
            writer.writeheader()
            writer.writerows(table)
        return target

    def write_json(self, path: PathLike) -> Path:
        self.validate()
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(json.dumps({"rows": [asdict(r) for r in self.rows]}, indent=2))
        return target

    @classmethod
    def read_json(cls, path: PathLike) -> "BenchReport":
        payload = json.loads(Path(path).read_text())
        rows = []
        for raw in payload["rows"]:
            raw["ap_per_seed"] = tuple(raw.get("ap_per_seed", ()))
            raw["mtta_per_seed"] = tuple(raw.get("mtta_per_seed", ()))
            rows.append(BenchRow(**raw))
        return cls(rows=rows)


def _check_sigma(sigma: float) -> None:
    if not sigma >= 0.0:
        raise ValueError(f"sigma must be >= 0, got {sigma!r}")


def clean_eval(params: ModelParams, dataset: Dataset, model: str = "model") -> BenchRow:
    result = compute_metrics(predict(params, dataset), dataset.labels)
    logger.info(f"[{model}] Clean: AP={result.ap:.4f} mTTA={result.mtta_seconds:.3f}s")
    return BenchRow.from_results(model, "Clean", 0.0, [result])


def noisy_features(
    dataset: Dataset, sigma: float, seed: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Dataset features plus i.i.d. N(0, sigma^2) noise on every value (object, then context draw)."""
    obj, ctx = dataset.stacked()
    if sigma == 0.0:
        return obj, ctx
    rng = np.random.default_rng(seed)
    return obj + sigma * rng.standard_normal(obj.shape), ctx + sigma * rng.standard_normal(ctx.shape)


def input_perturb_eval(
    params: ModelParams,
    dataset: Dataset,
    sigma: float,
    seeds: Sequence[int],
    model: str = "model",
) -> BenchRow:
    """AP/mTTA with Gaussian noise of std ``sigma`` added to the input features, one draw per seed."""
    _check_sigma(sigma)
    results = []
    for seed in seeds:
        obj, ctx = noisy_features(dataset, sigma, seed)
        results.append(compute_metrics(predict(params, dataset, obj, ctx), dataset.labels))
    row = BenchRow.from_results(model, f"IP({sigma:g})", sigma, results)
    logger.info(f"[{model}] {row.condition}: AP={row.ap_mean:.4f}±{row.ap_std:.4f} mTTA={row.mtta_mean:.3f}s")
    return row


def perturb_latent_params(params: ModelParams, sigma: float, seed: int) -> ModelParams:
    """Copy of ``params`` with N(0, sigma^2) noise on every second-layer GRU weight and bias."""
    if sigma == 0.0:
        return params
    rng = np.random.default_rng(seed)
    noisy = {
        name: array + sigma * rng.standard_normal(array.shape)
        for name, array in params.arrays.items()
        if name.startswith(LATENT_PREFIX)
    }
    return params.with_arrays(noisy)


def latent_perturb_eval(
    params: ModelParams,
    dataset: Dataset,
    sigma: float,
    seeds: Sequence[int],
    model: str = "model",
) -> BenchRow:
    """AP/mTTA with Gaussian noise on the second GRU layer's parameters, one draw per seed.

    Raises:
        RuntimeError: If the original parameters changed during the benchmark
    """
    _check_sigma(sigma)
    before = params.checksum()
    results = []
    for seed in seeds:
        noisy = perturb_latent_params(params, sigma, seed)
        results.append(compute_metrics(predict(noisy, dataset), dataset.labels))
    if params.checksum() != before:
        raise RuntimeError("latent perturbation leaked into the evaluated parameters")
    row = BenchRow.from_results(model, f"LP({sigma:g})", sigma, results)
    logger.info(f"[{model}] {row.condition}: AP={row.ap_mean:.4f}±{row.ap_std:.4f} mTTA={row.mtta_mean:.3f}s")
    return row


def run_benchmark(
    params: ModelParams,
    dataset: Dataset,
    sigmas: Sequence[float],
    seeds: Sequence[int],
    model: str = "model",
    lp_sigmas: Optional[Sequence[float]] = None,
) -> BenchReport:
    """Clean row, then IP(sigma) rows, then LP(sigma) rows (``lp_sigmas`` defaults to ``sigmas``)."""
    report = BenchReport(rows=[clean_eval(params, dataset, model)])
    for sigma in sigmas:
        report.rows.append(input_perturb_eval(params, dataset, sigma, seeds, model))
    for sigma in (sigmas if lp_sigmas is None else lp_sigmas):
        report.rows.append(latent_perturb_eval(params, dataset, sigma, seeds, model))
    return report


def trajectories(
    params: ModelParams,
    dataset: Dataset,
    video_ids: Sequence[str],
    sigma: float,
    seed: int,
) -> Dict[str, Dict[str, Any]]:
    """Clean and IP(sigma) frame probabilities for selected videos.

    Raises:
        KeyError: If a video id is not in the dataset
    """
    index = {seq.video_id: i for i, (seq, _) in enumerate(dataset)}
    missing = [v for v in video_ids if v not in index]
    if missing:
        raise KeyError(f"unknown video ids {missing}")
    clean = predict(params, dataset)
    obj, ctx = noisy_features(dataset, sigma, seed)
    noisy = predict(params, dataset, obj, ctx)
    out: Dict[str, Dict[str, Any]] = {}
    for vid in video_ids:
        i = index[vid]
        label = dataset.videos[i][1]
        out[vid] = {
            "accident": label.accident,
            "tau": label.tau,
            "fps": label.fps,
            "sigma": sigma,
            "clean": clean[i].tolist(),
            "perturbed": noisy[i].tolist(),
        }
    return out
