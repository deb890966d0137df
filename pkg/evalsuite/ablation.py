"""Cumulative robustness-term sweep evaluated under input noise."""

import csv
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from data.dataset import Dataset
from evalsuite.perturbation import input_perturb_eval
from losses.robustness import TERMS, LossWeights
from model.params import ModelParams
from trainer.training import TrainConfig, secure_finetune
from utils.logger_config import get_logger

logger = get_logger("ablation")

PathLike = Union[str, Path]

ABLATION_ORDER = ("cps", "spd", "clm", "sld")
TERM_LABELS = {"cps": "L_cps", "spd": "L_spd", "clm": "L_clm", "sld": "L_sld"}
ABLATION_COLUMNS = ["configuration", "terms", "sigma", "ap_mean", "ap_std", "mtta_mean", "mtta_std", "seeds"]


def cumulative_configs(order: Sequence[str] = ABLATION_ORDER) -> List[Tuple[str, ...]]:
    """Task loss alone, then one more term at a time: (), (cps,), (cps, spd), ..."""
    unknown = set(order) - set(TERMS)
    if unknown:
        raise ValueError(f"unknown robustness terms {sorted(unknown)}")
    return [tuple(order[:k]) for k in range(len(order) + 1)]


def config_label(terms: Sequence[str]) -> str:
    return " + ".join(["L_task"] + [TERM_LABELS[t] for t in terms])


@dataclass(frozen=True)
class AblationRow:
    configuration: str
    terms: Tuple[str, ...]
    sigma: float
    ap_mean: float
    ap_std: float
    mtta_mean: float
    mtta_std: float
    seeds: int

    def as_row(self) -> Dict[str, Any]:
        row = asdict(self)
        row["terms"] = "+".join(self.terms) or "none"
        return row


@dataclass
class AblationTable:
    """One row per configuration, in sweep order."""

    rows: List[AblationRow] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    def write_csv(self, path: PathLike) -> Path:
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        with target.open("w", newline="") as handle:
            writer = csv.DictWriter(handle, fieldnames=ABLATION_COLUMNS)
            writer.writeheader()
            for row in self.rows:
                writer.writerow(row.as_row())
        return target

    def write_json(self, path: PathLike) -> Path:
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(json.dumps({"rows": [asdict(r) for r in self.rows]}, indent=2))
        return target


def _weights_for(terms: Sequence[str], base: LossWeights) -> LossWeights:
    lambdas = {lam_field: base.coefficient(term) for term, (lam_field, _) in TERMS.items()}
    return LossWeights.only(*terms, **lambdas)


def ablation_run(
    baseline: ModelParams,
    train_dataset: Dataset,
    test_dataset: Dataset,
    cfg: TrainConfig,
    configs: Optional[Sequence[Sequence[str]]] = None,
    sigma: float = 0.2,
    seeds: Sequence[int] = (0, 1, 2),
) -> AblationTable:
    """Fine-tune once per configuration and report AP/mTTA under IP(sigma).

    A configuration with no terms is the baseline itself, evaluated without
    fine-tuning.

    Args:
        baseline: Trained baseline; also the frozen reference of every run
        train_dataset: Fine-tuning videos
        test_dataset: Evaluation videos
        cfg: Fine-tuning settings; its lambdas are kept, its flags replaced
        configs: Enabled-term lists, cumulative order by default
        sigma: Input noise std of the evaluation
        seeds: Noise draws per configuration

    Raises:
        ValueError: If ``configs`` is empty or names an unknown term
    """
    configs = [tuple(c) for c in (configs if configs is not None else cumulative_configs())]
    if not configs:
        raise ValueError("ablation needs at least one configuration")
    for terms in configs:
        unknown = set(terms) - set(TERMS)
        if unknown:
            raise ValueError(f"unknown robustness terms {sorted(unknown)}")

    table = AblationTable()
    for index, terms in enumerate(configs, start=1):
        label = config_label(terms)
        logger.info(f"🔍 Ablation {index}/{len(configs)}: {label}")
        if terms:
            run_cfg = replace(cfg, weights=_weights_for(terms, cfg.weights))
            params, _ = secure_finetune(baseline, train_dataset, run_cfg)
        else:
            params = baseline
        row = input_perturb_eval(params, test_dataset, sigma, seeds, model=label)
        table.rows.append(
            AblationRow(
                configuration=label,
                terms=terms,
                sigma=sigma,
                ap_mean=row.ap_mean,
                ap_std=row.ap_std,
                mtta_mean=row.mtta_mean,
                mtta_std=row.mtta_std,
                seeds=row.seeds,
            )
        )
    logger.info(f"✅ Ablation finished: {len(table)} configurations")
    return table
