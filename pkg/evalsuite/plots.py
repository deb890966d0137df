"""SVG figures: probability trajectories, training loss curves, precision-recall sweep."""

from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from evalsuite.metrics import MetricResult  # noqa: E402
from trainer.run_log import RunLog  # noqa: E402
from utils.logger_config import get_logger  # noqa: E402

logger = get_logger("plots")

PathLike = Union[str, Path]

# fixed ids and no date stamp keep rerendered files byte-identical
matplotlib.rcParams["svg.hashsalt"] = "secure-anticipation"
SVG_METADATA = {"Date": None, "Creator": None}

CURVE_COLUMNS = ("L_total", "L_task", "L_cps", "L_spd", "L_clm", "L_sld")


def _save(path: PathLike) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    plt.tight_layout()
    plt.savefig(target, format="svg", metadata=SVG_METADATA)
    plt.close()
    logger.info(f"💾 Figure written: {target}")
    return target


def plot_trajectories(trajectories: Mapping[str, Mapping[str, Any]], path: PathLike) -> Path:
    """One panel per video: clean and perturbed p_t, with the accident frame marked.

    Args:
        trajectories: video id -> {"clean", "perturbed", "sigma", "accident", "tau", "fps"},
            as produced by ``evalsuite.perturbation.trajectories``
        path: Target SVG file

    Raises:
        ValueError: If there is nothing to plot
    """
    if not trajectories:
        raise ValueError("no trajectories to plot")
    count = len(trajectories)
    plt.figure(figsize=(6, 2.6 * count))
    for i, (video_id, entry) in enumerate(trajectories.items(), start=1):
        clean = np.asarray(entry["clean"])
        frames = np.arange(1, clean.size + 1)
        plt.subplot(count, 1, i)
        plt.plot(frames, clean, label="clean", color="tab:blue")
        plt.plot(frames, np.asarray(entry["perturbed"]), label=f"IP({entry['sigma']:g})", color="tab:red")
        if entry.get("accident"):
            plt.axvline(entry["tau"], color="black", linestyle="--", linewidth=1, label="accident")
        plt.ylim(0.0, 1.05)
        plt.xlabel("Frame")
        plt.ylabel("p_t")
        plt.title(video_id)
        plt.legend(loc="upper left")
    return _save(path)


def plot_loss_curves(log: RunLog, path: PathLike, columns: Sequence[str] = CURVE_COLUMNS) -> Path:
    """Per-step losses on a log scale; all-zero columns (inactive terms) are skipped."""
    if not log.rows:
        raise ValueError(f"run log '{log.phase}' has no rows")
    steps = np.arange(1, len(log.rows) + 1)
    plt.figure(figsize=(8, 4))
    for name in columns:
        values = log.column(name)
        if np.all(values == 0.0):
            continue
        plt.plot(steps, np.abs(values), label=name)
    plt.yscale("log")
    plt.xlabel("Step")
    plt.ylabel("Loss")
    plt.title(f"Training loss ({log.phase})")
    plt.legend()
    return _save(path)


def plot_precision_recall(results: Dict[str, MetricResult], path: PathLike, title: Optional[str] = None) -> Path:
    plt.figure(figsize=(5, 4))
    for name, result in results.items():
        recall = np.concatenate([[0.0], result.recall])
        precision = np.concatenate([[1.0], result.precision])
        plt.step(recall, precision, where="pre", label=f"{name} (AP={result.ap:.3f})")
    plt.xlabel("Recall")
    plt.ylabel("Precision")
    plt.ylim([0.0, 1.05])
    plt.xlim([0.0, 1.0])
    plt.title(title or "Video-level precision-recall")
    plt.legend()
    return _save(path)
