"""Command-line entry point: data generation, training, benchmarks, certification and reports.

Settings are resolved per command as flags > ``--config`` JSON > ``--preset`` >
environment. Every command writes into its own run directory
``<output dir>/<command>-<UTC timestamp>-seed<seed>`` together with ``run.log``
and ``manifest.json``.

Exit codes: 0 success, 2 usage, 3 I/O or file format, 4 numerical divergence,
5 verification failure.
"""

import argparse
import json
import logging
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

from adversary.pgd import MODES, NORM_KINDS, STEP_RULES, PgdConfig
from cli.manifest import RunManifest
from data.dataset import Dataset
from data.secf import MANIFEST_NAME, DatasetFormatError, load_dataset, save_dataset
from data.synthetic import SyntheticConfig, generate_synthetic
from evalsuite.ablation import ABLATION_ORDER, ablation_run, cumulative_configs
from evalsuite.certification import CERTIFIED_PGD, certify_secure
from evalsuite.perturbation import BenchReport, run_benchmark, trajectories
from evalsuite.plots import plot_loss_curves, plot_trajectories
from losses.robustness import TERMS, LossWeights
from model.checkpoint import CheckpointFormatError, load_checkpoint, save_checkpoint
from model.params import ModelParams
from numerics.tensor import DomainError, ShapeError
from trainer.run_log import RunLog
from trainer.training import DivergenceError, TrainConfig, secure_finetune, train_baseline
from utils.env_loader import config as env_config
from utils.experiment_presets import ARTIFACT_NAMES, ExperimentPresets
from utils.gradient_validator import GradientCheckFailure, GradientValidator
from utils.logger_config import PROJECT_LOGGER, attach_file_handler, get_logger

logger = get_logger("cli")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_DIVERGENCE = 4
EXIT_VERIFICATION = 5

# flag dest -> settings key, per settings section
DATA_FLAGS = {
    "num_videos": "num_videos",
    "test_videos": "test_videos",
    "positive_frac": "positive_fraction",
    "T": "T",
    "n": "n",
    "d": "d",
    "fps": "fps",
    "signal": "signal_strength",
    "noise": "noise_std",
    "ramp_len": "ramp_len",
}
TRAIN_FLAGS = {
    "epochs": "epochs",
    "batch_size": "batch_size",
    "lr": "learning_rate",
    "hidden": "hidden",
    "heads": "heads",
    "grad_clip": "grad_clip",
}
PGD_FLAGS = {
    "epsilon": "epsilon",
    "alpha": "alpha",
    "pgd_steps": "iterations",
    "norm": "norm_kind",
    "pgd_mode": "mode",
    "step_rule": "step_rule",
    "random_start": "random_start",
}
WEIGHT_FLAGS = {lam_field: lam_field for lam_field, _ in TERMS.values()}


class UsageError(ValueError):
    """Raised for flag combinations argparse cannot reject on its own."""


def _float_list(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _term_list(text: str) -> List[str]:
    terms = [part.strip() for part in text.split(",") if part.strip()]
    unknown = [t for t in terms if t not in TERMS]
    if unknown:
        raise argparse.ArgumentTypeError(f"unknown robustness terms {unknown}, choose from {list(TERMS)}")
    return terms


# Parser


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--preset", choices=ExperimentPresets.get_preset_names(), default="full")
    parser.add_argument("--config", type=Path, help="JSON file with data/train/bench/certify sections")
    parser.add_argument("--seed", type=int, help="defaults to SECURE_SEED")
    parser.add_argument("--output-dir", type=Path, help="defaults to SECURE_OUTPUT_DIR")
    parser.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"])


def _add_training(parser: argparse.ArgumentParser, with_eval: bool = True) -> None:
    group = parser.add_argument_group("training")
    group.add_argument("--epochs", type=int)
    group.add_argument("--batch-size", type=int)
    group.add_argument("--lr", type=float)
    group.add_argument("--hidden", type=int)
    group.add_argument("--heads", type=int)
    group.add_argument("--grad-clip", type=float)
    if with_eval:
        group.add_argument("--eval-data", type=Path, help="split evaluated after every epoch")


def _add_pgd(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("attack")
    group.add_argument("--epsilon", type=float)
    group.add_argument("--alpha", type=float)
    group.add_argument("--pgd-steps", type=int)
    group.add_argument("--norm", choices=NORM_KINDS)
    group.add_argument("--pgd-mode", choices=MODES)
    group.add_argument("--step-rule", choices=STEP_RULES)
    group.add_argument("--no-random-start", dest="random_start", action="store_const", const=False)


def _add_weights(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("robustness terms")
    for lam_field in WEIGHT_FLAGS:
        group.add_argument(f"--{lam_field.replace('_', '-')}", dest=lam_field, type=float)
    group.add_argument(
        "--ablation",
        type=_term_list,
        help=f"comma-separated terms to enable, from {','.join(ABLATION_ORDER)}; others are off",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="secure-anticipation",
        description="Robust training and evaluation of accident anticipation models",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen-data", help="write synthetic train/test splits")
    _add_common(gen)
    gen.add_argument("--out", type=Path, help="dataset root (defaults to the run directory)")
    gen.add_argument("--num-videos", type=int)
    gen.add_argument("--test-videos", type=int)
    gen.add_argument("--positive-frac", type=float)
    gen.add_argument("--T", dest="T", type=int)
    gen.add_argument("--n", dest="n", type=int)
    gen.add_argument("--d", dest="d", type=int)
    gen.add_argument("--fps", type=int)
    gen.add_argument("--signal", type=float)
    gen.add_argument("--noise", type=float)
    gen.add_argument("--ramp-len", type=int)

    train = commands.add_parser("train", help="train a baseline on the task loss")
    _add_common(train)
    train.add_argument("--data", type=Path, required=True)
    train.add_argument("--out-checkpoint", type=Path)
    _add_training(train)

    finetune = commands.add_parser("finetune-secure", help="fine-tune a baseline with robustness terms")
    _add_common(finetune)
    finetune.add_argument("--baseline", type=Path, required=True)
    finetune.add_argument("--reference", type=Path, help="frozen reference (defaults to the baseline)")
    finetune.add_argument("--data", type=Path, required=True)
    finetune.add_argument("--out-checkpoint", type=Path)
    _add_training(finetune)
    _add_weights(finetune)
    _add_pgd(finetune)

    bench = commands.add_parser("bench", help="clean, input-noise and parameter-noise benchmark")
    _add_common(bench)
    bench.add_argument("--checkpoint", nargs="+", required=True, help="PATH or NAME=PATH, one per model")
    bench.add_argument("--data", type=Path, required=True)
    bench.add_argument("--ip-sigmas", type=_float_list)
    bench.add_argument("--lp-sigmas", type=_float_list)
    bench.add_argument("--seeds", type=int, help="noise draws per condition")
    bench.add_argument("--videos", nargs="*", help="video ids for trajectories.json")

    certify = commands.add_parser("certify", help="empirical consistency/stability certificate")
    _add_common(certify)
    certify.add_argument("--checkpoint", type=Path, required=True)
    certify.add_argument("--reference", type=Path, help="defaults to the checkpoint itself")
    certify.add_argument("--data", type=Path, required=True)
    certify.add_argument("--probes", type=int)
    _add_pgd(certify)

    gradcheck = commands.add_parser("gradcheck", help="finite-difference gradient validation")
    _add_common(gradcheck)
    gradcheck.add_argument("--tolerance", type=float, default=1e-4)
    gradcheck.add_argument("--coordinates", type=int, default=10)
    gradcheck.add_argument("--seeds-count", type=int, default=5)

    report = commands.add_parser("report", help="render figures from a finished run directory")
    _add_common(report)
    report.add_argument("--run-dir", type=Path, required=True)
    report.add_argument("--out-svg", type=Path, help="trajectory figure path")

    ablate = commands.add_parser("ablate", help="cumulative robustness-term sweep under input noise")
    _add_common(ablate)
    ablate.add_argument("--baseline", type=Path, required=True)
    ablate.add_argument("--data", type=Path, required=True, help="fine-tuning split")
    ablate.add_argument("--test-data", type=Path, help="evaluation split (defaults to --data's test split)")
    ablate.add_argument("--sigma", type=float, default=0.2)
    ablate.add_argument("--seeds", type=int)
    _add_training(ablate, with_eval=False)
    _add_weights(ablate)
    _add_pgd(ablate)
    return parser


# Settings resolution


def _deep_merge(base: Dict[str, Any], override: Mapping[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            merged[key] = _deep_merge(dict(merged[key]), value)
        else:
            merged[key] = value
    return merged


def _overrides(args: argparse.Namespace, mapping: Mapping[str, str]) -> Dict[str, Any]:
    return {key: getattr(args, dest) for dest, key in mapping.items() if getattr(args, dest, None) is not None}


def resolve_settings(args: argparse.Namespace) -> Dict[str, Any]:
    """Preset, then the JSON config file, then explicit flags.

    Raises:
        OSError: If the config file cannot be read
        json.JSONDecodeError: If the config file is not JSON
    """
    settings = ExperimentPresets.get(args.preset)
    if args.config is not None:
        file_settings = json.loads(Path(args.config).read_text())
        if not isinstance(file_settings, dict):
            raise UsageError(f"{args.config}: config must be a JSON object")
        settings = _deep_merge(settings, file_settings)
    flags = {
        "data": _overrides(args, DATA_FLAGS),
        "train": {
            **_overrides(args, TRAIN_FLAGS),
            "pgd": _overrides(args, PGD_FLAGS),
            "weights": _overrides(args, WEIGHT_FLAGS),
        },
    }
    settings = _deep_merge(settings, flags)
    if args.seed is not None:
        settings["seed"] = args.seed
    settings.setdefault("seed", env_config.default_seed)
    return settings


def train_config(settings: Mapping[str, Any], ablation: Optional[Sequence[str]] = None) -> TrainConfig:
    train = dict(settings["train"])
    train["seed"] = settings["seed"]
    weights = dict(train.pop("weights", {}))
    cfg = TrainConfig.from_dict(train)
    base = LossWeights.from_dict(weights)
    if ablation is not None:
        lambdas = {lam_field: base.coefficient(term) for term, (lam_field, _) in TERMS.items()}
        base = LossWeights.only(*ablation, **lambdas)
    return replace(cfg, weights=base)


def certify_pgd(settings: Mapping[str, Any]) -> PgdConfig:
    """Certification attack: normalized steps unless configured otherwise."""
    overrides = dict(settings["train"].get("pgd", {}))
    overrides.update(settings.get("certify", {}).get("pgd", {}))
    overrides["epsilon"] = settings.get("certify", {}).get("epsilon", overrides.get("epsilon", CERTIFIED_PGD.epsilon))
    return replace(CERTIFIED_PGD, **overrides)


# Run plumbing


def make_run_dir(command: str, seed: int, output_dir: Optional[Path]) -> Path:
    root = Path(output_dir) if output_dir is not None else Path(env_config.output_dir)
    stamp = datetime.now(timezone.utc).strftime("%Y%m%d-%H%M%S")
    base = root / f"{command}-{stamp}-seed{seed}"
    run_dir, suffix = base, 1
    while run_dir.exists():
        suffix += 1
        run_dir = base.with_name(f"{base.name}-{suffix}")
    run_dir.mkdir(parents=True)
    return run_dir


def load_split(path: Path, split: str) -> Dataset:
    """Load ``path`` if it is an SECF directory, else ``path/<split>``.

    Raises:
        FileNotFoundError: If neither location holds a dataset
    """
    root = Path(path)
    if (root / MANIFEST_NAME).is_file():
        return load_dataset(root)
    if (root / split / MANIFEST_NAME).is_file():
        return load_dataset(root / split)
    raise FileNotFoundError(f"no SECF dataset at {root} or {root / split}")


def _seed_list(settings: Mapping[str, Any], count: Optional[int]) -> List[int]:
    k = count if count is not None else int(settings.get("bench", {}).get("seeds", 3))
    if k < 1:
        raise UsageError(f"--seeds must be >= 1, got {k}")
    return [int(settings["seed"]) + i for i in range(k)]


def _named_checkpoints(specs: Sequence[str]) -> List[Tuple[str, Path]]:
    named = []
    for spec in specs:
        name, sep, path = spec.partition("=")
        named.append((name, Path(path)) if sep else (Path(spec).stem, Path(spec)))
    names = [n for n, _ in named]
    if len(set(names)) != len(names):
        raise UsageError(f"checkpoint names must be unique, got {names}")
    return named


# Commands


def cmd_gen_data(args: argparse.Namespace, settings: Dict[str, Any], run_dir: Path, manifest: RunManifest) -> None:
    data = dict(settings["data"])
    test_videos = int(data.pop("test_videos", 100))
    train_cfg = SyntheticConfig(**data)
    test_cfg = replace(train_cfg, num_videos=test_videos)
    root = args.out if args.out is not None else run_dir / "data"
    seed = int(settings["seed"])
    for split, cfg in (("train", train_cfg), ("test", test_cfg)):
        dataset = generate_synthetic(cfg, seed, split=split)
        target = save_dataset(dataset, root / ARTIFACT_NAMES[f"{split}_data"])
        manifest.add_output(split, target)
    logger.info(f"✅ Synthetic splits written to {root}")


def _fit_outputs(log: RunLog, params: ModelParams, args: argparse.Namespace, run_dir: Path, manifest: RunManifest) -> None:
    checkpoint = args.out_checkpoint if args.out_checkpoint is not None else run_dir / ARTIFACT_NAMES["checkpoint"]
    manifest.add_output("checkpoint", save_checkpoint(params, checkpoint))
    manifest.add_output("losses", log.write_csv(run_dir / ARTIFACT_NAMES["losses"]))
    if log.snapshots:
        manifest.add_output("snapshots", log.write_snapshots_csv(run_dir / ARTIFACT_NAMES["snapshots"]))
    manifest.runs.append(log.manifest_entry())


def cmd_train(args: argparse.Namespace, settings: Dict[str, Any], run_dir: Path, manifest: RunManifest) -> None:
    dataset = load_split(args.data, "train")
    eval_dataset = load_split(args.eval_data, "test") if args.eval_data is not None else None
    manifest.add_input("data", args.data)
    params, log = train_baseline(dataset, train_config(settings), eval_dataset=eval_dataset)
    _fit_outputs(log, params, args, run_dir, manifest)


def cmd_finetune(args: argparse.Namespace, settings: Dict[str, Any], run_dir: Path, manifest: RunManifest) -> None:
    baseline = load_checkpoint(args.baseline)
    reference = load_checkpoint(args.reference) if args.reference is not None else None
    dataset = load_split(args.data, "train")
    eval_dataset = load_split(args.eval_data, "test") if args.eval_data is not None else None
    manifest.add_input("baseline", args.baseline)
    manifest.add_input("data", args.data)
    if args.reference is not None:
        manifest.add_input("reference", args.reference)
    cfg = train_config(settings, args.ablation)
    params, log = secure_finetune(baseline, dataset, cfg, reference=reference, eval_dataset=eval_dataset)
    _fit_outputs(log, params, args, run_dir, manifest)


def _default_videos(dataset: Dataset) -> List[str]:
    """First positive and first negative video."""
    chosen: Dict[int, str] = {}
    for seq, label in dataset:
        chosen.setdefault(label.accident, seq.video_id)
    return [chosen[k] for k in (1, 0) if k in chosen]


def cmd_bench(args: argparse.Namespace, settings: Dict[str, Any], run_dir: Path, manifest: RunManifest) -> None:
    dataset = load_split(args.data, "test")
    manifest.add_input("data", args.data)
    bench = settings.get("bench", {})
    ip_sigmas = args.ip_sigmas if args.ip_sigmas is not None else bench.get("ip_sigmas", [0.1, 0.2])
    lp_sigmas = args.lp_sigmas if args.lp_sigmas is not None else bench.get("lp_sigmas", [0.1, 0.2])
    seeds = _seed_list(settings, args.seeds)
    videos = args.videos or _default_videos(dataset)
    trajectory_sigma = max(ip_sigmas, default=0.2)

    report = BenchReport()
    dumped: Dict[str, Any] = {"sigma": trajectory_sigma, "models": {}}
    for name, path in _named_checkpoints(args.checkpoint):
        params = load_checkpoint(path)
        manifest.add_input(f"checkpoint:{name}", path)
        report.extend(run_benchmark(params, dataset, ip_sigmas, seeds, model=name, lp_sigmas=lp_sigmas))
        dumped["models"][name] = trajectories(params, dataset, videos, trajectory_sigma, seeds[0])

    manifest.add_output("bench_csv", report.write_csv(run_dir / ARTIFACT_NAMES["bench_csv"]))
    manifest.add_output("bench_json", report.write_json(run_dir / ARTIFACT_NAMES["bench_json"]))
    if len(report.models) > 1:
        manifest.add_output("comparison_csv", report.write_wide_csv(run_dir / ARTIFACT_NAMES["comparison_csv"]))
    traj_path = run_dir / ARTIFACT_NAMES["trajectories"]
    traj_path.write_text(json.dumps(dumped, indent=2, sort_keys=True))
    manifest.add_output("trajectories", traj_path)
    logger.info(f"✅ Benchmark of {len(report.models)} model(s) written to {run_dir}")


def cmd_certify(args: argparse.Namespace, settings: Dict[str, Any], run_dir: Path, manifest: RunManifest) -> None:
    params = load_checkpoint(args.checkpoint)
    reference = load_checkpoint(args.reference) if args.reference is not None else params
    dataset = load_split(args.data, "test")
    manifest.add_input("checkpoint", args.checkpoint)
    manifest.add_input("reference", args.reference if args.reference is not None else args.checkpoint)
    manifest.add_input("data", args.data)
    if args.epsilon is not None:
        settings.setdefault("certify", {})["epsilon"] = args.epsilon
    cfg = certify_pgd(settings)
    probes = args.probes if args.probes is not None else int(settings.get("certify", {}).get("probes", 50))
    result = certify_secure(params, reference, dataset, cfg.epsilon, cfg, probes=probes, seed=int(settings["seed"]))
    manifest.add_output("certificate_csv", result.write_csv(run_dir / ARTIFACT_NAMES["certificate_csv"]))
    manifest.add_output("certificate_json", result.write_json(run_dir / ARTIFACT_NAMES["certificate_json"]))


def cmd_gradcheck(args: argparse.Namespace, settings: Dict[str, Any], run_dir: Path, manifest: RunManifest) -> None:
    validator = GradientValidator(
        seed=int(settings["seed"]),
        tolerance=args.tolerance,
        coordinates=args.coordinates,
        seeds=args.seeds_count,
    )
    passed = validator.full_validation()
    manifest.add_output("gradcheck", validator.write_report(run_dir / ARTIFACT_NAMES["gradcheck"]))
    if not passed:
        raise GradientCheckFailure("finite-difference validation failed, see gradcheck.json")


def _write_trajectory_csv(flat: Mapping[str, Mapping[str, Any]], path: Path) -> Path:
    lines = ["series,frame,clean,perturbed"]
    for key, entry in flat.items():
        for frame, (clean, noisy) in enumerate(zip(entry["clean"], entry["perturbed"]), start=1):
            lines.append(f"{key},{frame},{clean!r},{noisy!r}")
    path.write_text("\n".join(lines) + "\n")
    return path


def cmd_report(args: argparse.Namespace, settings: Dict[str, Any], run_dir: Path, manifest: RunManifest) -> None:
    source = Path(args.run_dir)
    if not source.is_dir():
        raise FileNotFoundError(f"run directory {source} does not exist")
    manifest.add_input("run_dir", source)
    losses = source / ARTIFACT_NAMES["losses"]
    traj = source / ARTIFACT_NAMES["trajectories"]
    if not losses.is_file() and not traj.is_file():
        raise FileNotFoundError(
            f"{source} holds neither {ARTIFACT_NAMES['losses']} nor {ARTIFACT_NAMES['trajectories']}"
        )
    if losses.is_file():
        log = RunLog.read_csv(losses, phase=source.name, snapshots_path=source / ARTIFACT_NAMES["snapshots"])
        manifest.add_output("loss_svg", plot_loss_curves(log, run_dir / ARTIFACT_NAMES["loss_svg"]))
    if traj.is_file():
        dumped = json.loads(traj.read_text())
        models = dumped["models"]
        flat = {
            (vid if len(models) == 1 else f"{model}/{vid}"): entry
            for model, per_video in models.items()
            for vid, entry in per_video.items()
        }
        if not flat:
            raise DatasetFormatError(f"{traj} lists no videos")
        svg = args.out_svg if args.out_svg is not None else run_dir / ARTIFACT_NAMES["trajectory_svg"]
        manifest.add_output("trajectory_svg", plot_trajectories(flat, svg))
        manifest.add_output("trajectory_csv", _write_trajectory_csv(flat, Path(svg).with_suffix(".csv")))


def cmd_ablate(args: argparse.Namespace, settings: Dict[str, Any], run_dir: Path, manifest: RunManifest) -> None:
    baseline = load_checkpoint(args.baseline)
    train_ds = load_split(args.data, "train")
    test_ds = load_split(args.test_data if args.test_data is not None else args.data, "test")
    manifest.add_input("baseline", args.baseline)
    manifest.add_input("data", args.data)
    configs = cumulative_configs(args.ablation) if args.ablation else cumulative_configs()
    table = ablation_run(
        baseline,
        train_ds,
        test_ds,
        train_config(settings),
        configs=configs,
        sigma=args.sigma,
        seeds=_seed_list(settings, args.seeds),
    )
    manifest.add_output("ablation_csv", table.write_csv(run_dir / ARTIFACT_NAMES["ablation_csv"]))
    manifest.add_output("ablation_json", table.write_json(run_dir / ARTIFACT_NAMES["ablation_json"]))


COMMANDS: Dict[str, Callable[[argparse.Namespace, Dict[str, Any], Path, RunManifest], None]] = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "finetune-secure": cmd_finetune,
    "bench": cmd_bench,
    "certify": cmd_certify,
    "gradcheck": cmd_gradcheck,
    "report": cmd_report,
    "ablate": cmd_ablate,
}


def exit_code_for(error: BaseException) -> int:
    """Stable exit code of an error raised by a command.

    Failed internal checks such as a changed frozen reference land on the
    verification code; interrupts propagate.
    """
    if isinstance(error, DivergenceError):
        return EXIT_DIVERGENCE
    if isinstance(error, GradientCheckFailure):
        return EXIT_VERIFICATION
    if isinstance(error, (DatasetFormatError, CheckpointFormatError, ShapeError, json.JSONDecodeError, OSError)):
        return EXIT_IO
    if isinstance(error, (UsageError, DomainError, ValueError, KeyError, TypeError)):
        return EXIT_USAGE
    if isinstance(error, Exception):
        return EXIT_VERIFICATION
    raise error


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    project_logger = logging.getLogger(PROJECT_LOGGER)
    project_logger.setLevel((args.log_level or env_config.log_level).upper())

    try:
        settings = resolve_settings(args)
    except Exception as error:  # noqa: BLE001
        code = exit_code_for(error)
        logger.error(f"❌ {args.command}: invalid configuration: {error}")
        return code

    seed = int(settings["seed"])
    try:
        run_dir = make_run_dir(args.command, seed, args.output_dir)
    except OSError as error:
        logger.error(f"❌ {args.command}: cannot create run directory: {error}")
        return EXIT_IO
    handlers = [attach_file_handler(str(run_dir / ARTIFACT_NAMES["run_log"]))]
    if env_config.log_file:
        handlers.append(attach_file_handler(env_config.log_file))
    manifest = RunManifest(command=args.command, seed=seed, config=settings)
    logger.info(f"🚀 {args.command} (preset {args.preset}, seed {seed}) -> {run_dir}")

    code = EXIT_OK
    try:
        COMMANDS[args.command](args, settings, run_dir, manifest)
        logger.info(f"✅ {args.command} finished")
    except Exception as error:  # noqa: BLE001
        code = exit_code_for(error)
        logger.error(f"❌ {args.command} failed ({type(error).__name__}): {error}")
    finally:
        manifest.finish(code)
        manifest.write(run_dir)
        for handler in handlers:
            project_logger.removeHandler(handler)
            handler.close()
    return code


if __name__ == "__main__":
    sys.exit(main())
