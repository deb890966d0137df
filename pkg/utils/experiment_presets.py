"""Named experiment presets: dataset shape, training, benchmark and certification settings."""

from typing import Any, Dict, List, Tuple

# File names of every artifact a command can emit inside its run directory
ARTIFACT_NAMES = {
    "manifest": "manifest.json",
    "run_log": "run.log",
    "checkpoint": "model.ckpt",
    "train_data": "train",
    "test_data": "test",
    "losses": "losses.csv",
    "snapshots": "eval_snapshots.csv",
    "bench_csv": "bench.csv",
    "bench_json": "bench.json",
    "comparison_csv": "comparison.csv",
    "trajectories": "trajectories.json",
    "certificate_csv": "certificate.csv",
    "certificate_json": "certificate.json",
    "ablation_csv": "ablation.csv",
    "ablation_json": "ablation.json",
    "gradcheck": "gradcheck.json",
    "trajectory_svg": "trajectories.svg",
    "loss_svg": "losses.svg",
}


class ExperimentPresets:
    """Experiment preset definitions.

    Every preset has the sections ``data`` (SyntheticConfig fields plus the
    test split size), ``train`` (TrainConfig fields with nested ``pgd`` and
    ``weights``), ``bench`` and ``certify``.
    """

    @staticmethod
    def get_full() -> Dict[str, Any]:
        """Full training schedule on the desk-scale synthetic dataset.

        Returns:
            Dictionary with the batch size 10, lr 1e-4, eps 0.01, alpha 0.002,
            P 20 and robustness weights 50 / 50 / 0.01 / 0.01
        """
        return {
            "data": {
                "num_videos": 200,
                "test_videos": 100,
                "positive_fraction": 0.5,
                "T": 50,
                "n": 5,
                "d": 32,
                "fps": 10,
            },
            "train": {
                "learning_rate": 1e-4,
                "batch_size": 10,
                "epochs": 30,
                "hidden": 64,
                "heads": 4,
                "pgd": {"epsilon": 0.01, "alpha": 0.002, "iterations": 20},
                "weights": {
                    "lambda_c_out": 50.0,
                    "lambda_s_out": 50.0,
                    "lambda_c_feat": 0.01,
                    "lambda_s_feat": 0.01,
                },
            },
            "bench": {"ip_sigmas": [0.1, 0.2], "lp_sigmas": [0.1, 0.2], "seeds": 3},
            "certify": {"epsilon": 0.01, "probes": 50},
        }

    @staticmethod
    def get_desk() -> Dict[str, Any]:
        """Same dataset with a shorter schedule and fewer attack steps.

        Returns:
            Dictionary for a run of a few minutes on one CPU
        """
        return {
            "data": {
                "num_videos": 200,
                "test_videos": 100,
                "positive_fraction": 0.5,
                "T": 50,
                "n": 5,
                "d": 32,
                "fps": 10,
            },
            "train": {
                "learning_rate": 1e-3,
                "batch_size": 10,
                "epochs": 10,
                "hidden": 32,
                "heads": 4,
                "pgd": {"epsilon": 0.01, "alpha": 0.002, "iterations": 5},
            },
            "bench": {"ip_sigmas": [0.1, 0.2], "lp_sigmas": [0.1, 0.2], "seeds": 3},
            "certify": {"epsilon": 0.01, "probes": 20},
        }

    @staticmethod
    def get_smoke() -> Dict[str, Any]:
        """Tiny shapes for gradient checks and pipeline smoke tests.

        Returns:
            Dictionary that trains in seconds
        """
        return {
            "data": {
                "num_videos": 8,
                "test_videos": 6,
                "positive_fraction": 0.5,
                "T": 10,
                "n": 2,
                "d": 4,
                "fps": 10,
                "ramp_len": 3,
            },
            "train": {
                "learning_rate": 1e-2,
                "batch_size": 4,
                "epochs": 2,
                "hidden": 4,
                "heads": 2,
                "pgd": {"epsilon": 0.05, "alpha": 0.01, "iterations": 3},
            },
            "bench": {"ip_sigmas": [0.2], "lp_sigmas": [0.2], "seeds": 2},
            "certify": {"epsilon": 0.05, "probes": 3},
        }

    @classmethod
    def get_all_presets(cls) -> List[Dict[str, Any]]:
        return [cls.get_full(), cls.get_desk(), cls.get_smoke()]

    @staticmethod
    def get_preset_names() -> List[str]:
        return ["full", "desk", "smoke"]

    @classmethod
    def get_presets_with_names(cls) -> List[Tuple[str, Dict[str, Any]]]:
        """Get presets paired with their names.

        Returns:
            List of tuples (name, preset) for lookup and pytest parametrization
        """
        return list(zip(cls.get_preset_names(), cls.get_all_presets()))

    @classmethod
    def get(cls, name: str) -> Dict[str, Any]:
        """Look up one preset by name.

        Raises:
            KeyError: If the name is unknown
        """
        presets = dict(cls.get_presets_with_names())
        if name not in presets:
            raise KeyError(f"unknown preset {name!r}, choose from {cls.get_preset_names()}")
        return presets[name]
