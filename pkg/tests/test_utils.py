"""Presets, environment settings, logging, run manifests and the gradient validator."""

import json
import logging

import pytest

from cli.manifest import RunManifest
from data.synthetic import SyntheticConfig
from trainer.training import TrainConfig
from utils.env_loader import EnvironmentConfig
from utils.experiment_presets import ExperimentPresets
from utils.gradient_validator import GradientCheckFailure, GradientValidator
from utils.logger_config import PROJECT_LOGGER, attach_file_handler, get_logger


@pytest.mark.parametrize("name,preset", ExperimentPresets.get_presets_with_names())
def test_every_preset_builds_valid_configs(name, preset):
    """Each preset's sections parse into the typed settings objects."""
    assert set(preset) >= {"data", "train", "bench", "certify"}
    data = dict(preset["data"])
    assert data.pop("test_videos") >= 2
    SyntheticConfig(**data)
    cfg = TrainConfig.from_dict(preset["train"])
    assert cfg.pgd.epsilon == preset["certify"]["epsilon"]


def test_preset_lookup():
    assert ExperimentPresets.get_preset_names() == ["full", "desk", "smoke"]
    assert ExperimentPresets.get("smoke") == ExperimentPresets.get_smoke()
    with pytest.raises(KeyError, match="unknown preset"):
        ExperimentPresets.get("huge")


def test_full_preset_robustness_weights():
    weights = ExperimentPresets.get_full()["train"]["weights"]
    assert weights == {
        "lambda_c_out": 50.0,
        "lambda_s_out": 50.0,
        "lambda_c_feat": 0.01,
        "lambda_s_feat": 0.01,
    }


def test_environment_defaults(monkeypatch):
    for key in ("SECURE_OUTPUT_DIR", "SECURE_LOG_LEVEL", "SECURE_LOG_FILE", "SECURE_SEED"):
        monkeypatch.delenv(key, raising=False)
    env = EnvironmentConfig()
    assert env.output_dir == "runs"
    assert env.log_level == "INFO"
    assert env.log_file is None
    assert env.default_seed == 0


def test_environment_overrides(monkeypatch):
    monkeypatch.setenv("SECURE_OUTPUT_DIR", "/tmp/elsewhere")
    monkeypatch.setenv("SECURE_SEED", "7")
    env = EnvironmentConfig()
    assert env.output_dir == "/tmp/elsewhere"
    assert env.default_seed == 7
    monkeypatch.setenv("SECURE_SEED", "seven")
    with pytest.raises(ValueError, match="SECURE_SEED"):
        _ = env.default_seed


def test_required_environment_variable(monkeypatch):
    monkeypatch.delenv("SECURE_REQUIRED_PROBE", raising=False)
    with pytest.raises(ValueError, match="SECURE_REQUIRED_PROBE"):
        EnvironmentConfig.get_required_env("SECURE_REQUIRED_PROBE")
    monkeypatch.setenv("SECURE_REQUIRED_PROBE", "yes")
    assert EnvironmentConfig.get_required_env("SECURE_REQUIRED_PROBE") == "yes"


def test_component_loggers_write_to_the_run_log(tmp_path):
    component = get_logger("probe")
    assert component.name == f"{PROJECT_LOGGER}.probe"
    handler = attach_file_handler(str(tmp_path / "nested" / "run.log"))
    try:
        component.warning("probe message")
        handler.flush()
    finally:
        logging.getLogger(PROJECT_LOGGER).removeHandler(handler)
        handler.close()
    text = (tmp_path / "nested" / "run.log").read_text()
    assert "secure-anticipation.probe: probe message" in text


def test_manifest_records_and_verifies_outputs(tmp_path):
    split = tmp_path / "train"
    split.mkdir()
    (split / "manifest.json").write_text("{}")
    (split / "video.bin").write_bytes(b"\x00\x01")
    manifest = RunManifest(command="gen-data", seed=3, config={"data": {"T": 10}})
    manifest.add_output("train", split)
    assert sorted(manifest.outputs) == ["train/manifest.json", "train/video.bin"]
    assert manifest.verify() == []

    (split / "video.bin").write_bytes(b"\x00\x02")
    assert manifest.verify() == ["train/video.bin"]


def test_manifest_write_and_read(tmp_path):
    manifest = RunManifest(command="train", seed=1)
    manifest.add_input("data", tmp_path / "data")
    manifest.finish(0)
    path = manifest.write(tmp_path)
    assert path.name == "manifest.json"
    assert json.loads(path.read_text())["status"] == "ok"
    loaded = RunManifest.read(tmp_path)
    assert loaded == manifest

    manifest.finish(4)
    assert manifest.status == "failed" and manifest.exit_code == 4


def test_gradient_validator_checks_pass_on_the_smoke_fixture(tmp_path):
    validator = GradientValidator(seeds=1, coordinates=3)
    for check in (validator.validate_primitives, validator.validate_task_loss):
        ok, message = check()
        assert ok, message
    report = json.loads(validator.write_report(tmp_path / "gradcheck.json").read_text())
    assert set(report) == {"primitives", "task_loss"}
    assert report["task_loss"]["coordinates"] == 3
    assert report["task_loss"]["failures"] == []


def test_gradient_validator_raises_when_the_tolerance_is_unreachable():
    validator = GradientValidator(seeds=1, coordinates=2, tolerance=1e-30)
    with pytest.raises(GradientCheckFailure):
        validator.full_validation(raise_on_failure=True)
