"""Adam updates, the run log and both training phases."""

import math
from dataclasses import replace

import numpy as np
import pytest

from losses.robustness import LossBreakdown, LossWeights
from model.params import init_params
from numerics.tensor import ShapeError, Tensor
from trainer.optimizer import RHO_FLOOR, AdamState, adam_update, clip_gradients
from trainer.run_log import STEP_COLUMNS, RunLog
from trainer.training import DivergenceError, TrainConfig, secure_finetune, train_baseline


def breakdown(value: float) -> LossBreakdown:
    return LossBreakdown(value, value, value, 0.0, 0.0, 0.0, 0.0, value)


def test_first_adam_step_moves_by_the_learning_rate(tiny_params):
    grads = {name: np.full(a.shape, 0.5) for name, a in tiny_params.arrays.items()}
    updated, state = adam_update(tiny_params, grads, AdamState.zeros(tiny_params), learning_rate=0.01)
    assert state.step == 1
    delta = tiny_params.arrays["head.w1"] - updated.arrays["head.w1"]
    np.testing.assert_allclose(delta, 0.01 * 0.5 / (0.5 + 1e-8))


def test_adam_keeps_rho_above_the_floor(tiny_params):
    params = tiny_params.with_arrays({"rho1": np.array(RHO_FLOOR)})
    grads = {"rho1": np.array(1.0)}
    updated, _ = adam_update(params, grads, AdamState.zeros(params), learning_rate=1.0)
    assert updated.rho1 == RHO_FLOOR
    assert updated.rho2 == params.rho2


def test_adam_rejects_mismatched_gradient_shapes(tiny_params):
    with pytest.raises(ValueError):
        adam_update(tiny_params, {"head.b2": np.zeros(3)}, AdamState.zeros(tiny_params), 0.1)


def test_global_gradient_clipping():
    clipped, norm = clip_gradients({"a": np.array([3.0]), "b": np.array([4.0])}, max_norm=1.0)
    assert norm == pytest.approx(5.0)
    np.testing.assert_allclose(clipped["a"], [0.6])
    np.testing.assert_allclose(clipped["b"], [0.8])
    untouched, _ = clip_gradients({"a": np.array([0.1])}, max_norm=1.0)
    np.testing.assert_array_equal(untouched["a"], [0.1])


def test_run_log_rows_must_increase():
    log = RunLog(phase="baseline")
    log.append(1, 1, breakdown(1.0))
    log.append(1, 2, breakdown(2.0))
    log.append(2, 1, breakdown(3.0))
    with pytest.raises(ValueError):
        log.append(2, 1, breakdown(4.0))
    with pytest.raises(ValueError):
        log.append(1, 3, breakdown(4.0))
    assert log.epochs == [1, 2]
    assert log.epoch_means(1)["L_total"] == pytest.approx(1.5)
    with pytest.raises(KeyError):
        log.epoch_means(5)


def test_run_log_csv_round_trip_is_exact(tmp_path):
    log = RunLog(phase="secure")
    log.append(1, 1, breakdown(1.0 / 3.0))
    log.append(1, 2, breakdown(math.pi))
    log.add_snapshot(1, 0.75, 1.25)
    path = log.write_csv(tmp_path / "losses.csv")
    snaps = log.write_snapshots_csv(tmp_path / "eval_snapshots.csv")
    assert path.read_text().splitlines()[0] == ",".join(STEP_COLUMNS)
    loaded = RunLog.read_csv(path, phase="secure", snapshots_path=snaps)
    np.testing.assert_array_equal(loaded.column("L_total"), log.column("L_total"))
    assert loaded.snapshots == log.snapshots


def test_run_log_stamps_only_reach_the_manifest_entry(tmp_path):
    log = RunLog(phase="baseline", config={"epochs": 1})
    log.append(1, 1, breakdown(1.0))
    log.stamp_epoch(1)
    entry = log.manifest_entry()
    assert entry["steps"] == 1
    assert entry["epoch_stamps"][0]["epoch"] == 1
    assert "utc" not in log.write_csv(tmp_path / "losses.csv").read_text()


def test_train_config_from_nested_dict():
    cfg = TrainConfig.from_dict(
        {"epochs": 3, "pgd": {"epsilon": 0.02, "iterations": 4}, "weights": {"lambda_c_out": 1.0}}
    )
    assert cfg.epochs == 3
    assert cfg.pgd.epsilon == 0.02 and cfg.pgd.iterations == 4
    assert cfg.weights.lambda_c_out == 1.0
    with pytest.raises(ValueError, match="learning_rate"):
        TrainConfig(learning_rate=0.0)


def test_baseline_training_logs_every_step(tiny_dataset, tiny_test_dataset, tiny_train_config):
    params, log = train_baseline(tiny_dataset, tiny_train_config, eval_dataset=tiny_test_dataset)
    assert len(log.rows) == tiny_train_config.epochs * 2
    assert [(r.epoch, r.step) for r in log.rows] == [(1, 1), (1, 2), (2, 1), (2, 2)]
    assert all(r.losses.L_spd == 0.0 and r.losses.L_cps == 0.0 for r in log.rows)
    assert len(log.snapshots) == tiny_train_config.epochs
    assert all(0.0 <= s.ap <= 1.0 for s in log.snapshots)
    assert not params.equals(init_params(4, 4, 2, seed=0))


def test_baseline_training_is_reproducible(tiny_dataset, tiny_train_config):
    first, _ = train_baseline(tiny_dataset, tiny_train_config)
    second, _ = train_baseline(tiny_dataset, tiny_train_config)
    assert first.equals(second)


def test_zero_weights_reduce_finetuning_to_continued_baseline_training(tiny_dataset, tiny_params, tiny_train_config):
    """With every lambda at 0 the robust phase takes exactly the baseline steps."""
    zero = LossWeights(lambda_c_out=0.0, lambda_s_out=0.0, lambda_c_feat=0.0, lambda_s_feat=0.0)
    secure, secure_log = secure_finetune(tiny_params, tiny_dataset, replace(tiny_train_config, weights=zero))
    continued, _ = train_baseline(tiny_dataset, tiny_train_config, init=tiny_params)
    assert secure.equals(continued)
    assert secure.role == "secure"
    assert all(r.losses.L_total == r.losses.L_task for r in secure_log.rows)


def test_finetuning_records_active_terms_and_keeps_the_reference(tiny_dataset, tiny_params, tiny_train_config):
    reference = tiny_params.copy()
    checksum = reference.checksum()
    cfg = replace(tiny_train_config, epochs=1)
    secure, log = secure_finetune(tiny_params, tiny_dataset, cfg, reference=reference)
    assert reference.checksum() == checksum
    assert not secure.equals(tiny_params)
    assert all(r.losses.L_spd > 0.0 and r.losses.L_sld > 0.0 for r in log.rows)
    # the first step starts at the reference, later ones have moved away
    assert log.rows[0].losses.L_cps == 0.0
    assert log.rows[-1].losses.L_cps > 0.0


def test_finetuning_rejects_a_mismatched_reference(tiny_dataset, tiny_params, tiny_train_config):
    with pytest.raises(ShapeError):
        secure_finetune(tiny_params, tiny_dataset, tiny_train_config, reference=init_params(4, 6, 2, seed=0))


def test_non_finite_loss_raises_divergence(tiny_dataset, tiny_train_config, monkeypatch):
    monkeypatch.setattr("trainer.training.anticipation_loss", lambda p, labels: Tensor(float("nan")))
    with pytest.raises(DivergenceError, match="epoch 1, step 1"):
        train_baseline(tiny_dataset, tiny_train_config)
