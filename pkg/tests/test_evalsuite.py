"""Metrics hand cases, perturbation benchmarks, certification, ablation and figures."""

import json

import numpy as np
import pytest

from adversary.pgd import PgdConfig
from evalsuite.ablation import ablation_run, config_label, cumulative_configs
from evalsuite.certification import CertificationResult, certify_secure, per_video_divergences, probe_offsets
from evalsuite.metrics import average_precision, compute_metrics, evaluate, mtta, predict
from evalsuite.perturbation import (
    BenchReport,
    BenchRow,
    clean_eval,
    input_perturb_eval,
    latent_perturb_eval,
    perturb_latent_params,
    run_benchmark,
    trajectories,
)
from evalsuite.plots import plot_loss_curves, plot_precision_recall, plot_trajectories
from losses.robustness import LossBreakdown
from model.crash import forward_batch
from model.params import init_params
from numerics.tensor import ShapeError
from tests.helpers import labels_for
from trainer.run_log import RunLog
from trainer.training import TrainConfig


def brute_force_ap(matrix, labels):
    """Straight loop over thresholds and videos."""
    thresholds = sorted({float(v) for v in matrix.ravel() if v > 0}, reverse=True)
    positives = sum(lb.accident for lb in labels)
    ap, prev_recall = 0.0, 0.0
    for q in thresholds:
        tp = fp = 0
        for row, lb in zip(matrix, labels):
            window = row[: lb.tau] if lb.accident else row
            if np.any(window >= q):
                if lb.accident:
                    tp += 1
                else:
                    fp += 1
        precision = tp / (tp + fp) if tp + fp else 1.0
        recall = tp / positives
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return ap


def brute_force_mtta(matrix, labels):
    """Mean lead time per threshold, averaged over thresholds with a hit."""
    thresholds = sorted({float(v) for v in matrix.ravel() if v > 0}, reverse=True)
    per_threshold = []
    for q in thresholds:
        leads = []
        for row, lb in zip(matrix, labels):
            if not lb.accident:
                continue
            for frame in range(1, lb.tau + 1):
                if row[frame - 1] >= q:
                    leads.append((lb.tau - frame) / lb.fps)
                    break
        if leads:
            per_threshold.append(sum(leads) / len(leads))
    return sum(per_threshold) / len(per_threshold) if per_threshold else 0.0


def random_instance(rng):
    count, T = int(rng.integers(2, 8)), int(rng.integers(2, 8))
    flags = [1, 0] + [int(f) for f in rng.integers(0, 2, size=count - 2)]
    taus = [int(rng.integers(1, T + 1)) if f else 0 for f in flags]
    matrix = np.round(rng.uniform(size=(count, T)), 1)
    return matrix, labels_for(flags, taus, fps=int(rng.choice([5, 10, 20])))


def test_ap_is_one_when_the_positive_alarms_first():
    p = np.array([[0.1, 0.8, 0.9], [0.2, 0.3, 0.4]])
    labels = labels_for([1, 0], [2, 0])
    pr = average_precision(p, labels)
    assert pr.ap == pytest.approx(1.0)
    np.testing.assert_allclose(pr.thresholds, [0.9, 0.8, 0.4, 0.3, 0.2, 0.1])
    assert pr.precision[0] == 1.0 and pr.recall[0] == 0.0


def test_ap_counts_only_alarms_before_the_accident():
    """The positive's 0.9 comes after tau and a negative outranks its 0.8."""
    p = np.array([[0.1, 0.8, 0.9], [0.85, 0.1, 0.1]])
    pr = average_precision(p, labels_for([1, 0], [2, 0]))
    assert pr.ap == pytest.approx(0.5)


def test_ap_matches_a_brute_force_sweep():
    rng = np.random.default_rng(0)
    for _ in range(50):
        matrix, labels = random_instance(rng)
        assert average_precision(matrix, labels).ap == pytest.approx(brute_force_ap(matrix, labels))


def test_mtta_matches_a_brute_force_sweep():
    rng = np.random.default_rng(1)
    for _ in range(50):
        matrix, labels = random_instance(rng)
        expected = brute_force_mtta(matrix, labels)
        assert mtta(matrix, labels) == pytest.approx(expected)
        assert compute_metrics(matrix, labels).mtta_seconds == pytest.approx(expected)


def test_mtta_lead_time_of_the_first_alarm():
    """tau = 30 at 10 fps, first alarm at frame 11: (30 - 11) / 10 seconds."""
    positive = np.concatenate([np.zeros(10), np.full(30, 0.9)])
    matrix = np.stack([positive, np.zeros(40)])
    labels = labels_for([1, 0], [30, 0], fps=10)
    assert mtta(matrix, labels) == pytest.approx(1.9)
    result = compute_metrics(matrix, labels)
    assert result.mtta_seconds == pytest.approx(1.9)
    assert result.ap == pytest.approx(1.0)
    assert result.table()[0]["tta"] == pytest.approx(1.9)


def test_mtta_is_zero_without_true_positives():
    matrix = np.array([[0.0, 0.0, 0.5], [0.2, 0.2, 0.2]])
    assert mtta(matrix, labels_for([1, 0], [2, 0])) == 0.0


def test_metrics_need_both_classes():
    with pytest.raises(ValueError):
        average_precision(np.full((2, 3), 0.5), labels_for([0, 0], [0, 0]))
    with pytest.raises(ValueError):
        mtta(np.full((2, 3), 0.5), labels_for([0, 0], [0, 0]))
    with pytest.raises(ValueError):
        average_precision(np.full((3, 3), 0.5), labels_for([1, 0], [2, 0]))


def test_evaluate_matches_metrics_on_predictions(tiny_params, tiny_test_dataset):
    result = evaluate(tiny_params, tiny_test_dataset, batch_size=3)
    direct = compute_metrics(predict(tiny_params, tiny_test_dataset), tiny_test_dataset.labels)
    assert result.ap == pytest.approx(direct.ap)
    assert result.mtta_seconds == pytest.approx(direct.mtta_seconds)
    assert 0.0 <= result.ap <= 1.0


def test_zero_sigma_reproduces_the_clean_evaluation(tiny_params, tiny_test_dataset):
    clean = clean_eval(tiny_params, tiny_test_dataset)
    ip = input_perturb_eval(tiny_params, tiny_test_dataset, 0.0, seeds=[0, 1])
    lp = latent_perturb_eval(tiny_params, tiny_test_dataset, 0.0, seeds=[0, 1])
    for row in (ip, lp):
        assert row.ap_mean == clean.ap_mean
        assert row.mtta_mean == clean.mtta_mean
        assert row.ap_std == 0.0


def test_input_noise_is_seeded(tiny_params, tiny_test_dataset):
    first = input_perturb_eval(tiny_params, tiny_test_dataset, 0.5, seeds=[3, 4])
    second = input_perturb_eval(tiny_params, tiny_test_dataset, 0.5, seeds=[3, 4])
    assert first.ap_per_seed == second.ap_per_seed
    assert first.condition == "IP(0.5)"
    with pytest.raises(ValueError):
        input_perturb_eval(tiny_params, tiny_test_dataset, -0.1, seeds=[0])


def test_latent_noise_touches_only_the_second_gru_layer(tiny_params):
    before = tiny_params.checksum()
    noisy = perturb_latent_params(tiny_params, 0.3, seed=0)
    assert tiny_params.checksum() == before
    for name in tiny_params.names:
        changed = not np.array_equal(noisy.arrays[name], tiny_params.arrays[name])
        assert changed == name.startswith("gru2.")


def test_benchmark_rows_and_artifacts(tiny_params, tiny_test_dataset, tmp_path):
    report = run_benchmark(tiny_params, tiny_test_dataset, [0.1, 0.2], seeds=[0, 1], model="baseline", lp_sigmas=[0.1])
    assert report.conditions == ["Clean", "IP(0.1)", "IP(0.2)", "LP(0.1)"]
    assert report.get("baseline", "Clean").seeds == 1
    assert report.get("baseline", "IP(0.2)").seeds == 2
    report.write_csv(tmp_path / "bench.csv")
    report.write_json(tmp_path / "bench.json")
    loaded = BenchReport.read_json(tmp_path / "bench.json")
    assert loaded.rows == report.rows
    wide = report.write_wide_csv(tmp_path / "nested" / "comparison.csv")
    assert wide.read_text().splitlines()[0].startswith("model,Clean AP,Clean mTTA,IP(0.1) AP")


def test_report_without_a_clean_row_is_invalid(tmp_path):
    row = BenchRow("m", "IP(0.1)", 0.1, 0.5, 0.0, 1.0, 0.0, 1)
    with pytest.raises(KeyError):
        BenchReport(rows=[row]).write_csv(tmp_path / "bench.csv")


def test_trajectories_pair_clean_and_noisy_probabilities(tiny_params, tiny_test_dataset):
    ids = [tiny_test_dataset.videos[0][0].video_id, tiny_test_dataset.videos[1][0].video_id]
    out = trajectories(tiny_params, tiny_test_dataset, ids, sigma=0.2, seed=0)
    assert list(out) == ids
    assert len(out[ids[0]]["clean"]) == tiny_test_dataset.T
    assert out[ids[0]]["clean"] != out[ids[0]]["perturbed"]
    with pytest.raises(KeyError):
        trajectories(tiny_params, tiny_test_dataset, ["nope"], sigma=0.2, seed=0)


def test_certificate_against_itself_has_no_consistency_gap(tiny_params, tiny_test_dataset):
    result = certify_secure(tiny_params, tiny_params, tiny_test_dataset, epsilon=0.05, probes=2, batch_size=3)
    assert result.gamma1_hat == 0.0 and result.beta1_hat == 0.0
    assert result.gamma2_hat > 0.0 and result.beta2_hat > 0.0
    assert result.num_videos == len(tiny_test_dataset)
    assert result.bound == "empirical lower bound"


def test_zero_radius_certificate_has_no_stability_gap(tiny_params, other_params, tiny_test_dataset):
    result = certify_secure(tiny_params, other_params, tiny_test_dataset, epsilon=0.0, probes=3)
    assert result.gamma2_hat == result.beta2_hat == 0.0
    assert result.gamma1_hat > 0.0 and result.beta1_hat > 0.0


def test_certificate_maxima_combine_attack_and_probes(tiny_params, tiny_test_dataset):
    cfg = PgdConfig(alpha=0.01, iterations=20, step_rule="normalized")
    result = certify_secure(tiny_params, tiny_params, tiny_test_dataset, epsilon=0.05, pgd_cfg=cfg, probes=3)
    assert result.gamma2_hat == max(result.gamma2_pgd, result.gamma2_random)
    assert result.beta2_hat == max(result.beta2_pgd, result.beta2_random)
    assert result.gamma2_pgd >= result.gamma2_random
    assert result.pgd_iterations == 20


def test_probe_divergence_grows_with_the_radius(tiny_params, tiny_test_dataset):
    small = certify_secure(tiny_params, tiny_params, tiny_test_dataset, epsilon=0.01, probes=4, seed=2)
    large = certify_secure(tiny_params, tiny_params, tiny_test_dataset, epsilon=0.02, probes=4, seed=2)
    assert large.gamma2_random >= small.gamma2_random
    assert large.beta2_random >= small.beta2_random


def test_certificate_is_seeded_and_serializable(tiny_params, other_params, tiny_test_dataset, tmp_path):
    first = certify_secure(tiny_params, other_params, tiny_test_dataset, epsilon=0.05, probes=2, seed=1)
    second = certify_secure(tiny_params, other_params, tiny_test_dataset, epsilon=0.05, probes=2, seed=1)
    assert first == second
    first.write_json(tmp_path / "certificate.json")
    assert CertificationResult.read_json(tmp_path / "certificate.json") == first
    csv_text = first.write_csv(tmp_path / "certificate.csv").read_text()
    assert csv_text.splitlines()[0].startswith("gamma1_hat,gamma2_hat,beta1_hat,beta2_hat")


def test_certificate_input_validation(tiny_params, tiny_test_dataset):
    with pytest.raises(ShapeError):
        certify_secure(tiny_params, init_params(4, 6, 2, seed=0), tiny_test_dataset, epsilon=0.01)
    with pytest.raises(ValueError):
        certify_secure(tiny_params, tiny_params, tiny_test_dataset, epsilon=-0.01)
    with pytest.raises(ValueError):
        certify_secure(tiny_params, tiny_params, tiny_test_dataset, epsilon=0.01, probes=-1)


def test_probe_offsets_lie_on_the_sphere():
    rng = np.random.default_rng(0)
    delta_obj, delta_ctx = probe_offsets((3, 4, 2, 2), 0.1, "L2", rng)
    rows = np.concatenate([delta_obj.reshape(3, -1), delta_ctx.reshape(3, -1)], axis=1)
    np.testing.assert_allclose(np.linalg.norm(rows, axis=1), 0.1)
    cube_obj, cube_ctx = probe_offsets((3, 4, 2, 2), 0.1, "Linf", rng)
    assert np.max(np.abs(cube_obj)) <= 0.1 and np.max(np.abs(cube_ctx)) <= 0.1


def test_per_video_divergences_need_matching_traces(tiny_params, tiny_dataset):
    batch2 = tiny_dataset.batch(range(2))
    batch3 = tiny_dataset.batch(range(3))
    a = forward_batch(batch2.obj, batch2.ctx, tiny_params)
    b = forward_batch(batch3.obj, batch3.ctx, tiny_params)
    out_gap, feat_gap = per_video_divergences(a, a)
    np.testing.assert_array_equal(out_gap, 0.0)
    assert feat_gap.shape == (2,)
    with pytest.raises(ShapeError):
        per_video_divergences(a, b)


def test_cumulative_ablation_configurations():
    configs = cumulative_configs()
    assert configs == [(), ("cps",), ("cps", "spd"), ("cps", "spd", "clm"), ("cps", "spd", "clm", "sld")]
    assert config_label(configs[2]) == "L_task + L_cps + L_spd"
    with pytest.raises(ValueError):
        cumulative_configs(("cps", "xyz"))


def test_ablation_has_one_row_per_configuration(tiny_params, tiny_dataset, tiny_test_dataset, tmp_path):
    cfg = TrainConfig(
        learning_rate=1e-2, batch_size=4, epochs=1, hidden=4, heads=2, pgd=PgdConfig(epsilon=0.05, alpha=0.01, iterations=1)
    )
    table = ablation_run(tiny_params, tiny_dataset, tiny_test_dataset, cfg, sigma=0.2, seeds=(0,))
    assert len(table) == 5
    assert table.rows[0].configuration == "L_task"
    baseline_row = input_perturb_eval(tiny_params, tiny_test_dataset, 0.2, seeds=(0,))
    assert table.rows[0].ap_mean == baseline_row.ap_mean
    lines = table.write_csv(tmp_path / "ablation.csv").read_text().splitlines()
    assert len(lines) == 6
    assert lines[1].split(",")[1] == "none"
    payload = json.loads(table.write_json(tmp_path / "ablation.json").read_text())
    assert len(payload["rows"]) == 5
    with pytest.raises(ValueError):
        ablation_run(tiny_params, tiny_dataset, tiny_test_dataset, cfg, configs=[])


def test_figures_are_written_and_reproducible(tiny_params, tiny_test_dataset, tmp_path):
    ids = [tiny_test_dataset.videos[0][0].video_id]
    traj = trajectories(tiny_params, tiny_test_dataset, ids, sigma=0.2, seed=0)
    first = plot_trajectories(traj, tmp_path / "a" / "trajectories.svg").read_bytes()
    second = plot_trajectories(traj, tmp_path / "b" / "trajectories.svg").read_bytes()
    assert b"<svg" in first
    assert first == second

    log = RunLog(phase="baseline")
    log.append(1, 1, LossBreakdown(0.7, 0.6, 1.3, 0.0, 0.0, 0.0, 0.0, 1.3))
    log.append(1, 2, LossBreakdown(0.6, 0.5, 1.1, 0.0, 0.0, 0.0, 0.0, 1.1))
    assert plot_loss_curves(log, tmp_path / "losses.svg").stat().st_size > 0

    result = evaluate(tiny_params, tiny_test_dataset)
    assert plot_precision_recall({"baseline": result}, tmp_path / "pr.svg").is_file()


def test_figures_refuse_empty_inputs(tmp_path):
    with pytest.raises(ValueError):
        plot_trajectories({}, tmp_path / "t.svg")
    with pytest.raises(ValueError):
        plot_loss_curves(RunLog(phase="baseline"), tmp_path / "l.svg")
