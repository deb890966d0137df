"""Task loss hand cases, uncertainty weighting and the robustness terms."""

import math

import numpy as np
import pytest

from losses.robustness import (
    LossWeights,
    d_feat,
    d_out,
    robustness_losses,
    robustness_terms,
    total_loss,
)
from losses.task import anticipation_loss, enhancement_loss, frame_weights, task_loss
from model.crash import forward_batch
from model.params import init_params
from numerics.tensor import ComputationRecord, DomainError, ShapeError, Tensor, backward
from tests.helpers import labels_for

LN2 = math.log(2.0)


def test_negative_video_at_one_half_costs_t_ln2():
    loss = anticipation_loss(np.full((1, 3), 0.5), labels_for([0], [0], fps=1))
    assert loss.item() == pytest.approx(3 * LN2)


def test_positive_video_weights_frames_before_the_accident():
    """tau = 2, f = 1: the first frame is discounted by exp(-0.5)."""
    loss = anticipation_loss(np.array([[0.5, 0.5]]), labels_for([1], [2], fps=1))
    assert loss.item() == pytest.approx((math.exp(-0.5) + 1.0) * LN2)


def test_anticipation_loss_averages_over_the_batch():
    p = np.full((2, 2), 0.5)
    loss = anticipation_loss(p, labels_for([1, 0], [2, 0], fps=1))
    expected = ((math.exp(-0.5) + 1.0) * LN2 + 2 * LN2) / 2
    assert loss.item() == pytest.approx(expected)


def test_frame_weights_are_one_from_the_accident_on():
    weights = frame_weights(np.array([3]), np.array([2.0]), T=5)
    np.testing.assert_allclose(weights[0], [math.exp(-0.5), math.exp(-0.25), 1.0, 1.0, 1.0])


def test_saturated_probabilities_stay_finite():
    loss = anticipation_loss(np.array([[0.0, 0.0]]), labels_for([1], [2], fps=1))
    assert np.isfinite(loss.item())
    assert loss.item() > 10.0


def test_anticipation_loss_shape_mismatch():
    with pytest.raises(ShapeError):
        anticipation_loss(np.full((2, 3), 0.5), labels_for([1], [2]))


def test_enhancement_loss_at_one_half():
    loss = enhancement_loss(np.array([0.5, 0.5]), labels_for([1, 0], [3, 0]))
    assert loss.item() == pytest.approx(LN2)


def test_task_loss_with_unit_rho_halves_the_sum():
    assert task_loss(2.0, 4.0, 1.0, 1.0).item() == pytest.approx(3.0)
    assert task_loss(2.0, 4.0, 1.0, 1.0, mu1=2.0, mu2=0.5).item() == pytest.approx(2.0 + 1.0)


def test_task_loss_is_stationary_at_rho_squared_equal_mu_times_loss():
    """d/d rho of mu L / (2 rho^2) + log rho vanishes at rho = sqrt(mu L)."""
    l_a, l_e, mu1, mu2 = 0.8, 0.3, 2.0, 1.0
    with ComputationRecord() as record:
        rho1 = Tensor(math.sqrt(mu1 * l_a), requires_grad=True)
        rho2 = Tensor(math.sqrt(mu2 * l_e), requires_grad=True)
        loss = task_loss(l_a, l_e, rho1, rho2, mu1, mu2)
    grads = backward(record, loss)
    assert float(grads[rho1]) == pytest.approx(0.0, abs=1e-12)
    assert float(grads[rho2]) == pytest.approx(0.0, abs=1e-12)


def test_task_loss_rejects_non_positive_rho():
    with pytest.raises(DomainError):
        task_loss(1.0, 1.0, 0.0, 1.0)
    with pytest.raises(DomainError):
        task_loss(1.0, 1.0, 1.0, -2.0)


def test_divergences_are_mean_squared_differences():
    assert d_out(np.array([0.1, 0.5]), np.array([0.3, 0.5])).item() == pytest.approx(0.02)
    assert d_feat(np.zeros((2, 2)), np.ones((2, 2))).item() == pytest.approx(1.0)
    with pytest.raises(ShapeError):
        d_out(np.zeros(3), np.zeros(4))


def test_robustness_losses_vanish_against_self_on_clean_inputs(tiny_params, tiny_dataset):
    batch = tiny_dataset.batch(range(4))
    terms = robustness_losses(tiny_params, tiny_params.frozen(), batch.obj, batch.ctx, batch.obj, batch.ctx)
    for term in terms:
        assert term.item() == 0.0


def test_robustness_losses_are_positive_for_a_different_reference(tiny_params, other_params, tiny_dataset):
    batch = tiny_dataset.batch(range(4))
    shifted = batch.obj + 0.1
    cps, spd, clm, sld = robustness_losses(tiny_params, other_params, batch.obj, batch.ctx, shifted, batch.ctx)
    assert cps.item() > 0 and clm.item() > 0
    assert spd.item() > 0 and sld.item() > 0


def test_robustness_losses_need_matching_architectures(tiny_params, tiny_dataset):
    batch = tiny_dataset.batch(range(2))
    wider = init_params(4, 6, 2, seed=0)
    with pytest.raises(ShapeError):
        robustness_losses(tiny_params, wider, batch.obj, batch.ctx, batch.obj, batch.ctx)


def test_only_selected_terms_are_computed(tiny_params, other_params, tiny_dataset):
    batch = tiny_dataset.batch(range(2))
    clean = forward_batch(batch.obj, batch.ctx, tiny_params)
    ref = forward_batch(batch.obj, batch.ctx, other_params)
    terms = robustness_terms(clean, LossWeights.only("cps", "clm"), reference=ref)
    assert sorted(terms) == ["clm", "cps"]
    with pytest.raises(ValueError):
        robustness_terms(clean, LossWeights.only("spd"))


def test_zero_lambda_makes_a_term_inactive():
    weights = LossWeights(lambda_c_out=0.0)
    assert not weights.is_active("cps")
    assert weights.active_terms == ("spd", "clm", "sld")
    assert LossWeights.none().active_terms == ()
    assert not LossWeights.only("cps", "clm").needs_perturbation


def test_total_loss_skips_inactive_terms():
    weights = LossWeights.only("cps", "spd", lambda_c_out=2.0, lambda_s_out=3.0)
    total = total_loss(1.0, {"cps": 0.5, "spd": 0.25, "clm": 100.0}, weights)
    assert total.item() == pytest.approx(1.0 + 1.0 + 0.75)


def test_loss_weights_validation():
    with pytest.raises(ValueError):
        LossWeights(lambda_s_feat=-1.0)
    with pytest.raises(ValueError):
        LossWeights.only("cps", "bogus")
    with pytest.raises(ValueError):
        LossWeights.from_dict({"lambda_x": 1.0})
    assert LossWeights.from_dict({"lambda_c_out": 5.0}).coefficient("cps") == 5.0
