import math

import numpy as np
import pytest

from fusetrack.kalman import Observation, StateEstimate, update
from fusetrack.losses import (
    DisplacementLossSpec,
    LossStep,
    UncertaintyLossSpec,
    analytic_loss_gradient,
    displacement_loss,
    event_loss,
    gradcheck,
    jacobian_check,
    kalman_jacobians,
    loss_gradients,
    random_case,
    random_step,
    step_loss,
    uncertainty_loss,
)
from fusetrack.uncertainty import VisibilityReport, variance

HALF = VisibilityReport.from_p_vis(0.5)


def test_displacement_loss_values():
    assert displacement_loss([1, 1], [0, 0]) == 2.0
    assert displacement_loss([3, -2], [3, -2]) == 0.0
    # gate is strict: |dp_gt|_1 == r closes it
    assert displacement_loss([0, 0], [10, 5], DisplacementLossSpec(15)) == 0.0
    assert displacement_loss([0, 0], [10, 4.9], DisplacementLossSpec(15)) == pytest.approx(14.9)


def test_uncertainty_loss_values():
    assert uncertainty_loss(HALF, True) == pytest.approx(math.log(2), abs=1e-12)
    assert uncertainty_loss(HALF, False) == pytest.approx(0.693147, abs=1e-6)
    assert uncertainty_loss(VisibilityReport.from_p_vis(1.0), True) == 0.0
    assert uncertainty_loss(VisibilityReport.from_p_vis(0.9), False) == pytest.approx(
        -math.log(0.1), abs=1e-12)
    assert uncertainty_loss(VisibilityReport.from_p_vis(0.9), False) == pytest.approx(
        2.302585, abs=1e-6)
    # clamped, finite
    assert uncertainty_loss(VisibilityReport.from_p_vis(0.0), True) == pytest.approx(
        -math.log(1e-12))


def test_event_loss_composition():
    assert event_loss([0, 0], [0, 0], VisibilityReport.from_p_vis(1.0), True) == 0.0
    v = event_loss([1, 1], [0, 0], HALF, True)
    assert v == pytest.approx(2 + 2 * math.log(2), abs=1e-12)
    assert v == pytest.approx(3.386294, abs=1e-6)
    closed = event_loss([100, 0], [20, 0], HALF, True)
    assert closed == pytest.approx(2 * math.log(2), abs=1e-12)
    w3 = event_loss([1, 1], [0, 0], HALF, True, unc=UncertaintyLossSpec(3.0))
    assert w3 == pytest.approx(2 + 3 * math.log(2), abs=1e-12)


def test_gain_is_jacobian_wrt_measurement():
    rng = np.random.default_rng(0)
    for _ in range(20):
        prior, obs = random_case(rng)
        dz, _ = kalman_jacobians(prior, obs)
        np.testing.assert_array_equal(dz, update(prior, obs)[1].K)


def test_jacobians_vanish_for_infinite_noise():
    prior, obs = random_case(np.random.default_rng(1))
    dz, dR = kalman_jacobians(prior, Observation(obs.z, 1e12 * np.eye(2)))
    assert np.abs(dz).max() < 1e-6 and np.abs(dR).max() < 1e-6


def test_jacobian_check_small_error():
    rng = np.random.default_rng(2)
    for _ in range(50):
        assert jacobian_check(*random_case(rng)).max_rel_err < 1e-5


def test_closed_gate_has_zero_measurement_gradient():
    rng = np.random.default_rng(3)
    s = random_step(rng)
    s = LossStep(s.prior, s.anchor, s.z, s.p_vis, np.array([20.0, 0.0]), s.visible)
    g = analytic_loss_gradient(s)
    assert g[0] == 0.0 and g[1] == 0.0
    assert g[2] != 0.0


def test_loss_gradients_match_differences():
    rng = np.random.default_rng(4)
    checked = 0
    for _ in range(200):
        rep = loss_gradients(random_step(rng))
        if not rep.kink:
            checked += 1
            assert rep.max_rel_err < 1e-5
    assert checked > 150


def test_kink_detected_at_zero_residual():
    rng = np.random.default_rng(5)
    s = random_step(rng)
    # place dp_gt exactly on the filtered displacement
    R = variance(s.p_vis, s.noise_map) * np.eye(2)
    post = update(s.prior, Observation(s.z, R))[0]
    s = LossStep(s.prior, s.anchor, s.z, s.p_vis, post.x[:2] - s.anchor, s.visible)
    assert loss_gradients(s).kink


def test_gradient_gives_descent_direction():
    # a small step against the gradient lowers the loss for smooth steps
    improved = 0
    for seed in range(50):
        s = random_step(np.random.default_rng(seed))
        rep = loss_gradients(s)
        if rep.kink:
            continue
        g = rep.analytic
        eta = 1e-4 / max(np.linalg.norm(g), 1e-12)
        p = min(max(s.p_vis - eta * g[2], 1e-6), 1 - 1e-6)
        moved = LossStep(s.prior, s.anchor, s.z - eta * g[:2], p, s.dp_gt, s.visible)
        assert step_loss(moved) < step_loss(s)
        improved += 1
    assert improved > 30


def test_cross_entropy_gradient_sign():
    s = random_step(np.random.default_rng(7))
    vis = LossStep(s.prior, s.anchor, s.z, s.p_vis, np.array([50.0, 0.0]), True)
    occ = LossStep(s.prior, s.anchor, s.z, s.p_vis, np.array([50.0, 0.0]), False)
    assert analytic_loss_gradient(vis)[2] < 0 < analytic_loss_gradient(occ)[2]


def test_gradcheck_summary():
    summ = gradcheck(cases=100, seed=1)
    assert summ.cases == 100
    assert summ.max_rel_err < 1e-5
    assert summ.gain_identity_max_abs == 0.0
    assert summ.kinks_skipped < 10


def test_random_case_is_well_conditioned():
    prior, obs = random_case(np.random.default_rng(8))
    assert isinstance(prior, StateEstimate)
    assert np.linalg.eigvalsh(prior.P)[0] >= 0.5 - 1e-12
