import dataclasses

import numpy as np
import pytest

from sparse_fdi.acpf import newton_power_flow
from sparse_fdi.attack_vector import MeasurementId, assemble
from sparse_fdi.netmodel import Network
from sparse_fdi.sparse_attack import solve_sparse
from sparse_fdi.stealth import (
    DEFAULT_SIGMAS,
    EstimationError,
    MeasurementModel,
    MeasurementSet,
    apply_attack,
    chi2_threshold,
    generate_measurements,
    measurement_ids,
    stealth_check,
    wls_estimate,
)


@pytest.fixture(scope="module")
def attack57(net57, base57, zone57):
    attacked = solve_sparse(net57, zone57, base57).solution.state
    return attacked, assemble(net57, zone57, base57, attacked)


def test_chi2_threshold_frozen():
    assert chi2_threshold(1) == pytest.approx(1.959963984540054, abs=1e-12)
    assert chi2_threshold(10) == pytest.approx(np.sqrt(18.307038053275146), abs=1e-12)


def test_measurement_count(net57):
    assert len(measurement_ids(net57)) == 4 * 80 + 4 * 57
    assert len(measurement_ids(net57, pmu_channels=False)) == 4 * 80 + 3 * 57


def test_model_jacobian_finite_differences(net57, base57):
    ids = measurement_ids(net57)
    model = MeasurementModel(net57, ids)
    rng = np.random.default_rng(1)
    state = base57.replace(v=base57.v + rng.uniform(-0.02, 0.02, 57),
                           theta=base57.theta + np.r_[0.0, rng.uniform(-0.05, 0.05, 56)])
    x0 = model.state_vector(state)
    jac = model.jacobian(state)
    eps = 1e-7
    for k in rng.choice(len(x0), 20, replace=False):
        up, dn = x0.copy(), x0.copy()
        up[k] += eps
        dn[k] -= eps
        col = (model.h(model.to_state(up)) - model.h(model.to_state(dn))) / (2 * eps)
        np.testing.assert_allclose(jac[:, k], col, atol=1e-5)


def test_noiseless_estimate_recovers_state(net57, base57):
    meas = generate_measurements(net57, base57)
    est, rep = wls_estimate(net57, meas)
    assert rep.norm < 1e-8 and not rep.flagged
    np.testing.assert_allclose(est.v, base57.v, atol=1e-9)
    np.testing.assert_allclose(est.theta, base57.theta, atol=1e-9)


def test_estimator_consistency_random_states(net57):
    rng = np.random.default_rng(2024)
    for _ in range(100):
        scale = rng.uniform(0.7, 1.1)
        buses = tuple(dataclasses.replace(b, p_demand=b.p_demand * scale, q_demand=b.q_demand * scale)
                      for b in net57.buses)
        net = Network(net57.base_mva, buses, net57.branches, net57.generators, net57.name)
        state = newton_power_flow(net)
        est, rep = wls_estimate(net, generate_measurements(net, state))
        assert rep.norm < 1e-6
        assert np.max(np.abs(est.v - state.v)) < 1e-8
        assert np.max(np.abs(est.theta - state.theta)) < 1e-8


def test_sparse_attack_is_stealthy(net57, base57, zone57, attack57):
    attacked, a = attack57
    verdict = stealth_check(net57, zone57, base57, attacked, attack=a)
    assert verdict.passed and verdict.difference <= 1e-6
    # the estimator converges to the attacker's state
    np.testing.assert_allclose(verdict.estimate.v, attacked.v, atol=1e-8)
    np.testing.assert_allclose(verdict.estimate.theta, attacked.theta, atol=1e-8)


def test_stealth_without_pmu(net57, base57, zone57, attack57):
    attacked, a = attack57
    assert stealth_check(net57, zone57, base57, attacked, attack=a, pmu_channels=False).passed


def test_truncated_vector_detected(net57, base57, zone57, attack57):
    attacked, a = attack57
    target = MeasurementId("flow_p_to", zone57.target_line)
    verdict = stealth_check(net57, zone57, base57, attacked, attack=a.without(target))
    assert not verdict.passed
    assert verdict.difference > 1e-3


def test_corrupted_flow_flagged(net57, base57):
    clean = generate_measurements(net57, base57, noise_sigma=DEFAULT_SIGMAS, seed=0)
    bad = clean.copy()
    bad.values[MeasurementId("flow_p_from", 10)] += 10.0
    _, r_clean = wls_estimate(net57, clean)
    _, r_bad = wls_estimate(net57, bad)
    assert not r_clean.flagged
    assert r_bad.flagged and r_bad.norm > r_bad.threshold
    assert r_bad.max_normalized > 3.0


@pytest.mark.parametrize("sigma", [0.001, DEFAULT_SIGMAS])
def test_noisy_stealth(net57, base57, zone57, attack57, sigma):
    attacked, a = attack57
    verdict = stealth_check(net57, zone57, base57, attacked, noise_sigma=sigma, seed=11, attack=a)
    assert verdict.passed
    assert verdict.clean.flagged == verdict.attacked.flagged


def test_noise_is_seeded(net57, base57):
    one = generate_measurements(net57, base57, noise_sigma=0.01, seed=5)
    two = generate_measurements(net57, base57, noise_sigma=0.01, seed=5)
    three = generate_measurements(net57, base57, noise_sigma=0.01, seed=6)
    assert one.values == two.values
    assert one.values != three.values


def test_unmetered_attack_entry_rejected(net57, base57, attack57):
    _, a = attack57
    meas = generate_measurements(net57, base57, pmu_channels=False)
    with pytest.raises(KeyError):
        apply_attack(meas, a)


def test_unobservable_raises(net57, base57):
    ids = [MeasurementId("v_mag", b.id) for b in net57.buses]
    values = dict(zip(ids, base57.v.tolist()))
    meas = MeasurementSet(values, {m: 1.0 for m in ids})
    with pytest.raises(EstimationError):
        wls_estimate(net57, meas)


def test_verdict_json(net57, base57, zone57, attack57):
    import json

    attacked, a = attack57
    doc = json.loads(stealth_check(net57, zone57, base57, attacked, attack=a).to_json())
    assert doc["passed"] is True
    assert set(doc) == {"residual_clean", "residual_attacked", "difference", "tolerance", "passed"}
