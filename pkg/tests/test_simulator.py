import math

import numpy as np
import pytest

from cascade_coordinator import ChainModel, MechanismPolicy, ModelParams, SummaryBelief, bhw_policy, nsii_policy
from cascade_coordinator.analytic import bhw_gsw_closed_form, build_chain, coordinator_revenue, nsii_gsw_closed_form
from cascade_coordinator.errors import ConfigurationError
from cascade_coordinator.simulator import default_horizon, estimate, period_means, run_episode, sample_paths


def test_worked_path_regression(params: ModelParams, nsii: MechanismPolicy):
    """A run of disagreeing signals after two agreeing ones collapses the cascade."""
    record = run_episode(params, nsii, horizon=5, seed=0, signals=(1, 1, -1, -1, -1))
    assert record.actions == (1, 1, 1, 1, -1)
    assert record.final_belief.mass == {-1: 1.0}
    assert [step.n for step in record.steps] == [0, 1, 2, 1, 0]
    assert record.steps[3].belief.total_variation(SummaryBelief(mass={1: 0.3, 3: 0.7})) < 1e-12
    assert record.taxes[:4] == pytest.approx((0.0, 0.0, 0.0, 0.0), abs=1e-12)
    assert record.taxes[4] == pytest.approx(0.028125)
    assert record.revenue == pytest.approx(0.9**4 * 0.028125)


def test_episode_accounting(params: ModelParams, nsii: MechanismPolicy):
    """Test the bookkeeping of a simulated episode."""
    record = run_episode(params, nsii, horizon=40, seed=7)
    assert record.horizon == 40
    assert len(record.steps) == 40
    assert record.nsw == record.gsw - record.revenue
    assert all(a in (-1, 1) for a in record.actions)
    assert all(t >= -1e-12 for t in record.taxes)
    expected_gsw = math.fsum(0.9**t * (a == record.state) for t, a in enumerate(record.actions))
    assert record.gsw == pytest.approx(expected_gsw)


def test_episode_is_deterministic_given_seed(params: ModelParams, nsii: MechanismPolicy):
    """Test that an episode is reproducible from its seed."""
    first = run_episode(params, nsii, horizon=30, seed=123)
    second = run_episode(params, nsii, horizon=30, seed=123)
    assert first == second


@pytest.mark.parametrize("seed", range(5))
def test_bhw_collects_no_revenue(params: ModelParams, bhw: MechanismPolicy, seed: int):
    """Test that BHW episodes collect no revenue."""
    assert run_episode(params, bhw, horizon=50, seed=seed).revenue == 0.0


@pytest.mark.parametrize("factory", [bhw_policy, nsii_policy])
@pytest.mark.parametrize("seed", range(3))
def test_noiseless_channel_always_matches_state(factory, seed: int):
    """Test that noiseless signals lead every agent to the state."""
    params = ModelParams(p=1e-9, delta=0.9)
    record = run_episode(params, factory(params), horizon=25, seed=seed)
    assert set(record.actions) == {record.state}
    assert record.gsw == pytest.approx((1 - 0.9**25) / (1 - 0.9))


def test_run_episode_validation(params: ModelParams, nsii: MechanismPolicy):
    """Test that invalid episode settings are rejected."""
    with pytest.raises(ConfigurationError):
        run_episode(params, nsii, horizon=0)
    with pytest.raises(ConfigurationError):
        run_episode(params, nsii, horizon=3, signals=(1, 0, 1))
    with pytest.raises(ConfigurationError):
        run_episode(params, nsii, horizon=3, state=2)


def test_default_horizon():
    """Test the default simulation horizon."""
    assert default_horizon(0.9) == 175
    assert 0.9**175 <= 1e-8 < 0.9**174
    assert default_horizon(0.5) == 27


def test_estimate_independent_of_worker_count(params: ModelParams, nsii: MechanismPolicy):
    """Test that estimates do not depend on the worker count."""
    serial = estimate(params, nsii, episodes=5000, horizon=60, seed=11, workers=1, block_size=700)
    threaded = estimate(params, nsii, episodes=5000, horizon=60, seed=11, workers=4, block_size=700)
    assert serial == threaded


def test_estimate_depends_on_seed(params: ModelParams, nsii: MechanismPolicy):
    """Test that different seeds give different estimates."""
    first = estimate(params, nsii, episodes=2000, horizon=60, seed=1)
    second = estimate(params, nsii, episodes=2000, horizon=60, seed=2)
    assert first.gsw != second.gsw


def test_estimate_report_fields(params: ModelParams, bhw: MechanismPolicy):
    """Test the fields of a simulated welfare report."""
    report = estimate(params, bhw, episodes=3000, seed=5)
    assert report.mode == "simulate"
    assert report.mechanism == "bhw"
    assert report.episodes == 3000
    assert report.revenue == 0.0
    assert report.revenue_stderr == 0.0
    assert report.gsw_stderr > 0.0
    assert report.truncation_bound == pytest.approx(0.9**175 / 0.1)


def test_estimate_rejects_empty_run(params: ModelParams, nsii: MechanismPolicy):
    """Test that empty runs and zero horizons are rejected."""
    with pytest.raises(ConfigurationError):
        estimate(params, nsii, episodes=0)
    with pytest.raises(ConfigurationError):
        estimate(params, nsii, episodes=10, horizon=0)


@pytest.mark.parametrize("p", [0.1, 0.25, 0.37])
def test_estimate_agrees_with_exact_values(p: float):
    """Test simulated welfare against the exact values."""
    params = ModelParams(p=p, delta=0.9)
    nsii = estimate(params, nsii_policy(params), episodes=40_000, seed=2024)
    bhw = estimate(params, bhw_policy(params), episodes=40_000, seed=2024)
    assert abs(nsii.gsw - nsii_gsw_closed_form(params)) <= 4 * nsii.gsw_stderr
    assert abs(nsii.revenue - coordinator_revenue(build_chain(params))) <= 4 * nsii.revenue_stderr
    assert abs(bhw.gsw - bhw_gsw_closed_form(params)) <= 4 * bhw.gsw_stderr


@pytest.mark.slow
@pytest.mark.parametrize("p", [0.1, 0.25, 0.37])
def test_estimate_agrees_with_exact_values_at_scale(p: float):
    """Test simulated welfare against the exact values with a million episodes."""
    params = ModelParams(p=p, delta=0.9)
    nsii = estimate(params, nsii_policy(params), episodes=1_000_000, seed=round(p * 1000), workers=4)
    bhw = estimate(params, bhw_policy(params), episodes=1_000_000, seed=17, workers=4)
    bias = nsii.truncation_bound
    assert abs(nsii.gsw - nsii_gsw_closed_form(params)) <= 3 * nsii.gsw_stderr + bias
    assert abs(nsii.revenue - coordinator_revenue(build_chain(params))) <= 3 * nsii.revenue_stderr + bias
    assert abs(bhw.gsw - bhw_gsw_closed_form(params)) <= 3 * bhw.gsw_stderr + bias


def test_bhw_cascades_absorb(params: ModelParams, bhw: MechanismPolicy):
    """Test that BHW cascades never end."""
    paths = sample_paths(params, bhw, episodes=10_000, horizon=30, seed=3)
    outside = ~paths.learning
    cascaded = np.flatnonzero(outside.any(axis=0))
    assert cascaded.size > 9_900
    first = outside.argmax(axis=0)
    for episode in cascaded:
        tail = paths.actions[first[episode] :, episode]
        assert (tail == tail[0]).all()


def test_nsii_taxes_nonnegative_along_paths(params: ModelParams, nsii: MechanismPolicy):
    """Test that simulated NSII taxes are nonnegative and sometimes positive."""
    paths = sample_paths(params, nsii, episodes=2000, horizon=60, seed=4)
    assert paths.taxes.min() >= -1e-12
    assert paths.taxes.max() > 0.0


def test_nsii_paths_follow_the_chain(params: ModelParams, nsii: MechanismPolicy, chain: ChainModel):
    """Test that simulated NSII paths follow the belief chain."""
    paths = sample_paths(params, nsii, episodes=200, horizon=50, seed=9)
    labels = np.array([chain.index_of(eta) for eta in paths.beliefs], dtype=object)
    assert all(label is not None for label in labels), "NSII left the belief chain"

    states = labels[paths.belief_ids].astype(int)
    counts: dict[tuple[int, int], int] = {}
    visits: dict[int, int] = {}
    for k, j in zip(states[:-1].ravel(), states[1:].ravel()):
        counts[(k, j)] = counts.get((k, j), 0) + 1
        visits[k] = visits.get(k, 0) + 1

    for k, j in counts:
        assert chain.q(k, j) > 0.0, f"transition {k} -> {j} is not in the chain"
    for k, total in visits.items():
        if total < 100:
            continue
        for j in {j for (i, j) in counts if i == k}:
            q = chain.q(k, j)
            freq = counts[(k, j)] / total
            assert abs(freq - q) <= 3 * math.sqrt(q * (1 - q) / total) + 1e-12, f"{k} -> {j}"


def test_nsii_improves_every_period(params: ModelParams, nsii: MechanismPolicy, bhw: MechanismPolicy):
    """Test that NSII net utility beats BHW utility in every period."""
    nsii_means = period_means(params, nsii, episodes=20_000, horizon=20, seed=8)
    bhw_means = period_means(params, bhw, episodes=20_000, horizon=20, seed=8)
    slack = 3 * np.hypot(nsii_means.net_stderr, bhw_means.utility_stderr)
    assert (nsii_means.net >= bhw_means.utility - slack).all()
    # both mechanisms play identically until the first NSII tax
    np.testing.assert_array_equal(nsii_means.utility[:4], bhw_means.utility[:4])
    assert nsii_means.tax[:4] == pytest.approx(np.zeros(4), abs=1e-12)
