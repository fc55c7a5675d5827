"""Generative model: benchmark suite values, switching laws, simulator."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rsdbpf.ssm import (
    CandidateModel,
    RegimeDynamics,
    emit_observation,
    paper_suite,
    regime_prob,
    regime_prob_vector,
    simulate,
    step_state,
)


@pytest.fixture(scope="module")
def markov_suite():
    return paper_suite("markov")


@pytest.fixture(scope="module")
def polya_suite():
    return paper_suite("polya")


def test_transition_matrix_entries(markov_suite):
    p = markov_suite.dynamics.transition
    assert p[0, 0] == 0.80
    assert p[0, 1] == 0.15
    assert p[0, 2] == pytest.approx(1.0 / 120.0, abs=0)
    # Cyclic wrap on the last row.
    assert p[7, 0] == 0.15
    assert p[7, 7] == 0.80


def test_transition_rows_sum_to_one(markov_suite):
    p = markov_suite.dynamics.transition
    # 0.80 + 0.15 + 6 * (1/120) = 1 for every row.
    assert np.max(np.abs(p.sum(axis=1) - 1.0)) <= 1e-12


def test_candidate_coefficients(markov_suite, polya_suite):
    for suite in (markov_suite, polya_suite):
        m4 = suite.candidates[3]
        assert (m4.a, m4.b) == (-0.9, -4.0)
        assert (m4.c, m4.d) == (-0.9, -4.0)
        assert all(m.dyn_noise_var == 0.1 and m.obs_noise_var == 0.1
                   for m in suite.candidates)
        assert suite.horizon == 50
        assert suite.n_regimes == 8


def test_markov_regime_prob_cyclic_wrap(markov_suite):
    # History ending in the last regime advances cyclically to the first.
    assert regime_prob(markov_suite.dynamics, [2, 7], 0) == 0.15


def test_polya_regime_prob_single_history():
    dyn = paper_suite("polya").dynamics
    probs = regime_prob_vector(dyn, [2])
    assert probs[2] == pytest.approx(2.0 / 9.0, abs=1e-15)
    others = np.delete(probs, 2)
    assert np.allclose(others, 1.0 / 9.0, atol=1e-15)


def test_polya_uniform_prior_before_any_counts(polya_suite):
    # m_0 is drawn uniformly before any urn counts accumulate. The simulator
    # draws it first from the per-trajectory stream; check that construction
    # on a few trajectories, then the uniformity of that first draw at scale.
    for i in (0, 3, 17):
        expected = np.random.default_rng(np.random.SeedSequence([1234, 0, i])).integers(0, 8)
        assert simulate(polya_suite, 1234, traj_id=i).regimes[0] == expected
    n = 40_000
    draws = np.array([
        np.random.default_rng(np.random.SeedSequence([1234, 0, i])).integers(0, 8)
        for i in range(n)])
    freq = np.bincount(draws, minlength=8) / n
    sigma = np.sqrt(0.125 * 0.875 / n)
    assert np.all(np.abs(freq - 0.125) <= 3 * sigma)


def test_step_state_examples(markov_suite):
    m6 = markov_suite.candidates[5]       # a=0.3, b=2
    assert step_state(m6, 1.0, 0.0) == pytest.approx(2.3)
    assert step_state(CandidateModel(0, 0, 0, 0), 13.7, 0.0) == 0.0
    m1 = markov_suite.candidates[0]       # a=-0.1, b=0
    assert step_state(m1, 0.5, 0.05) == pytest.approx(0.0)


def test_emit_observation_examples(markov_suite):
    m6 = markov_suite.candidates[5]       # c=0.3, d=2
    assert emit_observation(m6, 4.0, 0.0) == pytest.approx(2.6)
    assert emit_observation(m6, 0.0, 0.0) == pytest.approx(2.0)
    m4 = markov_suite.candidates[3]       # c=-0.9, d=-4; |s| under the root
    assert emit_observation(m4, -1.0, 0.0) == pytest.approx(-4.9)


def test_simulate_deterministic(markov_suite):
    t1 = simulate(markov_suite, 99, traj_id=3)
    t2 = simulate(markov_suite, 99, traj_id=3)
    assert np.array_equal(t1.states, t2.states)
    assert np.array_equal(t1.regimes, t2.regimes)
    assert np.array_equal(t1.observations, t2.observations)
    t3 = simulate(markov_suite, 100, traj_id=3)
    assert not np.array_equal(t1.observations, t3.observations)


def test_initial_state_distribution(markov_suite):
    n = 100_000
    s0 = np.array([simulate(markov_suite, 555, traj_id=i).states[0] for i in range(300)])
    # Small-sample sanity on the bounds plus a larger direct check of the
    # same stream construction used by the simulator.
    assert s0.min() >= -0.5 and s0.max() <= 0.5
    rng = np.random.default_rng(np.random.SeedSequence([555, 1]))
    draws = rng.uniform(-0.5, 0.5, n)
    sigma = (1.0 / np.sqrt(12.0)) / np.sqrt(n)
    assert abs(draws.mean()) <= 3 * sigma
    assert draws.min() >= -0.5 and draws.max() <= 0.5


def test_markov_transition_frequencies(markov_suite):
    # 1e5 draws from row 0 of P: stay-probability 0.80 within 3-sigma.
    n = 100_000
    rng = np.random.default_rng(7)
    row = regime_prob_vector(markov_suite.dynamics, [0])
    draws = rng.choice(8, size=n, p=row)
    frac_stay = np.mean(draws == 0)
    sigma = np.sqrt(0.8 * 0.2 / n)
    assert abs(frac_stay - 0.8) <= 3 * sigma


def test_trajectory_invariants(markov_suite, polya_suite):
    for suite in (markov_suite, polya_suite):
        for seed in (0, 1, 2):
            traj = simulate(suite, seed, traj_id=seed)
            assert len(traj.states) == 51
            assert len(traj.regimes) == 51
            assert len(traj.observations) == 50
            assert traj.regimes.min() >= 0 and traj.regimes.max() < 8


@given(st.lists(st.integers(0, 7), min_size=1, max_size=30), st.integers(0, 1))
@settings(max_examples=50, deadline=None)
def test_regime_probs_sum_to_one(history, which):
    suite = paper_suite("markov" if which == 0 else "polya")
    probs = regime_prob_vector(suite.dynamics, history)
    assert abs(probs.sum() - 1.0) <= 1e-12
    assert np.all(probs >= 0)


@given(st.lists(st.integers(0, 7), min_size=2, max_size=30), st.randoms())
@settings(max_examples=50, deadline=None)
def test_polya_exchangeability(history, pyrandom):
    dyn = paper_suite("polya").dynamics
    shuffled = list(history)
    pyrandom.shuffle(shuffled)
    base = regime_prob_vector(dyn, history)
    perm = regime_prob_vector(dyn, shuffled)
    assert np.array_equal(base, perm)


@given(st.lists(st.integers(0, 7), min_size=1, max_size=30), st.integers(0, 7))
@settings(max_examples=50, deadline=None)
def test_markov_depends_only_on_last(history, last):
    dyn = paper_suite("markov").dynamics
    full = regime_prob_vector(dyn, history + [last])
    short = regime_prob_vector(dyn, [last])
    assert np.array_equal(full, short)


def test_regime_prob_index_out_of_range(markov_suite):
    with pytest.raises(IndexError):
        regime_prob(markov_suite.dynamics, [0], 8)


def test_dynamics_validation():
    with pytest.raises(ValueError):
        RegimeDynamics(kind="markov", n_regimes=2,
                       transition=np.array([[0.6, 0.3], [0.5, 0.5]]))
    with pytest.raises(ValueError):
        RegimeDynamics(kind="polya", n_regimes=2, beta=np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        RegimeDynamics(kind="exotic", n_regimes=2)
