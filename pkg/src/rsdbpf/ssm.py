"""Regime-switching state-space models and the trajectory simulator.

A suite bundles N_m candidate scalar models

    s_t = a_j * s_{t-1} + b_j + u_t,        u_t ~ N(0, dyn_noise_var)
    o_t = c_j * sqrt(|s_t|) + d_j + v_t,    v_t ~ N(0, obs_noise_var)

with a regime-index process that is either a first-order Markov chain or a
Polya urn. Regime indices are 0-based throughout the Python API; serialized
formats use 1-based indices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

MARKOV = "markov"
POLYA = "polya"


@dataclass(frozen=True)
class CandidateModel:
    """One analytic sub-model (a, b, c, d) plus its noise variances."""

    a: float
    b: float
    c: float
    d: float
    dyn_noise_var: float = 0.1
    obs_noise_var: float = 0.1

    def __post_init__(self):
        if self.dyn_noise_var < 0 or self.obs_noise_var < 0:
            raise ValueError("noise variances must be non-negative")


@dataclass(frozen=True)
class RegimeDynamics:
    """Switching law for the regime index process.

    kind "markov": ``transition`` is an (N_m, N_m) row-stochastic matrix,
    P[j, k] = p(m_t = k | m_{t-1} = j). kind "polya": ``beta`` holds the
    positive pseudo-counts of the urn.
    """

    kind: str
    n_regimes: int
    transition: np.ndarray | None = None
    beta: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in (MARKOV, POLYA):
            raise ValueError(f"unknown dynamics kind {self.kind!r}")
        if self.kind == MARKOV:
            p = np.asarray(self.transition, dtype=np.float64)
            if p.shape != (self.n_regimes, self.n_regimes):
                raise ValueError("transition matrix shape mismatch")
            if np.any(p < 0):
                raise ValueError("transition probabilities must be non-negative")
            if np.max(np.abs(p.sum(axis=1) - 1.0)) > 1e-12:
                raise ValueError("transition matrix rows must sum to 1")
            object.__setattr__(self, "transition", p)
        else:
            b = np.asarray(self.beta, dtype=np.float64)
            if b.shape != (self.n_regimes,):
                raise ValueError("beta length mismatch")
            if np.any(b <= 0):
                raise ValueError("beta entries must be positive")
            object.__setattr__(self, "beta", b)


@dataclass(frozen=True)
class ModelSuite:
    """Candidate models + switching law + initial laws + horizon."""

    candidates: tuple[CandidateModel, ...]
    dynamics: RegimeDynamics
    init_state_low: float = -0.5
    init_state_high: float = 0.5
    horizon: int = 50

    def __post_init__(self):
        if len(self.candidates) != self.dynamics.n_regimes:
            raise ValueError("candidate count must equal n_regimes")

    @property
    def n_regimes(self) -> int:
        return self.dynamics.n_regimes

    def coefficient_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(a, b, c, d) stacked over regimes, for vectorized filtering."""
        a = np.array([m.a for m in self.candidates])
        b = np.array([m.b for m in self.candidates])
        c = np.array([m.c for m in self.candidates])
        d = np.array([m.d for m in self.candidates])
        return a, b, c, d


@dataclass
class Trajectory:
    """Simulated ground truth: states s_{0:T}, regimes m_{0:T}, obs o_{1:T}."""

    states: np.ndarray
    regimes: np.ndarray
    observations: np.ndarray
    traj_id: int = 0

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.float64)
        self.regimes = np.asarray(self.regimes, dtype=np.int64)
        self.observations = np.asarray(self.observations, dtype=np.float64)
        t = len(self.observations)
        if len(self.states) != t + 1 or len(self.regimes) != t + 1:
            raise ValueError("states/regimes must have length T+1 for T observations")

    @property
    def horizon(self) -> int:
        return len(self.observations)


# Coefficients of the 8-model benchmark suite.
_COEF_A = (-0.1, -0.3, -0.5, -0.9, 0.1, 0.3, 0.5, 0.9)
_COEF_B = (0.0, -2.0, 2.0, -4.0, 0.0, 2.0, -2.0, 4.0)


def markov_benchmark_matrix(n_regimes: int = 8, stay: float = 0.80, advance: float = 0.15,
                            rho: float | None = None) -> np.ndarray:
    """Transition matrix with a cyclic super-diagonal and flat remainder."""
    if rho is None:
        rho = (1.0 - stay - advance) / (n_regimes - 2)
    p = np.full((n_regimes, n_regimes), rho)
    for j in range(n_regimes):
        p[j, j] = stay
        p[j, (j + 1) % n_regimes] = advance
    return p


def paper_suite(dynamics_kind: str = MARKOV) -> ModelSuite:
    """The 8-model benchmark suite with Markov or Polya switching."""
    candidates = tuple(
        CandidateModel(a=a, b=b, c=a, d=b, dyn_noise_var=0.1, obs_noise_var=0.1)
        for a, b in zip(_COEF_A, _COEF_B)
    )
    n = len(candidates)
    if dynamics_kind == MARKOV:
        dyn = RegimeDynamics(kind=MARKOV, n_regimes=n,
                             transition=markov_benchmark_matrix(n, rho=1.0 / 120.0))
    elif dynamics_kind == POLYA:
        dyn = RegimeDynamics(kind=POLYA, n_regimes=n, beta=np.ones(n))
    else:
        raise ValueError(f"unknown dynamics kind {dynamics_kind!r}")
    return ModelSuite(candidates=candidates, dynamics=dyn, horizon=50)


def regime_prob_vector(dynamics: RegimeDynamics, history: Sequence[int]) -> np.ndarray:
    """p(m_t = k | m_{0:t-1}) for all k, given the full 0-based history."""
    if len(history) == 0:
        raise ValueError("history must contain at least m_0")
    if dynamics.kind == MARKOV:
        return dynamics.transition[history[-1]].copy()
    counts = np.bincount(np.asarray(history, dtype=np.int64), minlength=dynamics.n_regimes)
    weights = counts + dynamics.beta
    return weights / weights.sum()


def regime_prob(dynamics: RegimeDynamics, history: Sequence[int], k: int) -> float:
    """p(m_t = k | m_{0:t-1}); Markov uses the last index, Polya the counts."""
    if not 0 <= k < dynamics.n_regimes:
        raise IndexError(f"regime index {k} out of range")
    return float(regime_prob_vector(dynamics, history)[k])


def step_state(model: CandidateModel, s_prev: float, u: float) -> float:
    return model.a * s_prev + model.b + u


def emit_observation(model: CandidateModel, s: float, v: float) -> float:
    return model.c * np.sqrt(abs(s)) + model.d + v


def trajectory_rng(master_seed: int, traj_id: int) -> np.random.Generator:
    """Per-trajectory stream, independent of generation order."""
    return np.random.default_rng(np.random.SeedSequence([master_seed, 0, traj_id]))


def simulate(suite: ModelSuite, rng_seed: int, traj_id: int = 0) -> Trajectory:
    """Simulate one trajectory; deterministic given the seed.

    Draw order: m_0, s_0, then per step the regime inverse-CDF uniform,
    the dynamic noise and the observation noise.
    """
    rng = np.random.default_rng(np.random.SeedSequence([rng_seed, 0, traj_id]))
    n = suite.n_regimes
    t_max = suite.horizon

    regimes = np.empty(t_max + 1, dtype=np.int64)
    states = np.empty(t_max + 1, dtype=np.float64)
    observations = np.empty(t_max, dtype=np.float64)

    regimes[0] = rng.integers(0, n)
    states[0] = rng.uniform(suite.init_state_low, suite.init_state_high)

    history = [int(regimes[0])]
    for t in range(1, t_max + 1):
        probs = regime_prob_vector(suite.dynamics, history)
        m = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
        m = min(m, n - 1)
        regimes[t] = m
        history.append(m)
        model = suite.candidates[m]
        u = rng.standard_normal() * np.sqrt(model.dyn_noise_var)
        states[t] = step_state(model, states[t - 1], u)
        v = rng.standard_normal() * np.sqrt(model.obs_noise_var)
        observations[t - 1] = emit_observation(model, states[t], v)

    return Trajectory(states=states, regimes=regimes, observations=observations, traj_id=traj_id)
