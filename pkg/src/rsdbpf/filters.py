"""Particle filtering engines for regime-switching state-space models.

Four filters share one sequential importance sampling skeleton (propose a
regime index, propagate the state, reweight, normalise, weighted-mean
estimate, ESS-triggered multinomial resampling for the next step):

* ``run_rs_pf``   -- analytic candidate models + known switching law;
* ``run_mm_pf``   -- analytic candidates, one regime drawn per particle at
                     t=0 and never switched;
* ``run_rs_dbpf`` -- learned candidates (neural proposer + kernel
                     likelihood) with a known switching law;
* ``run_dbpf``    -- the single-regime special case of the above.

Weight arithmetic is entirely in the log domain. The learned filters run
either on plain numpy (evaluation) or on an autodiff tape (training); in
tape mode the per-step estimates stay differentiable and resampling
detaches particle states from the graph (gradient truncation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape, Var
from .neural import (
    BoundRegimeSet,
    NeuralRegimeSet,
    bind_params,
    log_likelihood,
    log_likelihood_np,
    propose,
    propose_np,
)
from .ssm import MARKOV, POLYA, ModelSuite, RegimeDynamics

UNIFORM = "uniform"
BOOTSTRAP = "bootstrap"
DETERMINISTIC = "deterministic"
_PROPOSALS = (UNIFORM, BOOTSTRAP, DETERMINISTIC)


@dataclass
class FilterConfig:
    """Particle count, resampling trigger and regime-index proposal.

    ``ess_threshold`` is absolute (defaults to half the particle count);
    resampling fires when ESS drops strictly below it.
    """

    n_particles: int
    ess_threshold: float | None = None
    regime_proposal: str = UNIFORM
    regime_dynamics_known: bool = True

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("n_particles must be positive")
        if self.ess_threshold is None:
            self.ess_threshold = 0.5 * self.n_particles
        if not 0.0 < self.ess_threshold <= self.n_particles:
            raise ValueError("ess_threshold must lie in (0, n_particles]")
        if self.regime_proposal not in _PROPOSALS:
            raise ValueError(f"unknown regime proposal {self.regime_proposal!r}")


@dataclass
class FilterOutput:
    """Per-step estimates, ESS trace and weighted regime frequencies."""

    estimates: np.ndarray            # (T,)
    ess_trace: np.ndarray            # (T,)
    regime_posterior: np.ndarray     # (T, N_m)
    estimate_vars: list[Var] | None = None  # tape mode only


# ---------------------------------------------------------------------------
# Shared weight machinery
# ---------------------------------------------------------------------------

def normalize_log_weights(raw: np.ndarray) -> np.ndarray:
    """Shift by logsumexp so that exp of the result sums to one."""
    raw = np.asarray(raw, dtype=np.float64)
    m = np.max(raw)
    if not np.isfinite(m):
        raise ValueError("all log weights are -inf (degenerate weights)")
    return raw - (m + math.log(np.sum(np.exp(raw - m))))


def ess(log_weights: np.ndarray) -> float:
    """Effective sample size 1 / sum(w_i^2) of normalised weights."""
    lw = np.asarray(log_weights, dtype=np.float64)
    m = np.max(lw)
    if not np.isfinite(m):
        raise ValueError("all log weights are -inf (degenerate weights)")
    w = np.exp(lw - m)
    s1 = w.sum()
    s2 = (w * w).sum()
    return float(s1 * s1 / s2)


def multinomial_ancestors(weights: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """Inverse-CDF multinomial draw of one ancestor per uniform."""
    cum = np.cumsum(weights)
    idx = np.searchsorted(cum, uniforms * cum[-1], side="right")
    return np.minimum(idx, len(weights) - 1)


def rs_weight_update(log_w_prev, log_p_regime, log_q_regime, log_lik):
    """Log-domain regime-switching weight update: w * p * g / q."""
    if not np.all(np.isfinite(np.asarray(log_q_regime))):
        raise ValueError("proposal log-probability must be finite (q must dominate p)")
    return log_w_prev + log_p_regime + log_lik - log_q_regime


def _regime_prob_rows(dynamics: RegimeDynamics, m_last: np.ndarray,
                      counts: np.ndarray | None) -> np.ndarray:
    """Per-particle switching probabilities p(m_t = . | m_{0:t-1})."""
    if dynamics.kind == MARKOV:
        return dynamics.transition[m_last]
    # Polya: counts hold the occurrences of each regime over m_{0:t-1}.
    denom = counts.sum(axis=1, keepdims=True) + dynamics.beta.sum()
    return (counts + dynamics.beta) / denom


def _sample_rows(prob_rows: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    cum = np.cumsum(prob_rows, axis=1)
    idx = (cum < uniforms[:, None] * cum[:, -1:]).sum(axis=1)
    return np.minimum(idx, prob_rows.shape[1] - 1)


# ---------------------------------------------------------------------------
# Analytic filters (single trajectory, vectorized over particles)
# ---------------------------------------------------------------------------

def _analytic_log_lik(suite_arrays, m: np.ndarray, obs_t: float, s: np.ndarray) -> np.ndarray:
    c, d, var_v = suite_arrays
    mean = c[m] * np.sqrt(np.abs(s)) + d[m]
    resid = obs_t - mean
    return -0.5 * np.log(2.0 * math.pi * var_v[m]) - resid * resid / (2.0 * var_v[m])


def _weighted_regime_freq(m: np.ndarray, w: np.ndarray, n_regimes: int) -> np.ndarray:
    return np.bincount(m, weights=w, minlength=n_regimes)


def run_rs_pf(suite: ModelSuite, observations: np.ndarray, cfg: FilterConfig,
              rng: np.random.Generator) -> FilterOutput:
    """Regime-switching particle filter with the true candidate models."""
    if not cfg.regime_dynamics_known:
        raise ValueError("run_rs_pf requires the switching law (regime_dynamics_known)")
    return _run_analytic(suite, observations, cfg, rng, fixed_regimes=False)


def run_mm_pf(suite: ModelSuite, observations: np.ndarray, cfg: FilterConfig,
              rng: np.random.Generator) -> FilterOutput:
    """Multi-model filter: a bank of per-model bootstrap filters.

    Every candidate model runs its own bootstrap filter on an equal share
    of the particles and never switches (the no-switching assumption).
    The per-model estimates are fused by fading-memory predictive
    likelihoods: log q_t = lam * log q_{t-1} + log p(o_t | o_{1:t-1}, M_j),
    with the memory factor matched to the benchmark's mean regime dwell.
    """
    observations = np.asarray(observations, dtype=np.float64)
    t_max = len(observations)
    n_reg = suite.n_regimes
    n = cfg.n_particles
    # Equal allocation; the first groups absorb any remainder.
    sizes = np.full(n_reg, n // n_reg, dtype=np.int64)
    sizes[: n % n_reg] += 1
    offsets = np.concatenate(([0], np.cumsum(sizes)))
    var_u = np.array([m.dyn_noise_var for m in suite.candidates])
    var_v = np.array([m.obs_noise_var for m in suite.candidates])
    a, b, c, d = suite.coefficient_arrays()

    states = rng.uniform(suite.init_state_low, suite.init_state_high, n)
    log_w = [np.full(sizes[j], -math.log(sizes[j])) for j in range(n_reg)]
    fade = 0.6  # memory factor; effective window ~ the mean regime dwell
    log_mix = np.full(n_reg, -math.log(n_reg))

    estimates = np.empty(t_max)
    ess_trace = np.empty(t_max)
    regime_post = np.empty((t_max, n_reg))

    for t in range(1, t_max + 1):
        z = rng.standard_normal(n)
        group_means = np.empty(n_reg)
        group_ess = np.empty(n_reg)
        log_incr = np.empty(n_reg)  # log sum_i w_i * p(o_t | s_t^i, M_j)
        for j in range(n_reg):
            blk = slice(offsets[j], offsets[j + 1])
            s = a[j] * states[blk] + b[j] + math.sqrt(var_u[j]) * z[blk]
            states[blk] = s
            mean = c[j] * np.sqrt(np.abs(s)) + d[j]
            resid = observations[t - 1] - mean
            log_lik = -0.5 * math.log(2.0 * math.pi * var_v[j]) \
                - resid * resid / (2.0 * var_v[j])
            combined = log_w[j] + log_lik
            shift = combined.max()
            log_incr[j] = shift + math.log(np.sum(np.exp(combined - shift)))
            log_w[j] = normalize_log_weights(combined)
            w = np.exp(log_w[j])
            group_means[j] = np.sum(w * s)
            group_ess[j] = ess(log_w[j])
            # Per-group trigger at the same fraction of the group size.
            if group_ess[j] < cfg.ess_threshold * sizes[j] / n:
                anc = multinomial_ancestors(w, rng.random(sizes[j]))
                states[blk] = s[anc]
                log_w[j] = np.full(sizes[j], -math.log(sizes[j]))

        log_mix = fade * log_mix + log_incr
        model_post = np.exp(normalize_log_weights(log_mix))
        estimates[t - 1] = float(np.sum(model_post * group_means))
        # Degeneracy of the fused weights q_j * w_ij: 1 / sum q_j^2 / ESS_j.
        ess_trace[t - 1] = float(1.0 / np.sum(model_post ** 2 / group_ess))
        regime_post[t - 1] = model_post

    return FilterOutput(estimates=estimates, ess_trace=ess_trace, regime_posterior=regime_post)


def _run_analytic(suite: ModelSuite, observations: np.ndarray, cfg: FilterConfig,
                  rng: np.random.Generator, fixed_regimes: bool) -> FilterOutput:
    observations = np.asarray(observations, dtype=np.float64)
    t_max = len(observations)
    n = cfg.n_particles
    n_reg = suite.n_regimes
    a, b, c, d = suite.coefficient_arrays()
    var_u = np.array([mdl.dyn_noise_var for mdl in suite.candidates])
    var_v = np.array([mdl.obs_noise_var for mdl in suite.candidates])
    dynamics = suite.dynamics
    log_n_reg = math.log(n_reg)

    m = rng.integers(0, n_reg, n) if n_reg > 1 else np.zeros(n, dtype=np.int64)
    s = rng.uniform(suite.init_state_low, suite.init_state_high, n)
    lw = np.full(n, -math.log(n))
    counts = None
    if dynamics.kind == POLYA and not fixed_regimes:
        counts = np.zeros((n, n_reg))
        counts[np.arange(n), m] += 1.0

    estimates = np.empty(t_max)
    ess_trace = np.empty(t_max)
    regime_post = np.empty((t_max, n_reg))

    for t in range(1, t_max + 1):
        if fixed_regimes or n_reg == 1:
            m_new = m
            log_ratio = 0.0
        else:
            prob_rows = _regime_prob_rows(dynamics, m, counts)
            if cfg.regime_proposal == UNIFORM:
                m_new = rng.integers(0, n_reg, n)
                log_q = -log_n_reg
            elif cfg.regime_proposal == BOOTSTRAP:
                m_new = _sample_rows(prob_rows, rng.random(n))
                log_q = None  # cancels exactly
            else:
                m_new = np.arange(n) % n_reg
                log_q = -log_n_reg
            if log_q is None:
                log_ratio = 0.0
            else:
                log_p = np.log(prob_rows[np.arange(n), m_new])
                log_ratio = log_p - log_q

        z = rng.standard_normal(n)
        s = a[m_new] * s + b[m_new] + np.sqrt(var_u[m_new]) * z
        log_lik = _analytic_log_lik((c, d, var_v), m_new, observations[t - 1], s)
        lw = rs_weight_update(lw, log_ratio, 0.0, log_lik)
        lw = normalize_log_weights(lw)
        w = np.exp(lw)
        ess_t = ess(lw)

        # Estimate from the weighted particles; resampling only prepares
        # the next step (and in differentiable mode truncates gradients).
        estimates[t - 1] = np.sum(w * s)
        ess_trace[t - 1] = ess_t
        regime_post[t - 1] = _weighted_regime_freq(m_new, w, n_reg)

        if ess_t < cfg.ess_threshold:
            anc = multinomial_ancestors(w, rng.random(n))
            s = s[anc]
            m_new = m_new[anc]
            if counts is not None:
                counts = counts[anc]
            lw = np.full(n, -math.log(n))

        if counts is not None:
            counts[np.arange(n), m_new] += 1.0
        m = m_new

    return FilterOutput(estimates=estimates, ess_trace=ess_trace, regime_posterior=regime_post)


# ---------------------------------------------------------------------------
# Learned filters: batched core shared by training (tape) and evaluation
# ---------------------------------------------------------------------------

@dataclass
class _BatchNoise:
    """Pre-drawn randomness, one block per trajectory, fixed draw order."""

    init_regimes: np.ndarray        # (M,)
    init_states: np.ndarray         # (M,)
    eps: np.ndarray                 # (T, M)
    regime_draws: np.ndarray | None  # (T, M) ints (uniform) or floats (bootstrap)
    resample_uniforms: np.ndarray   # (T, M)


def _draw_batch_noise(rngs, t_max: int, n: int, n_reg: int, proposal: str) -> _BatchNoise:
    init_m, init_s, eps, reg, res = [], [], [], [], []
    draw_regimes = n_reg > 1 and proposal in (UNIFORM, BOOTSTRAP)
    for rng in rngs:
        init_m.append(rng.integers(0, n_reg, n) if n_reg > 1 else np.zeros(n, dtype=np.int64))
        init_s.append(rng.uniform(-0.5, 0.5, n))
        eps.append(rng.standard_normal((t_max, n)))
        if draw_regimes:
            if proposal == UNIFORM:
                reg.append(rng.integers(0, n_reg, (t_max, n)))
            else:
                reg.append(rng.random((t_max, n)))
        res.append(rng.random((t_max, n)))
    return _BatchNoise(
        init_regimes=np.concatenate(init_m),
        init_states=np.concatenate(init_s),
        eps=np.concatenate(eps, axis=1),
        regime_draws=np.concatenate(reg, axis=1) if draw_regimes else None,
        resample_uniforms=np.concatenate(res, axis=1),
    )


@dataclass
class BatchInit:
    """Explicit initial particle system, for continuation runs in tests."""

    states: np.ndarray                  # (M,)
    m_last: np.ndarray                  # (M,)
    log_weights: np.ndarray             # (M,)
    counts: np.ndarray | None = None    # (M, N_m), Polya only


@dataclass
class LearnedBatchResult:
    estimates: np.ndarray                 # (C, T)
    ess: np.ndarray                       # (C, T)
    regime_posterior: np.ndarray          # (C, T, N_m)
    estimate_vars: list[Var] | None       # tape mode: one (C,) Var per step
    bound: BoundRegimeSet | None          # tape mode: parameter leaves
    final: BatchInit | None = None        # particle system after the last step


def run_learned_batch(
    params: NeuralRegimeSet,
    dynamics: RegimeDynamics | None,
    obs_batch: np.ndarray,
    cfg: FilterConfig,
    rngs,
    tape: Tape | None = None,
    resample_schedule: np.ndarray | None = None,
    noise: _BatchNoise | None = None,
    init: BatchInit | None = None,
) -> LearnedBatchResult:
    """Run the learned filter on C trajectories packed into one vector.

    ``obs_batch`` has shape (C, T); ``rngs`` supplies one Generator per
    trajectory. With a tape, states, weights and estimates are recorded for
    backpropagation. ``resample_schedule`` overrides the ESS trigger with a
    fixed per-step boolean (applied to every trajectory). ``noise`` injects
    pre-drawn randomness and ``init`` an explicit starting particle system;
    both exist for continuation/reconstruction tests.
    """
    obs_batch = np.atleast_2d(np.asarray(obs_batch, dtype=np.float64))
    n_traj, t_max = obs_batch.shape
    if noise is None and len(rngs) != n_traj:
        raise ValueError("need one RNG stream per trajectory")
    n = cfg.n_particles
    n_reg = params.n_regimes
    if n_reg > 1:
        if dynamics is None:
            raise ValueError("multi-regime filtering needs the switching dynamics")
        if not cfg.regime_dynamics_known:
            raise ValueError("weight update requires the switching law")
        if dynamics.n_regimes != n_reg:
            raise ValueError("dynamics/regime-set size mismatch")
    m_total = n_traj * n
    log_n_reg = math.log(n_reg) if n_reg > 1 else 0.0
    ar = np.arange(m_total)

    if noise is None:
        noise = _draw_batch_noise(rngs, t_max, n, n_reg, cfg.regime_proposal)
    tape_mode = tape is not None
    bound = bind_params(tape, params) if tape_mode else None
    nets = bound.nets if tape_mode else params.nets

    if init is not None:
        m_last = init.m_last.copy()
        counts = None if init.counts is None else init.counts.copy()
        init_states = init.states
        init_lw = init.log_weights.copy()
    else:
        m_last = noise.init_regimes
        counts = None
        if n_reg > 1 and dynamics.kind == POLYA:
            counts = np.zeros((m_total, n_reg))
            counts[ar, m_last] += 1.0
        init_states = noise.init_states
        init_lw = np.full(m_total, -math.log(n))

    if tape_mode:
        s_cur = tape.const(init_states)
        lw = tape.const(init_lw)
    else:
        s_cur = init_states.copy()
        lw = init_lw.copy()

    estimates = np.empty((n_traj, t_max))
    ess_out = np.empty((n_traj, t_max))
    regime_post = np.empty((n_traj, t_max, n_reg))
    est_vars: list[Var] = []

    for t in range(1, t_max + 1):
        # Regime index proposal and the log p/q correction.
        if n_reg == 1:
            m_new = m_last
            log_ratio = np.zeros(m_total)
        else:
            prob_rows = _regime_prob_rows(dynamics, m_last, counts)
            if cfg.regime_proposal == UNIFORM:
                m_new = noise.regime_draws[t - 1]
                log_ratio = np.log(prob_rows[ar, m_new]) + log_n_reg
            elif cfg.regime_proposal == BOOTSTRAP:
                m_new = _sample_rows(prob_rows, noise.regime_draws[t - 1])
                log_ratio = np.zeros(m_total)
            else:
                m_new = np.tile(np.arange(n) % n_reg, n_traj)
                log_ratio = np.log(prob_rows[ar, m_new]) + log_n_reg

        obs_rep = np.repeat(obs_batch[:, t - 1], n)
        eps_t = noise.eps[t - 1]

        if n_reg == 1:
            sort_perm = None
        else:
            # Evaluate each regime's nets once, on its own particles: stable
            # sort by regime index, per-block forward, then un-sort.
            sort_perm = np.argsort(m_new, kind="stable")
            inv_perm = np.empty(m_total, dtype=np.int64)
            inv_perm[sort_perm] = ar
            block_counts = np.bincount(m_new, minlength=n_reg)
            offsets = np.concatenate(([0], np.cumsum(block_counts)))
            eps_sorted = eps_t[sort_perm]
            obs_sorted = obs_rep[sort_perm]

        if tape_mode:
            if sort_perm is None:
                s_cur = propose(nets[0], s_cur, eps_t)
                log_lik = log_likelihood(nets[0], obs_rep, s_cur)
            else:
                s_sorted = tape.permute(s_cur, sort_perm)
                s_parts, ll_parts = [], []
                for j in range(n_reg):
                    lo, hi = offsets[j], offsets[j + 1]
                    if hi == lo:
                        continue
                    s_j = propose(nets[j], tape.narrow(s_sorted, lo, hi - lo),
                                  eps_sorted[lo:hi])
                    ll_parts.append(log_likelihood(nets[j], obs_sorted[lo:hi], s_j))
                    s_parts.append(s_j)
                s_cur = tape.permute(tape.concat(s_parts), inv_perm)
                log_lik = tape.permute(tape.concat(ll_parts), inv_perm)
            lw = lw + tape.const(log_ratio) + log_lik
            # Per-trajectory normalisation (stop-gradient max shift is exact).
            shift = np.repeat(lw.value.reshape(n_traj, n).max(axis=1), n)
            shifted = lw - tape.const(shift)
            log_norm = tape.ln(tape.seg_sum(tape.exp(shifted), n_traj))
            lw = shifted - tape.seg_repeat(log_norm, n)
            w_val = np.exp(lw.value)
        else:
            if sort_perm is None:
                s_cur = propose_np(nets[0], s_cur, eps_t)
                log_lik = log_likelihood_np(nets[0], obs_rep, s_cur)
            else:
                s_sorted = s_cur[sort_perm]
                s_new = np.empty(m_total)
                ll_new = np.empty(m_total)
                for j in range(n_reg):
                    lo, hi = offsets[j], offsets[j + 1]
                    if hi == lo:
                        continue
                    s_new[lo:hi] = propose_np(nets[j], s_sorted[lo:hi], eps_sorted[lo:hi])
                    ll_new[lo:hi] = log_likelihood_np(nets[j], obs_sorted[lo:hi], s_new[lo:hi])
                s_cur = s_new[inv_perm]
                log_lik = ll_new[inv_perm]
            lw = lw + log_ratio + log_lik
            shift = np.repeat(lw.reshape(n_traj, n).max(axis=1), n)
            shifted = lw - shift
            log_norm = np.log(np.exp(shifted).reshape(n_traj, n).sum(axis=1))
            lw = shifted - np.repeat(log_norm, n)
            w_val = np.exp(lw)

        w_mat = w_val.reshape(n_traj, n)
        ess_t = 1.0 / np.sum(w_mat * w_mat, axis=1)
        ess_out[:, t - 1] = ess_t

        # Estimate from the weighted particles; resampling below only
        # prepares the next step.
        if tape_mode:
            est = tape.seg_sum(tape.mul(tape.exp(lw), s_cur), n_traj)
            est_vars.append(est)
            estimates[:, t - 1] = est.value
        else:
            estimates[:, t - 1] = np.sum(w_mat * s_cur.reshape(n_traj, n), axis=1)

        for ci in range(n_traj):
            blk = slice(ci * n, (ci + 1) * n)
            regime_post[ci, t - 1] = _weighted_regime_freq(m_new[blk], w_val[blk], n_reg)

        if resample_schedule is not None:
            do_resample = np.full(n_traj, bool(resample_schedule[t - 1]))
        else:
            do_resample = ess_t < cfg.ess_threshold

        if np.any(do_resample):
            s_val = s_cur.value if tape_mode else s_cur
            new_s = np.zeros(m_total)
            keep = np.ones(m_total)
            m_res = m_new.copy()
            for ci in np.nonzero(do_resample)[0]:
                blk = slice(ci * n, (ci + 1) * n)
                anc = multinomial_ancestors(w_mat[ci], noise.resample_uniforms[t - 1, blk])
                new_s[blk] = s_val[blk][anc]
                keep[blk] = 0.0
                m_res[blk] = m_new[blk][anc]
                if counts is not None:
                    counts[blk] = counts[blk][anc]
            m_new = m_res
            repl_lw = np.where(keep == 0.0, -math.log(n), 0.0)
            if tape_mode:
                # Gradient truncation: resampled states re-enter as constants.
                keep_c = tape.const(keep)
                s_cur = keep_c * s_cur + tape.const(new_s)
                lw = keep_c * lw + tape.const(repl_lw)
            else:
                s_cur = keep * s_cur + new_s
                lw = keep * lw + repl_lw

        if counts is not None:
            counts[ar, m_new] += 1.0
        m_last = m_new

    return LearnedBatchResult(
        estimates=estimates,
        ess=ess_out,
        regime_posterior=regime_post,
        estimate_vars=est_vars if tape_mode else None,
        bound=bound,
        final=BatchInit(
            states=np.array(s_cur.value if tape_mode else s_cur),
            m_last=m_last.copy(),
            log_weights=np.array(lw.value if tape_mode else lw),
            counts=None if counts is None else counts.copy(),
        ),
    )


def run_rs_dbpf(
    params: NeuralRegimeSet,
    dynamics: RegimeDynamics,
    observations: np.ndarray,
    cfg: FilterConfig,
    rng: np.random.Generator,
    tape: Tape | None = None,
    resample_schedule: np.ndarray | None = None,
) -> FilterOutput:
    """Learned regime-switching filter on one trajectory."""
    res = run_learned_batch(params, dynamics, np.asarray(observations)[None, :],
                            cfg, [rng], tape, resample_schedule)
    return FilterOutput(
        estimates=res.estimates[0],
        ess_trace=res.ess[0],
        regime_posterior=res.regime_posterior[0],
        estimate_vars=res.estimate_vars,
    )


def run_dbpf(
    params: NeuralRegimeSet,
    observations: np.ndarray,
    cfg: FilterConfig,
    rng: np.random.Generator,
    tape: Tape | None = None,
    resample_schedule: np.ndarray | None = None,
) -> FilterOutput:
    """Single-regime learned bootstrap filter (weights multiply by g only)."""
    if params.n_regimes != 1:
        raise ValueError("run_dbpf expects a single-regime parameter set")
    res = run_learned_batch(params, None, np.asarray(observations)[None, :],
                            cfg, [rng], tape, resample_schedule)
    return FilterOutput(
        estimates=res.estimates[0],
        ess_trace=res.ess[0],
        regime_posterior=res.regime_posterior[0],
        estimate_vars=res.estimate_vars,
    )
