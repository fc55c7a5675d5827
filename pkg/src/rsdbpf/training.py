"""Supervised training of the learned filters.

Loss is the mean over minibatch trajectories of the per-trajectory mean
squared error between filter estimates and ground-truth states. Gradients
flow through the filter via the reparameterised proposer and the kernel
likelihood; the optimizer is SGD with classical momentum and a step-wise
halving learning-rate schedule. The snapshot with the best validation RMSE
is returned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Gradient, Tape, Var
from .dataset import Dataset
from .filters import UNIFORM, FilterConfig, run_learned_batch
from .neural import NeuralRegimeSet, init_params
from .ssm import RegimeDynamics

DBPF = "dbpf"
RS_DBPF = "rs-dbpf"


@dataclass
class TrainConfig:
    """Optimisation hyperparameters; defaults follow the benchmark setup."""

    learning_rate: float = 0.05
    momentum: float = 0.9
    lr_halving_period: int = 10
    epochs: int = 60
    batch_size: int = 100
    train_particles: int = 200
    seed: int = 0
    ess_threshold_frac: float = 0.5
    regime_proposal: str = UNIFORM
    clip_norm: float | None = None  # rescue switch, off for benchmark runs
    tape_chunk: int = 10            # trajectories per tape (memory/speed knob)

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if min(self.epochs, self.batch_size, self.train_particles,
               self.lr_halving_period) <= 0:
            raise ValueError("epochs, batch size, particles and halving period "
                             "must all be positive")


@dataclass
class OptimizerState:
    """Momentum buffer, one entry per parameter."""

    velocity: np.ndarray

    @classmethod
    def zeros(cls, n_params: int) -> "OptimizerState":
        return cls(velocity=np.zeros(n_params))


@dataclass
class TrainLogEntry:
    epoch: int
    train_loss: float
    val_rmse: float
    lr: float


@dataclass
class TrainResult:
    params: NeuralRegimeSet          # best-validation snapshot
    final_params: NeuralRegimeSet
    log: list[TrainLogEntry]
    best_epoch: int
    best_val_rmse: float


class TrainingDivergence(RuntimeError):
    """Non-finite loss; carries (epoch, batch, parameter norm) context."""

    def __init__(self, epoch: int, batch: int, param_norm: float):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch} "
                         f"(parameter norm {param_norm:.4g})")
        self.epoch = epoch
        self.batch = batch
        self.param_norm = param_norm


def trajectory_loss(estimates: list[Var], truth: np.ndarray) -> Var:
    """Mean squared error (1/T) sum_t (est_t - truth_t)^2 as a tape node."""
    truth = np.asarray(truth, dtype=np.float64)
    if len(estimates) != len(truth):
        raise ValueError("estimates and truth must have equal length")
    tape = estimates[0].tape
    acc = None
    for est, s_true in zip(estimates, truth):
        sq = tape.square(est - float(s_true))
        acc = sq if acc is None else acc + sq
    return acc * (1.0 / len(truth))


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    """Step-wise decay: halve every lr_halving_period epochs."""
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    return cfg.learning_rate * 0.5 ** (epoch // cfg.lr_halving_period)


def flat_gradient(grad: Gradient, leaves: list[Var]) -> np.ndarray:
    """Adjoints flattened in flat-parameter order; every leaf must be present."""
    try:
        return np.concatenate([np.atleast_1d(grad.adjoints[lf.id]) for lf in leaves])
    except KeyError as exc:
        raise KeyError(f"gradient missing entry for leaf {exc}") from None


def sgd_momentum_step(params_flat: np.ndarray, grads_flat: np.ndarray,
                      state: OptimizerState, lr: float, momentum: float = 0.9) -> None:
    """Classical momentum, in place: v <- mu*v + g; theta <- theta - lr*v."""
    if grads_flat.shape != params_flat.shape:
        raise ValueError("gradient entries missing: shape mismatch with parameters")
    state.velocity *= momentum
    state.velocity += grads_flat
    params_flat -= lr * state.velocity


def _chunks(seq, size):
    for i in range(0, len(seq), size):
        yield seq[i:i + size]


def _batch_rmse(params: NeuralRegimeSet, dynamics: RegimeDynamics | None,
                trajectories, fcfg: FilterConfig, rng_for, chunk: int) -> float:
    """Mean per-trajectory RMSE, evaluation (numpy) mode."""
    rmses = []
    for part in _chunks(trajectories, chunk):
        obs = np.stack([t.observations for t in part])
        truth = np.stack([t.states[1:] for t in part])
        rngs = [rng_for(t.traj_id) for t in part]
        res = run_learned_batch(params, dynamics, obs, fcfg, rngs, tape=None)
        rmses.extend(np.sqrt(np.mean((res.estimates - truth) ** 2, axis=1)))
    return float(np.mean(rmses))


def train(filter_kind: str, dataset: Dataset, cfg: TrainConfig,
          regime_dynamics: RegimeDynamics | None = None,
          improvement_hook=None, epoch_hook=None) -> TrainResult:
    """Minibatch training loop with best-validation snapshot selection.

    Each (epoch, batch, trajectory) triple gets a fresh filter RNG stream
    derived from cfg.seed; validation streams are fixed across epochs so
    snapshot selection compares like against like. ``improvement_hook``,
    if given, is called as hook(epoch, params_snapshot) whenever the
    validation RMSE improves; ``epoch_hook(entry)`` after every epoch.
    """
    if filter_kind == RS_DBPF:
        if regime_dynamics is None:
            raise ValueError("rs-dbpf training needs the regime dynamics")
        n_regimes = regime_dynamics.n_regimes
        dynamics = regime_dynamics
    elif filter_kind == DBPF:
        n_regimes = 1
        dynamics = None
    else:
        raise ValueError(f"unknown filter kind {filter_kind!r}")

    train_trajs = dataset.split_trajectories("train")
    val_trajs = dataset.split_trajectories("val")
    if not train_trajs or not val_trajs:
        raise ValueError("dataset needs non-empty train and val splits")
    if cfg.batch_size > len(train_trajs):
        raise ValueError("batch_size exceeds the training split")

    params = init_params(cfg.seed, n_regimes)
    opt = OptimizerState.zeros(params.n_params)
    fcfg = FilterConfig(
        n_particles=cfg.train_particles,
        ess_threshold=cfg.ess_threshold_frac * cfg.train_particles,
        regime_proposal=cfg.regime_proposal,
    )
    horizon = train_trajs[0].horizon
    order_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))

    def val_rng(traj_id: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([cfg.seed, 3, traj_id]))

    log: list[TrainLogEntry] = []
    best_flat: np.ndarray | None = None
    best_val = math.inf
    best_epoch = -1

    for epoch in range(cfg.epochs):
        lr = lr_at(epoch, cfg)
        perm = order_rng.permutation(len(train_trajs))
        loss_sum = 0.0
        n_batches = 0
        for batch_idx, lo in enumerate(range(0, len(train_trajs), cfg.batch_size)):
            batch = [train_trajs[i] for i in perm[lo:lo + cfg.batch_size]]
            grad_acc = np.zeros(params.n_params)
            batch_loss = 0.0
            for part in _chunks(batch, cfg.tape_chunk):
                tape = Tape()
                obs = np.stack([t.observations for t in part])
                truth = np.stack([t.states[1:] for t in part])
                rngs = [np.random.default_rng(np.random.SeedSequence(
                    [cfg.seed, 2, epoch, batch_idx, t.traj_id])) for t in part]
                res = run_learned_batch(params, dynamics, obs, fcfg, rngs, tape=tape)
                acc = None
                for ti, est in enumerate(res.estimate_vars):
                    sq = tape.square(est - tape.const(truth[:, ti]))
                    acc = sq if acc is None else acc + sq
                root = tape.sum(acc * (1.0 / horizon))
                if not math.isfinite(root.value):
                    raise TrainingDivergence(epoch, batch_idx,
                                             float(np.linalg.norm(params.flat)))
                grad = tape.backward(root, res.bound.leaves)
                grad_acc += flat_gradient(grad, res.bound.leaves)
                batch_loss += root.value
            grad_acc /= len(batch)
            batch_loss /= len(batch)
            if cfg.clip_norm is not None:
                g_norm = float(np.linalg.norm(grad_acc))
                if g_norm > cfg.clip_norm:
                    grad_acc *= cfg.clip_norm / g_norm
            sgd_momentum_step(params.flat, grad_acc, opt, lr, cfg.momentum)
            loss_sum += batch_loss
            n_batches += 1

        val_rmse = _batch_rmse(params, dynamics, val_trajs, fcfg, val_rng,
                               chunk=max(cfg.tape_chunk, 25))
        log.append(TrainLogEntry(epoch=epoch, train_loss=loss_sum / n_batches,
                                 val_rmse=val_rmse, lr=lr))
        if epoch_hook is not None:
            epoch_hook(log[-1])
        if val_rmse < best_val:
            best_val = val_rmse
            best_flat = params.flat.copy()
            best_epoch = epoch
            if improvement_hook is not None:
                improvement_hook(epoch, NeuralRegimeSet(n_regimes, best_flat.copy(),
                                                        params.hidden))

    return TrainResult(
        params=NeuralRegimeSet(n_regimes, best_flat.copy(), params.hidden),
        final_params=params,
        log=log,
        best_epoch=best_epoch,
        best_val_rmse=best_val,
    )


def write_training_log(log: list[TrainLogEntry], path) -> None:
    """CSV log: epoch, train_loss, val_rmse, lr."""
    with open(path, "w") as fh:
        fh.write("epoch,train_loss,val_rmse,lr\n")
        for e in log:
            fh.write(f"{e.epoch},{e.train_loss!r},{e.val_rmse!r},{e.lr!r}\n")
