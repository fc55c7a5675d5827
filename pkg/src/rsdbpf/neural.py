"""Learnable per-regime models: particle proposer and kernel likelihood.

Each regime owns two small tanh MLPs and a kernel bandwidth:

* proposer  (s_prev, eps) -> s_t, the reparameterised dynamic model;
* embedder  s_t -> e(s_t), compared against the observation through a
  normalised Gaussian kernel with learnable bandwidth sigma = exp(log_bw).

Parameters live in one flat float64 vector per model set; the per-layer
arrays are views into it, so in-place optimizer updates are visible
everywhere. Forward passes exist in two flavours: tape mode (autodiff
Vars, for training) and plain numpy (for evaluation). The tape forward
packs the hidden layer along the particle axis (particle-major), so a
whole layer is a handful of vector nodes instead of per-neuron scalars.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .autodiff import Tape, Var

PARAMS_FORMAT = "rsdbpf-params/1"
HIDDEN = 8
LOG_2PI = math.log(2.0 * math.pi)
# Floor on the kernel bandwidth: sigma = floor + (1 - floor) * exp(log_bw),
# so log_bw = 0 still gives exactly sigma = 1. Without the floor, gradient
# descent in log-bandwidth space sharpens the kernel multiplicatively and
# overshoots into one-hot weights (training diverges); with it the
# sharpening saturates smoothly, far below the benchmark's observation
# noise scale.
BANDWIDTH_FLOOR = 0.1


@dataclass
class Mlp:
    """One hidden layer of tanh units, scalar output, identity head.

    ``w1`` is stored input-major with shape (n_in, hidden) so that each
    input's weight row is contiguous in the flat parameter vector.
    """

    w1: np.ndarray  # (n_in, hidden)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden,)
    b2: np.ndarray  # ()

    @property
    def n_in(self) -> int:
        return self.w1.shape[0]

    def forward(self, x: np.ndarray) -> np.ndarray:
        """x has shape (n_in, m); returns (m,)."""
        h = np.tanh(self.w1.T @ x + self.b1[:, None])
        return self.w2 @ h + float(self.b2)


@dataclass
class RegimeNet:
    """Parameter set of one regime: proposer, embedder, log bandwidth."""

    proposer: Mlp
    embedder: Mlp
    log_bandwidth: np.ndarray  # ()

    @property
    def bandwidth(self) -> float:
        return float(np.exp(self.log_bandwidth))


def _regime_layout(hidden: int = HIDDEN) -> list[tuple[str, tuple[int, ...]]]:
    """Canonical (name, shape) order of one regime's parameters."""
    return [
        ("proposer/w1", (2, hidden)),
        ("proposer/b1", (hidden,)),
        ("proposer/w2", (hidden,)),
        ("proposer/b2", ()),
        ("embedder/w1", (1, hidden)),
        ("embedder/b1", (hidden,)),
        ("embedder/w2", (hidden,)),
        ("embedder/b2", ()),
        ("log_bandwidth", ()),
    ]


class NeuralRegimeSet:
    """N_m regime parameter sets backed by a single flat vector."""

    def __init__(self, n_regimes: int, flat: np.ndarray, hidden: int = HIDDEN):
        layout = _regime_layout(hidden)
        per_regime = sum(int(np.prod(shape)) for _, shape in layout)
        expected = n_regimes * per_regime
        if flat.shape != (expected,):
            raise ValueError(f"flat parameter vector must have length {expected}")
        self.n_regimes = n_regimes
        self.hidden = hidden
        self.flat = flat
        self.nets: list[RegimeNet] = []
        offset = 0
        for _ in range(n_regimes):
            views = {}
            for name, shape in layout:
                size = int(np.prod(shape))
                views[name] = flat[offset:offset + size].reshape(shape)
                offset += size
            self.nets.append(RegimeNet(
                proposer=Mlp(views["proposer/w1"], views["proposer/b1"],
                             views["proposer/w2"], views["proposer/b2"]),
                embedder=Mlp(views["embedder/w1"], views["embedder/b1"],
                             views["embedder/w2"], views["embedder/b2"]),
                log_bandwidth=views["log_bandwidth"],
            ))

    @property
    def n_params(self) -> int:
        return len(self.flat)

    def copy(self) -> "NeuralRegimeSet":
        return NeuralRegimeSet(self.n_regimes, self.flat.copy(), self.hidden)

    def param_names(self) -> list[str]:
        return [f"regime{r}/{name}"
                for r in range(self.n_regimes)
                for name, _ in _regime_layout(self.hidden)]


def init_params(seed: int, n_regimes: int, hidden: int = HIDDEN) -> NeuralRegimeSet:
    """Fan-in-scaled uniform weights, zero biases, unit bandwidth."""
    if n_regimes < 1:
        raise ValueError("n_regimes must be at least 1")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 4]))
    chunks: list[np.ndarray] = []
    for _ in range(n_regimes):
        for name, shape in _regime_layout(hidden):
            size = int(np.prod(shape))
            if name.endswith("w1") or name.endswith("w2"):
                fan_in = shape[0] if len(shape) == 2 else hidden
                bound = math.sqrt(1.0 / fan_in)
                chunks.append(rng.uniform(-bound, bound, size))
            else:
                chunks.append(np.zeros(size))
    return NeuralRegimeSet(n_regimes, np.concatenate(chunks), hidden)


# ---------------------------------------------------------------------------
# Tape-mode forward passes
# ---------------------------------------------------------------------------

@dataclass
class BoundMlp:
    w1_rows: list[Var]  # one (hidden,) leaf per input
    b1: Var             # (hidden,)
    w2: Var             # (hidden,)
    b2: Var             # scalar


@dataclass
class BoundRegimeNet:
    proposer: BoundMlp
    embedder: BoundMlp
    log_bandwidth: Var


class BoundRegimeSet:
    """Parameter leaves in flat-vector order (arrays stay arrays)."""

    def __init__(self, nets: list[BoundRegimeNet], leaves: list[Var]):
        self.nets = nets
        self.leaves = leaves


def bind_params(tape: Tape, params: NeuralRegimeSet) -> BoundRegimeSet:
    """Register every parameter array/scalar as a leaf on the tape."""
    h = params.hidden
    leaves: list[Var] = []
    nets: list[BoundRegimeNet] = []
    offset = 0

    def take(size: int, scalar: bool = False) -> Var:
        nonlocal offset
        chunk = params.flat[offset:offset + size]
        offset += size
        leaf = tape.leaf(float(chunk[0]) if scalar else chunk)
        leaves.append(leaf)
        return leaf

    def take_mlp(n_in: int) -> BoundMlp:
        rows = [take(h) for _ in range(n_in)]
        return BoundMlp(w1_rows=rows, b1=take(h), w2=take(h), b2=take(1, scalar=True))

    for _ in range(params.n_regimes):
        proposer = take_mlp(2)
        embedder = take_mlp(1)
        log_bw = take(1, scalar=True)
        nets.append(BoundRegimeNet(proposer=proposer, embedder=embedder,
                                   log_bandwidth=log_bw))
    return BoundRegimeSet(nets, leaves)


def _mlp_forward_tape(tape: Tape, mlp: BoundMlp, state: Var,
                      extra: np.ndarray | float | None) -> Var:
    """Particle-major packed forward: hidden units fold into the vector."""
    h = len(mlp.b1.value)
    scalar_in = isinstance(state.value, float)
    m = 1 if scalar_in else len(state.value)
    z = tape.tile(mlp.w1_rows[0], m) * tape.seg_repeat(state, h)
    if extra is not None:
        e_rep = tape.const(np.repeat(extra, h))
        z = z + tape.tile(mlp.w1_rows[1], m) * e_rep
    z = tape.tanh(z + tape.tile(mlp.b1, m))
    out = tape.seg_sum(tape.tile(mlp.w2, m) * z, m) + mlp.b2
    return tape.sum(out) if scalar_in else out


def propose(net: BoundRegimeNet, s_prev: Var, eps) -> Var:
    """Reparameterised state sample s_t = proposer(s_{t-1}, eps)."""
    return _mlp_forward_tape(s_prev.tape, net.proposer, s_prev, eps)


def log_likelihood(net: BoundRegimeNet, obs, s: Var) -> Var:
    """Log of the normalised Gaussian kernel between obs and embedder(s)."""
    tape = s.tape
    emb = _mlp_forward_tape(tape, net.embedder, s, None)
    resid = tape.lift(obs) - emb
    sigma = (1.0 - BANDWIDTH_FLOOR) * tape.exp(net.log_bandwidth) + BANDWIDTH_FLOOR
    quad = tape.square(resid) / (2.0 * tape.square(sigma))
    return -quad - tape.ln(sigma) - (0.5 * LOG_2PI)


def likelihood(net: BoundRegimeNet, obs, s: Var) -> Var:
    """Positive kernel density value; weight arithmetic uses the log form."""
    return s.tape.exp(log_likelihood(net, obs, s))


# ---------------------------------------------------------------------------
# Numpy-mode forward passes (evaluation)
# ---------------------------------------------------------------------------

def propose_np(net: RegimeNet, s_prev: np.ndarray, eps: np.ndarray) -> np.ndarray:
    x = np.empty((2, len(s_prev)))
    x[0] = s_prev
    x[1] = eps
    return net.proposer.forward(x)


def embed_np(net: RegimeNet, s: np.ndarray) -> np.ndarray:
    return net.embedder.forward(s[None, :])


def log_likelihood_np(net: RegimeNet, obs, s: np.ndarray) -> np.ndarray:
    emb = embed_np(net, s)
    var = math.exp(2.0 * float(net.log_bandwidth)) + BANDWIDTH_FLOOR ** 2
    resid = obs - emb
    return -(resid * resid) / (2.0 * var) - 0.5 * math.log(var) - 0.5 * LOG_2PI


# ---------------------------------------------------------------------------
# Checkpoint serialization
# ---------------------------------------------------------------------------

def save_params(params: NeuralRegimeSet, path) -> None:
    """JSON checkpoint: flat, ordered list of named arrays."""
    entries = []
    offset = 0
    layout = _regime_layout(params.hidden)
    for r in range(params.n_regimes):
        for name, shape in layout:
            size = int(np.prod(shape))
            values = params.flat[offset:offset + size]
            offset += size
            entries.append({
                "name": f"regime{r}/{name}",
                "shape": list(shape),
                "values": [float(v) for v in values],
            })
    doc = {
        "format": PARAMS_FORMAT,
        "n_regimes": params.n_regimes,
        "hidden": params.hidden,
        "params": entries,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_params(path) -> NeuralRegimeSet:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != PARAMS_FORMAT:
        raise ValueError(f"unsupported checkpoint format {doc.get('format')!r}")
    n_regimes = int(doc["n_regimes"])
    hidden = int(doc.get("hidden", HIDDEN))
    layout = _regime_layout(hidden)
    expected_names = [f"regime{r}/{name}" for r in range(n_regimes) for name, _ in layout]
    entries = doc["params"]
    if [e["name"] for e in entries] != expected_names:
        raise ValueError("checkpoint parameter order does not match the canonical layout")
    chunks = []
    for entry, (name, shape) in zip(entries, n_regimes * layout):
        values = np.asarray(entry["values"], dtype=np.float64)
        if len(values) != int(np.prod(shape)):
            raise ValueError(f"size mismatch for {entry['name']}")
        chunks.append(values)
    return NeuralRegimeSet(n_regimes, np.concatenate(chunks), hidden)
