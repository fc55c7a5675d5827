"""Dataset generation, persistence and splitting.

The on-disk format is JSON Lines: line 1 is a header object carrying the
format version, the full model-suite descriptor, split counts and the
master seed; every following line is one trajectory. Regime indices are
1-based on disk. Reals are serialized as shortest round-trip decimals, so
a save/load cycle is bitwise lossless.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .ssm import (
    MARKOV,
    POLYA,
    CandidateModel,
    ModelSuite,
    RegimeDynamics,
    Trajectory,
    simulate,
)

DATASET_FORMAT = "rsdbpf-dataset/1"
SPLITS = ("train", "val", "test")


@dataclass
class Dataset:
    """Simulated trajectories plus provenance (suite, seed, splits)."""

    suite: ModelSuite
    trajectories: list[Trajectory]
    split: dict[int, str]
    counts: dict[str, int]
    master_seed: int

    def split_trajectories(self, name: str) -> list[Trajectory]:
        if name not in SPLITS:
            raise ValueError(f"unknown split {name!r}")
        return [t for t in self.trajectories if self.split[t.traj_id] == name]

    def equals(self, other: "Dataset") -> bool:
        if (self.counts != other.counts or self.master_seed != other.master_seed
                or self.split != other.split):
            return False
        if len(self.trajectories) != len(other.trajectories):
            return False
        for a, b in zip(self.trajectories, other.trajectories):
            if a.traj_id != b.traj_id:
                return False
            if not (np.array_equal(a.states, b.states)
                    and np.array_equal(a.regimes, b.regimes)
                    and np.array_equal(a.observations, b.observations)):
                return False
        return _suite_descriptor(self.suite) == _suite_descriptor(other.suite)


def generate_dataset(suite: ModelSuite, counts: tuple[int, int, int],
                     master_seed: int) -> Dataset:
    """Simulate train+val+test trajectories from per-trajectory streams."""
    n_train, n_val, n_test = counts
    if min(counts) <= 0:
        raise ValueError("split counts must be positive")
    total = n_train + n_val + n_test
    trajectories = [simulate(suite, master_seed, traj_id=i) for i in range(total)]
    split: dict[int, str] = {}
    for i in range(total):
        if i < n_train:
            split[i] = "train"
        elif i < n_train + n_val:
            split[i] = "val"
        else:
            split[i] = "test"
    return Dataset(
        suite=suite,
        trajectories=trajectories,
        split=split,
        counts={"train": n_train, "val": n_val, "test": n_test},
        master_seed=master_seed,
    )


def _suite_descriptor(suite: ModelSuite) -> dict:
    dyn = suite.dynamics
    desc = {
        "kind": dyn.kind,
        "n_regimes": dyn.n_regimes,
        "a": [m.a for m in suite.candidates],
        "b": [m.b for m in suite.candidates],
        "c": [m.c for m in suite.candidates],
        "d": [m.d for m in suite.candidates],
        "dyn_noise_var": [m.dyn_noise_var for m in suite.candidates],
        "obs_noise_var": [m.obs_noise_var for m in suite.candidates],
        "init_state": [suite.init_state_low, suite.init_state_high],
        "horizon": suite.horizon,
    }
    if dyn.kind == MARKOV:
        desc["transition"] = [[float(x) for x in row] for row in dyn.transition]
    else:
        desc["beta"] = [float(x) for x in dyn.beta]
    return desc


def _suite_from_descriptor(desc: dict) -> ModelSuite:
    candidates = tuple(
        CandidateModel(a=a, b=b, c=c, d=d, dyn_noise_var=du, obs_noise_var=dv)
        for a, b, c, d, du, dv in zip(desc["a"], desc["b"], desc["c"], desc["d"],
                                      desc["dyn_noise_var"], desc["obs_noise_var"])
    )
    n = desc["n_regimes"]
    if desc["kind"] == MARKOV:
        dyn = RegimeDynamics(kind=MARKOV, n_regimes=n,
                             transition=np.asarray(desc["transition"]))
    elif desc["kind"] == POLYA:
        dyn = RegimeDynamics(kind=POLYA, n_regimes=n, beta=np.asarray(desc["beta"]))
    else:
        raise ValueError(f"unknown dynamics kind {desc['kind']!r}")
    low, high = desc["init_state"]
    return ModelSuite(candidates=candidates, dynamics=dyn,
                      init_state_low=low, init_state_high=high,
                      horizon=desc["horizon"])


def save(dataset: Dataset, path) -> None:
    """Write the JSONL file; one line per trajectory after the header."""
    header = {
        "format": DATASET_FORMAT,
        "suite": _suite_descriptor(dataset.suite),
        "counts": dataset.counts,
        "master_seed": dataset.master_seed,
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for traj in dataset.trajectories:
            record = {
                "traj_id": traj.traj_id,
                "split": dataset.split[traj.traj_id],
                "regimes": [int(m) + 1 for m in traj.regimes],
                "states": [float(s) for s in traj.states],
                "observations": [float(o) for o in traj.observations],
            }
            fh.write(json.dumps(record) + "\n")


def load(path) -> Dataset:
    """Parse and validate a dataset file; errors name the offending line."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty dataset file")

    def parse(line_no: int) -> dict:
        try:
            return json.loads(lines[line_no])
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: parse error on line {line_no + 1}: {exc}") from None

    header = parse(0)
    if header.get("format") != DATASET_FORMAT:
        raise ValueError(f"{path}: unsupported dataset format {header.get('format')!r} "
                         f"(expected {DATASET_FORMAT})")
    suite = _suite_from_descriptor(header["suite"])
    counts = {k: int(v) for k, v in header["counts"].items()}
    total = sum(counts.values())
    if len(lines) - 1 != total:
        raise ValueError(f"{path}: header declares {total} trajectories, "
                         f"file has {len(lines) - 1}")

    horizon = suite.horizon
    n_reg = suite.n_regimes
    trajectories: list[Trajectory] = []
    split: dict[int, str] = {}
    for line_no in range(1, len(lines)):
        rec = parse(line_no)
        traj_id = int(rec["traj_id"])
        if traj_id in split:
            raise ValueError(f"{path}: duplicate traj_id {traj_id} on line {line_no + 1}")
        if rec["split"] not in SPLITS:
            raise ValueError(f"{path}: invalid split {rec['split']!r} on line {line_no + 1}")
        regimes = np.asarray(rec["regimes"], dtype=np.int64) - 1
        states = np.asarray(rec["states"], dtype=np.float64)
        observations = np.asarray(rec["observations"], dtype=np.float64)
        if len(observations) != horizon or len(states) != horizon + 1 or len(regimes) != horizon + 1:
            raise ValueError(f"{path}: length mismatch on line {line_no + 1}")
        if regimes.min() < 0 or regimes.max() >= n_reg:
            raise ValueError(f"{path}: regime index out of range on line {line_no + 1}")
        split[traj_id] = rec["split"]
        trajectories.append(Trajectory(states=states, regimes=regimes,
                                       observations=observations, traj_id=traj_id))

    observed = {name: sum(1 for s in split.values() if s == name) for name in SPLITS}
    if observed != counts:
        raise ValueError(f"{path}: split sizes {observed} do not match header {counts}")
    return Dataset(suite=suite, trajectories=trajectories, split=split,
                   counts=counts, master_seed=int(header["master_seed"]))
