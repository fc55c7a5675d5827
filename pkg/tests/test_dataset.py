"""Dataset generation and the JSONL persistence contract."""

import json

import numpy as np
import pytest

from rsdbpf.dataset import DATASET_FORMAT, generate_dataset, load, save
from rsdbpf.ssm import paper_suite


def test_generate_counts_and_split_ranges():
    data = generate_dataset(paper_suite("markov"), (4, 2, 2), 123)
    assert len(data.trajectories) == 8
    assert data.counts == {"train": 4, "val": 2, "test": 2}
    assert [data.split[i] for i in range(8)] == \
        ["train"] * 4 + ["val"] * 2 + ["test"] * 2
    assert {t.horizon for t in data.trajectories} == {50}


def test_generate_deterministic_and_regenerable():
    d1 = generate_dataset(paper_suite("polya"), (2, 1, 1), 7)
    d2 = generate_dataset(paper_suite("polya"), (2, 1, 1), 7)
    assert d1.equals(d2)
    # Each trajectory is regenerable from (master_seed, traj_id) alone.
    from rsdbpf.ssm import simulate
    again = simulate(paper_suite("polya"), 7, traj_id=3)
    assert np.array_equal(d1.trajectories[3].states, again.states)


def test_save_is_byte_deterministic(tmp_path):
    data = generate_dataset(paper_suite("markov"), (2, 1, 1), 99)
    p1 = tmp_path / "a.jsonl"
    p2 = tmp_path / "b.jsonl"
    save(data, p1)
    save(data, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_round_trip_lossless(tmp_path):
    for kind in ("markov", "polya"):
        data = generate_dataset(paper_suite(kind), (3, 2, 2), 11)
        path = tmp_path / f"{kind}.jsonl"
        save(data, path)
        loaded = load(path)
        assert loaded.equals(data)
        # Bitwise equality of the floats specifically.
        for a, b in zip(data.trajectories, loaded.trajectories):
            assert np.array_equal(a.states, b.states)
            assert np.array_equal(a.observations, b.observations)


def test_regimes_one_based_on_disk(tmp_path):
    data = generate_dataset(paper_suite("markov"), (1, 1, 1), 5)
    path = tmp_path / "d.jsonl"
    save(data, path)
    lines = path.read_text().splitlines()
    rec = json.loads(lines[1])
    assert min(min(json.loads(l)["regimes"]) for l in lines[1:]) >= 1
    assert np.array_equal(np.asarray(rec["regimes"]) - 1, data.trajectories[0].regimes)


def test_truncated_file_rejected(tmp_path):
    data = generate_dataset(paper_suite("markov"), (2, 1, 1), 3)
    path = tmp_path / "d.jsonl"
    save(data, path)
    lines = path.read_text().splitlines()
    (tmp_path / "cut.jsonl").write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(ValueError, match="trajectories"):
        load(tmp_path / "cut.jsonl")
    # Corrupt JSON names the line number.
    bad = lines[:]
    bad[2] = bad[2][:-5]
    (tmp_path / "bad.jsonl").write_text("\n".join(bad) + "\n")
    with pytest.raises(ValueError, match="line 3"):
        load(tmp_path / "bad.jsonl")


def test_out_of_range_regime_rejected(tmp_path):
    data = generate_dataset(paper_suite("markov"), (1, 1, 1), 3)
    path = tmp_path / "d.jsonl"
    save(data, path)
    lines = path.read_text().splitlines()
    rec = json.loads(lines[1])
    rec["regimes"][0] = 9
    lines[1] = json.dumps(rec)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ValueError, match="regime index out of range"):
        load(path)


def test_version_mismatch_rejected(tmp_path):
    data = generate_dataset(paper_suite("markov"), (1, 1, 1), 3)
    path = tmp_path / "d.jsonl"
    save(data, path)
    lines = path.read_text().splitlines()
    header = json.loads(lines[0])
    header["format"] = "rsdbpf-dataset/999"
    lines[0] = json.dumps(header)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ValueError, match=DATASET_FORMAT.replace("/", "/")):
        load(path)


def test_counts_must_be_positive():
    with pytest.raises(ValueError):
        generate_dataset(paper_suite("markov"), (0, 1, 1), 3)


def test_split_helpers():
    data = generate_dataset(paper_suite("markov"), (2, 1, 1), 3)
    assert [t.traj_id for t in data.split_trajectories("train")] == [0, 1]
    assert [t.traj_id for t in data.split_trajectories("test")] == [3]
    with pytest.raises(ValueError):
        data.split_trajectories("holdout")
