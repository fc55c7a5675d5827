"""Command-line pipeline: generate data, train filters, evaluate, reproduce.

Every command is a pure function of the config file, the flags and the
input files, so reruns with identical seeds produce byte-identical
outputs. Flag values override config values, which override the built-in
benchmark defaults.

Output layout under the run directory::

    out/
      dataset.jsonl
      checkpoints/   per-eta best/final + improvement snapshots
      logs/          per-eta training curves + selection reports
      results/       table.md table.csv per_step_mae.csv per_traj_rmse.csv
                     estimates_<filter>.csv
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import evaluation as ev
from .filters import FilterConfig
from .neural import NeuralRegimeSet, load_params, save_params
from .ssm import paper_suite
from .training import TrainConfig, TrainingDivergence, train, write_training_log

ETA_GRID = (0.01, 0.02, 0.05, 0.1)


class ConfigError(ValueError):
    """Invalid run configuration; message names the offending field."""


def default_config() -> dict:
    """Benchmark defaults: 2000 trajectories, 60 epochs, eta grid."""
    return {
        "dynamics": "markov",
        "out": "out",
        "dataset": {
            "path": "dataset.jsonl",
            "train": 1000,
            "val": 500,
            "test": 500,
        },
        "filter": {
            "eval_particles": 2000,
            "ess_threshold_frac": 0.5,
            "regime_proposal": "uniform",
        },
        "train": {
            "learning_rates": list(ETA_GRID),
            "momentum": 0.9,
            "lr_halving_period": 10,
            "epochs": 60,
            "batch_size": 100,
            "train_particles": 200,
            "tape_chunk": 10,
            "clip_norm": None,
            "train_trajectories": None,
        },
        "seeds": {
            "dataset": 20230,
            "training": 71,
            "evaluation": 2023,
        },
    }


_CHECKS = {
    "dynamics": lambda v: v in ("markov", "polya") or "must be 'markov' or 'polya'",
    "out": lambda v: isinstance(v, str) or "must be a string",
    "dataset.path": lambda v: isinstance(v, str) or "must be a string",
    "dataset.train": lambda v: (isinstance(v, int) and v > 0) or "must be a positive integer",
    "dataset.val": lambda v: (isinstance(v, int) and v > 0) or "must be a positive integer",
    "dataset.test": lambda v: (isinstance(v, int) and v > 0) or "must be a positive integer",
    "filter.eval_particles": lambda v: (isinstance(v, int) and v > 0) or "must be a positive integer",
    "filter.ess_threshold_frac": lambda v: (isinstance(v, (int, float)) and 0 < v <= 1) or "must lie in (0, 1]",
    "filter.regime_proposal": lambda v: v in ("uniform", "bootstrap", "deterministic")
        or "must be 'uniform', 'bootstrap' or 'deterministic'",
    "train.learning_rates": lambda v: (isinstance(v, list) and v
        and all(isinstance(x, (int, float)) and x > 0 for x in v)) or "must be a non-empty list of positive numbers",
    "train.momentum": lambda v: (isinstance(v, (int, float)) and 0 <= v < 1) or "must lie in [0, 1)",
    "train.lr_halving_period": lambda v: (isinstance(v, int) and v > 0) or "must be a positive integer",
    "train.epochs": lambda v: (isinstance(v, int) and v > 0) or "must be a positive integer",
    "train.batch_size": lambda v: (isinstance(v, int) and v > 0) or "must be a positive integer",
    "train.train_particles": lambda v: (isinstance(v, int) and v > 0) or "must be a positive integer",
    "train.tape_chunk": lambda v: (isinstance(v, int) and v > 0) or "must be a positive integer",
    "train.clip_norm": lambda v: v is None or (isinstance(v, (int, float)) and v > 0)
        or "must be null or a positive number",
    "train.train_trajectories": lambda v: v is None or (isinstance(v, int) and v > 0)
        or "must be null or a positive integer",
    "seeds.dataset": lambda v: isinstance(v, int) or "must be an integer",
    "seeds.training": lambda v: isinstance(v, int) or "must be an integer",
    "seeds.evaluation": lambda v: isinstance(v, int) or "must be an integer",
}


def validate_config(user: dict) -> dict:
    """Merge the user config onto the defaults; unknown keys are rejected."""
    merged = default_config()

    def walk(section: dict, base: dict, prefix: str) -> None:
        for key, value in section.items():
            path = f"{prefix}{key}"
            if key not in base:
                raise ConfigError(f"unknown config key: {path}")
            if isinstance(base[key], dict):
                if not isinstance(value, dict):
                    raise ConfigError(f"{path} must be an object")
                walk(value, base[key], path + ".")
            else:
                check = _CHECKS[path]
                verdict = check(value)
                if verdict is not True:
                    raise ConfigError(f"{path} {verdict}")
                base[key] = value

    if not isinstance(user, dict):
        raise ConfigError("config root must be a JSON object")
    walk(user, merged, "")
    return merged


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            user = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    return validate_config(user)


def apply_flag_overrides(cfg: dict, args: argparse.Namespace) -> dict:
    cfg = copy.deepcopy(cfg)
    if getattr(args, "dynamics", None):
        cfg["dynamics"] = args.dynamics
    if getattr(args, "out", None):
        cfg["out"] = args.out
    if getattr(args, "seed", None) is not None:
        cfg["seeds"] = {"dataset": args.seed, "training": args.seed, "evaluation": args.seed}
    if getattr(args, "particles", None) is not None:
        if args.particles <= 0:
            raise ConfigError("--particles must be positive")
        cfg["filter"]["eval_particles"] = args.particles
    eta = getattr(args, "eta", None)
    if eta is not None:
        if eta == "grid":
            cfg["train"]["learning_rates"] = list(ETA_GRID)
        else:
            try:
                value = float(eta)
            except ValueError:
                raise ConfigError("--eta must be a number or 'grid'") from None
            if value <= 0:
                raise ConfigError("--eta must be positive")
            cfg["train"]["learning_rates"] = [value]
    return cfg


def _dataset_path(cfg: dict) -> Path:
    p = Path(cfg["dataset"]["path"])
    return p if p.is_absolute() else Path(cfg["out"]) / p


def _train_config(cfg: dict, eta: float) -> TrainConfig:
    t = cfg["train"]
    return TrainConfig(
        learning_rate=eta,
        momentum=t["momentum"],
        lr_halving_period=t["lr_halving_period"],
        epochs=t["epochs"],
        batch_size=t["batch_size"],
        train_particles=t["train_particles"],
        seed=cfg["seeds"]["training"],
        ess_threshold_frac=cfg["filter"]["ess_threshold_frac"],
        regime_proposal=cfg["filter"]["regime_proposal"],
        clip_norm=t["clip_norm"],
        tape_chunk=t["tape_chunk"],
    )


def _cap_train_split(data: ds.Dataset, cap: int | None) -> ds.Dataset:
    """Restrict the train split to its first ``cap`` trajectories."""
    if cap is None:
        return data
    train_ids = sorted(t.traj_id for t in data.split_trajectories("train"))
    if cap > len(train_ids):
        raise ConfigError("train.train_trajectories exceeds the train split")
    keep = set(train_ids[:cap])
    trajectories = [t for t in data.trajectories
                    if data.split[t.traj_id] != "train" or t.traj_id in keep]
    split = {t.traj_id: data.split[t.traj_id] for t in trajectories}
    counts = dict(data.counts)
    counts["train"] = cap
    return ds.Dataset(suite=data.suite, trajectories=trajectories, split=split,
                      counts=counts, master_seed=data.master_seed)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_generate(cfg: dict) -> Path:
    """Simulate the dataset and write the JSONL file."""
    suite = paper_suite(cfg["dynamics"])
    counts = (cfg["dataset"]["train"], cfg["dataset"]["val"], cfg["dataset"]["test"])
    data = ds.generate_dataset(suite, counts, cfg["seeds"]["dataset"])
    path = _dataset_path(cfg)
    path.parent.mkdir(parents=True, exist_ok=True)
    ds.save(data, path)
    print(f"wrote {path}: {sum(counts)} trajectories "
          f"(train/val/test = {counts[0]}/{counts[1]}/{counts[2]}), "
          f"T = {suite.horizon}, dynamics = {cfg['dynamics']}")
    return path


def _load_dataset(cfg: dict) -> ds.Dataset:
    path = _dataset_path(cfg)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path} (run 'generate' first)")
    data = ds.load(path)
    if data.suite.dynamics.kind != cfg["dynamics"]:
        raise ConfigError(f"dynamics mismatch: dataset has {data.suite.dynamics.kind!r}, "
                          f"config says {cfg['dynamics']!r}")
    return data


def cmd_train(cfg: dict, filter_kind: str) -> Path:
    """Train one learned filter over the eta grid; select by validation."""
    if filter_kind not in ("dbpf", "rs-dbpf"):
        raise ConfigError(f"--filter must be 'dbpf' or 'rs-dbpf', got {filter_kind!r}")
    data = _cap_train_split(_load_dataset(cfg), cfg["train"]["train_trajectories"])
    dynamics = data.suite.dynamics if filter_kind == "rs-dbpf" else None

    out = Path(cfg["out"])
    ckpt_dir = out / "checkpoints"
    log_dir = out / "logs"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    log_dir.mkdir(parents=True, exist_ok=True)

    report = {"filter": filter_kind, "runs": [], "selected_eta": None}
    best_overall = (float("inf"), None, None)
    for eta in cfg["train"]["learning_rates"]:
        tcfg = _train_config(cfg, eta)

        def snapshot_hook(epoch: int, params: NeuralRegimeSet, eta=eta):
            save_params(params, ckpt_dir / f"{filter_kind}_eta{eta}_epoch{epoch}.json")

        def epoch_hook(entry, eta=eta):
            print(f"  {filter_kind} eta={eta} epoch {entry.epoch}: "
                  f"train_loss {entry.train_loss:.4f} val_rmse {entry.val_rmse:.4f}",
                  flush=True)

        try:
            result = train(filter_kind, data, tcfg, dynamics,
                           improvement_hook=snapshot_hook, epoch_hook=epoch_hook)
        except TrainingDivergence as exc:
            # A diverging learning rate just loses the validation selection.
            print(f"{filter_kind} eta={eta}: diverged ({exc})")
            report["runs"].append({"eta": eta, "diverged": str(exc)})
            continue
        write_training_log(result.log, log_dir / f"train_{filter_kind}_eta{eta}.csv")
        save_params(result.params, ckpt_dir / f"{filter_kind}_eta{eta}_best.json")
        save_params(result.final_params, ckpt_dir / f"{filter_kind}_eta{eta}_final.json")
        report["runs"].append({
            "eta": eta,
            "best_epoch": result.best_epoch,
            "best_val_rmse": result.best_val_rmse,
        })
        print(f"{filter_kind} eta={eta}: best val RMSE {result.best_val_rmse:.4f} "
              f"at epoch {result.best_epoch}")
        if result.best_val_rmse < best_overall[0]:
            best_overall = (result.best_val_rmse, eta, result.params)

    report["selected_eta"] = best_overall[1]
    report_path = log_dir / f"selection_{filter_kind}.json"
    with open(report_path, "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    if best_overall[1] is None:
        raise RuntimeError(f"every learning rate diverged while training {filter_kind}; "
                           f"see {report_path}")
    best_path = ckpt_dir / f"{filter_kind}_best.json"
    save_params(best_overall[2], best_path)
    print(f"selected eta={best_overall[1]} -> {best_path}")
    return best_path


def cmd_evaluate(cfg: dict, filters: list[str],
                 checkpoints: dict[str, str] | None = None) -> ev.ResultsTable:
    """Score the requested filters on the test split and export results."""
    for name in filters:
        if name not in ev.FILTER_NAMES:
            raise ConfigError(f"unknown filter {name!r} "
                              f"(choose from {', '.join(ev.FILTER_NAMES)})")
    data = _load_dataset(cfg)
    out = Path(cfg["out"])
    results_dir = out / "results"
    results_dir.mkdir(parents=True, exist_ok=True)
    particles = cfg["filter"]["eval_particles"]
    seed = cfg["seeds"]["evaluation"]
    proposal = cfg["filter"]["regime_proposal"]

    params: dict[str, NeuralRegimeSet] = {}
    for name in filters:
        if name in ev.LEARNED_FILTERS:
            path = Path((checkpoints or {}).get(name)
                        or out / "checkpoints" / f"{name}_best.json")
            if not path.exists():
                raise FileNotFoundError(f"missing checkpoint for {name}: {path} "
                                        f"(run 'train' first)")
            params[name] = load_params(path)

    evaluations: dict[str, ev.FilterEvaluation] = {}
    for name in filters:
        evaluations[name] = ev.evaluate_filter(
            name, data, particles, seed, params=params.get(name),
            regime_proposal=proposal)
        avg = float(np.mean(evaluations[name].rmse))
        print(f"{ev.TABLE_LABELS[name]}: average RMSE {avg:.4f} "
              f"over {len(evaluations[name].rmse)} test trajectories")

    table = ev.results_table(evaluations)
    header = [
        f"dynamics: {cfg['dynamics']}",
        f"test trajectories: {data.counts['test']}",
        f"evaluation particles: {particles}",
        f"dataset seed: {data.master_seed}; evaluation seed: {seed}; "
        f"training seed: {cfg['seeds']['training']}",
        f"regime proposal: {proposal}",
    ]
    ev.write_table_md(table, results_dir / "table.md", header_lines=header, order=filters)
    ev.write_table_csv(table, results_dir / "table.csv", order=filters)
    ev.write_per_step_mae_csv(evaluations, results_dir / "per_step_mae.csv", order=filters)
    ev.write_per_traj_rmse_csv(evaluations, results_dir / "per_traj_rmse.csv", order=filters)
    for name, evaluation in evaluations.items():
        ev.write_estimates_csv(evaluation, data, results_dir / f"estimates_{name}.csv")
    return table


def cmd_reproduce(cfg: dict, dynamics: str | None = None) -> ev.ResultsTable:
    """Full pipeline: generate, train both learned filters, evaluate all four."""
    if dynamics is not None:
        cfg = copy.deepcopy(cfg)
        cfg["dynamics"] = dynamics
    cmd_generate(cfg)
    cmd_train(cfg, "dbpf")
    cmd_train(cfg, "rs-dbpf")
    return cmd_evaluate(cfg, list(ev.FILTER_NAMES))


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--seed", type=int, help="override every seed in the config")
    parser.add_argument("--out", help="override the output directory")
    parser.add_argument("--dynamics", choices=("markov", "polya"),
                        help="override the switching dynamics")
    parser.add_argument("--particles", type=int, help="override evaluation particle count")
    parser.add_argument("--eta", help="learning rate, or 'grid' for the full sweep")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rsdbpf",
        description="Regime-switching differentiable bootstrap particle filters",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="simulate and save the dataset")
    _add_common(p)

    p = sub.add_parser("train", help="train a learned filter over the eta grid")
    _add_common(p)
    p.add_argument("--filter", required=True, choices=("dbpf", "rs-dbpf"))

    p = sub.add_parser("evaluate", help="score filters on the test split")
    _add_common(p)
    p.add_argument("--filters", default=",".join(ev.FILTER_NAMES),
                   help="comma-separated subset of mm-pf,rs-pf,dbpf,rs-dbpf")
    p.add_argument("--dbpf-checkpoint", help="explicit dbpf checkpoint path")
    p.add_argument("--rs-dbpf-checkpoint", help="explicit rs-dbpf checkpoint path")

    p = sub.add_parser("reproduce", help="generate + train + evaluate, end to end")
    _add_common(p)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = apply_flag_overrides(load_config(args.config), args)
        if args.command == "generate":
            cmd_generate(cfg)
        elif args.command == "train":
            cmd_train(cfg, args.filter)
        elif args.command == "evaluate":
            filters = [f.strip() for f in args.filters.split(",") if f.strip()]
            checkpoints = {}
            if args.dbpf_checkpoint:
                checkpoints["dbpf"] = args.dbpf_checkpoint
            if args.rs_dbpf_checkpoint:
                checkpoints["rs-dbpf"] = args.rs_dbpf_checkpoint
            cmd_evaluate(cfg, filters, checkpoints)
        elif args.command == "reproduce":
            cmd_reproduce(cfg)
        return 0
    except Exception as exc:  # surfaced as one machine-readable line
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
