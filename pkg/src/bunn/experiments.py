"""Experiment orchestration: configs, multi-seed runs and result files.

An experiment trains one or more models on one task for a range of seeds
(``seed, seed + 1, ...``). Each seed is an independent, deterministic job,
so running them in worker processes changes nothing but wall time.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import math
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .baselines import BASELINE_KINDS, BaselineConfig
from .model import BunnModelConfig
from .serialize import save_params
from .tasks import DEFAULT_HALF_WIDTH, SyntheticTask, gen_averaging_dataset, gen_neighborsmatch_dataset
from .training import BaselineNet, BunnNet, ConstantNet, TrainConfig, train, write_history_csv

__all__ = [
    "ExperimentConfig", "ExperimentResult", "ConfigError", "MODELS", "REFERENCE_MODELS",
    "load_config_file", "resolve_config", "write_resolved_config", "build_model",
    "run_experiment", "run_experiments", "run_neighborsmatch", "write_results",
]

REFERENCE_MODELS = ("baseline-constant-0", "baseline-opposite-mean")
MODELS = ("bunn",) + BASELINE_KINDS + REFERENCE_MODELS
TASKS = ("barbell", "clique", "neighborsmatch")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Every knob of one experiment. ``None`` means "task default" and is
    filled in by :meth:`resolved`."""

    task: str = "barbell"
    model: str = "bunn"
    n: int = 10
    depth: int = 2
    train: int | None = None
    test: int | None = None
    half_width: float = DEFAULT_HALF_WIDTH
    t: float | None = None
    bundles: int | None = None
    bundle_dim: int = 2
    channels: int | None = None
    layers: int | None = None
    hidden: int = 128
    phi_hidden: int = 16
    epochs: int | None = None
    lr: float = 1e-3
    seed: int = 0
    seeds: int = 1
    threads: int = 1

    def models(self) -> list[str]:
        return [m.strip() for m in self.model.split(",") if m.strip()]

    def resolved(self) -> "ExperimentConfig":
        """Copy with task defaults filled in and every field validated."""
        cfg = dataclasses.replace(self)
        nm = cfg.task == "neighborsmatch"
        if cfg.task not in TASKS:
            raise ConfigError(f"unknown task {cfg.task!r}; choose from {', '.join(TASKS)}")
        for m in cfg.models() or [""]:
            if m not in MODELS:
                raise ConfigError(f"unknown model {m!r}; choose from {', '.join(MODELS)}")
        if nm and any(m in REFERENCE_MODELS for m in cfg.models()):
            raise ConfigError("reference predictors only exist for the averaging tasks")
        defaults = {
            "train": 200 if nm else 100,
            "test": 0 if nm else 100,
            "t": math.inf if nm else 10.0,
            "bundles": 32 if nm else 2,
            "channels": 1 if nm else 4,
            "epochs": 60 if nm else 500,
        }
        for key, value in defaults.items():
            if getattr(cfg, key) is None:
                setattr(cfg, key, value)
        if cfg.layers is None and not nm:
            cfg.layers = 3 if cfg.task == "barbell" else 1
        checks = [
            (cfg.n >= 2, "n must be >= 2"),
            (cfg.depth >= 2, "depth must be >= 2"),
            (cfg.train >= 1 and cfg.test >= 0, "need train >= 1 and test >= 0"),
            (cfg.half_width >= 0, "half_width must be >= 0"),
            (cfg.t >= 0, "t must be >= 0 (or inf)"),
            (cfg.bundles >= 1 and cfg.bundle_dim >= 1 and cfg.channels >= 1,
             "bundles, bundle_dim and channels must be positive"),
            (cfg.layers is None or cfg.layers >= 1, "layers must be >= 1"),
            (cfg.hidden >= 1 and cfg.phi_hidden >= 1, "widths must be positive"),
            (cfg.epochs >= 1, "epochs must be >= 1"),
            (cfg.lr > 0, "lr must be positive"),
            (cfg.seeds >= 1, "seeds must be >= 1"),
            (cfg.threads >= 1, "threads must be >= 1"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        return cfg

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# ------------------------------------------------------------- config files

def _field_types() -> dict[str, str]:
    return {f.name: str(f.type) for f in dataclasses.fields(ExperimentConfig)}


def _parse_value(key: str, text: str):
    kind = _field_types()[key]
    text = text.strip()
    if text.lower() in ("none", "") and "None" in kind:
        return None
    try:
        if kind.startswith("str"):
            return text
        if kind.startswith("float"):
            return float(text)
        return int(text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {text!r}") from exc


def load_config_file(path: str | Path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    out = {}
    known = _field_types()
    for number, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{number}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise ConfigError(f"{path}:{number}: unknown key {key!r}")
        out[key] = _parse_value(key, value)
    return out


def resolve_config(file_values: dict | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Defaults, then config-file values, then explicit overrides."""
    merged = dict(file_values or {})
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    unknown = set(merged) - set(_field_types())
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return ExperimentConfig(**merged).resolved()


def write_resolved_config(cfg: ExperimentConfig, path: str | Path) -> None:
    lines = [f"{k} = {_format_value(v)}" for k, v in cfg.to_dict().items()]
    Path(path).write_text("\n".join(lines) + "\n")


def _format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, float):
        return "inf" if math.isinf(v) else repr(v)
    return str(v)


# ---------------------------------------------------------------- results

@dataclass
class SeedRun:
    seed: int
    train_loss: float
    train_metric: float
    test_loss: float
    test_metric: float
    history: list[dict] = field(repr=False, default_factory=list)
    seconds: float = 0.0


@dataclass
class ExperimentResult:
    """One model on one task over several seeds."""

    model: str
    task: str
    runs: list[SeedRun]
    runtime_seconds: float = 0.0

    @property
    def metric_name(self) -> str:
        return "accuracy" if self.task == "neighborsmatch" else "mse"

    def per_seed(self, split: str = "test") -> list[float]:
        attr = "test_metric" if split == "test" else "train_metric"
        return [getattr(r, attr) for r in self.runs]

    def mean(self, split: str = "test") -> float:
        return statistics.fmean(self.per_seed(split))

    def std(self, split: str = "test") -> float:
        values = self.per_seed(split)
        return statistics.stdev(values) if len(values) > 1 else 0.0

    def summary(self) -> dict:
        out = {"model": self.model, "task": self.task, "metric": self.metric_name,
               "seeds": [r.seed for r in self.runs], "runtime_seconds": self.runtime_seconds}
        for split in ("train", "test"):
            out[split] = {"mean": self.mean(split), "std": self.std(split),
                          "per_seed": self.per_seed(split)}
        return out


# ------------------------------------------------------------------ running

def build_model(cfg: ExperimentConfig, name: str, sample):
    """Model adapter for ``name`` sized for ``sample``'s features."""
    in_dim = sample.x.shape[1]
    nm = cfg.task == "neighborsmatch"
    out_dim = 2 ** cfg.depth if nm else sample.target.shape[1]
    if name in REFERENCE_MODELS:
        return ConstantNet(name)
    if name == "bunn":
        layers = cfg.layers or 2
        bunn_cfg = BunnModelConfig(
            in_dim, out_dim, layers=layers, bundles=cfg.bundles, bundle_dim=cfg.bundle_dim,
            channels=cfg.channels, t=cfg.t, pe_dim=sample.pe.k, phi_hidden=cfg.phi_hidden,
            phi_uses_features=nm, residual="after" if nm else "none",
            readout="root" if nm else "node")
        return BunnNet(bunn_cfg)
    layers = cfg.layers or (cfg.depth if nm else 1)
    return BaselineNet(BaselineConfig(name, in_dim, out_dim, hidden=cfg.hidden, layers=layers,
                                      readout="root" if nm else "node"))


def _dataset(cfg: ExperimentConfig, seed: int):
    if cfg.task == "neighborsmatch":
        data = gen_neighborsmatch_dataset(cfg.depth, cfg.train + cfg.test, seed)
    else:
        task = SyntheticTask(cfg.task, cfg.n, cfg.train, cfg.test, seed, cfg.half_width)
        data = gen_averaging_dataset(task)
    return data[:cfg.train], data[cfg.train:]


def _run_seed(cfg: ExperimentConfig, name: str, seed: int) -> tuple[SeedRun, object]:
    start = time.perf_counter()
    train_set, test_set = _dataset(cfg, seed)
    model = build_model(cfg, name, train_set[0])
    loss = "cross-entropy" if cfg.task == "neighborsmatch" else "mse"
    epochs = 1 if name in REFERENCE_MODELS else cfg.epochs
    res = train(model, train_set, test_set, TrainConfig(epochs=epochs, seed=seed, lr=cfg.lr, loss=loss))
    run = SeedRun(seed, res.train_loss, res.train_metric, res.test_loss, res.test_metric,
                  res.history, time.perf_counter() - start)
    return run, res.params


def _job(args):
    cfg, name, seed = args
    return _run_seed(cfg, name, seed)


def run_experiments(cfg: ExperimentConfig, out_dir: str | Path | None = None,
                    save_parameters: bool = False) -> list[ExperimentResult]:
    """Train every model in ``cfg.model`` (comma separated) for every seed.

    With ``out_dir`` the run writes ``results.csv``, ``summary.json``,
    ``config.resolved`` and one history CSV per (model, seed). Raises
    :class:`~bunn.training.TrainingDivergence` if any run diverges.
    """
    cfg = cfg.resolved()
    seeds = list(range(cfg.seed, cfg.seed + cfg.seeds))
    jobs = [(cfg, name, seed) for name in cfg.models() for seed in seeds]
    start = time.perf_counter()
    if cfg.threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            outputs = list(pool.map(_job, jobs))
    else:
        outputs = [_job(j) for j in jobs]
    elapsed = time.perf_counter() - start
    results = []
    for i, name in enumerate(cfg.models()):
        chunk = outputs[i * len(seeds):(i + 1) * len(seeds)]
        runs = [run for run, _ in chunk]
        results.append(ExperimentResult(name, cfg.task, runs, sum(r.seconds for r in runs)))
    if out_dir is not None:
        write_results(cfg, results, out_dir, elapsed)
        if save_parameters:
            for name, (run, params) in zip([n for n in cfg.models() for _ in seeds], outputs):
                if params.size:
                    save_params(Path(out_dir) / f"params_{name}_seed{run.seed}.json", params,
                                cfg.to_dict(), name)
    return results


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> ExperimentResult:
    """Single-model form of :func:`run_experiments`."""
    if len(cfg.models()) != 1:
        raise ConfigError("run_experiment takes exactly one model; use run_experiments")
    return run_experiments(cfg, out_dir)[0]


def run_neighborsmatch(depths: list[int], models: list[str], cfg: ExperimentConfig | None = None,
                       out_dir: str | Path | None = None) -> list[dict]:
    """Train accuracy of each model at each tree depth, under one shared budget.

    Returns rows ``{model, depth, seed, train_accuracy}``; with ``out_dir``
    each depth writes its files to ``out_dir/depth<r>`` and the table goes to
    ``out_dir/accuracy.csv``.
    """
    base = cfg or ExperimentConfig(task="neighborsmatch")
    rows = []
    for depth in depths:
        sub = dataclasses.replace(base, task="neighborsmatch", depth=depth, model=",".join(models))
        target = None if out_dir is None else Path(out_dir) / f"depth{depth}"
        for res in run_experiments(sub, target):
            rows += [{"model": res.model, "depth": depth, "seed": r.seed,
                      "train_accuracy": r.train_metric} for r in res.runs]
    if out_dir is not None:
        with open(Path(out_dir) / "accuracy.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["model", "depth", "seed", "train_accuracy"])
            for row in rows:
                writer.writerow([row["model"], row["depth"], row["seed"], repr(row["train_accuracy"])])
    return rows


RESULT_COLUMNS = ["model", "task", "seed", "epochs", "train_loss", "train_metric",
                  "test_loss", "test_metric"]


def write_results(cfg: ExperimentConfig, results: list[ExperimentResult], out_dir: str | Path,
                  elapsed: float = 0.0) -> None:
    """results.csv holds only deterministic columns; timings go to summary.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_resolved_config(cfg, out / "config.resolved")
    with open(out / "results.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        for res in results:
            epochs = 1 if res.model in REFERENCE_MODELS else cfg.epochs
            for r in res.runs:
                writer.writerow([res.model, res.task, r.seed, epochs, repr(r.train_loss),
                                 repr(r.train_metric), repr(r.test_loss), repr(r.test_metric)])
    for res in results:
        for r in res.runs:
            write_history_csv(r.history, out / f"history_{res.model}_seed{r.seed}.csv")
    summary = {"config": {k: _format_value(v) for k, v in cfg.to_dict().items()},
               "wall_seconds": elapsed,
               "results": [res.summary() for res in results]}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, allow_nan=True) + "\n")
