"""Model adapters and the sample-by-sample training loop."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import Tape, Tensor, mse_loss, softmax_cross_entropy
from .baselines import BaselineConfig, baseline_forward, init_baseline_params
from .model import BunnModelConfig, HeatCache, bunn_model_forward, init_bunn_params
from .optim import AdamState, NonFiniteGradient, adam_step
from .params import Parameters
from .seeding import STREAM_INIT, STREAM_ORDER, make_rng
from .tasks import Sample, constant_zero_prediction, opposite_mean_prediction

__all__ = [
    "TrainConfig", "TrainResult", "TrainingDivergence", "BunnNet", "BaselineNet",
    "ConstantNet", "train", "evaluate", "write_history_csv",
]


class TrainingDivergence(RuntimeError):
    def __init__(self, epoch: int, detail: str):
        super().__init__(f"training diverged at epoch {epoch}: {detail}")
        self.epoch = epoch


@dataclass
class TrainConfig:
    epochs: int = 500
    batch_size: int = 1
    seed: int = 0
    lr: float = 1e-3
    loss: str = "mse"
    eval_every: int = 0
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.loss not in ("mse", "cross-entropy"):
            raise ValueError(f"unknown loss {self.loss!r}")

    def to_dict(self) -> dict:
        return asdict(self)


class BunnNet:
    def __init__(self, cfg: BunnModelConfig, name: str = "bunn"):
        self.cfg = cfg
        self.name = name
        self.cache = HeatCache(cfg.heat_mode, cfg.taylor_degree)

    def init_params(self, rng: np.random.Generator) -> Parameters:
        return init_bunn_params(self.cfg, rng)

    def forward(self, params: Parameters, sample: Sample) -> Tensor:
        ops = self.cache.operators(sample.graph, self.cfg.layer_times())
        return bunn_model_forward(self.cfg, params, sample.graph, sample.pe, sample.x, heat_ops=ops)


class BaselineNet:
    def __init__(self, cfg: BaselineConfig, name: str | None = None):
        self.cfg = cfg
        self.name = name or cfg.kind

    def init_params(self, rng: np.random.Generator) -> Parameters:
        return init_baseline_params(self.cfg, rng)

    def forward(self, params: Parameters, sample: Sample) -> Tensor:
        return baseline_forward(self.cfg, params, sample.graph, sample.x)


class ConstantNet:
    """Parameter-free reference predictors; training is a no-op."""

    RULES = {"baseline-constant-0": constant_zero_prediction,
             "baseline-opposite-mean": opposite_mean_prediction}

    def __init__(self, name: str):
        if name not in self.RULES:
            raise ValueError(f"unknown reference predictor {name!r}")
        self.name = name

    def init_params(self, rng: np.random.Generator) -> Parameters:
        return Parameters([])

    def forward(self, params: Parameters, sample: Sample) -> Tensor:
        return Tensor(self.RULES[self.name](sample))


@dataclass
class TrainResult:
    params: Parameters
    history: list[dict] = field(default_factory=list)
    train_loss: float = math.nan
    train_metric: float = math.nan
    test_loss: float = math.nan
    test_metric: float = math.nan


def _loss(kind: str, out: Tensor, sample: Sample) -> Tensor:
    if kind == "mse":
        return mse_loss(out, Tensor(sample.target))
    return softmax_cross_entropy(out, sample.target.astype(np.int64).reshape(-1))


def evaluate(model, params: Parameters, samples: list[Sample], loss: str) -> tuple[float, float]:
    """Mean loss and metric (MSE, or accuracy for classification) over samples."""
    if not samples:
        return math.nan, math.nan
    losses, hits = [], []
    for s in samples:
        out = model.forward(params, s)
        losses.append(_loss(loss, out, s).item())
        if loss == "cross-entropy":
            pred = out.value.argmax(axis=1)
            hits.append(float(np.mean(pred == s.target.astype(np.int64).reshape(-1))))
    mean_loss = float(np.mean(losses))
    return mean_loss, (float(np.mean(hits)) if hits else mean_loss)


def train(model, train_set: list[Sample], test_set: list[Sample], cfg: TrainConfig) -> TrainResult:
    """Adam over shuffled samples; deterministic for a fixed seed.

    Raises :class:`TrainingDivergence` with the epoch index on a non-finite
    loss or gradient.
    """
    if not train_set:
        raise ValueError("empty training set")
    params = model.init_params(make_rng(cfg.seed, STREAM_INIT))
    order_rng = make_rng(cfg.seed, STREAM_ORDER)
    history: list[dict] = []
    if params.size == 0:
        result = TrainResult(params, history)
    else:
        state = AdamState(params.size, lr=cfg.lr, weight_decay=cfg.weight_decay)
        tensors = [params[name] for name in params]
        grad = np.zeros(params.size)
        for epoch in range(1, cfg.epochs + 1):
            order = order_rng.permutation(len(train_set))
            running = 0.0
            for start in range(0, len(order), cfg.batch_size):
                batch = order[start:start + cfg.batch_size]
                for k, i in enumerate(batch):
                    with Tape() as tape:
                        loss = _loss(cfg.loss, model.forward(params, train_set[i]), train_set[i])
                    value = loss.item()
                    if not math.isfinite(value):
                        raise TrainingDivergence(epoch, f"loss {value}")
                    running += value
                    params.flat_grad(tape.backward(loss), out=grad, accumulate=k > 0)
                    for t in tensors:
                        t.grad = None
                try:
                    adam_step(state, params.data, grad if len(batch) == 1 else grad / len(batch))
                except NonFiniteGradient as exc:
                    raise TrainingDivergence(epoch, str(exc)) from exc
            history.append({"epoch": epoch, "split": "train", "loss": running / len(order),
                            "metric": math.nan})
            if test_set and cfg.eval_every and epoch % cfg.eval_every == 0 and epoch != cfg.epochs:
                tl, tm = evaluate(model, params, test_set, cfg.loss)
                history.append({"epoch": epoch, "split": "test", "loss": tl, "metric": tm})
        result = TrainResult(params, history)
    result.train_loss, result.train_metric = evaluate(model, params, train_set, cfg.loss)
    result.test_loss, result.test_metric = evaluate(model, params, test_set, cfg.loss)
    last = cfg.epochs if params.size else 0
    history.append({"epoch": last, "split": "train-final", "loss": result.train_loss,
                    "metric": result.train_metric})
    if test_set:
        history.append({"epoch": last, "split": "test", "loss": result.test_loss,
                        "metric": result.test_metric})
    return result


def write_history_csv(history: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "split", "loss", "metric"])
        for row in history:
            writer.writerow([row["epoch"], row["split"], repr(float(row["loss"])),
                             repr(float(row["metric"]))])
