import math

import numpy as np
import pytest

from bunn.baselines import BaselineConfig
from bunn.optim import FLUSH_EVERY, AdamState, NonFiniteGradient, adam_step
from bunn.tasks import SyntheticTask, gen_averaging_dataset
from bunn.training import (
    BaselineNet, ConstantNet, TrainConfig, TrainingDivergence, evaluate, train, write_history_csv,
)


def test_adam_matches_textbook_update(rng):
    params = rng.normal(size=5)
    reference = params.copy()
    state = AdamState(5, lr=0.01)
    m = np.zeros(5)
    v = np.zeros(5)
    for step in range(1, 6):
        grad = rng.normal(size=5)
        adam_step(state, params, grad.copy())
        m = 0.9 * m + 0.1 * grad
        v = 0.999 * v + 0.001 * grad ** 2
        m_hat, v_hat = m / (1 - 0.9 ** step), v / (1 - 0.999 ** step)
        reference -= 0.01 * m_hat / (np.sqrt(v_hat) + 1e-8)
        assert np.allclose(params, reference, rtol=1e-12, atol=1e-15)


def test_adam_rejects_non_finite(rng):
    with pytest.raises(NonFiniteGradient):
        adam_step(AdamState(2), np.zeros(2), np.array([1.0, math.nan]))


def _data(train=8, test=4):
    data = gen_averaging_dataset(SyntheticTask("clique", 4, train, test, seed=3))
    return data[:train], data[train:]


def test_training_is_deterministic():
    train_set, test_set = _data()
    model = BaselineNet(BaselineConfig("gcn", 1, 1, hidden=8))
    a = train(model, train_set, test_set, TrainConfig(epochs=5, seed=7))
    b = train(model, train_set, test_set, TrainConfig(epochs=5, seed=7))
    assert np.array_equal(a.params.data, b.params.data)
    assert a.history == b.history
    c = train(model, train_set, test_set, TrainConfig(epochs=5, seed=8))
    assert not np.array_equal(a.params.data, c.params.data)


def test_training_reduces_loss():
    train_set, test_set = _data(train=16)
    res = train(BaselineNet(BaselineConfig("mlp", 1, 1, hidden=16)), train_set, test_set,
                TrainConfig(epochs=40, lr=1e-2))
    train_rows = [h for h in res.history if h["split"] == "train"]
    assert train_rows[-1]["loss"] < train_rows[0]["loss"]


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_reports_epoch():
    train_set, test_set = _data()
    with pytest.raises(TrainingDivergence) as info:
        train(BaselineNet(BaselineConfig("mlp", 1, 1, hidden=8)), train_set, test_set,
              TrainConfig(epochs=50, lr=1e200))
    assert info.value.epoch >= 1
    assert "epoch" in str(info.value)


def test_constant_predictors_skip_training():
    train_set, test_set = _data()
    res = train(ConstantNet("baseline-constant-0"), train_set, test_set, TrainConfig(epochs=3))
    expected = np.mean([np.mean(s.target ** 2) for s in test_set])
    assert res.test_loss == pytest.approx(expected, rel=1e-12)
    assert [h["split"] for h in res.history] == ["train-final", "test"]
    with pytest.raises(ValueError):
        ConstantNet("baseline-median")


def test_evaluate_empty_and_history_csv(tmp_path):
    train_set, _ = _data()
    model = BaselineNet(BaselineConfig("mlp", 1, 1, hidden=4))
    assert all(math.isnan(v) for v in evaluate(model, None, [], "mse"))
    res = train(model, train_set, [], TrainConfig(epochs=2, eval_every=1))
    assert all(h["split"] != "test" for h in res.history)
    path = tmp_path / "h.csv"
    write_history_csv(res.history, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "epoch,split,loss,metric"
    assert len(lines) == len(res.history) + 1


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(loss="hinge")
    with pytest.raises(ValueError):
        train(ConstantNet("baseline-constant-0"), [], [], TrainConfig())


def test_adam_flushes_negligible_moments():
    state = AdamState(3)
    params = np.zeros(3)
    adam_step(state, params, np.array([1.0, 1.0, 1.0]))
    for _ in range(FLUSH_EVERY * 120):
        adam_step(state, params, np.array([1.0, 0.0, 0.0]))
    assert state.m[0] > 0 and state.m[1] == 0.0 and state.m[2] == 0.0
    assert np.all(np.isfinite(params))
