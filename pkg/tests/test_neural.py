import numpy as np
import pytest

from metaeq import neural as nn


def _fd_check(model, params, inputs, labels, coords, h=1e-5):
    _, grad = model.loss_and_grad(params, inputs, labels)
    worst = 0.0
    for k in coords:
        e = np.zeros_like(params)
        e[k] = h
        fd = (model.loss(params + e, inputs, labels) - model.loss(params - e, inputs, labels)) / (2 * h)
        worst = max(worst, abs(fd - grad[k]) / max(abs(fd), abs(grad[k]), 1e-8))
    return worst


def test_mlp_shape_and_param_count():
    m = nn.MLP()
    assert m.num_params == 1 * 100 + 100 + 100 * 50 + 50 + 50 * 16 + 16 == 6066
    p = m.init(0)
    probs = m.forward(p, np.linspace(-2, 2, 7))
    assert probs.shape == (7, 16)
    np.testing.assert_allclose(probs.sum(1), 1.0)


def test_mlp_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    m = nn.MLP()
    p = m.init(rng)
    x = rng.normal(size=40)
    y = rng.integers(0, 16, 40)
    assert _fd_check(m, p, x, y, rng.choice(m.num_params, 60, replace=False)) < 1e-5


def test_lstm_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    m = nn.LSTM(window=4, hidden=8)
    p = m.init(rng)
    x = rng.normal(size=(12, 4))
    y = rng.integers(0, 16, 12)
    assert _fd_check(m, p, x, y, rng.choice(m.num_params, 60, replace=False)) < 1e-4


def test_lstm_gate_activation_ranges():
    m = nn.LSTM(window=4, hidden=8)
    steps = m.gate_activations(m.init(2), np.random.default_rng(2).normal(size=(5, 4)) * 10)
    assert len(steps) == 2 * 4
    for i, f, g, o in steps:
        for gate in (i, f, o):
            assert np.all((gate >= 0) & (gate <= 1))
        assert np.all(np.abs(g) <= 1)


def test_sliding_windows_zero_pad():
    w = nn.sliding_windows([1.0, 2.0, 3.0], 3)
    np.testing.assert_array_equal(w, [[0, 0, 1], [0, 1, 2], [1, 2, 3]])


def test_loss_is_floored():
    m = nn.MLP()
    p = m.init(0)
    parts = m.unflatten(p)
    parts["b3"][:] = 0.0
    parts["b3"][0] = 1e4
    p = m.flatten(parts)
    loss, grad = m.loss_and_grad(p, [0.0], [5])
    assert loss == pytest.approx(-np.log(1e-30))
    assert np.all(np.isfinite(grad))


def test_bad_labels_rejected():
    m = nn.MLP()
    with pytest.raises(ValueError):
        m.loss_and_grad(m.init(0), [0.0, 1.0], [0, 16])
    with pytest.raises(ValueError):
        m.loss_and_grad(m.init(0), [0.0, 1.0], [0])


def test_adam_two_step_hand_trace():
    p, s = nn.adam_step(np.array([1.0]), nn.AdamState.zeros(1), np.array([2.0]), 0.1)
    assert p[0] == pytest.approx(0.9, abs=1e-8)
    p, s = nn.adam_step(p, s, np.array([-1.0]), 0.1)
    assert s.t == 2
    # m_hat = 0.08 / 0.19, v_hat = 0.004996 / 0.001999
    assert p[0] == pytest.approx(0.873366, abs=1e-6)


def test_sgd_step():
    np.testing.assert_allclose(nn.sgd_step([1.0, 2.0], [0.5, -1.0], 0.1), [0.95, 2.1])
    with pytest.raises(ValueError):
        nn.sgd_step([1.0], [1.0, 2.0], 0.1)


@pytest.mark.parametrize("optimizer", ["adam", "sgd"])
def test_training_reduces_loss(optimizer):
    rng = np.random.default_rng(4)
    m = nn.MLP()
    p = m.init(rng)
    y = rng.integers(0, 16, 64)
    x = (y - 7.5) / 4 + 0.05 * rng.normal(size=64)
    lr = 5e-3 if optimizer == "adam" else 1e-4
    after = nn.train(m, p, x, y, lr, 50, optimizer)
    assert m.loss(after, x, y) < m.loss(p, x, y)
    with pytest.raises(ValueError):
        nn.train(m, p, x, y, lr, 1, "rmsprop")


def test_save_load_roundtrip(tmp_path):
    m = nn.MLP()
    p = m.init(3)
    path = tmp_path / "w.bin"
    nn.save_params(m, p, path)
    np.testing.assert_array_equal(nn.load_params(m, path), p)


def test_load_rejects_mismatch(tmp_path):
    m = nn.MLP()
    path = tmp_path / "w.bin"
    nn.save_params(m, m.init(0), path)
    with pytest.raises(nn.ArchitectureMismatch):
        nn.load_params(nn.MLP(hidden=(10, 5)), path)
    with pytest.raises(nn.ArchitectureMismatch):
        nn.load_params(nn.LSTM(window=4, hidden=8), path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-8])
    with pytest.raises(nn.ArchitectureMismatch):
        nn.load_params(m, path)
    path.write_bytes(b"garbage\n" + raw)
    with pytest.raises(nn.ArchitectureMismatch):
        nn.load_params(m, path)


def test_unflatten_wrong_length():
    with pytest.raises(nn.ArchitectureMismatch):
        nn.MLP().unflatten(np.zeros(10))
