import json

import numpy as np
import pytest

from tecmrl import qcore
from tecmrl.errors import DataError, TrainingHalted, ValidationError
from tecmrl.learners import cql_loss, deep_loss_grad


def _batch(seed, n=32):
    rng = np.random.default_rng(seed)
    return qcore.Batch(rng.uniform(0, 4, (n, 6)), rng.integers(0, 5, n), rng.normal(0, 3, n))


def test_init_shapes_and_determinism():
    p = qcore.init_params(3)
    assert qcore.layer_sizes(p) == [6, 64, 64, 5]
    assert list(p) == qcore.param_names(3)
    q = qcore.init_params(3)
    assert all(np.array_equal(p[k], q[k]) for k in p)
    assert not np.array_equal(p["W0"], qcore.init_params(4)["W0"])
    assert not p["b0"].any()


def test_forward_shapes_and_state_width():
    p = qcore.init_params(0, hidden=(8,))
    assert qcore.forward(p, np.zeros(6)).shape == (1, 5)
    assert qcore.forward(p, np.zeros((7, 6))).shape == (7, 5)
    with pytest.raises(ValidationError):
        qcore.forward(p, np.zeros((2, 5)))


def test_forward_matches_naive_loop():
    p = qcore.init_params(1, hidden=(4, 3))
    x = np.random.default_rng(0).normal(size=(5, 6))
    h = x
    for i in range(3):
        h = h @ p[f"W{i}"] + p[f"b{i}"]
        if i < 2:
            h = np.where(h > 0, h, 0.0)
    assert np.allclose(qcore.forward(p, x), h, rtol=0, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_grad_check_small_net(seed):
    p = qcore.init_params(seed, hidden=(16, 16))
    assert qcore.grad_check(p, _batch(seed)) < 1e-6


def test_grad_check_detects_wrong_backward():
    p = qcore.init_params(0, hidden=(16,))
    batch = _batch(0)

    def bad(params, b):
        g, loss = qcore.grad(params, b)
        g["W0"] = g["W0"] * 1.001
        return g, loss

    assert qcore.grad_check(p, batch, grad_fn=bad) > 1e-4


def test_loop_and_vectorized_probes_agree():
    p = qcore.init_params(2, hidden=(8,))
    batch = _batch(2, n=16)
    fast = qcore.grad_check(p, batch)
    slow = qcore.grad_check(p, batch, loss_fn=lambda params, b: qcore.mse_loss(params, b))
    assert fast < 1e-6 and slow < 1e-6


@pytest.mark.parametrize("alpha", [0.0, 1.0, 5.0])
def test_conservative_loss_gradient(alpha):
    p = qcore.init_params(4, hidden=(12,))
    b = _batch(4, n=24)
    grad_fn = lambda params, batch: deep_loss_grad(params, batch.states, batch.actions, batch.targets, alpha)
    loss_fn = lambda params, batch: cql_loss(params, batch.states, batch.actions, batch.targets, alpha)
    assert qcore.grad_check(p, b, grad_fn=grad_fn, loss_fn=loss_fn) < 1e-6
    assert deep_loss_grad(p, b.states, b.actions, b.targets, alpha)[1] == pytest.approx(loss_fn(p, b), rel=1e-12)


def test_no_alpha_is_plain_mse():
    p = qcore.init_params(5, hidden=(8,))
    b = _batch(5)
    g1, l1 = qcore.grad(p, b)
    g2, l2 = deep_loss_grad(p, b.states, b.actions, b.targets, None)
    assert l1 == l2
    assert all(np.array_equal(g1[k], g2[k]) for k in g1)


def test_adam_first_step_closed_form():
    # bias correction makes the first update lr * sign(g), up to eps
    p = {"W0": np.ones((2, 2)), "b0": np.zeros(2)}
    g = {"W0": np.array([[0.5, -2.0], [1e-3, 0.0]]), "b0": np.array([3.0, -3.0])}
    opt = qcore.OptimizerState(lr=0.01)
    qcore.step(p, g, opt)
    expected = 1.0 - 0.01 * g["W0"] / (np.abs(g["W0"]) + 1e-8)
    assert np.allclose(p["W0"], expected, atol=1e-12)
    assert np.allclose(p["b0"], [-0.01, 0.01], atol=1e-10)
    assert opt.t == 1


def test_adam_second_step_matches_reference():
    p = {"W0": np.array([[1.0]]), "b0": np.array([0.0])}
    opt = qcore.OptimizerState(lr=0.1)
    grads = [0.2, -0.4]
    for g in grads:
        qcore.step(p, {"W0": np.array([[g]]), "b0": np.array([0.0])}, opt)
    m = 0.1 * 0.9 * 0.2 + 0.1 * -0.4
    v = 0.001 * 0.999 * 0.04 + 0.001 * 0.16
    first = 1.0 - 0.1 * 0.2 / (0.2 + 1e-8)
    second = first - 0.1 * (m / (1 - 0.81)) / (np.sqrt(v / (1 - 0.999 ** 2)) + 1e-8)
    assert p["W0"][0, 0] == pytest.approx(second, abs=1e-12)


def test_nan_gradient_halts_without_update():
    p = {"W0": np.ones((1, 1)), "b0": np.zeros(1)}
    opt = qcore.OptimizerState()
    with pytest.raises(TrainingHalted, match="W0"):
        qcore.step(p, {"W0": np.array([[np.nan]]), "b0": np.zeros(1)}, opt)
    assert p["W0"][0, 0] == 1.0 and opt.t == 0


def test_shape_mismatch_rejected():
    p = {"W0": np.ones((1, 1)), "b0": np.zeros(1)}
    with pytest.raises(ValidationError):
        qcore.step(p, {"W0": np.ones((2, 1)), "b0": np.zeros(1)}, qcore.OptimizerState())


def test_params_round_trip_is_bit_exact(tmp_path):
    p = qcore.init_params(7)
    qcore.save_params(p, tmp_path / "p.json")
    again = qcore.load_params(tmp_path / "p.json")
    assert all(np.array_equal(p[k], again[k]) for k in p)
    x = np.random.default_rng(0).uniform(0, 4, (10, 6))
    assert np.array_equal(qcore.forward(p, x), qcore.forward(again, x))


def test_tampered_params_rejected(tmp_path):
    d = qcore.params_to_dict(qcore.init_params(0, hidden=(4,)))
    d["params"]["b0"][0] = 1.0
    with pytest.raises(DataError, match="checksum"):
        qcore.params_from_dict(d)
    d = qcore.params_to_dict(qcore.init_params(0, hidden=(4,)))
    d["format_version"] = 99
    with pytest.raises(DataError):
        qcore.params_from_dict(json.loads(json.dumps(d)))


def test_declared_architecture_must_match():
    d = qcore.params_to_dict(qcore.init_params(0, hidden=(4,)))
    d["architecture"]["layers"] = [6, 3, 5]
    d.pop("sha256")
    d["sha256"] = qcore._digest(d)
    with pytest.raises(DataError, match="shape"):
        qcore.params_from_dict(d)
