"""Small fully-connected Q-network with hand-written backprop and Adam.

Parameters live in a plain dict of float64 arrays ``W0, b0, W1, b1, ...``.
Hidden layers use ReLU; the output layer is linear.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import DataError, TrainingHalted, ValidationError

STATE_DIM = 6
N_OUT = 5
DEFAULT_HIDDEN = (64, 64)
PARAMS_FORMAT = 1


def param_names(n_layers: int) -> list[str]:
    return [f"{kind}{i}" for i in range(n_layers) for kind in ("W", "b")]


def layer_sizes(params: dict) -> list[int]:
    n = len(params) // 2
    return [params["W0"].shape[0]] + [params[f"W{i}"].shape[1] for i in range(n)]


def init_params(seed: int, hidden=DEFAULT_HIDDEN, in_dim: int = STATE_DIM, out_dim: int = N_OUT) -> dict:
    """He-style uniform fan-in initialization, zero biases."""
    rng = np.random.default_rng(seed)
    sizes = [in_dim, *hidden, out_dim]
    params = {}
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        bound = np.sqrt(6.0 / fan_in)
        params[f"W{i}"] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        params[f"b{i}"] = np.zeros(fan_out)
    return params


def copy_params(params: dict) -> dict:
    return {k: v.copy() for k, v in params.items()}


def _check_states(params: dict, states) -> np.ndarray:
    x = np.asarray(states, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params["W0"].shape[0]:
        raise ValidationError(f"states must have width {params['W0'].shape[0]}, got shape {x.shape}")
    return x


def forward_cache(params: dict, states) -> tuple[np.ndarray, list[np.ndarray]]:
    x = _check_states(params, states)
    n = len(params) // 2
    acts = [x]
    h = x
    for i in range(n):
        h = h @ params[f"W{i}"]
        h += params[f"b{i}"]
        if i < n - 1:
            np.maximum(h, 0.0, out=h)
        acts.append(h)
    return h, acts


def forward(params: dict, states) -> np.ndarray:
    return forward_cache(params, states)[0]


def backward(params: dict, acts: list[np.ndarray], d_out: np.ndarray) -> dict:
    """Gradients of a loss given its gradient w.r.t. the network output."""
    n = len(params) // 2
    grads = {}
    delta = d_out
    for i in reversed(range(n)):
        grads[f"W{i}"] = acts[i].T @ delta
        grads[f"b{i}"] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params[f"W{i}"].T) * (acts[i] > 0)
    return grads


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=np.float64))
        self.actions = np.asarray(self.actions, dtype=np.int64).reshape(-1)
        self.targets = np.asarray(self.targets, dtype=np.float64).reshape(-1)
        b = len(self.actions)
        if b < 1 or len(self.states) != b or len(self.targets) != b:
            raise ValidationError("batch arrays must be non-empty and aligned")


def mse_loss(params: dict, batch: Batch) -> float:
    q = forward(params, batch.states)
    err = q[np.arange(len(batch.actions)), batch.actions] - batch.targets
    return float(np.mean(err * err))


def grad(params: dict, batch: Batch) -> tuple[dict, float]:
    """Mean squared error between Q(s, a) and the targets, and its gradient."""
    q, acts = forward_cache(params, batch.states)
    rows = np.arange(len(batch.actions))
    err = q[rows, batch.actions] - batch.targets
    d_out = np.zeros_like(q)
    d_out[rows, batch.actions] = 2.0 * err / len(err)
    return backward(params, acts, d_out), float(np.mean(err * err))


def _relu_pattern(params: dict, states: np.ndarray) -> np.ndarray:
    _, acts = forward_cache(params, states)
    return np.concatenate([(a > 0).ravel() for a in acts[1:-1]])


def _mse_probes(params: dict, batch: Batch, name: str, epsilon: float, chunk: int = 256):
    """Central differences of the MSE loss for every element of one tensor at once.

    Perturbing an element of layer i only shifts that layer's pre-activations,
    so each probe starts from the cached input to layer i and the perturbed
    pre-activations are pushed through the remaining layers in a stack.
    Returns the difference quotients and a per-element kink flag.
    """
    n = len(params) // 2
    layer = int(name[1:])
    _, acts = forward_cache(params, batch.states)
    h_in = acts[layer]
    z = h_in @ params[f"W{layer}"] + params[f"b{layer}"]
    rows = np.arange(len(batch.actions))
    size = params[name].size
    width = z.shape[1]
    num = np.empty(size)
    kink = np.zeros(size, dtype=bool)
    for lo in range(0, size, chunk):
        idx = np.arange(lo, min(lo + chunk, size))
        # shift[p] is the change in z for a unit step of element idx[p]
        shift = np.zeros((len(idx),) + z.shape)
        col = idx % width
        if name[0] == "W":
            shift[np.arange(len(idx)), :, col] = h_in[:, idx // width].T
        else:
            shift[np.arange(len(idx)), :, col] = 1.0
        losses = []
        for sign in (1.0, -1.0):
            h = z[None] + sign * epsilon * shift
            flips = np.zeros(len(idx), dtype=bool)
            for i in range(layer, n):
                if i > layer:
                    h = h @ params[f"W{i}"] + params[f"b{i}"]
                if i < n - 1:
                    flips |= ((h > 0) != (acts[i + 1] > 0)[None]).any(axis=(1, 2))
                    h = np.maximum(h, 0.0)
            err = h[:, rows, batch.actions] - batch.targets[None]
            losses.append(np.mean(err * err, axis=1))
            kink[idx] |= flips
        num[idx] = (losses[0] - losses[1]) / (2 * epsilon)
    return num, kink


def grad_check(params: dict, batch: Batch, epsilon: float = 1e-5,
               grad_fn: Callable | None = None, loss_fn: Callable | None = None) -> float:
    """Max relative error between analytic and central-difference gradients.

    Probes whose +/- epsilon perturbation flips a ReLU are skipped: the loss
    has a kink there and the difference quotient does not estimate the gradient.
    With the MSE loss the probes are vectorized per tensor; any other
    ``loss_fn`` is probed one element at a time.
    """
    grad_fn = grad_fn or grad
    analytic, loss = grad_fn(params, batch)
    base = _relu_pattern(params, batch.states)
    # roundoff bound of the difference quotient; smaller disagreements are unresolvable
    noise = 4.0 * np.finfo(np.float64).eps * max(1.0, abs(loss)) / epsilon
    worst = 0.0
    for name, value in params.items():
        flat = value.reshape(-1)
        if loss_fn is None or loss_fn is mse_loss:
            num, kink = _mse_probes(params, batch, name, epsilon)
        else:
            num, kink = _loop_probes(params, batch, flat, loss_fn, epsilon), None
        ana = analytic[name].reshape(-1)
        scale = np.maximum(np.abs(ana) + np.abs(num), 1e-6)
        rel = np.abs(ana - num) / scale
        rel[np.abs(ana - num) <= noise] = 0.0
        for j in np.flatnonzero(rel > 0):
            hit = kink[j] if kink is not None else _straddles_kink(params, flat, j, epsilon, batch.states, base)
            if hit:
                rel[j] = 0.0
        if rel.size:
            worst = max(worst, float(rel.max()))
    return worst


def _loop_probes(params, batch, flat, loss_fn, epsilon) -> np.ndarray:
    num = np.empty_like(flat)
    for j in range(flat.size):
        keep = flat[j]
        flat[j] = keep + epsilon
        up = loss_fn(params, batch)
        flat[j] = keep - epsilon
        down = loss_fn(params, batch)
        flat[j] = keep
        num[j] = (up - down) / (2 * epsilon)
    return num


def _straddles_kink(params, flat, j, epsilon, states, base) -> bool:
    keep = flat[j]
    try:
        for delta in (epsilon, -epsilon):
            flat[j] = keep + delta
            if not np.array_equal(_relu_pattern(params, states), base):
                return True
        return False
    finally:
        flat[j] = keep


@dataclass
class OptimizerState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def step(params: dict, grads: dict, opt: OptimizerState) -> tuple[dict, OptimizerState]:
    """One bias-corrected Adam update, in place; returns (params, opt)."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingHalted(f"non-finite gradient in {name} at optimizer step {opt.t + 1}")
        if g.shape != params[name].shape:
            raise ValidationError(f"gradient shape {g.shape} does not match {name} {params[name].shape}")
    opt.t += 1
    c1 = 1.0 - opt.beta1 ** opt.t
    c2 = 1.0 - opt.beta2 ** opt.t
    for name, g in grads.items():
        m = opt.m.get(name)
        if m is None:
            m = opt.m[name] = np.zeros_like(g)
            opt.v[name] = np.zeros_like(g)
        v = opt.v[name]
        m *= opt.beta1
        m += (1.0 - opt.beta1) * g
        v *= opt.beta2
        v += (1.0 - opt.beta2) * g * g
        params[name] -= opt.lr * (m / c1) / (np.sqrt(v / c2) + opt.eps)
    return params, opt


# -- serialization -------------------------------------------------------------

def params_to_dict(params: dict) -> dict:
    body = {
        "format_version": PARAMS_FORMAT,
        "architecture": {"layers": layer_sizes(params), "hidden_activation": "relu", "output": "linear"},
        "params": {k: params[k].tolist() for k in param_names(len(params) // 2)},
    }
    body["sha256"] = _digest(body)
    return body


def params_from_dict(d: dict) -> dict:
    if d.get("format_version") != PARAMS_FORMAT:
        raise DataError(f"unsupported parameter format {d.get('format_version')!r}")
    expected = d.get("sha256")
    body = {k: v for k, v in d.items() if k != "sha256"}
    if expected != _digest(body):
        raise DataError("parameter checksum mismatch")
    params = {k: np.array(v, dtype=np.float64) for k, v in d["params"].items()}
    sizes = d["architecture"]["layers"]
    for i in range(len(sizes) - 1):
        w, b = params[f"W{i}"], params[f"b{i}"]
        if w.shape != (sizes[i], sizes[i + 1]) or b.shape != (sizes[i + 1],):
            raise DataError(f"layer {i} shape does not match declared architecture")
        params[f"W{i}"] = w.reshape(sizes[i], sizes[i + 1])
    return params


def _digest(body: dict) -> str:
    return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()


def save_params(params: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(params_to_dict(params)))


def load_params(path: str | Path) -> dict:
    return params_from_dict(json.loads(Path(path).read_text()))
