"""Offline Q-type trainers: tabular Q-learning, DQN, DDQN, discrete BCQ and CQL."""
from __future__ import annotations

import hashlib
import json
import logging
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from . import qcore
from ._backend import kernels as _kernels
from .actions import N_ACTIONS
from .errors import DataError, ValidationError
from .mdp import N_TABULAR_STATES, TransitionSet, encode_states
from .scoring import ScoreConfig, builtin_config, config_from_dict

log = logging.getLogger(__name__)

ALGOS = ("ql", "dqn", "ddqn", "bcq", "cql")
DEEP_ALGOS = ("dqn", "ddqn", "bcq", "cql")
CHECKPOINT_FORMAT = 1


@dataclass(frozen=True)
class Hyper:
    gamma: float = 0.99
    lr: float = 1e-3
    lr_tabular: float = 0.1
    batch_size: int = 256
    epochs: int = 300
    checkpoint_every: int = 50
    sync_every: int = 500
    bcq_threshold: float = 0.3
    cql_alpha: float = 1.0
    hidden: tuple[int, ...] = (64, 64)
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ValidationError("gamma must lie in (0, 1]")
        if not 0 <= self.bcq_threshold <= 1:
            raise ValidationError("bcq_threshold must lie in [0, 1]")
        if self.cql_alpha < 0:
            raise ValidationError("cql_alpha must be >= 0")
        if self.batch_size < 1 or self.epochs < 1 or self.checkpoint_every < 1 or self.sync_every < 1:
            raise ValidationError("batch_size, epochs, checkpoint_every and sync_every must be >= 1")
        if self.lr <= 0 or self.lr_tabular <= 0:
            raise ValidationError("learning rates must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "Hyper":
        d = dict(d)
        if "hidden" in d:
            d["hidden"] = tuple(d["hidden"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown hyperparameters: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class QTable:
    values: np.ndarray
    visits: np.ndarray

    @classmethod
    def zeros(cls) -> "QTable":
        return cls(np.zeros((N_TABULAR_STATES, N_ACTIONS)), np.zeros((N_TABULAR_STATES, N_ACTIONS), dtype=np.int64))

    @property
    def unvisited(self) -> np.ndarray:
        return self.visits == 0

    def copy(self) -> "QTable":
        return QTable(self.values.copy(), self.visits.copy())


@dataclass
class Checkpoint:
    """A frozen Q-function from one training epoch.

    ``action_values`` takes raw (B, 12) vitals and handles state encoding,
    so assessment code never needs to know the model family.
    """

    epoch: int
    algo: str
    kind: str
    q: Any
    score_config: ScoreConfig | None = None

    @property
    def mode(self) -> str:
        return "tabular" if self.algo == "ql" else "vector"

    @property
    def tag(self) -> str:
        return f"{self.kind}-{self.algo}"

    def values_for_states(self, states) -> np.ndarray:
        if self.mode == "tabular":
            return self.q.values[np.asarray(states, dtype=np.int64)]
        return qcore.forward(self.q, states)

    def action_values(self, x: np.ndarray) -> np.ndarray:
        states = encode_states(x, self.mode, self.kind, self.score_config)
        return self.values_for_states(states)

    def to_dict(self) -> dict:
        d: dict[str, Any] = {
            "format_version": CHECKPOINT_FORMAT,
            "epoch": self.epoch,
            "algo": self.algo,
            "kind": self.kind,
            "score_config": None if self.score_config is None else self.score_config.to_dict(),
        }
        if self.mode == "tabular":
            d["q"] = {"values": self.q.values.tolist(), "visits": self.q.visits.tolist()}
        else:
            d["q"] = qcore.params_to_dict(self.q)
        d["sha256"] = hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Checkpoint":
        if d.get("format_version") != CHECKPOINT_FORMAT:
            raise DataError(f"unsupported checkpoint format {d.get('format_version')!r}")
        body = {k: v for k, v in d.items() if k != "sha256"}
        if hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest() != d.get("sha256"):
            raise DataError("checkpoint checksum mismatch")
        if d["algo"] == "ql":
            q = QTable(np.array(d["q"]["values"], dtype=np.float64), np.array(d["q"]["visits"], dtype=np.int64))
        else:
            q = qcore.params_from_dict(d["q"])
        cfg = None if d.get("score_config") is None else config_from_dict(d["score_config"])
        return cls(epoch=int(d["epoch"]), algo=d["algo"], kind=d["kind"], q=q, score_config=cfg)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        if path.exists():
            raise FileExistsError(f"checkpoint files are write-once: {path}")
        path.write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "Checkpoint":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read checkpoint {path}: {exc}") from None


@dataclass
class TrainRun:
    checkpoints: list[Checkpoint]
    losses: list[float] = field(default_factory=list)
    targets_digest: str = ""


def policy_best(values) -> np.ndarray | int:
    """Greedy action(s); ties go to the lowest index."""
    v = np.asarray(values)
    out = np.argmax(v, axis=-1)
    return int(out) if v.ndim == 1 else out


def policy_worst(values) -> np.ndarray | int:
    v = np.asarray(values)
    out = np.argmin(v, axis=-1)
    return int(out) if v.ndim == 1 else out


# -- tabular -------------------------------------------------------------------

def train_ql(ts: TransitionSet, h: Hyper = Hyper(), kind: str = "sofa") -> TrainRun:
    """One-step Q-learning sweeps over the offline dataset; a checkpoint per sweep."""
    if ts.mode != "tabular":
        raise ValidationError("train_ql needs tabular (scalar) states")
    if len(ts) == 0:
        raise DataError("empty transition dataset")
    rng = np.random.default_rng(h.seed)
    table = QTable.zeros()
    s = np.ascontiguousarray(ts.s, dtype=np.int64)
    a = np.ascontiguousarray(ts.a, dtype=np.int64)
    r = np.ascontiguousarray(ts.r, dtype=np.float64)
    sn = np.ascontiguousarray(ts.s_next, dtype=np.int64)
    done = np.ascontiguousarray(ts.done, dtype=np.uint8)
    run = TrainRun([])
    for epoch in range(1, h.epochs + 1):
        order = np.ascontiguousarray(rng.permutation(len(ts)), dtype=np.int64)
        _kernels.ql_sweep(table.values, table.visits, s, a, r, sn, done, order, h.lr_tabular, h.gamma)
        run.checkpoints.append(Checkpoint(epoch, "ql", kind, table.copy()))
    return run


# -- deep learners -------------------------------------------------------------

@dataclass
class BehaviorModel:
    """Action frequencies per discretized state (each component rounded)."""

    counts: dict[tuple[int, ...], np.ndarray]

    @classmethod
    def fit(cls, states: np.ndarray, actions: np.ndarray) -> "BehaviorModel":
        counts: dict[tuple[int, ...], np.ndarray] = {}
        for key, a in zip(map(tuple, np.rint(states).astype(np.int64).tolist()), actions.tolist()):
            row = counts.get(key)
            if row is None:
                row = counts[key] = np.zeros(N_ACTIONS)
            row[a] += 1
        return cls(counts)

    def probs(self, states: np.ndarray) -> np.ndarray:
        out = np.zeros((len(states), N_ACTIONS))
        for i, key in enumerate(map(tuple, np.rint(states).astype(np.int64).tolist())):
            row = self.counts.get(key)
            if row is not None:
                out[i] = row / row.sum()
        return out


def bcq_mask(probs: np.ndarray, threshold: float) -> tuple[np.ndarray, int]:
    """Admissible actions; rows with no behavior mass fall back to all actions."""
    top = probs.max(axis=1, keepdims=True)
    mask = probs >= threshold * top
    empty = top[:, 0] <= 0
    mask[empty] = True
    return mask, int(empty.sum())


def td_targets(algo: str, r, done, q_next_target, q_next_online=None, mask=None, gamma=0.99) -> np.ndarray:
    rows = np.arange(len(r))
    if algo in ("dqn", "cql"):
        boot = q_next_target.max(axis=1)
    elif algo == "ddqn":
        boot = q_next_target[rows, np.argmax(q_next_online, axis=1)]
    elif algo == "bcq":
        masked = np.where(mask, q_next_online, -np.inf)
        boot = q_next_target[rows, np.argmax(masked, axis=1)]
    else:
        raise ValidationError(f"unknown deep algorithm {algo!r}")
    return r + gamma * boot * (1.0 - done)


def deep_loss_grad(params: dict, states, actions, targets, alpha: float | None = None) -> tuple[dict, float]:
    """TD regression loss plus, when ``alpha`` is given, the conservative penalty."""
    q, acts = qcore.forward_cache(params, states)
    b = len(actions)
    rows = np.arange(b)
    err = q[rows, actions] - targets
    loss = float(np.mean(err * err))
    d_out = np.zeros_like(q)
    d_out[rows, actions] = 2.0 * err / b
    if alpha is not None:
        qmax = q.max(axis=1, keepdims=True)
        ex = np.exp(q - qmax)
        lse = np.log(ex.sum(axis=1)) + qmax[:, 0]
        penalty = float(np.mean(lse - q[rows, actions]))
        loss = loss + alpha * penalty
        soft = ex / ex.sum(axis=1, keepdims=True)
        d_pen = soft
        d_pen[rows, actions] -= 1.0
        d_out = d_out + (alpha / b) * d_pen
    return qcore.backward(params, acts, d_out), loss


def cql_loss(params: dict, states, actions, targets, alpha: float) -> float:
    q = qcore.forward(params, states)
    rows = np.arange(len(actions))
    err = q[rows, actions] - targets
    qmax = q.max(axis=1)
    lse = np.log(np.exp(q - qmax[:, None]).sum(axis=1)) + qmax
    return float(np.mean(err * err) + alpha * np.mean(lse - q[rows, actions]))


def train_deep(ts: TransitionSet, algo: str, h: Hyper = Hyper(), kind: str = "cxsofa",
               score_config: ScoreConfig | None = None) -> TrainRun:
    """Minibatch TD regression with a periodically synced target network."""
    if algo not in DEEP_ALGOS:
        raise ValidationError(f"algo must be one of {DEEP_ALGOS}, got {algo!r}")
    if ts.mode != "vector":
        raise ValidationError("deep learners need 6-dim vector states")
    n = len(ts)
    if n == 0:
        raise DataError("empty transition dataset")
    rng = np.random.default_rng(h.seed)
    params = qcore.init_params(h.seed, h.hidden)
    target = qcore.copy_params(params)
    opt = qcore.OptimizerState(lr=h.lr)
    done = ts.done.astype(np.float64)
    alpha = h.cql_alpha if algo == "cql" else None
    behavior = BehaviorModel.fit(ts.s, ts.a) if algo == "bcq" else None
    if behavior is not None:
        mask_all, n_empty = bcq_mask(behavior.probs(ts.s_next), h.bcq_threshold)
        if n_empty:
            warnings.warn(f"BCQ behavior model has no mass for {n_empty} next states; "
                          "falling back to the full action set there", RuntimeWarning, stacklevel=2)
    run = TrainRun([])
    digest = hashlib.sha256()
    steps = 0
    for epoch in range(1, h.epochs + 1):
        order = rng.permutation(n)
        for lo in range(0, n, h.batch_size):
            idx = order[lo:lo + h.batch_size]
            q_next_t = qcore.forward(target, ts.s_next[idx])
            q_next_o = qcore.forward(params, ts.s_next[idx]) if algo in ("ddqn", "bcq") else None
            y = td_targets(algo, ts.r[idx], done[idx], q_next_t, q_next_o,
                           mask_all[idx] if behavior is not None else None, h.gamma)
            digest.update(y.tobytes())
            grads, loss = deep_loss_grad(params, ts.s[idx], ts.a[idx], y, alpha)
            qcore.step(params, grads, opt)
            run.losses.append(loss)
            steps += 1
            if steps % h.sync_every == 0:
                target = qcore.copy_params(params)
        if epoch % h.checkpoint_every == 0 or epoch == h.epochs:
            run.checkpoints.append(Checkpoint(epoch, algo, kind, qcore.copy_params(params), score_config))
    run.targets_digest = digest.hexdigest()
    return run


def train(ts: TransitionSet, algo: str, h: Hyper = Hyper(), kind: str = "cxsofa",
          score_config: ScoreConfig | None = None) -> TrainRun:
    if algo == "ql":
        if kind != "sofa":
            raise ValidationError("tabular Q-learning is defined for the discrete SOFA reward only")
        return train_ql(ts, h, kind)
    return train_deep(ts, algo, h, kind, score_config)
