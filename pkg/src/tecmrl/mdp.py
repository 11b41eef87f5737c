"""Episode encoding into states, actions, rewards and flat transition datasets."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .actions import N_ACTIONS, bin_action, bin_actions
from .errors import ValidationError
from .scoring import ScoreConfig, VitalSigns, builtin_config, default_config, validate_vitals
from .trajectory.model import Cohort, Episode

N_TABULAR_STATES = 25
MODES = ("tabular", "vector")
KINDS = ("sofa", "cxsofa")

__all__ = [
    "N_ACTIONS", "N_TABULAR_STATES", "RewardSpec", "TransitionSet", "bin_action", "bin_actions",
    "encode_state", "encode_states", "episode_scores", "episode_rewards", "reward", "build_transitions",
]


@dataclass(frozen=True)
class RewardSpec:
    kind: str = "cxsofa"
    penalty: float = -15.0
    gamma: float = 0.99

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"reward kind must be one of {KINDS}")
        if self.penalty > 0:
            raise ValidationError("death penalty must be <= 0")
        if not 0 < self.gamma <= 1:
            raise ValidationError("gamma must lie in (0, 1]")


def _check(mode: str, kind: str) -> None:
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}, got {mode!r}")
    if kind not in KINDS:
        raise ValidationError(f"kind must be one of {KINDS}, got {kind!r}")


def _config_for(kind: str, cfg: ScoreConfig | None) -> ScoreConfig:
    return cfg if cfg is not None else default_config(kind)


def encode_states(x: np.ndarray, mode: str, kind: str, cfg: ScoreConfig | None = None) -> np.ndarray:
    """Encode a (B, 12) vitals matrix: (B,) SOFA totals or (B, 6) component scores."""
    _check(mode, kind)
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if mode == "tabular":
        totals = builtin_config("sofa-discrete").totals(x)
        return np.rint(totals).astype(np.int64)
    return _config_for(kind, cfg).components_matrix(x)


def encode_state(vitals: VitalSigns, mode: str, kind: str, cfg: ScoreConfig | None = None):
    validate_vitals(vitals)
    enc = encode_states(vitals.as_array()[None, :], mode, kind, cfg)[0]
    return int(enc) if mode == "tabular" else enc


def reward(score_t: float, score_next: float, died: bool, spec: RewardSpec = RewardSpec()) -> float:
    """Score decrease between consecutive steps; the death penalty replaces it."""
    if died:
        return spec.penalty
    return score_t - score_next


def episode_scores(ep: Episode, kind: str, cfg: ScoreConfig | None = None) -> np.ndarray:
    x = ep.vitals_matrix()
    if kind == "sofa":
        return builtin_config("sofa-discrete").totals(x) if cfg is None else cfg.totals(x)
    return _config_for(kind, cfg).totals(x)


def episode_rewards(ep: Episode, kind: str, cfg: ScoreConfig | None = None, penalty: float = -15.0) -> np.ndarray:
    scores = episode_scores(ep, kind, cfg)
    r = scores[:-1] - scores[1:]
    if ep.died:
        r[-1] = penalty
    return r


@dataclass
class TransitionSet:
    mode: str
    kind: str
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    done: np.ndarray
    died: np.ndarray
    episode: np.ndarray

    def __len__(self) -> int:
        return len(self.a)

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.s, self.a, self.r, self.s_next, self.done, self.died, self.episode):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()

    def to_jsonl(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for i in range(len(self)):
                s = self.s[i].tolist()
                sn = self.s_next[i].tolist()
                fh.write(json.dumps({
                    "episode": int(self.episode[i]), "s": s, "a": int(self.a[i]), "r": float(self.r[i]),
                    "s_next": sn, "done": bool(self.done[i]), "died": bool(self.died[i]),
                }) + "\n")


def build_transitions(cohort: Cohort, mode: str, kind: str, spec: RewardSpec | None = None,
                      cfg: ScoreConfig | None = None) -> TransitionSet:
    """One transition per consecutive step pair, in episode then step order."""
    _check(mode, kind)
    spec = spec or RewardSpec(kind=kind)
    parts = {k: [] for k in ("s", "a", "r", "s_next", "done", "died", "episode")}
    for e, ep in enumerate(cohort.episodes):
        n = len(ep.steps)
        states = encode_states(ep.vitals_matrix(), mode, kind, cfg)
        r = episode_rewards(ep, kind, cfg, spec.penalty)
        done = np.zeros(n - 1, dtype=bool)
        done[-1] = True
        died = np.zeros(n - 1, dtype=bool)
        died[-1] = ep.died
        parts["s"].append(states[:-1])
        parts["s_next"].append(states[1:])
        parts["a"].append(ep.actions()[:-1])
        parts["r"].append(r)
        parts["done"].append(done)
        parts["died"].append(died)
        parts["episode"].append(np.full(n - 1, e, dtype=np.int64))
    if not parts["a"]:
        raise ValidationError("cohort has no episodes")
    cat = {k: np.concatenate(v) for k, v in parts.items()}
    return TransitionSet(mode=mode, kind=kind, **cat)
