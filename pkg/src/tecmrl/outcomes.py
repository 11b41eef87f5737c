"""Follower matching and outcome comparison between AI-strategy followers and others."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .assess import QFunction, episode_sims
from .errors import ValidationError
from .stats import TestResult, two_proportion_z, welch_t
from .trajectory.model import Cohort, Episode

ALPHA = 0.05
TAU_SWEEP = (0.5, 0.6, 0.65, 0.7, 0.75, 0.8, 0.9)
CSV_COLUMNS = ("model", "n_followers", "MoR", "AIHS", "improvement_MoR", "improvement_AIHS",
               "p_MoR", "p_AIHS", "tau", "p_MoR_z", "sig_MoR", "sig_AIHS")


@dataclass
class FollowerSplit:
    followers: list[Episode]
    non_followers: list[Episode]
    tau: float
    policy_id: str = ""
    match_rates: dict[str, float] = field(default_factory=dict)


def match_followers(cohort: Cohort | Iterable[Episode], q: QFunction, tau: float, policy_id: str = "") -> FollowerSplit:
    """An episode follows the policy when its exact-match fraction is strictly above ``tau``."""
    if not 0 <= tau <= 1:
        raise ValidationError(f"tau must lie in [0, 1], got {tau}")
    episodes = list(cohort)
    sims = episode_sims(episodes, q)
    rates = sims.n_match / np.maximum(sims.n, 1)
    split = FollowerSplit([], [], tau, policy_id)
    for ep, rate in zip(episodes, rates):
        split.match_rates[ep.episode_id] = float(rate)
        (split.followers if rate > tau else split.non_followers).append(ep)
    return split


def improvement(baseline: float, value: float) -> float | None:
    """Relative reduction against the baseline; None when the baseline is zero."""
    if baseline == 0:
        return None
    return (baseline - value) / baseline


@dataclass
class OutcomeRow:
    label: str
    n: int
    mortality: float | None
    stay: float | None
    improvement_mortality: float | None = None
    improvement_stay: float | None = None
    p_mortality: float | None = None
    p_stay: float | None = None
    p_mortality_z: float | None = None
    tau: float | None = None
    flags: tuple[str, ...] = ()

    @property
    def significant_mortality(self) -> bool:
        return self.p_mortality is not None and self.p_mortality < ALPHA

    @property
    def significant_stay(self) -> bool:
        return self.p_stay is not None and self.p_stay < ALPHA


def _deaths(eps: list[Episode]) -> np.ndarray:
    return np.array([1.0 if ep.died else 0.0 for ep in eps])


def _stays(eps: list[Episode]) -> np.ndarray:
    return np.array([ep.los_days for ep in eps], dtype=np.float64)


def _p(res: TestResult) -> float | None:
    return None if res.degenerate else res.p


def baseline_row(episodes: list[Episode], label: str = "PAT", tau: float | None = None) -> OutcomeRow:
    if not episodes:
        return OutcomeRow(label, 0, None, None, tau=tau, flags=("empty",))
    return OutcomeRow(label, len(episodes), float(_deaths(episodes).mean()), float(_stays(episodes).mean()),
                      0.0, 0.0, tau=tau)


def group_stats(split: FollowerSplit, baseline: OutcomeRow | None = None,
                label: str = "") -> tuple[OutcomeRow, OutcomeRow]:
    """Rows for followers and non-followers; p-values compare the two groups."""
    base = baseline or baseline_row(split.followers + split.non_followers)
    label = label or split.policy_id or "policy"
    pm = ps = pz = None
    flags: list[str] = []
    f, nf = split.followers, split.non_followers
    if f and nf:
        mort = welch_t(_deaths(f), _deaths(nf))
        stay = welch_t(_stays(f), _stays(nf))
        pm, ps = _p(mort), _p(stay)
        pz = _p(two_proportion_z(int(_deaths(f).sum()), len(f), int(_deaths(nf).sum()), len(nf)))
        if mort.degenerate:
            flags.append("mortality_test_degenerate")
        if stay.degenerate:
            flags.append("stay_test_degenerate")
    else:
        flags.append("p_values_omitted")
    rows = []
    for group, name in ((f, label), (nf, f"{label} (non-followers)")):
        if not group:
            rows.append(OutcomeRow(name, 0, None, None, tau=split.tau, flags=tuple(flags) + ("empty_group",)))
            continue
        mor = float(_deaths(group).mean())
        stay_mean = float(_stays(group).mean())
        rows.append(OutcomeRow(
            name, len(group), mor, stay_mean,
            improvement(base.mortality, mor) if base.mortality is not None else None,
            improvement(base.stay, stay_mean) if base.stay is not None else None,
            pm, ps, pz, split.tau, tuple(flags),
        ))
    return rows[0], rows[1]


@dataclass
class OutcomeTable:
    tau: float
    rows: list[OutcomeRow]

    def to_dict(self) -> dict:
        return {"tau": self.tau, "rows": [asdict(r) | {"flags": list(r.flags)} for r in self.rows]}

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for r in self.rows:
                w.writerow([
                    r.label, r.n, _fmt(r.mortality), _fmt(r.stay), _fmt(r.improvement_mortality),
                    _fmt(r.improvement_stay), _fmt(r.p_mortality), _fmt(r.p_stay), r.tau,
                    _fmt(r.p_mortality_z), "*" if r.significant_mortality else "",
                    "*" if r.significant_stay else "",
                ])

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(float(v))


def outcome_report(cohort: Cohort | Iterable[Episode], models: Mapping[str, QFunction], tau: float) -> OutcomeTable:
    """Physician baseline row, then one follower row per model."""
    episodes = list(cohort)
    base = baseline_row(episodes, tau=tau)
    rows = [base]
    for name, q in models.items():
        split = match_followers(episodes, q, tau, name)
        rows.append(group_stats(split, base, name)[0])
    return OutcomeTable(tau, rows)
