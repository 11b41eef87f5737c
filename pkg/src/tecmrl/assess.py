"""TECM assessment: good/bad episode split, the four-cell matrix, confidence,
bias, the pairwise selection principle, and patience-based checkpoint selection."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Protocol

import numpy as np

from ._backend import as_index, kernels as _kernels
from .errors import DataError, ValidationError
from .mdp import episode_rewards
from .scoring import ScoreConfig
from .trajectory.model import Cohort, Episode

SIGMA_FLOOR = 1e-9
PREFERENCES = ("aggressive", "conservative")


class QFunction(Protocol):
    def action_values(self, x: np.ndarray) -> np.ndarray: ...


@dataclass
class Partition:
    good: list[Episode]
    bad: list[Episode]
    tau: float
    rates: dict[str, float] = field(default_factory=dict)


def effective_rate(rewards) -> float:
    """Fraction of steps with a non-negative reward."""
    r = np.asarray(rewards, dtype=np.float64)
    return float(np.count_nonzero(r >= 0)) / len(r)


def classify_episodes(cohort: Cohort | Iterable[Episode], kind: str, tau: float,
                      cfg: ScoreConfig | None = None, penalty: float = -15.0) -> Partition:
    if not 0 <= tau <= 1:
        raise ValidationError(f"tau must lie in [0, 1], got {tau}")
    good, bad, rates = [], [], {}
    for ep in cohort:
        rate = effective_rate(episode_rewards(ep, kind, cfg, penalty))
        rates[ep.episode_id] = rate
        (good if rate >= tau else bad).append(ep)
    return Partition(good, bad, tau, rates)


def similarity(a: int, a_ref: int) -> float:
    return 1.0 / (1.0 + 0.25 * abs(int(a) - int(a_ref)))


@dataclass
class EpisodeSims:
    """Per-episode similarity statistics over decision steps (all but the terminal)."""

    n: np.ndarray
    mean_o: np.ndarray
    mean_w: np.ndarray
    n_og: np.ndarray
    n_wb: np.ndarray
    n_match: np.ndarray


def episode_sims(episodes: list[Episode], q: QFunction) -> EpisodeSims:
    if not episodes:
        z = np.zeros(0)
        zi = np.zeros(0, dtype=np.int64)
        return EpisodeSims(zi, z, z, zi, zi, zi)
    xs = [ep.vitals_matrix()[:-1] for ep in episodes]
    lengths = np.array([len(x) for x in xs], dtype=np.int64)
    values = np.asarray(q.action_values(np.concatenate(xs)))
    best = as_index(np.argmax(values, axis=1))
    worst = as_index(np.argmin(values, axis=1))
    actions = as_index(np.concatenate([ep.actions()[:-1] for ep in episodes]))
    offsets = as_index(np.concatenate([[0], np.cumsum(lengths)]))
    sum_o, sum_w, n_og, n_wb, n_match = _kernels.episode_similarity(actions, best, worst, offsets)
    return EpisodeSims(lengths, np.asarray(sum_o) / lengths, np.asarray(sum_w) / lengths,
                       np.asarray(n_og), np.asarray(n_wb), np.asarray(n_match))


@dataclass
class Tecm:
    og: float
    wg: float
    ob: float
    wb: float
    n_opt_good: int
    n_wrt_good: int
    n_opt_bad: int
    n_wrt_bad: int
    tau: float
    empty: tuple[str, ...] = ()


def _cell(mean_sim: np.ndarray, rate: np.ndarray, pick: np.ndarray) -> float:
    # empty sub-pool: cell is 0 and the caller records the flag
    if not pick.any():
        return 0.0
    return float(np.mean(mean_sim[pick]) * np.mean(rate[pick]))


def tecm(partition: Partition, q: QFunction, tau: float | None = None) -> Tecm:
    """The four TECM cells for one Q-function.

    ``tau`` is the pool-assignment threshold; it defaults to the partition's.
    """
    tau = partition.tau if tau is None else tau
    g = episode_sims(partition.good, q)
    b = episode_sims(partition.bad, q)
    rho_og = g.n_og / np.maximum(g.n, 1)
    rho_wg = 1.0 - rho_og
    opt_g = rho_og > tau
    rho_wb = b.n_wb / np.maximum(b.n, 1)
    rho_ob = 1.0 - rho_wb
    wrt_b = rho_wb > tau
    empty = []
    for name, pick in (("OG", opt_g), ("WG", ~opt_g), ("OB", ~wrt_b), ("WB", wrt_b)):
        if not pick.any():
            empty.append(name)
    return Tecm(
        og=_cell(g.mean_o, rho_og, opt_g),
        wg=_cell(g.mean_w, rho_wg, ~opt_g),
        ob=_cell(b.mean_o, rho_ob, ~wrt_b),
        wb=_cell(b.mean_w, rho_wb, wrt_b),
        n_opt_good=int(opt_g.sum()),
        n_wrt_good=int((~opt_g).sum()),
        n_opt_bad=int((~wrt_b).sum()),
        n_wrt_bad=int(wrt_b.sum()),
        tau=tau,
        empty=tuple(empty),
    )


def confidence(t: Tecm, floor: float = SIGMA_FLOOR) -> float:
    """Comprehensive confidence; +inf when OG or WG is below ``floor``."""
    if t.og < floor or t.wg < floor or t.og + t.wb <= 0:
        return math.inf
    return (2.0 * t.og * t.wb / (t.og + t.wb)) * ((t.og + t.wg) / (2.0 * t.og * t.wg))


def bias(t: Tecm) -> float:
    """Comprehensive bias; positive leans aggressive, negative conservative."""
    return (t.og - t.wg) - (t.wb - t.ob)


@dataclass
class AssessmentReport:
    tecm: Tecm
    sigma: float
    mu: float
    o_gap: float
    w_gap: float
    checkpoint: str = ""
    epoch: int | None = None
    sigma_degenerate: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tecm"]["empty"] = list(self.tecm.empty)
        if math.isinf(self.sigma):
            d["sigma"] = "inf"
        return d


def report_from_tecm(t: Tecm, checkpoint: str = "", epoch: int | None = None) -> AssessmentReport:
    sigma = confidence(t)
    return AssessmentReport(
        tecm=t,
        sigma=sigma,
        mu=bias(t),
        o_gap=t.og - t.ob,
        w_gap=t.wb - t.wg,
        checkpoint=checkpoint,
        epoch=epoch,
        sigma_degenerate=math.isinf(sigma),
    )


def assess(partition: Partition, q: QFunction, tau: float | None = None,
           checkpoint: str = "", epoch: int | None = None) -> AssessmentReport:
    return report_from_tecm(tecm(partition, q, tau), checkpoint, epoch)


def compare(r1: AssessmentReport, r2: AssessmentReport, pref: str = "aggressive") -> str:
    """Return ``"first"`` or ``"second"``, whichever report wins.

    Dominance in both gaps decides first; otherwise the higher confidence
    wins, or under a conservative preference the lower one does.
    """
    if pref not in PREFERENCES:
        raise ValidationError(f"preference must be one of {PREFERENCES}")
    if r1.o_gap >= r2.o_gap and r1.w_gap >= r2.w_gap:
        return "first"
    if r2.o_gap >= r1.o_gap and r2.w_gap >= r1.w_gap:
        return "second"
    if r1.sigma == r2.sigma:
        return "first"
    higher = "first" if r1.sigma > r2.sigma else "second"
    if pref == "conservative":
        return "second" if higher == "first" else "first"
    return higher


@dataclass(frozen=True)
class SelectionConfig:
    tau: float = 0.7
    eta: int = 50
    preference: str = "aggressive"
    tau_pool: float | None = None

    def __post_init__(self):
        if not 0.5 <= self.tau <= 1:
            raise ValidationError(f"tau must lie in [0.5, 1], got {self.tau}")
        if int(self.eta) != self.eta or self.eta < 1:
            raise ValidationError(f"eta must be an integer >= 1, got {self.eta}")
        if self.preference not in PREFERENCES:
            raise ValidationError(f"preference must be one of {PREFERENCES}")
        if self.tau_pool is not None and not 0 <= self.tau_pool <= 1:
            raise ValidationError("tau_pool must lie in [0, 1]")


@dataclass
class Selection:
    best: object
    best_report: AssessmentReport
    reports: list[AssessmentReport]
    stopped_early: bool


def _label(ck, i: int) -> tuple[str, int]:
    epoch = getattr(ck, "epoch", i)
    tag = getattr(ck, "tag", "checkpoint")
    return f"{tag}@{epoch}", epoch


def select_checkpoint(checkpoints: Iterable, partition: Partition, cfg: SelectionConfig = SelectionConfig(),
                      evaluate=None) -> Selection:
    """Fold over checkpoints in epoch order, keeping an incumbent.

    Stops once the incumbent has survived ``cfg.eta`` consecutive challenges.
    ``evaluate`` maps a checkpoint to its report and defaults to TECM on
    ``partition``.
    """
    if evaluate is None:
        def evaluate(ck, i):
            name, epoch = _label(ck, i)
            return assess(partition, ck, cfg.tau_pool, name, epoch)
    it = iter(checkpoints)
    try:
        first = next(it)
    except StopIteration:
        raise DataError("no checkpoints to select from") from None
    best, best_report = first, evaluate(first, 0)
    reports = [best_report]
    misses = 0
    for i, ck in enumerate(it, 1):
        rep = evaluate(ck, i)
        reports.append(rep)
        if compare(best_report, rep, cfg.preference) == "second":
            best, best_report, misses = ck, rep, 0
        else:
            misses += 1
            if misses >= cfg.eta:
                return Selection(best, best_report, reports, True)
    return Selection(best, best_report, reports, False)


def pick_winner(reports: dict[str, AssessmentReport], pref: str = "aggressive") -> str:
    """Sequential principle-based pick across models, in the given order."""
    if not reports:
        raise DataError("no reports to compare")
    names = list(reports)
    winner = names[0]
    for name in names[1:]:
        if compare(reports[winner], reports[name], pref) == "second":
            winner = name
    return winner
