"""Episode data model and the canonical JSON-lines cohort file."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from ..actions import bin_action
from ..errors import DataError
from ..scoring import VITAL_FIELDS, VitalSigns, validate_vitals, vitals_matrix

FORMAT_VERSION = 1


@dataclass(frozen=True)
class Step:
    window: int
    vitals: VitalSigns
    dose: float
    action: int
    terminal: bool = False
    died_at_end: bool = False


@dataclass
class Episode:
    episode_id: str
    patient_id: str
    steps: list[Step]
    died: bool = False
    los_days: float = 0.0

    @property
    def outcome(self) -> str:
        return "died" if self.died else "survived"

    def __len__(self) -> int:
        return len(self.steps)

    def vitals_matrix(self) -> np.ndarray:
        return vitals_matrix([s.vitals for s in self.steps], validate=False)

    def actions(self) -> np.ndarray:
        return np.array([s.action for s in self.steps], dtype=np.int64)


@dataclass
class Cohort:
    episodes: list[Episode]
    provenance: str = "ingested"
    seed: int | None = None
    meta: dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.episodes)

    def __iter__(self):
        return iter(self.episodes)

    def patient_ids(self) -> list[str]:
        return sorted({ep.patient_id for ep in self.episodes})

    def subset(self, episodes: Iterable[Episode]) -> "Cohort":
        return Cohort(list(episodes), self.provenance, self.seed, dict(self.meta))


def make_steps(windows, vitals, doses, died: bool) -> list[Step]:
    n = len(windows)
    return [
        Step(
            window=int(windows[i]),
            vitals=vitals[i],
            dose=float(doses[i]),
            action=bin_action(doses[i]),
            terminal=i == n - 1,
            died_at_end=died and i == n - 1,
        )
        for i in range(n)
    ]


def validate_episode(ep: Episode) -> None:
    """Raise DataError if an episode is not well formed."""
    n = len(ep.steps)
    if n < 2:
        raise DataError(f"episode {ep.episode_id}: needs at least 2 steps, has {n}")
    terminals = [i for i, s in enumerate(ep.steps) if s.terminal]
    if terminals != [n - 1]:
        raise DataError(f"episode {ep.episode_id}: exactly the last step must be terminal")
    for s in ep.steps:
        if s.died_at_end and not s.terminal:
            raise DataError(f"episode {ep.episode_id}: died_at_end on a non-terminal step")
        if s.action != bin_action(s.dose):
            raise DataError(f"episode {ep.episode_id}: action {s.action} inconsistent with dose {s.dose}")
        validate_vitals(s.vitals)
    if ep.steps[-1].died_at_end != ep.died:
        raise DataError(f"episode {ep.episode_id}: outcome and terminal death flag disagree")
    windows = [s.window for s in ep.steps]
    if any(b <= a for a, b in zip(windows, windows[1:])):
        raise DataError(f"episode {ep.episode_id}: window indices must increase")


def validate_cohort(cohort: Cohort) -> None:
    if not cohort.episodes:
        raise DataError("cohort is empty")
    ids = [ep.episode_id for ep in cohort.episodes]
    if len(set(ids)) != len(ids):
        raise DataError("episode ids must be unique within a cohort")
    for ep in cohort.episodes:
        validate_episode(ep)


# -- serialization -------------------------------------------------------------

def episode_to_dict(ep: Episode) -> dict[str, Any]:
    return {
        "format_version": FORMAT_VERSION,
        "record": "episode",
        "episode_id": ep.episode_id,
        "patient_id": ep.patient_id,
        "outcome": ep.outcome,
        "los_days": ep.los_days,
        "steps": [
            {
                "window": s.window,
                "vitals": s.vitals.as_dict(),
                "dose": s.dose,
                "action": s.action,
                "terminal": s.terminal,
                "died_at_end": s.died_at_end,
            }
            for s in ep.steps
        ],
    }


def episode_from_dict(d: dict[str, Any]) -> Episode:
    steps = [
        Step(
            window=int(s["window"]),
            vitals=VitalSigns(**{k: float(s["vitals"][k]) for k in VITAL_FIELDS}),
            dose=float(s["dose"]),
            action=int(s["action"]),
            terminal=bool(s["terminal"]),
            died_at_end=bool(s["died_at_end"]),
        )
        for s in d["steps"]
    ]
    return Episode(
        episode_id=str(d["episode_id"]),
        patient_id=str(d["patient_id"]),
        steps=steps,
        died=d["outcome"] == "died",
        los_days=float(d["los_days"]),
    )


def write_cohort(cohort: Cohort, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "format_version": FORMAT_VERSION,
        "record": "cohort",
        "provenance": cohort.provenance,
        "seed": cohort.seed,
        "n_episodes": len(cohort.episodes),
        "meta": cohort.meta,
    }
    with path.open("w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for ep in cohort.episodes:
            fh.write(json.dumps(episode_to_dict(ep), sort_keys=True) + "\n")


def read_cohort(path: str | Path, validate: bool = True) -> Cohort:
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read cohort file {path}: {exc}") from None
    if not lines:
        raise DataError(f"cohort file {path} is empty")
    header: dict[str, Any] = {}
    episodes = []
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: invalid JSON ({exc})") from None
        if d.get("format_version") != FORMAT_VERSION:
            raise DataError(f"{path}:{lineno}: unsupported format_version {d.get('format_version')!r}")
        if d.get("record") == "cohort":
            header = d
        else:
            try:
                episodes.append(episode_from_dict(d))
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: malformed episode ({exc})") from None
    cohort = Cohort(
        episodes,
        provenance=header.get("provenance", "ingested"),
        seed=header.get("seed"),
        meta=header.get("meta", {}),
    )
    if validate:
        validate_cohort(cohort)
    return cohort
