"""Windowing, imputation, exclusion, segmentation and patient-level splitting."""
from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from ..errors import ValidationError
from ..scoring import VITAL_FIELDS, VitalSigns
from .ingest import RawRecord
from .model import Cohort, Episode, make_steps

WINDOW_MIN = 240.0
MORTALITY_HORIZON_MIN = 90 * 1440.0
DEFAULT_MAX_LEN = 60

MISSING, OBSERVED, INTERPOLATED, CARRIED = 0, 1, 2, 3
GRID_FIELDS = VITAL_FIELDS + ("dose",)


@dataclass
class PatientGrid:
    """One slot per window; NaN marks a missing value."""

    patient_id: str
    onset_time: float
    discharge_time: float
    death_time: float | None
    values: dict[str, np.ndarray]
    source: dict[str, np.ndarray]
    window: float = WINDOW_MIN

    @property
    def n_windows(self) -> int:
        return len(self.values["dose"])


@dataclass
class WindowResult:
    grids: list[PatientGrid]
    excluded: dict[str, str] = field(default_factory=dict)


def windowize(records: Iterable[RawRecord], window: float = WINDOW_MIN) -> WindowResult:
    by_patient: dict[str, list[RawRecord]] = defaultdict(list)
    for rec in records:
        by_patient[rec.patient_id].append(rec)
    result = WindowResult([])
    for pid in sorted(by_patient):
        recs = sorted(by_patient[pid], key=lambda r: r.time)
        first = recs[0]
        onset = next((r.onset_time for r in recs if r.onset_time is not None), first.time)
        death = next((r.death_time for r in recs if r.death_time is not None), None)
        discharge = first.discharge_time
        end = min(discharge, death) if death is not None else discharge
        n = math.ceil((end - onset) / window)
        if n <= 0:
            result.excluded[pid] = "no_windows"
            continue
        values = {f: np.full(n, np.nan) for f in GRID_FIELDS}
        for rec in recs:
            if rec.time < onset or rec.time > end:
                continue
            w = min(int((rec.time - onset) // window), n - 1)
            # later measurements in the same window overwrite earlier ones
            for name, value in rec.vitals.items():
                values[name][w] = value
            if rec.dose is not None:
                values["dose"][w] = rec.dose
        observed = np.zeros(n, dtype=bool)
        for f in GRID_FIELDS:
            observed |= ~np.isnan(values[f])
        if observed.sum() < 2:
            result.excluded[pid] = "too_few_windows"
            continue
        source = {f: np.where(np.isnan(values[f]), MISSING, OBSERVED).astype(np.int8) for f in GRID_FIELDS}
        result.grids.append(PatientGrid(pid, onset, discharge, death, values, source, window))
    return result


def impute_series(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Interpolate interior gaps, carry trailing gaps forward, leave leading gaps."""
    out = values.astype(np.float64).copy()
    source = np.where(np.isnan(out), MISSING, OBSERVED).astype(np.int8)
    idx = np.flatnonzero(~np.isnan(out))
    if idx.size == 0:
        return out, source
    gaps = np.flatnonzero(np.isnan(out))
    interior = gaps[(gaps > idx[0]) & (gaps < idx[-1])]
    out[interior] = np.interp(interior, idx, out[idx])
    source[interior] = INTERPOLATED
    trailing = gaps[gaps > idx[-1]]
    out[trailing] = out[idx[-1]]
    source[trailing] = CARRIED
    return out, source


def impute(grid: PatientGrid) -> PatientGrid:
    values = dict(grid.values)
    source = dict(grid.source)
    for f in VITAL_FIELDS:
        values[f], source[f] = impute_series(grid.values[f])
    # dose is never imputed: a window without documented dosage is dropped later
    return replace(grid, values=values, source=source)


@dataclass
class AssembleResult:
    episodes: list[Episode]
    counts: Counter


def exclude_and_assemble(grid: PatientGrid) -> AssembleResult:
    n = grid.n_windows
    complete = np.ones(n, dtype=bool)
    for f in GRID_FIELDS:
        complete &= ~np.isnan(grid.values[f])
    counts = Counter(windows_total=n, windows_dropped=int((~complete).sum()))
    runs: list[tuple[int, int]] = []
    start = None
    for w in range(n + 1):
        if w < n and complete[w]:
            if start is None:
                start = w
        elif start is not None:
            runs.append((start, w))
            start = None
    kept = [(a, b) for a, b in runs if b - a >= 2]
    counts["runs_too_short"] = len(runs) - len(kept)
    last_end = grid.onset_time + n * grid.window
    died = grid.death_time is not None and grid.death_time - last_end <= MORTALITY_HORIZON_MIN
    stay_end = min(grid.discharge_time, grid.death_time) if grid.death_time is not None else grid.discharge_time
    # timestamps count minutes from admission, so this is the in-hospital stay
    los_days = stay_end / 1440.0
    episodes = []
    for k, (a, b) in enumerate(kept):
        final = k == len(kept) - 1
        windows = list(range(a, b))
        vitals = [VitalSigns(**{f: float(grid.values[f][w]) for f in VITAL_FIELDS}) for w in windows]
        doses = [float(grid.values["dose"][w]) for w in windows]
        ep_died = died and final
        episodes.append(
            Episode(
                episode_id=grid.patient_id if len(kept) == 1 else f"{grid.patient_id}#{k}",
                patient_id=grid.patient_id,
                steps=make_steps(windows, vitals, doses, ep_died),
                died=ep_died,
                los_days=los_days,
            )
        )
    return AssembleResult(episodes, counts)


def segment_long(ep: Episode, max_len: int = DEFAULT_MAX_LEN) -> list[Episode]:
    """Split an episode into consecutive chunks of at most ``max_len`` steps.

    Only the final chunk keeps the death flag. A one-step remainder would
    break the two-step minimum, so the chunk before it gives up one step.
    """
    if max_len < 2:
        raise ValidationError(f"max_len must be >= 2, got {max_len}")
    n = len(ep.steps)
    if n <= max_len:
        return [ep]
    bounds = list(range(0, n, max_len)) + [n]
    if bounds[-1] - bounds[-2] == 1:
        bounds[-2] -= 1
    chunks = []
    n_chunks = len(bounds) - 1
    for k in range(n_chunks):
        part = ep.steps[bounds[k]:bounds[k + 1]]
        final = k == n_chunks - 1
        died = ep.died and final
        steps = [
            replace(s, terminal=i == len(part) - 1, died_at_end=died and i == len(part) - 1)
            for i, s in enumerate(part)
        ]
        chunks.append(Episode(f"{ep.episode_id}/{k}", ep.patient_id, steps, died, ep.los_days))
    return chunks


def build_cohort(records: Iterable[RawRecord], max_len: int = DEFAULT_MAX_LEN,
                 window: float = WINDOW_MIN) -> tuple[Cohort, Counter]:
    """Full ingest pipeline: windowize, impute, exclude, assemble, segment."""
    wr = windowize(records, window)
    counts = Counter(f"excluded_{reason}" for reason in wr.excluded.values())
    episodes: list[Episode] = []
    for grid in wr.grids:
        res = exclude_and_assemble(impute(grid))
        counts.update(res.counts)
        if not res.episodes:
            counts["excluded_no_complete_run"] += 1
        for ep in res.episodes:
            episodes.extend(segment_long(ep, max_len))
    return Cohort(episodes, provenance="ingested"), counts


def split(cohort: Cohort, train_frac: float = 0.8, seed: int = 0) -> tuple[Cohort, Cohort]:
    """Patient-level split; no patient appears on both sides."""
    patients = cohort.patient_ids()
    if len(patients) < 2:
        raise ValidationError("need at least 2 patients to split")
    if not 0 < train_frac < 1:
        raise ValidationError(f"train_frac must be in (0, 1), got {train_frac}")
    n_train = int(round(train_frac * len(patients)))
    if n_train == 0 or n_train == len(patients):
        raise ValidationError(f"train_frac {train_frac} leaves one side empty for {len(patients)} patients")
    order = np.random.default_rng(seed).permutation(len(patients))
    train_ids = {patients[i] for i in order[:n_train]}
    train = [ep for ep in cohort.episodes if ep.patient_id in train_ids]
    val = [ep for ep in cohort.episodes if ep.patient_id not in train_ids]
    return cohort.subset(train), cohort.subset(val)
