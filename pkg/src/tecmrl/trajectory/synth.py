"""Synthetic septic cohorts with a hidden, recoverable dosing policy.

Platelets follow a mean-reverting walk with a dose-dependent drift: the dose
bin chosen by the ground-truth policy raises platelets, other bins lower them
in proportion to their bin distance. Death hazard grows with coagulation
severity. Physicians follow the ground truth with a per-patient adherence and otherwise
tend to fall back on a habitual bin of their own.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..actions import N_ACTIONS
from ..errors import ValidationError
from ..scoring import VITAL_FIELDS, VitalSigns, builtin_config
from .model import Cohort, Episode, make_steps

_PLT = VITAL_FIELDS.index("platelets")
# dose range sampled within each action bin
_DOSE_RANGES = ((0.0, 0.0), (0.2, 1.38), (1.4, 1.88), (1.9, 3.5), (3.6, 6.0))


@dataclass(frozen=True)
class SynthParams:
    n_patients: int = 500
    mean_length: float = 12.0
    dose_response: float = 1.0
    mortality_rate: float = 0.25
    adherence_low: float = 0.3
    adherence_high: float = 0.95
    drift_gain: float = 10.0
    noise: float = 2.5
    habit_weight: float = 0.7

    def validate(self) -> None:
        if self.n_patients < 1:
            raise ValidationError("n_patients must be >= 1")
        if self.mean_length < 2:
            raise ValidationError("mean_length must be >= 2")
        if self.dose_response < 0:
            raise ValidationError("dose_response must be >= 0")
        for name in ("mortality_rate", "adherence_low", "adherence_high"):
            value = getattr(self, name)
            if not 0 <= value <= 1:
                raise ValidationError(f"{name} must lie in [0, 1], got {value}")
        if self.adherence_low > self.adherence_high:
            raise ValidationError("adherence_low must not exceed adherence_high")


@dataclass(frozen=True)
class GroundTruthPolicy:
    """Optimal bin as a step function of the platelet count.

    Exposes ``action_values`` like a learned Q-function (one-hot rows) so it
    can stand in wherever a policy is evaluated.
    """

    cuts: tuple[float, ...] = (35.0, 70.0, 105.0)

    def action_for_platelets(self, platelets):
        return np.searchsorted(np.asarray(self.cuts), np.asarray(platelets, dtype=float), side="right")

    def actions(self, x: np.ndarray) -> np.ndarray:
        return self.action_for_platelets(np.atleast_2d(x)[:, _PLT]).astype(np.int64)

    def action_values(self, x: np.ndarray) -> np.ndarray:
        acts = self.actions(x)
        out = np.zeros((len(acts), N_ACTIONS))
        out[np.arange(len(acts)), acts] = 1.0
        return out


def _baseline_vitals(rng) -> dict[str, float]:
    pf = float(rng.uniform(380, 520))
    return {
        "pf_ratio": pf,
        "pf_ratio_vent": pf,
        "bilirubin": float(rng.uniform(6, 30)),
        "mbp": float(rng.uniform(68, 95)),
        "dopamine": 0.0,
        "dobutamine": 0.0,
        "epinephrine": 0.0,
        "norepinephrine": 0.0,
        "gcs": float(rng.choice([13, 14, 15, 15, 15])),
        "creatinine": float(rng.uniform(55, 140)),
        "urine_output": float(rng.uniform(900, 2600)),
    }


def synth_cohort(params: SynthParams | None = None, seed: int = 0) -> Cohort:
    """Generate a cohort; identical ``params`` and ``seed`` give identical output."""
    params = params or SynthParams()
    params.validate()
    gt = GroundTruthPolicy()
    cx = builtin_config("cxsofa-paper")
    step_rate = 1.0 - (1.0 - params.mortality_rate) ** (1.0 / params.mean_length)
    episodes = []
    for idx in range(params.n_patients):
        rng = np.random.default_rng([seed, idx])
        base = _baseline_vitals(rng)
        plt_home = float(rng.uniform(20, 140))
        plt = float(np.clip(plt_home + rng.normal(0, 8), 8, 400))
        adherence = float(rng.uniform(params.adherence_low, params.adherence_high))
        habit = int(rng.integers(N_ACTIONS))
        planned = 2 + int(rng.poisson(params.mean_length - 2))
        vitals, doses, died = [], [], False
        cur = dict(base)
        for t in range(planned):
            cur["platelets"] = plt
            v = VitalSigns(**cur)
            vitals.append(v)
            best = int(gt.action_for_platelets(plt))
            if rng.random() < adherence:
                a = best
            elif habit != best and rng.random() < params.habit_weight:
                a = habit
            else:
                a = int(rng.choice([k for k in range(N_ACTIONS) if k != best]))
            lo, hi = _DOSE_RANGES[a]
            doses.append(float(rng.uniform(lo, hi)) if hi > 0 else 0.0)
            if t == planned - 1:
                break
            effect = 1.0 if a == best else -0.6 * abs(a - best)
            plt = plt + 0.15 * (plt_home - plt) + params.dose_response * params.drift_gain * effect
            plt = float(np.clip(plt + rng.normal(0, params.noise), 5, 400))
            cur = dict(cur)
            cur["bilirubin"] = float(np.clip(cur["bilirubin"] + rng.normal(0, 0.8), 2, 60))
            cur["pf_ratio"] = cur["pf_ratio_vent"] = float(np.clip(cur["pf_ratio"] + rng.normal(0, 3), 250, 600))
            if rng.random() < 0.05:
                cur["gcs"] = float(np.clip(cur["gcs"] + rng.choice([-1, 1]), 9, 15))
            f2 = cx.components[1].evaluate(np.array([[plt if i == _PLT else 0.0 for i in range(12)]]))[0]
            hazard = min(0.9, step_rate * np.exp(1.3 * (f2 - 1.5)))
            if rng.random() < hazard:
                cur["platelets"] = plt
                vitals.append(VitalSigns(**cur))
                doses.append(0.0)
                died = True
                break
        n = len(vitals)
        f2_end = cx.components[1].evaluate(np.array([vitals[-1].as_array()]))[0]
        extra = 0.0 if died else float(rng.gamma(2.0, 1.0 + 1.5 * f2_end))
        pid = f"S{idx:05d}"
        episodes.append(
            Episode(
                episode_id=pid,
                patient_id=pid,
                steps=make_steps(list(range(n)), vitals, doses, died),
                died=died,
                los_days=n * 4 / 24 + extra,
            )
        )
    meta = {"generator": "tecmrl.synth", "params": asdict(params), "ground_truth_cuts": list(gt.cuts)}
    return Cohort(episodes, provenance="synthetic", seed=seed, meta=meta)
