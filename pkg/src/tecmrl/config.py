"""Run configuration: every threshold and hyperparameter in one JSON document."""
from __future__ import annotations

import hashlib
import json
import os
import platform
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from ._backend import BACKEND
from .assess import SelectionConfig
from .errors import ValidationError
from .learners import ALGOS, Hyper
from .outcomes import TAU_SWEEP
from .trajectory.synth import SynthParams

KINDS = ("sofa", "cxsofa")
# the nine models: every algorithm under both rewards, except tabular QL under cxSOFA
MODELS = tuple(f"{k}-{a}" for a in ALGOS for k in KINDS if not (a == "ql" and k == "cxsofa"))
OUTPUT_ENV = "TECMRL_OUTPUT_ROOT"


@dataclass
class RunConfig:
    output_dir: str = "runs/default"
    cohort: str | None = None
    seed: int = 0
    synth: SynthParams = field(default_factory=SynthParams)
    score_configs: dict[str, str] = field(default_factory=lambda: {"sofa": "sofa-discrete", "cxsofa": "cxsofa-paper"})
    death_penalty: float = -15.0
    train_frac: float = 0.8
    max_len: int = 60
    models: list[str] = field(default_factory=lambda: list(MODELS))
    hyper: Hyper = field(default_factory=Hyper)
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    tau_sweep: list[float] = field(default_factory=lambda: list(TAU_SWEEP))
    jobs: int = 1

    def validate(self) -> "RunConfig":
        for model in self.models:
            if model not in MODELS:
                raise ValidationError(f"unknown model {model!r}; valid models: {', '.join(MODELS)}")
        if set(self.score_configs) - set(KINDS):
            raise ValidationError("score_configs keys must be 'sofa' and/or 'cxsofa'")
        if self.death_penalty > 0:
            raise ValidationError("death_penalty must be <= 0")
        if not 0 < self.train_frac < 1:
            raise ValidationError("train_frac must lie in (0, 1)")
        if self.max_len < 2:
            raise ValidationError("max_len must be >= 2")
        if self.jobs < 1:
            raise ValidationError("jobs must be >= 1")
        for tau in self.tau_sweep:
            if not 0 <= tau <= 1:
                raise ValidationError(f"tau sweep values must lie in [0, 1], got {tau}")
        self.synth.validate()
        return self

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["hyper"] = self.hyper.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RunConfig":
        d = dict(d)
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        try:
            if "synth" in d:
                d["synth"] = SynthParams(**d["synth"])
            if "hyper" in d:
                d["hyper"] = Hyper.from_dict(d["hyper"])
            if "selection" in d:
                d["selection"] = SelectionConfig(**d["selection"])
            cfg = cls(**d)
        except TypeError as exc:
            raise ValidationError(f"bad config: {exc}") from None
        return cfg.validate()

    @classmethod
    def load(cls, path: str | Path | None) -> "RunConfig":
        if path is None:
            return cls().validate()
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config {path} is not valid JSON: {exc}") from None
        except OSError as exc:
            raise ValidationError(f"cannot read config {path}: {exc}") from None

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def out_path(self) -> Path:
        root = os.environ.get(OUTPUT_ENV)
        out = Path(self.output_dir)
        return Path(root) / out if root and not out.is_absolute() else out


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def versions() -> dict[str, str]:
    from . import __version__

    return {"tecmrl": __version__, "numpy": np.__version__, "python": platform.python_version(), "kernels": BACKEND}


def make_manifest(command: str, cfg: RunConfig, inputs: dict[str, str | Path], extra: dict | None = None) -> dict:
    return {
        "command": command,
        "config_sha256": cfg.digest(),
        "config": cfg.to_dict(),
        "inputs": {name: file_digest(p) for name, p in sorted(inputs.items())},
        "versions": versions(),
        **(extra or {}),
    }


def manifest_matches(path: Path, manifest: dict) -> bool:
    """True when an existing manifest records the same command, config and inputs."""
    if not path.exists():
        return False
    try:
        old = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError):
        return False
    return all(old.get(k) == manifest.get(k) for k in ("command", "config_sha256", "inputs"))


def write_manifest(path: Path, manifest: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
