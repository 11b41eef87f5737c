"""Discrete SOFA and continuous cxSOFA severity scores.

Each organ component is a small expression tree read from a JSON config, so
coefficient corrections are a data change. Expressions evaluate over numpy
arrays; the scalar entry points are thin wrappers over a one-row batch.
"""
from __future__ import annotations

import json
import math
from dataclasses import astuple, dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import ConfigParseError, ConfigValidationError, ScoringError

VITAL_FIELDS = (
    "pf_ratio",
    "pf_ratio_vent",
    "platelets",
    "bilirubin",
    "mbp",
    "dopamine",
    "dobutamine",
    "epinephrine",
    "norepinephrine",
    "gcs",
    "creatinine",
    "urine_output",
)
VITAL_UNITS = {
    "pf_ratio": "mmHg",
    "pf_ratio_vent": "mmHg",
    "platelets": "10^3/uL",
    "bilirubin": "umol/L",
    "mbp": "mmHg",
    "dopamine": "ug/kg/min",
    "dobutamine": "ug/kg/min",
    "epinephrine": "ug/kg/min",
    "norepinephrine": "ug/kg/min",
    "gcs": "points",
    "creatinine": "umol/L",
    "urine_output": "mL/day",
}
COMPONENT_NAMES = ("respiratory", "coagulation", "liver", "circulatory", "nervous", "renal")
BUILTIN_CONFIGS = ("sofa-discrete", "cxsofa-paper")
_COLUMN = {name: i for i, name in enumerate(VITAL_FIELDS)}
_OPS = {"<": np.less, "<=": np.less_equal, ">": np.greater, ">=": np.greater_equal}


@dataclass(frozen=True)
class VitalSigns:
    """The twelve scoring inputs. All fields are required for scoring."""

    pf_ratio: float
    pf_ratio_vent: float
    platelets: float
    bilirubin: float
    mbp: float
    dopamine: float
    dobutamine: float
    epinephrine: float
    norepinephrine: float
    gcs: float
    creatinine: float
    urine_output: float

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> "VitalSigns":
        return cls(**{name: values.get(name) for name in VITAL_FIELDS})

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=np.float64)

    def replace(self, **changes) -> "VitalSigns":
        d = self.as_dict()
        d.update(changes)
        return VitalSigns(**d)


def validate_vitals(vitals: VitalSigns) -> None:
    for name in VITAL_FIELDS:
        value = getattr(vitals, name)
        if value is None:
            raise ScoringError(name)
        try:
            value = float(value)
        except (TypeError, ValueError):
            raise ScoringError(name) from None
        if not math.isfinite(value):
            raise ScoringError(name)
        if value < 0:
            raise ScoringError(name, f"negative vital sign: {name}={value}")
    if not 3 <= vitals.gcs <= 15:
        raise ScoringError("gcs", f"GCS out of range [3, 15]: {vitals.gcs}")


def vitals_matrix(rows: Sequence[VitalSigns], validate: bool = True) -> np.ndarray:
    if validate:
        for v in rows:
            validate_vitals(v)
    if not rows:
        return np.empty((0, len(VITAL_FIELDS)))
    return np.array([astuple(v) for v in rows], dtype=np.float64)


# -- expression trees ---------------------------------------------------------

def _expr_vars(expr: Mapping[str, Any]) -> set[str]:
    for key in ("poly", "gate", "step"):
        if key in expr:
            return {expr[key]}
    for key in ("max", "min", "sum"):
        if key in expr:
            out: set[str] = set()
            for sub in expr[key]:
                out |= _expr_vars(sub)
            return out
    return set()


def _check_expr(expr: Any, where: str) -> None:
    if not isinstance(expr, Mapping):
        raise ConfigValidationError(f"{where}: expression must be an object")
    kinds = [k for k in ("const", "poly", "gate", "step", "max", "min", "sum") if k in expr]
    if len(kinds) != 1:
        raise ConfigValidationError(f"{where}: expression needs exactly one operator, got {sorted(expr)}")
    kind = kinds[0]
    if kind == "const":
        if not isinstance(expr["const"], (int, float)):
            raise ConfigValidationError(f"{where}: const must be numeric")
    elif kind in ("poly", "gate", "step"):
        if expr[kind] not in _COLUMN:
            raise ConfigValidationError(f"{where}: unknown vital {expr[kind]!r}")
        if kind == "poly":
            terms = expr.get("terms")
            if not terms or any(len(t) != 2 or int(t[0]) != t[0] or t[0] < 0 for t in terms):
                raise ConfigValidationError(f"{where}: poly terms must be [power, coef] pairs")
        elif kind == "step":
            cuts = expr.get("cuts")
            if not cuts or any(len(c) != 3 or c[0] not in _OPS for c in cuts):
                raise ConfigValidationError(f"{where}: step cuts must be [op, value, weight]")
    else:
        subs = expr[kind]
        if not isinstance(subs, list) or not subs:
            raise ConfigValidationError(f"{where}: {kind} needs a non-empty list")
        for i, sub in enumerate(subs):
            _check_expr(sub, f"{where}.{kind}[{i}]")


def _eval(expr: Mapping[str, Any], x: np.ndarray) -> np.ndarray:
    if "const" in expr:
        return np.full(x.shape[0], float(expr["const"]))
    if "poly" in expr:
        col = x[:, _COLUMN[expr["poly"]]]
        out = np.zeros(x.shape[0])
        for power, coef in expr["terms"]:
            out = out + float(coef) * col ** int(power)
        return out
    if "gate" in expr:
        col = x[:, _COLUMN[expr["gate"]]]
        return float(expr.get("scale", 1.0)) * (col > float(expr.get("above", 0.0)))
    if "step" in expr:
        col = x[:, _COLUMN[expr["step"]]]
        out = np.zeros(x.shape[0])
        for op, value, weight in expr["cuts"]:
            out = out + float(weight) * _OPS[op](col, float(value))
        return out
    for key, fold in (("max", np.maximum), ("min", np.minimum)):
        if key in expr:
            subs = expr[key]
            out = _eval(subs[0], x)
            for sub in subs[1:]:
                out = fold(out, _eval(sub, x))
            return out
    subs = expr["sum"]
    out = _eval(subs[0], x)
    for sub in subs[1:]:
        out = out + _eval(sub, x)
    return out


@dataclass(frozen=True)
class Component:
    name: str
    reads: tuple[str, ...]
    combine: str
    terms: tuple[Any, ...]
    clamp: tuple[float, float]

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        raw = _eval({self.combine: list(self.terms)}, x)
        lo, hi = self.clamp
        # global [0, 4] clamp applies even where a formula has none of its own
        return np.clip(np.clip(raw, lo, hi), 0.0, 4.0)

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "reads": list(self.reads),
            "combine": self.combine,
            "terms": list(self.terms),
            "clamp": list(self.clamp),
        }


@dataclass(frozen=True)
class ScoreConfig:
    name: str
    components: tuple[Component, ...]
    note: str = ""

    @property
    def discrete(self) -> bool:
        return self.name == "sofa-discrete"

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"name": self.name, "format_version": 1}
        if self.note:
            d["note"] = self.note
        d["components"] = [c.to_dict() for c in self.components]
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def components_matrix(self, x: np.ndarray) -> np.ndarray:
        """Component scores for a (B, 12) vitals matrix, shape (B, 6)."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return np.stack([c.evaluate(x) for c in self.components], axis=1)

    def totals(self, x: np.ndarray) -> np.ndarray:
        comps = self.components_matrix(x)
        # left fold in component order; matches the scalar path bit for bit
        total = comps[:, 0] + 0.0
        for i in range(1, comps.shape[1]):
            total = total + comps[:, i]
        return total


def config_from_dict(data: Any) -> ScoreConfig:
    if not isinstance(data, Mapping):
        raise ConfigValidationError("score config must be a JSON object")
    comps = data.get("components")
    if not isinstance(comps, list):
        raise ConfigValidationError("score config needs a 'components' list")
    if len(comps) != 6:
        raise ConfigValidationError(f"score config needs exactly 6 components, got {len(comps)}")
    built = []
    for i, comp in enumerate(comps):
        where = f"components[{i}]"
        if not isinstance(comp, Mapping):
            raise ConfigValidationError(f"{where}: must be an object")
        for key in ("reads", "terms", "clamp"):
            if key not in comp:
                raise ConfigValidationError(f"{where}: missing {key!r}")
        clamp = comp["clamp"]
        if not (isinstance(clamp, list) and len(clamp) == 2 and 0 <= clamp[0] <= clamp[1] <= 4):
            raise ConfigValidationError(f"{where}: clamp must be [lo, hi] within [0, 4]")
        combine = comp.get("combine", "sum")
        if combine not in ("max", "min", "sum"):
            raise ConfigValidationError(f"{where}: combine must be max, min or sum")
        terms = comp["terms"]
        if not isinstance(terms, list) or not terms:
            raise ConfigValidationError(f"{where}: terms must be a non-empty list")
        for j, term in enumerate(terms):
            _check_expr(term, f"{where}.terms[{j}]")
        reads = tuple(comp["reads"])
        unknown = set(reads) - set(VITAL_FIELDS)
        if unknown:
            raise ConfigValidationError(f"{where}: unknown vitals in reads: {sorted(unknown)}")
        used = set().union(*(_expr_vars(t) for t in terms))
        if not used <= set(reads):
            raise ConfigValidationError(f"{where}: terms read undeclared vitals {sorted(used - set(reads))}")
        built.append(
            Component(
                name=comp.get("name", COMPONENT_NAMES[i]),
                reads=reads,
                combine=combine,
                terms=tuple(terms),
                clamp=(float(clamp[0]), float(clamp[1])),
            )
        )
    return ScoreConfig(name=str(data.get("name", "custom")), components=tuple(built), note=data.get("note", ""))


def parse_score_config(text: str) -> ScoreConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(f"score config is not valid JSON: {exc}") from None
    return config_from_dict(data)


_BUILTIN_CACHE: dict[str, ScoreConfig] = {}


def builtin_config(name: str) -> ScoreConfig:
    if name not in BUILTIN_CONFIGS:
        raise ConfigValidationError(f"unknown built-in score config {name!r}; choose from {BUILTIN_CONFIGS}")
    if name not in _BUILTIN_CACHE:
        text = resources.files("tecmrl").joinpath("data", f"{name}.json").read_text()
        _BUILTIN_CACHE[name] = parse_score_config(text)
    return _BUILTIN_CACHE[name]


def load_score_config(path: str | Path) -> ScoreConfig:
    """Load a score config from a JSON file, or a built-in by name."""
    if str(path) in BUILTIN_CONFIGS:
        return builtin_config(str(path))
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigParseError(f"cannot read score config {path}: {exc}") from None
    return parse_score_config(text)


def default_config(kind: str) -> ScoreConfig:
    return builtin_config("sofa-discrete" if kind == "sofa" else "cxsofa-paper")


def component_scores(vitals: VitalSigns, cfg: ScoreConfig) -> tuple[float, ...]:
    validate_vitals(vitals)
    comps = cfg.components_matrix(vitals.as_array()[None, :])[0]
    return tuple(float(v) for v in comps)


def component_score(vitals: VitalSigns, i: int, cfg: ScoreConfig) -> float:
    """Score of organ component ``i`` (1-based, respiratory=1 .. renal=6)."""
    if not isinstance(i, (int, np.integer)) or not 1 <= i <= 6:
        raise IndexError(f"component index must be in 1..6, got {i!r}")
    validate_vitals(vitals)
    return float(cfg.components[i - 1].evaluate(vitals.as_array()[None, :])[0])


def cxsofa(vitals: VitalSigns, cfg: ScoreConfig | None = None) -> float:
    cfg = cfg or builtin_config("cxsofa-paper")
    total = 0.0
    for value in component_scores(vitals, cfg):
        total += value
    return total


def sofa_discrete(vitals: VitalSigns) -> int:
    cfg = builtin_config("sofa-discrete")
    return int(round(sum(component_scores(vitals, cfg))))


def score(vitals: VitalSigns, kind: str, cfg: ScoreConfig | None = None) -> float:
    if kind == "sofa":
        return float(sofa_discrete(vitals))
    if kind == "cxsofa":
        return cxsofa(vitals, cfg)
    raise ValueError(f"unknown score kind {kind!r}")
