"""Run configuration shared by the CLI and the experiment scripts.

Config files are flat ``key = value`` UTF-8 text with ``#`` comments. List
values are comma separated. Command-line flags override file values.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InvalidInput
from .partition import PREDICTOR_KINDS

_LIST_FIELDS = {"keep": float, "qs": float, "lams": float, "inputs": str}
_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


@dataclass
class RunConfig:
    command: str = ""
    inputs: list = field(default_factory=list)
    output: str | None = None
    n_layers: int = 2
    q: float = 1.0
    lam: float = 1.0
    predictor: str = "sigma-topk"
    keep: list = field(default_factory=lambda: [0.25])
    weights: str | None = None
    motion_weights: str | None = None
    residual_weights: str | None = None
    adapter: str | None = None
    layers_upto: int | None = None
    branch: int | None = None
    temporal_ablation: bool = False
    gop: int = 0
    seed: int = 0
    task: str = "A"
    qs: list = field(default_factory=lambda: [8.0, 16.0])
    lams: list = field(default_factory=lambda: [1.0])
    budget: int = 200
    jobs: int = 1
    video: bool = False
    log: str | None = None

    def validate(self) -> "RunConfig":
        if self.n_layers < 1:
            raise InvalidInput("n_layers must be >= 1")
        if self.q <= 0 or any(q <= 0 for q in self.qs):
            raise InvalidInput("q must be positive")
        if self.lam < 0 or any(v < 0 for v in self.lams):
            raise InvalidInput("lambda must be non-negative")
        if self.predictor not in PREDICTOR_KINDS:
            raise InvalidInput(f"unknown predictor {self.predictor!r}")
        if any(not 0 < k <= 1 for k in self.keep) or sum(self.keep) > 1 + 1e-9:
            raise InvalidInput("keep fractions must lie in (0, 1] and sum to at most 1")
        if self.layers_upto is not None and self.layers_upto < 0:
            raise InvalidInput("layers_upto must be >= 0")
        if self.branch is not None and not 1 <= self.branch <= self.n_layers:
            raise InvalidInput("branch must lie in 1..n_layers")
        if self.task not in ("A", "B"):
            raise InvalidInput("task must be A or B")
        if self.gop < 0 or self.budget < 0 or self.jobs < 1:
            raise InvalidInput("gop and budget must be >= 0, jobs >= 1")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _coerce(name: str, raw: str):
    f = {f.name: f for f in dataclasses.fields(RunConfig)}.get(name)
    if f is None:
        raise InvalidInput(f"unknown config key {name!r}")
    raw = raw.strip()
    if name in _LIST_FIELDS:
        return [_LIST_FIELDS[name](v.strip()) for v in raw.split(",") if v.strip()]
    typ = str(f.type)
    if raw.lower() in ("none", "") and "None" in typ:
        return None
    try:
        if typ.startswith("bool"):
            low = raw.lower()
            if low in _BOOL_TRUE:
                return True
            if low in _BOOL_FALSE:
                return False
            raise ValueError(raw)
        if typ.startswith("int"):
            return int(raw)
        if typ.startswith("float"):
            return float(raw)
    except ValueError:
        raise InvalidInput(f"bad value for {name}: {raw!r}") from None
    return raw


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidInput(f"config line {lineno}: expected key = value")
        key, val = line.split("=", 1)
        key = key.strip().replace("-", "_")
        out[key] = _coerce(key, val)
    return out


def load_config_file(path) -> dict:
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def build_config(file_values: dict, overrides: dict) -> RunConfig:
    """Defaults, then file values, then non-``None`` overrides."""
    merged = dict(file_values)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**merged).validate()
