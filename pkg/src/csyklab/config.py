"""Experiment configuration: key = value text files with a JSON mirror.

Keys are dotted ``section.name``; values are JSON literals (numbers, lists,
booleans, quoted strings) or bare words.  Comments start with ``#``.

    kind = trotter-error
    model.n_sites = 8
    run.dts = [0.025, 0.05, 0.1]
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .couplings import ModelParams
from .errors import ConfigError
from .lindblad import CavityParams
from .speckle import SpeckleConfig

KINDS = ("trotter-error", "sff", "otoc", "spectral-density", "thermo", "speckle",
         "determine-n", "state-prep", "lindblad", "stats")
FORMATS = ("csv", "json")
_SECTIONS = {"model": ModelParams, "speckle": SpeckleConfig, "cavity": CavityParams}


@dataclass
class ExperimentConfig:
    kind: str = "trotter-error"
    model: ModelParams = field(default_factory=ModelParams)
    speckle: SpeckleConfig = field(default_factory=SpeckleConfig)
    cavity: CavityParams = field(default_factory=CavityParams)
    seed: int = 0
    n_realizations: int = 20
    out: str = "out"
    format: str = "csv"
    run: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if self.format not in FORMATS:
            raise ConfigError(f"format must be one of {FORMATS}")
        if self.n_realizations < 0:
            raise ConfigError("n_realizations must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        for name in _SECTIONS:
            out[name] = dataclasses.asdict(getattr(self, name))
        out.update(seed=self.seed, n_realizations=self.n_realizations, out=self.out,
                   format=self.format, run=dict(sorted(self.run.items())))
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        kw = {}
        for name, typ in _SECTIONS.items():
            section = d.pop(name, {}) or {}
            known = {f.name for f in dataclasses.fields(typ)}
            bad = set(section) - known
            if bad:
                raise ConfigError(f"unknown {name} keys: {sorted(bad)}")
            try:
                kw[name] = typ(**section)
            except TypeError as exc:
                raise ConfigError(str(exc)) from exc
        known = {"kind", "seed", "n_realizations", "out", "format", "run"}
        bad = set(d) - known
        if bad:
            raise ConfigError(f"unknown keys: {sorted(bad)}")
        return cls(**kw, **d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        lines = []
        for key, val in self.to_dict().items():
            if isinstance(val, dict):
                lines += [f"{key}.{k} = {json.dumps(v)}" for k, v in val.items()]
            else:
                lines.append(f"{key} = {json.dumps(val)}")
        return "\n".join(lines) + "\n"


def _value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def parse_text(text: str) -> dict:
    d: dict = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        parts = key.split(".")
        if len(parts) > 2 or not all(parts):
            raise ConfigError(f"line {n}: bad key {key!r}")
        if len(parts) == 2:
            d.setdefault(parts[0], {})[parts[1]] = _value(raw)
        else:
            d[key] = _value(raw)
    return d


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    if p.suffix == ".json":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON config: {exc}") from exc
    else:
        d = parse_text(text)
    return ExperimentConfig.from_dict(d)
