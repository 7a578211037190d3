"""Run configuration: dataclasses, INI-style loading, validation and hashing.

A config file has a [run] section of scalar keys and any number of
[perturbation.<name>] sections with keys l, m, amplitude, target:

    [run]
    n = 3
    m0 = 1.0
    L_max = 4

    [perturbation.quad]
    l = 2
    m = 0
    amplitude = 1e-4
    target = metric
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace

TARGETS = ("metric", "trK")


class ConfigError(ValueError):
    exit_code = 2


@dataclass(frozen=True)
class Perturbation:
    l: int  # noqa: E741
    m: int
    amplitude: float
    target: str = "metric"


@dataclass(frozen=True)
class RunConfig:
    n: float = 3.0
    m0: float = 1.0
    delta: float = -0.75
    L_max: int = 4
    N_r: int = 64
    R_cut: float = 0.0           # 0 selects the default 1000 r0
    tol: float = 1e-10
    max_iter: int = 30
    seed: int = 0
    trust_radius: float = 0.05
    perturbations: tuple = field(default_factory=tuple)

    def validate(self) -> "RunConfig":
        if not self.n > 2:
            raise ConfigError(f"n must exceed 2, got {self.n}")
        if not self.m0 > 0:
            raise ConfigError(f"m0 must be positive, got {self.m0}")
        if not -1 < self.delta <= -0.5:
            raise ConfigError(f"delta must lie in (-1, -0.5], got {self.delta}")
        if self.L_max < 2:
            raise ConfigError(f"L_max must be at least 2, got {self.L_max}")
        if not self.tol > 0:
            raise ConfigError(f"tol must be positive, got {self.tol}")
        if self.N_r < 8:
            raise ConfigError(f"N_r too small: {self.N_r}")
        if self.R_cut < 0:
            raise ConfigError("R_cut must be non-negative")
        for p in self.perturbations:
            if p.target not in TARGETS:
                raise ConfigError(f"perturbation target must be one of {TARGETS}, got {p.target!r}")
            if not 0 <= p.l <= self.L_max or abs(p.m) > p.l:
                raise ConfigError(f"perturbation mode (l={p.l}, m={p.m}) outside L_max={self.L_max}")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["perturbations"] = [asdict(p) for p in self.perturbations]
        return d

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def with_overrides(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)


_SCALARS = {f.name: f.type for f in fields(RunConfig) if f.name != "perturbations"}
_CASTS = {"float": float, "int": int}


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser()
    cp.optionxform = str  # keep L_max, N_r, R_cut as written
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from exc
    kw = {}
    if cp.has_section("run"):
        for key, raw in cp.items("run"):
            if key not in _SCALARS:
                raise ConfigError(f"unknown key {key!r} in [run]")
            try:
                kw[key] = _CASTS[_SCALARS[key]](raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    perts = []
    for sec in cp.sections():
        if sec == "run":
            continue
        if not sec.startswith("perturbation"):
            raise ConfigError(f"unknown section [{sec}]")
        s = cp[sec]
        try:
            perts.append(Perturbation(int(s["l"]), int(s.get("m", "0")), float(s["amplitude"]),
                                      s.get("target", "metric").strip()))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad perturbation block [{sec}]: {exc}") from exc
    return RunConfig(**kw, perturbations=tuple(perts)).validate()


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
