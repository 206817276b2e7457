"""Run configuration: JSON schema, validation and stage tolerances."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError

__all__ = ["RunConfig", "load_config", "parse_stage_tol", "STAGE_TOL_DEFAULTS"]

STAGE_TOL_DEFAULTS = {
    "equilibrium": 1e-10,  # anchor fixed point
    "shift": 1e-12,  # Picard iteration for h_eta
    "solve": 1e-11,  # Newton sup-residual
    "euler": 1e-7,  # accepted normalized Euler residual
    "stagnation": 1e-9,  # accepted speed at a stagnation point
}


@dataclass
class RunConfig:
    kappa0: int = 1
    r: float = 0.5
    m: float = 160
    S: int = 3
    eps: float = 1e-4
    xi: list = field(default_factory=lambda: [1.0])
    K: int = 12
    J: int = 24
    upsilon: float = 1e-3
    tau: float = 2.0
    Lmax: int = 100
    eta: float | None = None
    seed: int = 0
    stage_tol: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        def need(ok, msg):
            if not ok:
                raise ConfigError(msg)

        need(isinstance(self.kappa0, int) and self.kappa0 >= 1, "kappa0 must be an integer >= 1")
        need(0.0 < self.r < 1.0, "r must lie in (0, 1)")
        need(self.m > 0, "m must be positive")
        need(isinstance(self.S, int) and self.S >= 1, "S must be an integer >= 1")
        need(0.0 <= self.eps < 1.0, "eps must lie in [0, 1)")
        need(isinstance(self.xi, (list, tuple)) and len(self.xi) == self.kappa0,
             f"xi must list kappa0={self.kappa0} amplitudes")
        need(all(isinstance(v, (int, float)) and v > 0 for v in self.xi), "amplitudes xi must be positive")
        need(isinstance(self.K, int) and self.K >= 1, "K must be an integer >= 1")
        need(isinstance(self.J, int) and self.J >= self.kappa0 + 2, "J must be an integer >= kappa0 + 2")
        need(0.0 <= self.upsilon < 1.0, "upsilon must lie in [0, 1)")
        need(self.tau >= 1.0, "tau must be >= 1")
        need(isinstance(self.Lmax, int) and self.Lmax >= 10, "Lmax must be an integer >= 10")
        need(self.eta is None or self.eta > 0, "eta must be positive")
        need(isinstance(self.seed, int), "seed must be an integer")
        bad = set(self.stage_tol) - set(STAGE_TOL_DEFAULTS)
        need(not bad, f"unknown stage tolerances: {sorted(bad)}")
        need(all(v > 0 and math.isfinite(v) for v in self.stage_tol.values()), "stage tolerances must be positive")
        n_modes = (2 * self.K + 1) ** self.kappa0 // 2 + 1
        need(n_modes * self.J <= 20000, f"system size {n_modes * self.J} exceeds the dense limit 20000")

    @property
    def E(self) -> float:
        """Well depth from the width constraint ``E r = (kappa0 + 1/4) pi``."""
        return (self.kappa0 + 0.25) * math.pi / self.r

    def tol(self, stage: str) -> float:
        return float(self.stage_tol.get(stage, STAGE_TOL_DEFAULTS[stage]))

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(path, overrides: dict | None = None) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    known = {f.name for f in fields(RunConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{path}: unknown fields {sorted(unknown)}")
    if overrides:
        raw["stage_tol"] = {**raw.get("stage_tol", {}), **overrides}
    try:
        return RunConfig(**raw)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def parse_stage_tol(items) -> dict:
    """``["solve=1e-10", "euler=1e-6,shift=1e-11"]`` to a dict."""
    out = {}
    for item in items or []:
        for part in item.split(","):
            if not part.strip():
                continue
            key, sep, val = part.partition("=")
            if not sep:
                raise ConfigError(f"--stage-tol expects stage=value, got {part!r}")
            try:
                out[key.strip()] = float(val)
            except ValueError as exc:
                raise ConfigError(f"--stage-tol {key}: {val!r} is not a number") from exc
    return out
