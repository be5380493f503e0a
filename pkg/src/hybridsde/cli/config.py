"""JSON run configuration."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..dynamics import SystemModel
from ..errors import DomainError
from ..regimes import DeltaRule
from ..riccati import LqrSpec, RiccatiSolution, solve_care

__all__ = ["ConfigError", "RunConfig", "DEFAULT_SEED", "load_config", "build_model", "REFERENCE_CONFIG"]

DEFAULT_SEED = 20210701
C_MODES = ("per_run", "from_rule")

REFERENCE_CONFIG = {
    "system": {
        "A": [[0.0, 1.0], [0.5, 0.0]],
        "B": [[0.0], [1.0]],
        "Q": [[1.0, 0.0], [0.0, 1.0]],
        "R": [[1.0]],
        "x0": [1.5, 0.5],
    },
    "T": 8.0,
    "dt": 0.03125,
    "delta": 0.0625,
    "epsilon": 0.03125,
    "epsilons": [0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625, 0.0078125],
    "measurement_noise": False,
    "n_paths": 1000,
}


class ConfigError(DomainError):
    """Configuration is malformed or inconsistent."""


def _matrix(value, name):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be a numeric array") from exc
    if arr.ndim != 2:
        raise ConfigError(f"{name} must be a nested (row-major) 2-D array")
    return arr


def _positive(value, name):
    try:
        v = float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be a number") from exc
    if not (v > 0 and math.isfinite(v)):
        raise ConfigError(f"{name} must be positive and finite, got {value}")
    return v


@dataclass
class RunConfig:
    """Parsed configuration shared by all subcommands.

    Exactly one of ``delta`` and ``delta_rule`` is set. ``K`` may be omitted
    from the system, in which case ``Q`` and ``R`` are required and the gain
    comes from the Riccati solver.
    """

    system: dict
    T: float
    dt: float
    delta: Optional[float] = None
    delta_rule: Optional[DeltaRule] = None
    epsilon: Optional[float] = None
    epsilons: Optional[list] = None
    measurement_noise: bool = False
    n_paths: int = 1000
    seed: int = DEFAULT_SEED
    c_mode: str = "per_run"
    dt_ladder: list = field(default_factory=lambda: [2.0**-k for k in range(8, 13)])

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a JSON object")
        known = {
            "system", "T", "dt", "delta", "delta_rule", "epsilon", "epsilons",
            "measurement_noise", "n_paths", "seed", "c_mode", "dt_ladder",
        }
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        for key in ("system", "T", "dt"):
            if key not in d:
                raise ConfigError(f"missing required key {key!r}")

        raw = d["system"]
        if not isinstance(raw, dict) or "A" not in raw or "B" not in raw or "x0" not in raw:
            raise ConfigError("system needs A, B and x0")
        system = {k: _matrix(raw[k], k).tolist() for k in ("A", "B", "K", "Q", "R") if k in raw}
        system["x0"] = [float(v) for v in np.asarray(raw["x0"], dtype=float).reshape(-1)]
        if "K" not in system and not ("Q" in system and "R" in system):
            raise ConfigError("system without K needs both Q and R")

        has_delta = d.get("delta") is not None
        has_rule = d.get("delta_rule") is not None
        if has_delta == has_rule:
            raise ConfigError("give exactly one of 'delta' and 'delta_rule'")
        rule = None
        if has_rule:
            try:
                rule = DeltaRule.from_dict(d["delta_rule"])
            except (KeyError, TypeError) as exc:
                raise ConfigError(f"bad delta_rule: {exc}") from exc

        epsilon = d.get("epsilon")
        if epsilon is not None:
            epsilon = float(epsilon)
            if not (0 <= epsilon < 1):
                raise ConfigError(f"epsilon must lie in [0, 1), got {epsilon}")
        epsilons = d.get("epsilons")
        if epsilons is not None:
            epsilons = [float(e) for e in epsilons]

        c_mode = d.get("c_mode", "per_run")
        if c_mode not in C_MODES:
            raise ConfigError(f"c_mode must be one of {C_MODES}, got {c_mode!r}")
        n_paths = int(d.get("n_paths", 1000))
        if n_paths < 2:
            raise ConfigError("n_paths must be at least 2")
        seed = int(d.get("seed", DEFAULT_SEED))
        if not 0 <= seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        ladder = d.get("dt_ladder")
        return cls(
            system=system,
            T=_positive(d["T"], "T"),
            dt=_positive(d["dt"], "dt"),
            delta=_positive(d["delta"], "delta") if has_delta else None,
            delta_rule=rule,
            epsilon=epsilon,
            epsilons=epsilons,
            measurement_noise=bool(d.get("measurement_noise", False)),
            n_paths=n_paths,
            seed=seed,
            c_mode=c_mode,
            dt_ladder=[_positive(v, "dt_ladder") for v in ladder] if ladder is not None
            else [2.0**-k for k in range(8, 13)],
        )

    def to_dict(self) -> dict:
        out = {"system": self.system, "T": self.T, "dt": self.dt}
        if self.delta is not None:
            out["delta"] = self.delta
        else:
            out["delta_rule"] = self.delta_rule.to_dict()
        if self.epsilon is not None:
            out["epsilon"] = self.epsilon
        if self.epsilons is not None:
            out["epsilons"] = list(self.epsilons)
        out.update(
            measurement_noise=self.measurement_noise,
            n_paths=self.n_paths,
            seed=self.seed,
            c_mode=self.c_mode,
            dt_ladder=list(self.dt_ladder),
        )
        return out

    @property
    def rule(self) -> DeltaRule:
        """The sampling rule, with a fixed ``delta`` expressed as ``delta * eps**0``."""
        return self.delta_rule if self.delta_rule is not None else DeltaRule.fixed(self.delta)

    def delta_for(self, epsilon: float) -> float:
        if self.delta is not None:
            return self.delta
        return self.delta_rule.delta(epsilon)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return RunConfig.from_dict(data)


def lqr_spec(config: RunConfig) -> LqrSpec:
    s = config.system
    if "Q" not in s or "R" not in s:
        raise ConfigError("Q and R are required to solve the Riccati equation")
    return LqrSpec(A=s["A"], B=s["B"], Q=s["Q"], R=s["R"])


def build_model(config: RunConfig) -> tuple[SystemModel, Optional[RiccatiSolution]]:
    s = config.system
    solution = None
    if "K" in s:
        K = s["K"]
    else:
        solution = solve_care(lqr_spec(config))
        K = solution.K
    return SystemModel(A=s["A"], B=s["B"], K=K, x0=s["x0"]), solution
