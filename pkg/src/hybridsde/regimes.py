"""
Classification of the joint small-parameter limit.

A sampling period is tied to the noise size through a rule ``delta(eps)``.
The limit ``c = lim delta/eps`` picks one of three regimes: ``c = 0``
(sampling faster than the noise shrinks), ``0 < c < inf`` (comparable) and
``c = inf`` (sampling slower). The infinite case is carried by the regime tag,
with ``c`` set to ``None``, so that no infinity ever enters arithmetic.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

from .errors import DomainError, GridError

__all__ = [
    "Regime",
    "DeltaRule",
    "ScalingRegime",
    "classify",
    "regime_at",
    "snap_delta",
]

SNAP_RTOL = 1e-9


class Regime(enum.IntEnum):
    REGIME1 = 1
    REGIME2 = 2
    REGIME3 = 3


@dataclass(frozen=True)
class DeltaRule:
    """
    Sampling period as a function of the noise size.

    ``proportional``: ``delta = c * eps``. ``power``: ``delta = coeff * eps**alpha``.
    A power rule with ``alpha = 1`` is normalized to a proportional one, and
    ``alpha = 0`` is allowed to express a fixed sampling period.
    """

    kind: str
    c: Optional[float] = None
    alpha: Optional[float] = None
    coeff: float = 1.0

    def __post_init__(self):
        if self.kind == "power" and self.alpha == 1:
            object.__setattr__(self, "kind", "proportional")
            object.__setattr__(self, "c", float(self.coeff))
            object.__setattr__(self, "alpha", None)
            object.__setattr__(self, "coeff", 1.0)
        if self.kind == "proportional":
            if self.c is None or not (self.c > 0 and math.isfinite(self.c)):
                raise DomainError(f"proportional rule needs finite c > 0, got {self.c}")
        elif self.kind == "power":
            if self.alpha is None or not (self.alpha >= 0 and math.isfinite(self.alpha)):
                raise DomainError(f"power rule needs finite alpha >= 0, got {self.alpha}")
            if not (self.coeff > 0 and math.isfinite(self.coeff)):
                raise DomainError(f"power rule needs coeff > 0, got {self.coeff}")
        else:
            raise DomainError(f"unknown rule kind {self.kind!r}")

    @classmethod
    def proportional(cls, c: float) -> "DeltaRule":
        return cls("proportional", c=float(c))

    @classmethod
    def power(cls, alpha: float, coeff: float = 1.0) -> "DeltaRule":
        return cls("power", alpha=float(alpha), coeff=float(coeff))

    @classmethod
    def fixed(cls, delta: float) -> "DeltaRule":
        return cls("power", alpha=0.0, coeff=float(delta))

    def delta(self, epsilon: float) -> float:
        if self.kind == "proportional":
            return self.c * epsilon
        return self.coeff * epsilon**self.alpha

    def ratio(self, epsilon: float) -> float:
        """``delta(eps) / eps`` derived from the rule rather than by division."""
        if self.kind == "proportional":
            return self.c
        return self.coeff * epsilon ** (self.alpha - 1.0)

    def to_dict(self) -> dict:
        if self.kind == "proportional":
            return {"kind": "proportional", "c": self.c}
        return {"kind": "power", "alpha": self.alpha, "coeff": self.coeff}

    @classmethod
    def from_dict(cls, d: dict) -> "DeltaRule":
        kind = d.get("kind")
        if kind == "proportional":
            return cls.proportional(d["c"])
        if kind == "power":
            return cls.power(d["alpha"], d.get("coeff", 1.0))
        raise DomainError(f"unknown rule kind {kind!r}")


@dataclass(frozen=True)
class ScalingRegime:
    """A concrete ``(eps, delta)`` pair together with its regime data.

    ``kappa`` is ``|delta/eps - c|`` for regimes 1 and 2 and ``kappa_tilde`` is
    ``eps/delta`` for regime 3; the other one is ``None``. ``small_enough``
    records whether ``delta < (c+1) eps`` (regimes 1-2) or ``eps < delta``
    (regime 3) holds.
    """

    epsilon: float
    delta: float
    kind: Regime
    c: Optional[float]
    kappa: Optional[float] = None
    kappa_tilde: Optional[float] = None
    small_enough: bool = True

    @property
    def c_is_infinite(self) -> bool:
        return self.kind is Regime.REGIME3

    @classmethod
    def per_run(cls, epsilon: float, delta: float) -> "ScalingRegime":
        """Treat one pair as a regime-2 instance with ``c = delta/eps`` (so kappa = 0)."""
        c = delta / epsilon
        return cls(epsilon, delta, Regime.REGIME2, c, kappa=0.0, small_enough=delta < (c + 1) * epsilon)


def classify(rule: DeltaRule) -> tuple[Regime, Optional[float]]:
    """Regime tag and ``c = lim delta(eps)/eps`` (``None`` when infinite)."""
    if rule.kind == "proportional":
        return Regime.REGIME2, rule.c
    if rule.alpha > 1:
        return Regime.REGIME1, 0.0
    return Regime.REGIME3, None


def regime_at(rule: DeltaRule, epsilon: float) -> ScalingRegime:
    if not 0 < epsilon < 1:
        raise DomainError(f"epsilon must lie in (0, 1), got {epsilon}")
    delta = rule.delta(epsilon)
    if not 0 < delta < 1:
        raise DomainError(f"delta({epsilon}) = {delta} is outside (0, 1)")
    kind, c = classify(rule)
    if kind is Regime.REGIME3:
        kt = 1.0 / rule.ratio(epsilon)
        return ScalingRegime(epsilon, delta, kind, None, kappa_tilde=kt, small_enough=epsilon < delta)
    kappa = abs(rule.ratio(epsilon) - c)
    return ScalingRegime(epsilon, delta, kind, c, kappa=kappa, small_enough=delta < (c + 1) * epsilon)


def snap_delta(delta: float, dt: float) -> tuple[float, int, float]:
    """
    Snap ``delta`` to the nearest positive multiple of ``dt``.

    Returns ``(snapped, m, relative_shift)``; raises :class:`GridError` when the
    shift exceeds ``1e-9`` relative.
    """
    if not (dt > 0 and delta > 0):
        raise GridError(f"delta and dt must be positive, got {delta}, {dt}")
    m = max(int(round(delta / dt)), 1)
    snapped = m * dt
    shift = abs(snapped - delta) / delta
    if shift > SNAP_RTOL:
        raise GridError(f"delta={delta!r} is not a multiple of dt={dt!r} (relative shift {shift:.3g})")
    return snapped, m, shift
