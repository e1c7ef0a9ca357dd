"""Exponential performance funnels.

A funnel ``rho(t) = (rho0 - rho_inf) * exp(-decay * t) + rho_inf`` bounds an
edge error from both sides. All functions accept scalar or array ``t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class PerformanceFunction:
    rho0: float
    rho_inf: float
    decay: float

    def __post_init__(self):
        for name in ("rho0", "rho_inf", "decay"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise DomainError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        if not self.rho_inf > 0:
            raise DomainError(f"rho_inf must be positive, got {self.rho_inf}")
        if not self.rho0 > self.rho_inf:
            raise DomainError(
                f"rho0 ({self.rho0}) must exceed rho_inf ({self.rho_inf})"
            )
        if not self.decay > 0:
            raise DomainError(f"decay must be positive, got {self.decay}")


def _check_time(t):
    if isinstance(t, (int, float)):
        bad = t < 0
    else:
        bad = bool(np.any(np.asarray(t) < 0))
    if bad:
        raise DomainError(f"t must be nonnegative, got {t}")


def _exp(a):
    return math.exp(a) if isinstance(a, float) else np.exp(a)


def rho(pf: PerformanceFunction, t):
    _check_time(t)
    return (pf.rho0 - pf.rho_inf) * _exp(-pf.decay * t) + pf.rho_inf


def rho_dot(pf: PerformanceFunction, t):
    _check_time(t)
    return -pf.decay * (pf.rho0 - pf.rho_inf) * _exp(-pf.decay * t)


def alpha(pf: PerformanceFunction, t):
    """Relative contraction rate ``-rho_dot / rho``, always in (0, decay)."""
    return -rho_dot(pf, t) / rho(pf, t)


def alpha_bar(pf: PerformanceFunction) -> float:
    """Exact supremum of ``alpha`` over ``t >= 0``, attained at ``t = 0``."""
    return pf.decay * (pf.rho0 - pf.rho_inf) / pf.rho0


def normalize(s, pf: PerformanceFunction, t):
    return s / rho(pf, t)


def in_region(s_hat) -> bool:
    return bool(-1.0 < s_hat < 1.0)
