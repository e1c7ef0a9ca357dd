"""Logarithmic error transformation and its Jacobian.

``epsilon`` maps the open interval (-1, 1) onto the real line and blows up as
the normalized error approaches the funnel boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import FunnelViolation
from .performance import PerformanceFunction, rho


def _check(s_hat: float):
    if not abs(s_hat) < 1.0:
        raise FunnelViolation(s_hat)


def epsilon(s_hat: float) -> float:
    """``ln((1 + s) / (1 - s))``, evaluated as ``2 artanh(s)``."""
    _check(s_hat)
    return 2.0 * math.atanh(s_hat)


def epsilon_inv(e: float) -> float:
    """Inverse transformation; finite for every real ``e``."""
    return math.tanh(0.5 * e)


def jacobian(s_hat: float) -> float:
    """Derivative of ``epsilon``: ``2 / (1 - s^2)``."""
    _check(s_hat)
    return 2.0 / ((1.0 - s_hat) * (1.0 + s_hat))


@dataclass(frozen=True)
class TransformBundle:
    s_hat: np.ndarray
    eps: np.ndarray
    jac: np.ndarray
    # edge indices whose value was clamped under a guard
    clamped: tuple[int, ...] = ()

    def __len__(self):
        return len(self.s_hat)


def transform_edges(
    s: np.ndarray,
    funnels: Sequence[PerformanceFunction],
    t: float,
    *,
    pairs: Sequence[tuple[int, int]] | None = None,
    channel: str | None = None,
    guard: float | None = None,
) -> TransformBundle:
    """Normalize, transform and differentiate every edge value at time ``t``.

    Without ``guard`` any ``|s_hat| >= 1`` raises FunnelViolation naming the
    edge. With ``guard`` (used only for integrator stage probes) values with
    ``|s_hat| >= 1 - guard`` are clamped to ``±(1 - guard)`` and listed in
    ``clamped``.
    """
    s = np.asarray(s, dtype=float)
    if len(s) != len(funnels):
        raise ValueError(f"{len(s)} edge values but {len(funnels)} funnels")
    bounds = np.fromiter((rho(pf, t) for pf in funnels), dtype=float, count=len(funnels))
    s_hat = s / bounds if len(s) else np.zeros(0)
    clamped: tuple[int, ...] = ()
    outside = ~(np.abs(s_hat) < 1.0)
    if guard is not None:
        limit = 1.0 - guard
        hit = ~(np.abs(s_hat) < limit)
        if hit.any():
            clamped = tuple(int(k) for k in np.flatnonzero(hit))
            s_hat = np.where(hit, np.copysign(limit, s_hat), s_hat)
    elif outside.any():
        k = int(np.flatnonzero(outside)[0])
        raise FunnelViolation(
            s_hat[k],
            index=k,
            pair=None if pairs is None else tuple(pairs[k]),
            channel=channel,
            t=t,
        )
    eps = 2.0 * np.arctanh(s_hat)
    jac = 2.0 / ((1.0 - s_hat) * (1.0 + s_hat))
    return TransformBundle(s_hat, eps, jac, clamped)
