"""Distributed prescribed-performance control law and gain feasibility check."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

from .errors import DomainError, GainValidationError
from .performance import PerformanceFunction
from .topology import IncidenceMatrix
from .transform import TransformBundle, transform_edges


@dataclass(frozen=True)
class GainSet:
    """Protocol gain ``phi`` plus the analysis gains ``h1..h6``, ``a2..a4``.

    Only ``phi`` enters the control law; the rest parameterize the stability
    certificate and the Lyapunov diagnostic.
    """

    h1: float
    h2: float
    h3: float
    h4: float
    h5: float
    h6: float
    phi: float
    a2: float
    a3: float
    a4: float

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            try:
                value = float(value)
            except (TypeError, ValueError):
                raise GainValidationError(f"gain {f.name} is not a number: {value!r}") from None
            if not (math.isfinite(value) and value > 0):
                raise GainValidationError(f"gain {f.name} must be positive, got {value}")
            object.__setattr__(self, f.name, value)
        if not self.h5 > self.h4:
            raise GainValidationError(
                f"gain h5 ({self.h5}) must exceed h4 ({self.h4})"
            )


@dataclass(frozen=True)
class FeasibilityReport:
    c1: float
    c2: float
    c3: float
    c4: float
    alpha_bar_y: float
    alpha_bar_z: float

    @property
    def margins(self) -> tuple[float, float, float, float]:
        return (self.c1, self.c2, self.c3, self.c4)

    @property
    def feasible(self) -> bool:
        return min(self.margins) > 0


def validate_gains(g: GainSet, alpha_bar_y: float, alpha_bar_z: float) -> FeasibilityReport:
    """Evaluate the four sufficient conditions for funnel-confined consensus.

    Margins (all must be strictly positive):

    - c1 = 4 h1 h4 - (h3 - h2)^2
    - c2 = h3 - h2 - 2 h5 alpha_bar_y
    - c3 = h4 phi - h6 alpha_bar_z
    - c4 = 2 h6 phi - a2 phi (h3 - h2) - 2 h6 a4
    """
    if not isinstance(g, GainSet):
        raise GainValidationError(f"expected a GainSet, got {type(g).__name__}")
    for name, value in (("alpha_bar_y", alpha_bar_y), ("alpha_bar_z", alpha_bar_z)):
        if not value > 0:
            raise GainValidationError(f"{name} must be positive, got {value}")
    d = g.h3 - g.h2
    return FeasibilityReport(
        c1=4 * g.h1 * g.h4 - d * d,
        c2=d - 2 * g.h5 * alpha_bar_y,
        c3=g.h4 * g.phi - g.h6 * alpha_bar_z,
        c4=2 * g.h6 * g.phi - g.a2 * g.phi * d - 2 * g.h6 * g.a4,
        alpha_bar_y=float(alpha_bar_y),
        alpha_bar_z=float(alpha_bar_z),
    )


def quadratic_form(g: GainSet, e1, e2) -> float:
    """``[e1; e2]^T Q [e1; e2]`` with ``Q = [[h1 I, -h2 I], [h3 I, h4 I]]``."""
    e1 = np.asarray(e1, dtype=float)
    e2 = np.asarray(e2, dtype=float)
    if e1.shape != e2.shape:
        raise DomainError(f"probe shapes differ: {e1.shape} vs {e2.shape}")
    return float(g.h1 * (e1 @ e1) + (g.h3 - g.h2) * (e1 @ e2) + g.h4 * (e2 @ e2))


def quadratic_form_positive(g: GainSet, e1, e2) -> bool:
    e1 = np.asarray(e1, dtype=float)
    e2 = np.asarray(e2, dtype=float)
    if not (np.any(e1) or np.any(e2)):
        raise DomainError("probe pair is identically zero")
    return quadratic_form(g, e1, e2) > 0


def control_terms(
    B: IncidenceMatrix,
    x: np.ndarray,
    v: np.ndarray,
    funnels_y: Sequence[PerformanceFunction],
    funnels_z: Sequence[PerformanceFunction],
    t: float,
    phi: float,
    guard: float | None = None,
) -> tuple[np.ndarray, TransformBundle, TransformBundle]:
    """Control input together with both channels' transform bundles."""
    Bm = B.entries
    y = Bm.T @ x
    z = Bm.T @ v
    by = transform_edges(y, funnels_y, t, pairs=B.edge_order, channel="position", guard=guard)
    bz = transform_edges(z, funnels_z, t, pairs=B.edge_order, channel="velocity", guard=guard)
    u = -(Bm @ (by.jac * by.eps)) - phi * (Bm @ (bz.jac * bz.eps))
    return u, by, bz


def control(
    B: IncidenceMatrix,
    x: np.ndarray,
    v: np.ndarray,
    funnels_y: Sequence[PerformanceFunction],
    funnels_z: Sequence[PerformanceFunction],
    t: float,
    g: GainSet,
) -> np.ndarray:
    """Acceleration command for every agent.

    ``u_i = -sum_l b_il J_y,l eps_y,l - phi sum_l b_il J_z,l eps_z,l``, where the
    funnel lists are aligned with ``B.edge_order``. Agent ``i`` only uses edges
    incident to it.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    u, _, _ = control_terms(B, x, v, funnels_y, funnels_z, t, g.phi)
    return u
