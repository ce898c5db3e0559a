"""Discretised Fokker action of two charges and its analytic gradient.

The interaction double integral is evaluated by the midpoint rule over
segment pairs. The light-cone delta is either smeared into a Gaussian of
width ``eta`` in interval-squared units, or reduced exactly onto the
retarded and advanced crossings of the partner world line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from fokker.minkowski import (
    SingularCrossingError,
    SystemParams,
    WorldLine,
    lightcone_crossings,
    lower,
    minkowski_dot,
    proper_length,
)

_ROW_CHUNK = 1024


@dataclass(frozen=True)
class ActionBreakdown:
    free_1: float
    free_2: float
    interaction: float
    total: float

    @classmethod
    def assemble(cls, free_1: float, free_2: float, interaction: float) -> "ActionBreakdown":
        return cls(float(free_1), float(free_2), float(interaction), float(free_1 + free_2 + interaction))

    def as_dict(self) -> dict:
        return {"free_1": self.free_1, "free_2": self.free_2,
                "interaction": self.interaction, "total": self.total}


def nascent_delta(u, eta: float):
    """Gaussian δ_η(u) = exp(-u²/2η²) / (η√(2π))."""
    u = np.asarray(u, dtype=float)
    return np.exp(-0.5 * (u / eta) ** 2) / (eta * math.sqrt(2.0 * math.pi))


def nascent_delta_prime(u, eta: float):
    u = np.asarray(u, dtype=float)
    return -u / eta**2 * nascent_delta(u, eta)


def free_action_sqrt(line: WorldLine, m: float, c: float) -> float:
    return -m * c * proper_length(line)


def free_action_quadratic(line: WorldLine, m: float, c: float) -> float:
    """Einbein-gauge free term −(mc/2) Σ ε (ẋ·ẋ + 1)."""
    xdot = line.velocities
    return float(-0.5 * m * c * line.epsilon * np.sum(minkowski_dot(xdot, xdot) + 1.0))


def _free(line: WorldLine, m: float, c: float, free_form: str) -> float:
    if free_form == "quadratic":
        return free_action_quadratic(line, m, c)
    if free_form == "sqrt":
        return free_action_sqrt(line, m, c)
    raise ValueError(f"unknown free_form {free_form!r}")


def pair_weights(mid1: np.ndarray, mid2: np.ndarray, eta: float) -> np.ndarray:
    """Matrix δ_η(s²(mid1_n, mid2_m)) over all segment pairs."""
    out = np.empty((mid1.shape[0], mid2.shape[0]))
    for lo in range(0, mid1.shape[0], _ROW_CHUNK):
        sep = mid1[lo:lo + _ROW_CHUNK, None, :] - mid2[None, :, :]
        out[lo:lo + _ROW_CHUNK] = nascent_delta(minkowski_dot(sep, sep), eta)
    return out


def interaction_from_arrays(dx1, mid1, dx2, mid2, coupling: float, eta: float) -> float:
    """e₁e₂ Σ_nm δ_η(s²_nm) Δx1_n·Δx2_m  (the ε₁ε₂ ẋ₁·ẋ₂ weights collapse to displacements)."""
    if coupling == 0.0 or dx1.shape[0] == 0 or dx2.shape[0] == 0:
        return 0.0
    total = 0.0
    dx2_low = lower(dx2)
    for lo in range(0, mid1.shape[0], _ROW_CHUNK):
        sep = mid1[lo:lo + _ROW_CHUNK, None, :] - mid2[None, :, :]
        w = nascent_delta(minkowski_dot(sep, sep), eta)
        dots = dx1[lo:lo + _ROW_CHUNK] @ dx2_low.T
        total += float(np.sum(w * dots))
    return coupling * total


def interaction_action_smeared(line1: WorldLine, line2: WorldLine, params: SystemParams) -> float:
    return interaction_from_arrays(
        line1.displacements, line1.midpoints, line2.displacements, line2.midpoints,
        params.coupling, params.eta,
    )


def interaction_action_lightcone(line1: WorldLine, line2: WorldLine, params: SystemParams) -> float:
    """Exact light-cone reduction in the partner's parameter, midpoint rule in the own one.

    ∫ds₂ δ((x₂(s₂) − P)²) g = Σ_k g / |2 (x₂ − P)·ẋ₂| at each crossing k; for a
    partner at rest this is the familiar 1/(2r) per crossing.
    """
    if params.coupling == 0.0:
        return 0.0
    xdot1 = line1.velocities
    xdot2 = line2.velocities
    mids = line1.midpoints
    total = 0.0
    for n, p in enumerate(mids):
        try:
            crossings = lightcone_crossings(p, line2, params.r_min)
        except SingularCrossingError as exc:
            raise SingularCrossingError(
                f"near collision between segment {n} of line 1 and segment {exc.segment} of line 2: {exc}",
                segment=n, partner=exc.segment,
            ) from exc
        for cr in crossings:
            v2 = xdot2[cr.segment]
            jac = abs(2.0 * minkowski_dot(cr.point - p, v2))
            total += minkowski_dot(xdot1[n], v2) / jac
    return params.coupling * line1.epsilon * total


def fokker_action_total(
    line1: WorldLine,
    line2: WorldLine,
    params: SystemParams,
    mode: str = "smeared",
    free_form: str = "quadratic",
) -> ActionBreakdown:
    f1 = _free(line1, params.m1, params.c, free_form)
    f2 = _free(line2, params.m2, params.c, free_form)
    if mode == "smeared":
        inter = interaction_action_smeared(line1, line2, params)
    elif mode == "lightcone":
        inter = interaction_action_lightcone(line1, line2, params)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    out = ActionBreakdown.assemble(f1, f2, inter)
    if not math.isfinite(out.total):
        raise FloatingPointError("non-finite action")
    return out


def _free_gradient(line: WorldLine, m: float, c: float, free_form: str) -> np.ndarray:
    """∂I_free/∂x_k (covariant components) at every vertex, endpoints included."""
    dx = line.displacements
    if free_form == "quadratic":
        seg = -(m * c / line.epsilon) * lower(dx)
    elif free_form == "sqrt":
        line.check_timelike()
        tau = np.sqrt(minkowski_dot(dx, dx))
        seg = -m * c * lower(dx) / tau[:, None]
    else:
        raise ValueError(f"unknown free_form {free_form!r}")
    g = np.zeros_like(line.vertices)
    g[1:] += seg
    g[:-1] -= seg
    return g


def _interaction_gradient(dx1, mid1, dx2, mid2, coupling, eta):
    """Vertex gradients of the smeared interaction for both lines (covariant components)."""
    n1, d = dx1.shape
    n2 = dx2.shape[0]
    g1 = np.zeros((n1 + 1, d))
    g2 = np.zeros((n2 + 1, d))
    if coupling == 0.0 or n1 == 0 or n2 == 0:
        return g1, g2
    dx1_low, dx2_low = lower(dx1), lower(dx2)
    mid1_low, mid2_low = lower(mid1), lower(mid2)
    # per-segment partials: G wrt displacement, H wrt midpoint
    G1 = np.zeros((n1, d))
    H1 = np.zeros((n1, d))
    G2 = np.zeros((n2, d))
    H2 = np.zeros((n2, d))
    for lo in range(0, n1, _ROW_CHUNK):
        hi = min(lo + _ROW_CHUNK, n1)
        sep = mid1[lo:hi, None, :] - mid2[None, :, :]
        s2 = minkowski_dot(sep, sep)
        w = nascent_delta(s2, eta)
        wp = -s2 / eta**2 * w
        dots = dx1[lo:hi] @ dx2_low.T
        wpd = 2.0 * wp * dots
        G1[lo:hi] = w @ dx2_low
        G2 += w.T @ dx1_low[lo:hi]
        rs1 = wpd.sum(axis=1)
        H1[lo:hi] = rs1[:, None] * mid1_low[lo:hi] - wpd @ mid2_low
        rs2 = wpd.sum(axis=0)
        H2 += rs2[:, None] * mid2_low - wpd.T @ mid1_low[lo:hi]
    for G, H, g in ((G1, H1, g1), (G2, H2, g2)):
        g[1:] += G + 0.5 * H
        g[:-1] += -G + 0.5 * H
    return coupling * g1, coupling * g2


def action_gradient(
    line1: WorldLine,
    line2: WorldLine,
    params: SystemParams,
    free_form: str = "quadratic",
) -> tuple[np.ndarray, np.ndarray]:
    """∂I/∂x^μ at the interior vertices of both lines (smeared interaction).

    Returns arrays of shape (N1-1, d) and (N2-1, d); endpoints are held fixed.
    Components are the plain partial derivatives, i.e. covariant.
    """
    g1, g2 = full_gradient(line1, line2, params, free_form)
    return g1[1:-1], g2[1:-1]


def full_gradient(line1, line2, params, free_form="quadratic"):
    gi1, gi2 = _interaction_gradient(
        line1.displacements, line1.midpoints, line2.displacements, line2.midpoints,
        params.coupling, params.eta,
    )
    g1 = _free_gradient(line1, params.m1, params.c, free_form) + gi1
    g2 = _free_gradient(line2, params.m2, params.c, free_form) + gi2
    return g1, g2
