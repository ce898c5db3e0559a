"""Generalised canonical formalism on broken world lines.

Momenta live on segments and are stored contravariantly, p^μ = −mc ẋ^μ + …,
so the Legendre pairing is Σ ε p·ẋ with the Minkowski product. The free
Lagrangian is the quadratic einbein form, which makes the relation between
momenta and velocities invertible. With that choice the Hamilton functional
of a free particle is −(1/2mc) Σ ε (p·p − m²c²): the familiar
"p² − m²c²" structure, rescaled per particle by −1/(2mc).

The interaction kernel that couples the momenta is never formed
explicitly. For fixed world-line positions the momenta are affine in the
velocities, and the inversion is done by fixed-point iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from fokker.action import pair_weights
from fokker.minkowski import SystemParams, WorldLine, lower, minkowski_dot


@dataclass(frozen=True)
class MomentumPath:
    momenta: np.ndarray
    epsilon: float

    def __post_init__(self):
        p = np.array(self.momenta, dtype=float)
        if p.ndim != 2:
            raise ValueError(f"momenta must have shape (N, d), got {p.shape}")
        object.__setattr__(self, "momenta", p)

    @property
    def n_segments(self) -> int:
        return self.momenta.shape[0]


@dataclass(frozen=True)
class PhaseTrajectory:
    line: WorldLine
    momentum: MomentumPath

    def __post_init__(self):
        if self.line.n_segments != self.momentum.n_segments:
            raise ValueError("momentum path and world line have different segment counts")
        if not math.isclose(self.line.epsilon, self.momentum.epsilon, rel_tol=1e-12):
            raise ValueError("momentum path and world line have different epsilon")
        if self.line.dimension != self.momentum.momenta.shape[1]:
            raise ValueError("momentum path and world line have different dimension")


@dataclass
class InversionReport:
    velocities: tuple[np.ndarray, np.ndarray]
    iterations: int
    residual: float
    converged: bool


class InversionError(RuntimeError):
    pass


def _coupled_sums(W, v1, v2, eps1, eps2):
    """(Σ_m ε₂ W_nm v2_m, Σ_n ε₁ W_nm v1_n)."""
    return eps2 * (W @ v2), eps1 * (W.T @ v1)


def generalized_momenta(line1: WorldLine, line2: WorldLine, params: SystemParams):
    W = pair_weights(line1.midpoints, line2.midpoints, params.eta)
    x1, x2 = line1.velocities, line2.velocities
    a1, a2 = _coupled_sums(W, x1, x2, line1.epsilon, line2.epsilon)
    c = params.c
    p1 = -params.m1 * c * x1 + params.coupling * a1
    p2 = -params.m2 * c * x2 + params.coupling * a2
    return MomentumPath(p1, line1.epsilon), MomentumPath(p2, line2.epsilon)


def _invert_arrays(p1, p2, W, eps1, eps2, params, tol, max_iter, method):
    c, k = params.c, params.coupling
    mc1, mc2 = params.m1 * c, params.m2 * c
    v1 = -p1 / mc1
    v2 = -p2 / mc2
    if method == "first_order":
        a1, a2 = _coupled_sums(W, v1, v2, eps1, eps2)
        v1 = -(p1 - k * a1) / mc1
        v2 = -(p2 - k * a2) / mc2
        return InversionReport((v1, v2), 1, float("nan"), True)
    if method != "fixed_point":
        raise ValueError(f"unknown inversion method {method!r}")
    residual = float("inf")
    for it in range(1, max_iter + 1):
        a1, a2 = _coupled_sums(W, v1, v2, eps1, eps2)
        n1 = -(p1 - k * a1) / mc1
        n2 = -(p2 - k * a2) / mc2
        residual = max(
            float(np.max(np.abs(n1 - v1), initial=0.0)),
            float(np.max(np.abs(n2 - v2), initial=0.0)),
        )
        v1, v2 = n1, n2
        if not math.isfinite(residual):
            break
        if residual <= tol:
            return InversionReport((v1, v2), it, residual, True)
    return InversionReport((v1, v2), max_iter, residual, False)


def invert_velocities(
    p1: MomentumPath,
    p2: MomentumPath,
    line1: WorldLine,
    line2: WorldLine,
    params: SystemParams,
    tol: float = 1e-12,
    max_iter: int = 200,
    method: str = "fixed_point",
) -> InversionReport:
    """Recover segment velocities from momenta at fixed world-line positions.

    ``method="fixed_point"`` iterates ẋ ← −(p − e₁e₂·coupling(ẋ_other))/mc from
    the free solution. ``method="first_order"`` stops after one step, which is
    the closed form to first order in e₁e₂.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    W = pair_weights(line1.midpoints, line2.midpoints, params.eta)
    return _invert_arrays(
        p1.momenta, p2.momenta, W, line1.epsilon, line2.epsilon, params, tol, max_iter, method
    )


def _hamiltonian_arrays(p1, p2, mid1, mid2, eps1, eps2, params, tol=1e-12, max_iter=200):
    """H for segment arrays; either particle may have zero segments."""
    d = p1.shape[1] if p1.size else p2.shape[1]
    W = pair_weights(mid1.reshape(-1, d), mid2.reshape(-1, d), params.eta)
    rep = _invert_arrays(p1, p2, W, eps1, eps2, params, tol, max_iter, "fixed_point")
    if not rep.converged:
        raise InversionError(f"velocity inversion did not converge (residual {rep.residual:.3e})")
    v1, v2 = rep.velocities
    c = params.c
    pairing = eps1 * np.sum(minkowski_dot(p1, v1)) + eps2 * np.sum(minkowski_dot(p2, v2))
    lag = (
        -0.5 * params.m1 * c * eps1 * np.sum(minkowski_dot(v1, v1) + 1.0)
        - 0.5 * params.m2 * c * eps2 * np.sum(minkowski_dot(v2, v2) + 1.0)
    )
    if params.coupling != 0.0 and v1.size and v2.size:
        lag += params.coupling * eps1 * eps2 * float(np.sum(W * (v1 @ lower(v2).T)))
    return float(pairing - lag)


def hamiltonian_functional(
    p1: MomentumPath,
    p2: MomentumPath,
    line1: WorldLine,
    line2: WorldLine,
    params: SystemParams,
    tol: float = 1e-12,
    max_iter: int = 200,
) -> float:
    return _hamiltonian_arrays(
        p1.momenta, p2.momenta, line1.midpoints, line2.midpoints,
        line1.epsilon, line2.epsilon, params, tol, max_iter,
    )


def free_hamiltonian(p: np.ndarray, eps: float, m: float, c: float) -> float:
    """−(1/2mc) Σ ε (p·p − m²c²)."""
    return float(-eps / (2.0 * m * c) * np.sum(minkowski_dot(p, p) - (m * c) ** 2))


def canonical_action(traj1: PhaseTrajectory, traj2: PhaseTrajectory, params: SystemParams,
                     tol: float = 1e-12, max_iter: int = 200) -> float:
    """I_H = Σ p₁·Δx₁ + Σ p₂·Δx₂ − H[x, p]."""
    pairing = float(
        np.sum(minkowski_dot(traj1.momentum.momenta, traj1.line.displacements))
        + np.sum(minkowski_dot(traj2.momentum.momenta, traj2.line.displacements))
    )
    H = hamiltonian_functional(traj1.momentum, traj2.momentum, traj1.line, traj2.line,
                               params, tol, max_iter)
    return pairing - H


def boundary_slab_hamiltonian(
    p1: MomentumPath,
    p2: MomentumPath,
    line1: WorldLine,
    line2: WorldLine,
    params: SystemParams,
    eps1: float,
    eps2: float,
    tol: float = 1e-12,
) -> float:
    """Part of H carried by the final slabs [S−ε, S].

    Defined as H minus H of the system with the last segment of each peeled
    particle removed. Pass ``eps`` equal to the line step to peel that
    particle, or 0 to keep it whole. Peeling slab by slab therefore
    telescopes back to the full H.
    """
    cut = []
    for eps, line in ((eps1, line1), (eps2, line2)):
        if eps == 0:
            cut.append(0)
        elif math.isclose(eps, line.epsilon, rel_tol=1e-12):
            cut.append(1)
        else:
            raise ValueError(f"slab width {eps} must equal the last-segment step {line.epsilon} or 0")
    full = hamiltonian_functional(p1, p2, line1, line2, params, tol)
    n1 = p1.n_segments - cut[0]
    n2 = p2.n_segments - cut[1]
    reduced = _hamiltonian_arrays(
        p1.momenta[:n1], p2.momenta[:n2], line1.midpoints[:n1], line2.midpoints[:n2],
        line1.epsilon, line2.epsilon, params, tol,
    )
    return full - reduced


def slab_decomposition(p1: MomentumPath, p2: MomentumPath, line1: WorldLine, line2: WorldLine,
                       params: SystemParams, tol: float = 1e-12) -> list[tuple[int, int, float]]:
    """Peel alternately from the end of particle 1 and particle 2; returns (particle, segment, δH)."""
    n1, n2 = p1.n_segments, p2.n_segments
    out = []
    turn = 1
    while n1 > 0 or n2 > 0:
        if (turn == 1 and n1 > 0) or n2 == 0:
            args = (p1.momenta[:n1], p2.momenta[:n2], line1.midpoints[:n1], line2.midpoints[:n2])
            red = (p1.momenta[:n1 - 1], p2.momenta[:n2], line1.midpoints[:n1 - 1], line2.midpoints[:n2])
            who, seg = 1, n1 - 1
            n1 -= 1
        else:
            args = (p1.momenta[:n1], p2.momenta[:n2], line1.midpoints[:n1], line2.midpoints[:n2])
            red = (p1.momenta[:n1], p2.momenta[:n2 - 1], line1.midpoints[:n1], line2.midpoints[:n2 - 1])
            who, seg = 2, n2 - 1
            n2 -= 1
        h_full = _hamiltonian_arrays(*args, line1.epsilon, line2.epsilon, params, tol)
        h_red = _hamiltonian_arrays(*red, line1.epsilon, line2.epsilon, params, tol)
        out.append((who, seg, h_full - h_red))
        turn = 3 - turn
    return out
