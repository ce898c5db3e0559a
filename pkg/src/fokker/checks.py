"""Finite-difference oracles for the analytic gradient and the momenta."""

from __future__ import annotations

import numpy as np

from fokker.action import action_gradient, fokker_action_total, interaction_from_arrays
from fokker.canonical import generalized_momenta
from fokker.minkowski import SystemParams, WorldLine, lower, minkowski_dot


def random_configuration(rng: np.random.Generator, n1: int, n2: int, d: int = 2,
                         amplitude: float = 0.02, separation: float = 1.0):
    """Two perturbed, roughly parallel timelike lines with random velocities."""
    lines = []
    for n, x0 in ((n1, 0.0), (n2, separation)):
        T = rng.uniform(1.5, 3.0)
        v = rng.uniform(-0.3, 0.3, size=d - 1)
        start = np.concatenate(([rng.uniform(-0.2, 0.2)], x0 + rng.uniform(-0.1, 0.1, size=d - 1)))
        end = start + T * np.concatenate(([1.0], v))
        base = WorldLine.straight(start, end, n)
        verts = base.vertices.copy()
        verts[1:-1] += amplitude * rng.normal(size=(n - 1, d))
        lines.append(WorldLine(verts, base.epsilon * rng.uniform(0.8, 1.2)))
    return lines[0], lines[1]


def central_difference(f, h: float) -> float:
    """Fourth-order central difference of the scalar function f(shift) at shift 0."""
    return (8.0 * (f(h) - f(-h)) - (f(2 * h) - f(-2 * h))) / (12.0 * h)


def _rel(a, b, floor):
    scale = max(float(np.max(np.abs(b))), 1e-300)
    return np.abs(a - b) / np.maximum(np.abs(b), floor * scale)


def segment_action(dx1, mid1, eps1, dx2, mid2, eps2, params: SystemParams) -> float:
    """Quadratic free terms plus smeared interaction as a function of displacements and midpoints."""
    c = params.c
    free = (-0.5 * params.m1 * c * eps1 * np.sum(minkowski_dot(dx1 / eps1, dx1 / eps1) + 1.0)
            - 0.5 * params.m2 * c * eps2 * np.sum(minkowski_dot(dx2 / eps2, dx2 / eps2) + 1.0))
    return float(free + interaction_from_arrays(dx1, mid1, dx2, mid2, params.coupling, params.eta))


def finite_difference_check(line1: WorldLine, line2: WorldLine, params: SystemParams,
                            h: float = 1e-4, floor: float = 1e-3) -> dict:
    """Compare analytic vertex gradients and segment momenta with central differences.

    The five-point stencil keeps truncation error near (h/ℓ)⁴ for the
    smearing scale ℓ, so a step of 1e-4 stays well clear of roundoff.

    Gradients differentiate the full smeared action in each interior vertex
    component. Momenta differentiate in each segment displacement at fixed
    midpoints and are raised to contravariant form. Relative errors use
    max(|fd|, floor·max|fd|) as denominator so that components which vanish
    by symmetry do not blow up the ratio.
    """
    rows = []
    worst = {"gradient": 0.0, "momentum": 0.0}
    g1, g2 = action_gradient(line1, line2, params)

    def total(v1, v2):
        return fokker_action_total(line1.with_vertices(v1), line2.with_vertices(v2), params).total

    for particle, (line, grad) in enumerate(((line1, g1), (line2, g2)), start=1):
        fd = np.zeros_like(grad)
        for k in range(1, line.n_segments):
            for mu in range(line.dimension):
                def shifted(t, k=k, mu=mu, line=line, particle=particle):
                    v = line.vertices.copy()
                    v[k, mu] += t
                    return total(v, line2.vertices) if particle == 1 else total(line1.vertices, v)

                fd[k - 1, mu] = central_difference(shifted, h)
        if grad.size:
            rel = _rel(grad, fd, floor)
            worst["gradient"] = max(worst["gradient"], float(rel.max()))
            for (k, mu), a in np.ndenumerate(grad):
                rows.append(("gradient", particle, k + 1, mu, float(a), float(fd[k, mu]), float(rel[k, mu])))

    p1, p2 = generalized_momenta(line1, line2, params)
    arrays = [line1.displacements, line1.midpoints, line1.epsilon,
              line2.displacements, line2.midpoints, line2.epsilon]
    for particle, p in ((1, p1.momenta), (2, p2.momenta)):
        slot = 0 if particle == 1 else 3
        fd = np.zeros_like(p)
        for n in range(p.shape[0]):
            for mu in range(p.shape[1]):
                def shifted(t, n=n, mu=mu, slot=slot):
                    moved = [a.copy() if isinstance(a, np.ndarray) else a for a in arrays]
                    moved[slot][n, mu] += t
                    return segment_action(*moved, params)

                fd[n, mu] = central_difference(shifted, h)
        fd = lower(fd)
        rel = _rel(p, fd, floor)
        worst["momentum"] = max(worst["momentum"], float(rel.max()))
        for (n, mu), a in np.ndenumerate(p):
            rows.append(("momentum", particle, n, mu, float(a), float(fd[n, mu]), float(rel[n, mu])))
    return {"rows": rows, "max_rel_error": worst}
