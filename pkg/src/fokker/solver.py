"""Classical two-body world lines from the stationary Fokker action.

Extremals of the Fokker action are saddle points, so the solver drives the
action gradient to zero instead of minimising the action. The free
(quadratic) part of the Hessian is tridiagonal per component and is used
as a fixed quasi-Newton approximation of the Jacobian; if plain chord
iterations stall, a Newton-Krylov solve preconditioned by the same free
Hessian takes over.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.linalg import solve_banded
from scipy.sparse.linalg import LinearOperator

from fokker.action import ActionBreakdown, action_gradient, fokker_action_total
from fokker.minkowski import (
    NonTimelikeSegmentError,
    SingularCrossingError,
    SystemParams,
    WorldLine,
    metric,
    minkowski_dot,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BoundaryConditions:
    start1: np.ndarray
    end1: np.ndarray
    start2: np.ndarray
    end2: np.ndarray
    S1: float
    S2: float
    N1: int
    N2: int

    def __post_init__(self):
        for name in ("start1", "end1", "start2", "end2"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        d = self.start1.shape[0]
        if any(getattr(self, n).shape != (d,) for n in ("end1", "start2", "end2")):
            raise ValueError("boundary points must share one dimension")
        for a, b, who in ((self.start1, self.end1, 1), (self.start2, self.end2, 2)):
            dx = b - a
            if minkowski_dot(dx, dx) <= 0 or dx[0] <= 0:
                raise NonTimelikeSegmentError(f"particle {who}: end-start displacement is not timelike")
        if self.S1 <= 0 or self.S2 <= 0:
            raise ValueError("total affine parameters must be positive")
        if self.N1 < 1 or self.N2 < 1:
            raise ValueError("segment counts must be at least 1")

    @property
    def dimension(self) -> int:
        return self.start1.shape[0]

    @property
    def eps1(self) -> float:
        return self.S1 / self.N1

    @property
    def eps2(self) -> float:
        return self.S2 / self.N2

    def straight_lines(self) -> tuple[WorldLine, WorldLine]:
        return (
            WorldLine.straight(self.start1, self.end1, self.N1, self.eps1),
            WorldLine.straight(self.start2, self.end2, self.N2, self.eps2),
        )

    def transformed(self, matrix, shift=None) -> "BoundaryConditions":
        shift = np.zeros(self.dimension) if shift is None else np.asarray(shift, dtype=float)
        L = np.asarray(matrix, dtype=float)
        return BoundaryConditions(
            L @ self.start1 + shift, L @ self.end1 + shift,
            L @ self.start2 + shift, L @ self.end2 + shift,
            self.S1, self.S2, self.N1, self.N2,
        )


@dataclass
class SolverReport:
    lines: tuple[WorldLine, WorldLine]
    action: ActionBreakdown
    grad_norm: float
    iterations: int
    converged: bool


class NonConvergenceError(RuntimeError):
    pass


def euler_lagrange_residual(line1: WorldLine, line2: WorldLine, params: SystemParams) -> float:
    """Sup-norm of the action gradient over interior vertices."""
    g1, g2 = action_gradient(line1, line2, params, "quadratic")
    return float(max(np.max(np.abs(g1), initial=0.0), np.max(np.abs(g2), initial=0.0)))


def _check_collision(line1: WorldLine, line2: WorldLine, r_min: float) -> None:
    """Abort when two vertices come within r_min of each other in space and time."""
    v1, v2 = line1.vertices, line2.vertices
    sep = v1[:, None, :] - v2[None, :, :]
    dist = np.sqrt(np.sum(sep**2, axis=-1))
    hit = np.argwhere(dist < r_min)
    if hit.size:
        n, m = (int(i) for i in hit[0])
        raise SingularCrossingError(
            f"near collision: vertex {n} of line 1 and vertex {m} of line 2 closer than r_min",
            segment=n, partner=m,
        )


class _Problem:
    """Flattening of interior vertices and the free-Hessian preconditioner."""

    def __init__(self, bc: BoundaryConditions, params: SystemParams, lines):
        self.bc = bc
        self.params = params
        self.template = [np.array(l.vertices) for l in lines]
        self.eps = (bc.eps1, bc.eps2)
        self.d = bc.dimension
        self.sizes = [(bc.N1 - 1) * self.d, (bc.N2 - 1) * self.d]
        g = metric(self.d)
        # Hessian of -(mc/2ε) g_μ Σ (Δx^μ)² is -(mc g_μ/ε)·tridiag(2, -1)
        self.scale = [
            -params.m1 * params.c * g / bc.eps1,
            -params.m2 * params.c * g / bc.eps2,
        ]

    def lines(self, z):
        out = []
        off = 0
        for k in range(2):
            v = self.template[k].copy()
            n = self.sizes[k]
            v[1:-1] = z[off:off + n].reshape(-1, self.d)
            off += n
            out.append(WorldLine(v, self.eps[k]))
        return out

    def pack(self, lines):
        return np.concatenate([l.vertices[1:-1].ravel() for l in lines])

    def residual(self, z):
        l1, l2 = self.lines(z)
        g1, g2 = action_gradient(l1, l2, self.params, "quadratic")
        return np.concatenate([g1.ravel(), g2.ravel()])

    def free_solve(self, r):
        """Apply the inverse free Hessian."""
        out = np.empty_like(r)
        off = 0
        for k in range(2):
            n = self.sizes[k]
            m = n // self.d
            if m == 0:
                continue
            block = r[off:off + n].reshape(m, self.d)
            ab = np.zeros((3, m))
            ab[0, 1:] = -1.0
            ab[1, :] = 2.0
            ab[2, :-1] = -1.0
            sol = solve_banded((1, 1), ab, block) / self.scale[k]
            out[off:off + n] = sol.ravel()
            off += n
        return out


def extremize_action(
    bc: BoundaryConditions,
    params: SystemParams,
    init: tuple[WorldLine, WorldLine] | None = None,
    tol: float = 1e-10,
    max_iter: int = 200,
    continuation_steps: int = 10,
) -> SolverReport:
    """Stationary broken world lines with fixed endpoints (smeared mode, quadratic free form).

    ``tol`` bounds the sup-norm of the action gradient. Lines start straight
    unless ``init`` is given; when the direct solve fails the coupling is
    ramped from zero in ``continuation_steps`` stages.
    """
    lines = init if init is not None else bc.straight_lines()
    try:
        return _solve(bc, params, lines, tol, max_iter)
    except NonConvergenceError as exc:
        if continuation_steps <= 1 or params.coupling == 0.0:
            log.warning("solver did not converge: %s", exc)
            return exc.args[1]
        log.info("direct solve failed, ramping coupling in %d steps", continuation_steps)
    current = bc.straight_lines()
    report = None
    for k in range(1, continuation_steps + 1):
        frac = k / continuation_steps
        p_k = params.replace(e1=params.e1 * frac)
        try:
            report = _solve(bc, p_k, current, tol, max_iter)
        except NonConvergenceError as exc:
            return exc.args[1]
        current = report.lines
    return report


def _solve(bc, params, lines, tol, max_iter) -> SolverReport:
    prob = _Problem(bc, params, lines)
    z = prob.pack(lines)
    r = prob.residual(z)
    norm = float(np.max(np.abs(r), initial=0.0))
    it = 0
    prev = math.inf
    while norm > tol and it < max_iter:
        step = prob.free_solve(r)
        z_new = z - step
        _check_collision(*prob.lines(z_new), params.r_min)
        r_new = prob.residual(z_new)
        new_norm = float(np.max(np.abs(r_new), initial=0.0))
        it += 1
        if not math.isfinite(new_norm) or new_norm > 0.5 * norm:
            prev = norm
            break
        z, r, norm = z_new, r_new, new_norm
    if norm > tol and it < max_iter:
        # chord iteration stalled: Newton-Krylov with the free Hessian as preconditioner
        n = z.size
        M = LinearOperator((n, n), matvec=prob.free_solve)
        try:
            z = optimize.newton_krylov(
                prob.residual, z, inner_M=M, f_tol=tol, maxiter=max_iter - it, method="lgmres",
            )
        except optimize.NoConvergence as exc:
            z = np.asarray(exc.args[0])
        except ValueError:
            pass
        r = prob.residual(z)
        norm = float(np.max(np.abs(r), initial=0.0))
        it = max_iter if norm > tol else it + 1
    l1, l2 = prob.lines(z)
    report = SolverReport(
        lines=(l1, l2),
        action=fokker_action_total(l1, l2, params, "smeared", "quadratic"),
        grad_norm=norm,
        iterations=it,
        converged=norm <= tol,
    )
    if not report.converged:
        raise NonConvergenceError(f"gradient norm {norm:.3e} above tol {tol:.1e} (prev {prev:.3e})", report)
    return report


# -- nonrelativistic Coulomb reference -------------------------------------------------


def coulomb_potential_strength(params: SystemParams) -> float:
    """k in V(r) = -k/r implied by the action's sign convention.

    With s = ct, the interaction term reduces to ∫ (c e₁e₂ / r) dt for slow
    charges, i.e. the potential −c e₁e₂/r.
    """
    return params.c * params.coupling


def coulomb_rhs(state: np.ndarray, m1: float, m2: float, k: float) -> np.ndarray:
    """state = (x1, x2, v1, v2) stacked spatial vectors."""
    ds = state.shape[0] // 4
    x1, x2, v1, v2 = state.reshape(4, ds)
    sep = x1 - x2
    r = np.linalg.norm(sep)
    f = -k * sep / r**3  # force on 1 from V = -k/r
    return np.concatenate([v1, v2, f / m1, -f / m2])


def integrate_coulomb(state0, T: float, steps: int, m1: float, m2: float, k: float,
                      dense: bool = False):
    """Fixed-step classical RK4; returns final state or the (steps+1, 4·ds) history."""
    y = np.asarray(state0, dtype=float).copy()
    h = T / steps
    hist = [y.copy()] if dense else None
    for _ in range(steps):
        k1 = coulomb_rhs(y, m1, m2, k)
        k2 = coulomb_rhs(y + 0.5 * h * k1, m1, m2, k)
        k3 = coulomb_rhs(y + 0.5 * h * k2, m1, m2, k)
        k4 = coulomb_rhs(y + h * k3, m1, m2, k)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if dense:
            hist.append(y.copy())
    return np.array(hist) if dense else y


def coulomb_energy(state, m1, m2, k) -> float:
    ds = state.shape[-1] // 4
    x1, x2, v1, v2 = np.asarray(state).reshape(4, ds)
    return 0.5 * m1 * v1 @ v1 + 0.5 * m2 * v2 @ v2 - k / np.linalg.norm(x1 - x2)


@dataclass
class CoulombTrajectories:
    times: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    energy_drift: float

    def positions_at(self, t, particle: int) -> np.ndarray:
        """Cubic Hermite interpolation of one particle's spatial position."""
        x = self.x1 if particle == 1 else self.x2
        v = self.v1 if particle == 1 else self.v2
        t = np.atleast_1d(np.asarray(t, dtype=float))
        h = self.times[1] - self.times[0]
        idx = np.clip(((t - self.times[0]) / h).astype(int), 0, len(self.times) - 2)
        u = ((t - self.times[idx]) / h)[:, None]
        h00 = 2 * u**3 - 3 * u**2 + 1
        h10 = u**3 - 2 * u**2 + u
        h01 = -2 * u**3 + 3 * u**2
        h11 = u**3 - u**2
        return h00 * x[idx] + h10 * h * v[idx] + h01 * x[idx + 1] + h11 * h * v[idx + 1]


def coulomb_limit_oracle(bc: BoundaryConditions, params: SystemParams, steps: int = 4000,
                         tol: float = 1e-12) -> CoulombTrajectories:
    """Nonrelativistic two-body Coulomb motion between the spatial endpoints.

    Both particles must start and end at common coordinate times. Initial
    velocities are found by shooting with a fixed-step RK4 integrator.
    """
    c = params.c
    t0 = bc.start1[0] / c
    T = (bc.end1[0] - bc.start1[0]) / c
    if not (math.isclose(bc.start1[0], bc.start2[0]) and math.isclose(bc.end1[0], bc.end2[0])):
        raise ValueError("Coulomb oracle needs simultaneous start and end events")
    x1a, x1b = bc.start1[1:], bc.end1[1:]
    x2a, x2b = bc.start2[1:], bc.end2[1:]
    if max(np.linalg.norm(x1b - x1a), np.linalg.norm(x2b - x2a)) / T > 0.1 * c:
        raise ValueError("endpoint velocities are not small compared to c")
    k = coulomb_potential_strength(params)
    m1, m2 = params.m1, params.m2
    ds = x1a.shape[0]

    def shoot(v):
        y0 = np.concatenate([x1a, x2a, v[:ds], v[ds:]])
        y = integrate_coulomb(y0, T, steps, m1, m2, k)
        return np.concatenate([y[:ds] - x1b, y[ds:2 * ds] - x2b])

    v0 = np.concatenate([(x1b - x1a) / T, (x2b - x2a) / T])
    sol = optimize.root(shoot, v0, method="hybr", tol=tol)
    scale = max(np.linalg.norm(x2a - x1a), 1e-300)
    if not sol.success or np.max(np.abs(shoot(sol.x))) > 1e-9 * scale:
        raise NonConvergenceError(f"Coulomb shooting failed: {sol.message}", None)
    y0 = np.concatenate([x1a, x2a, sol.x[:ds], sol.x[ds:]])
    hist = integrate_coulomb(y0, T, steps, m1, m2, k, dense=True)
    e = np.array([coulomb_energy(s, m1, m2, k) for s in hist])
    drift = float(np.max(np.abs(e - e[0])) / max(abs(e[0]), 1e-300))
    times = t0 + np.linspace(0.0, T, steps + 1)
    return CoulombTrajectories(
        times, hist[:, :ds], hist[:, ds:2 * ds], hist[:, 2 * ds:3 * ds], hist[:, 3 * ds:], drift
    )


def compare_with_coulomb(report: SolverReport, oracle: CoulombTrajectories, scale: float,
                         c: float = 1.0) -> float:
    """Max spatial deviation of the solver vertices from the oracle, divided by ``scale``."""
    dev = 0.0
    for k, line in enumerate(report.lines, start=1):
        ref = oracle.positions_at(line.vertices[:, 0] / c, k)
        dev = max(dev, float(np.max(np.abs(line.vertices[:, 1:] - ref))))
    return dev / scale
