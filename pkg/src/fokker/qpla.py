"""Least-action formulation on the vertex lattice.

Wave functionals are complex arrays over a product lattice of vertex
coordinates. The momentum of segment n of a particle is attached to the
vertex that ends it: interior vertices carry (ħ_int/i)(1/ε)∂/∂x_n and the
final vertex carries the boundary operator (ħ_end/i)∂/∂x̃. The action
operator

    Î = Σ_n Δx_n·p̂_n + Σ (ε/2mc)(p̂_n·p̂_n − m²c²)
        + e₁e₂ Σ_nm ε₁ε₂ δ_η(s²_nm) p̂₁ₙ·p̂₂ₘ / (m₁m₂c²)

has every momentum operator standing to the right of the coordinates.

The eigenvalue Λ is accumulated slab by slab from the kernels of partial
lattices. At first order in e₁e₂ the kernel of a partial lattice is the
analytic free kernel times exp[(i/ħ)⟨I_int⟩], where ⟨I_int⟩ is the mean of
the smeared interaction over the (normalised) free Fresnel measure of the
interior vertices. That mean is computed in closed form: δ_η is written as
a Fourier integral, each Fourier mode makes the vertex integral an exact
Fresnel-Gaussian one, and the remaining one-dimensional integral is done by
Gauss-Hermite quadrature. No vertex grid is involved, so comparing Λ with
the quadrature propagator is a check between independent routes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from fokker.minkowski import SystemParams, metric
from fokker.propagator import (
    Constants,
    CostGuardError,
    QuadratureSpec,
    constants,
    free_log_kernel,
    measure_factor,
    propagator_quadrature,
    _particles,
)
from fokker.solver import BoundaryConditions


class NodeCrossingError(ArithmeticError):
    """The wave functional vanishes where a logarithm is needed."""


# -- closed-form first-order mean ------------------------------------------------------


def _affine_maps(parts):
    """Vertex arrays as base + E·y, with y stacking interior vertex components."""
    d = parts[0].d
    dims = [(p.n_segments - 1) * d for p in parts]
    D = sum(dims)
    out, off = [], 0
    for p in parts:
        E = np.zeros((p.n_segments + 1, d, D))
        for j in range(p.n_segments - 1):
            for c in range(d):
                E[j + 1, c, off + j * d + c] = 1.0
        off += (p.n_segments - 1) * d
        out.append((p.straight(), E))
    return out, D


def first_order_interaction_mean(bc: BoundaryConditions, params: SystemParams,
                                 consts: Constants, n_nodes: int = 96) -> complex:
    """⟨I_int⟩ over the free Fresnel measure of all interior vertices.

    The free phase is Φ₀(y) = −½ yᵀA₀y + b₀ᵀy + const, with A₀ real and
    symmetric. Writing δ_η(u) = (1/2π)∫dk exp(−η²k²/2 + iku), each pair
    term needs ⟨e^{iks²} P⟩ with s² quadratic and P = Δx₁·Δx₂ bilinear in y:
    a Fresnel-Gaussian integral with matrix A(k) = A₀ − kH, done exactly.
    Branches of det^{-1/2} follow from the real eigenvalues of A(k).
    """
    parts = _particles(bc, params)
    d = parts[0].d
    g = metric(d)
    maps, D = _affine_maps(parts)
    lines = []
    A0 = np.zeros((D, D))
    b0 = np.zeros(D)
    for p, (base, E) in zip(parts, maps):
        a = p.m * params.c / (2.0 * consts.phase)
        dE, dB = np.diff(E, axis=0), np.diff(base, axis=0)
        for n in range(p.n_segments):
            A0 += (2.0 * a / p.eps) * (dE[n].T * g) @ dE[n]
            b0 -= (2.0 * a / p.eps) * (dE[n].T * g) @ dB[n]
        lines.append((dE, dB, 0.5 * (E[1:] + E[:-1]), 0.5 * (base[1:] + base[:-1])))
    (dE1, dB1, mE1, mB1), (dE2, dB2, mE2, mB2) = lines

    if D == 0:
        sep = mB1[:, None, :] - mB2[None, :, :]
        s2 = np.sum(sep * sep * g, axis=-1)
        dots = (dB1 * g) @ dB2.T
        w = np.exp(-0.5 * (s2 / params.eta) ** 2) / (params.eta * math.sqrt(2 * math.pi))
        return complex(params.coupling * np.sum(w * dots))

    x, wts = np.polynomial.hermite_e.hermegauss(n_nodes)
    ks = x / params.eta
    lam0 = np.linalg.eigvalsh(A0)
    mu0 = np.linalg.solve(A0, b0)
    phase0 = 0.5 * b0 @ mu0
    total = 0j
    for n in range(parts[0].n_segments):
        for m in range(parts[1].n_segments):
            L, l = mE1[n] - mE2[m], mB1[n] - mB2[m]
            H = 2.0 * (L.T * g) @ L
            h = 2.0 * (L.T * g) @ l
            s0 = float(l @ (g * l))
            P2 = (dE1[n].T * g) @ dE2[m]
            P1 = dE1[n].T @ (g * dB2[m]) + dE2[m].T @ (g * dB1[n])
            P0 = float(dB1[n] @ (g * dB2[m]))
            hessP = P2 + P2.T
            acc = 0j
            for k, wk in zip(ks, wts):
                A = A0 - k * H
                b = b0 + k * h
                lam = np.linalg.eigvalsh(A)
                det_ratio = np.prod(np.sqrt(np.abs(lam0 / lam))) * np.exp(
                    -0.25j * math.pi * (np.sum(np.sign(lam)) - np.sum(np.sign(lam0)))
                )
                mu = np.linalg.solve(A, b)
                cov = -1j * np.linalg.inv(A)
                poly = mu @ P2 @ mu + P1 @ mu + P0 + 0.5 * np.trace(cov @ hessP)
                acc += wk * det_ratio * np.exp(1j * (0.5 * b @ mu - phase0 + k * s0)) * poly
            total += acc / (2.0 * math.pi * params.eta)
    return complex(params.coupling * total)


# -- lattice wave functionals ----------------------------------------------------------


@dataclass(frozen=True)
class LatticeAxis:
    """One free vertex component: vertex 1..N (N is the final endpoint x̃)."""

    particle: int
    vertex: int
    component: int
    origin: float
    step: float
    count: int

    def __post_init__(self):
        if self.particle not in (1, 2):
            raise ValueError("particle must be 1 or 2")
        if self.count < 3:
            raise ValueError("an axis needs at least 3 nodes for second-order stencils")
        if not self.step > 0:
            raise ValueError("axis step must be positive")

    @property
    def key(self):
        return (self.particle, self.vertex, self.component)

    @property
    def nodes(self) -> np.ndarray:
        return self.origin + self.step * np.arange(self.count)


@dataclass
class DiscreteWaveFunctional:
    axes: tuple
    values: np.ndarray
    fixed_endpoints: dict
    epsilon: tuple
    n_segments: tuple
    operator_output: bool = False

    def __post_init__(self):
        self.axes = tuple(self.axes)
        self.values = np.asarray(self.values, dtype=complex)
        shape = tuple(a.count for a in self.axes)
        if self.values.shape != shape:
            raise ValueError(f"values shape {self.values.shape} does not match axes {shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("wave functional values must be finite")
        if not self.operator_output and not np.any(self.values != 0):
            raise ValueError("wave functional is identically zero")
        if len({a.key for a in self.axes}) != len(self.axes):
            raise ValueError("duplicate lattice axes")

    def axis_index(self, particle: int, vertex: int, component: int) -> int:
        for i, a in enumerate(self.axes):
            if a.key == (particle, vertex, component):
                return i
        raise ValueError(
            f"vertex {vertex} component {component} of particle {particle} is not a lattice axis"
        )

    def has_axis(self, particle, vertex, component) -> bool:
        return any(a.key == (particle, vertex, component) for a in self.axes)

    def vertex_arrays(self, particle: int) -> np.ndarray:
        """Vertex coordinates over the lattice, shape values.shape + (N+1, d).

        Vertices without an axis sit on the straight line between the fixed
        endpoints.
        """
        start = np.asarray(self.fixed_endpoints[f"start{particle}"], dtype=float)
        end = np.asarray(self.fixed_endpoints[f"end{particle}"], dtype=float)
        N = self.n_segments[particle - 1]
        u = np.linspace(0.0, 1.0, N + 1)[:, None]
        base = start + u * (end - start)
        X = np.broadcast_to(base, self.values.shape + base.shape).copy()
        ndim = len(self.axes)
        for i, a in enumerate(self.axes):
            if a.particle == particle:
                shape = [1] * ndim
                shape[i] = a.count
                X[..., a.vertex, a.component] = np.broadcast_to(
                    a.nodes.reshape(shape), self.values.shape
                )
        return X

    def with_values(self, values) -> "DiscreteWaveFunctional":
        return DiscreteWaveFunctional(self.axes, values, self.fixed_endpoints, self.epsilon, self.n_segments)

    def derived(self, values) -> "DiscreteWaveFunctional":
        """Operator result on the same lattice (may vanish identically)."""
        return DiscreteWaveFunctional(self.axes, values, self.fixed_endpoints, self.epsilon,
                                      self.n_segments, operator_output=True)

    @classmethod
    def from_function(cls, func, axes, bc: BoundaryConditions) -> "DiscreteWaveFunctional":
        """Tabulate ``func(X1, X2)`` (vertex arrays of shape (M, N+1, d)) on the lattice."""
        ends = {"start1": bc.start1, "end1": bc.end1, "start2": bc.start2, "end2": bc.end2}
        shape = tuple(a.count for a in axes)
        probe = cls(tuple(axes), np.ones(shape), ends, (bc.eps1, bc.eps2), (bc.N1, bc.N2))
        X1 = probe.vertex_arrays(1).reshape((-1, bc.N1 + 1, bc.dimension))
        X2 = probe.vertex_arrays(2).reshape((-1, bc.N2 + 1, bc.dimension))
        return probe.with_values(np.asarray(func(X1, X2)).reshape(shape))


@dataclass(frozen=True)
class LatticeSpec:
    """Vertex lattice around the straight lines.

    ``step_fraction`` sets the node spacing as a fraction of the local
    kernel width √(ħε/mc). Endpoint axes are added when ``endpoint_axes``.
    """

    nodes: int = 5
    endpoint_nodes: int = 3
    step_fraction: float = 0.125
    endpoint_axes: bool = True

    def axes(self, bc: BoundaryConditions, params: SystemParams, mode: str = "uniform"):
        consts = constants(params, mode)
        out = []
        for particle, (start, end, N, eps, m) in enumerate(
            ((bc.start1, bc.end1, bc.N1, bc.eps1, params.m1),
             (bc.start2, bc.end2, bc.N2, bc.eps2, params.m2)), start=1):
            top = N if self.endpoint_axes else N - 1
            for n in range(1, top + 1):
                interior = n < N
                hb = consts.interior if interior else consts.endpoint
                count = self.nodes if interior else self.endpoint_nodes
                h = self.step_fraction * math.sqrt(hb * eps / (m * params.c))
                centre = start + (end - start) * n / N
                for c in range(bc.dimension):
                    out.append(LatticeAxis(particle, n, c, centre[c] - h * (count - 1) / 2, h, count))
        return tuple(out)


def _d1(v: np.ndarray, axis: int, h: float) -> np.ndarray:
    """First derivative: central inside, one-sided three-point at the edges."""
    v = np.moveaxis(v, axis, 0)
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - v[:-2]) / (2 * h)
    out[0] = (-3 * v[0] + 4 * v[1] - v[2]) / (2 * h)
    out[-1] = (3 * v[-1] - 4 * v[-2] + v[-3]) / (2 * h)
    return np.moveaxis(out, 0, axis)


def _d2(v: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Second derivative: central inside; one-sided four-point at edges when available."""
    v = np.moveaxis(v, axis, 0)
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - 2 * v[1:-1] + v[:-2]) / h**2
    if v.shape[0] >= 4:
        out[0] = (2 * v[0] - 5 * v[1] + 4 * v[2] - v[3]) / h**2
        out[-1] = (2 * v[-1] - 5 * v[-2] + 4 * v[-3] - v[-4]) / h**2
    else:
        out[0] = out[1]
        out[-1] = out[-2]
    return np.moveaxis(out, 0, axis)


def _momentum_scale(psi, particle, vertex, consts):
    """(ħ/i)·scale of the momentum operator at a vertex."""
    N = psi.n_segments[particle - 1]
    if not 1 <= vertex <= N:
        raise ValueError(f"vertex {vertex} of particle {particle} carries no momentum operator")
    if vertex == N:
        return consts.endpoint / 1j
    return consts.interior / (1j * psi.epsilon[particle - 1])


def apply_momentum_operator(psi: DiscreteWaveFunctional, particle: int, vertex: int, component: int,
                            params: SystemParams, mode: str = "uniform") -> DiscreteWaveFunctional:
    """p̂_μ at a vertex (covariant component); interior (ħ̃/i)(1/ε)∂, endpoint (ħ/i)∂."""
    consts = constants(params, mode)
    i = psi.axis_index(particle, vertex, component)
    pref = _momentum_scale(psi, particle, vertex, consts)
    return psi.derived(pref * _d1(psi.values, i, psi.axes[i].step))


def _action_values(psi: DiscreteWaveFunctional, params: SystemParams, consts: Constants) -> np.ndarray:
    v = psi.values
    X = [psi.vertex_arrays(1), psi.vertex_arrays(2)]
    d = X[0].shape[-1]
    g = metric(d)
    masses = (params.m1, params.m2)
    c = params.c
    out = np.zeros_like(v)
    first = {}
    for particle in (1, 2):
        N = psi.n_segments[particle - 1]
        eps = psi.epsilon[particle - 1]
        m = masses[particle - 1]
        Xp = X[particle - 1]
        for n in range(1, N + 1):
            pref = _momentum_scale(psi, particle, n, consts)
            dx = Xp[..., n, :] - Xp[..., n - 1, :]
            square = np.zeros_like(v)
            for mu in range(d):
                i = psi.axis_index(particle, n, mu)
                h = psi.axes[i].step
                d1 = pref * _d1(v, i, h)
                first[(particle, n, mu)] = (i, h, pref)
                out += dx[..., mu] * d1
                square += g[mu] * pref**2 * _d2(v, i, h)
            out += eps / (2 * m * c) * (square - (m * c) ** 2 * v)
    if params.coupling != 0.0:
        N1, N2 = psi.n_segments
        mid1 = 0.5 * (X[0][..., 1:, :] + X[0][..., :-1, :])
        mid2 = 0.5 * (X[1][..., 1:, :] + X[1][..., :-1, :])
        norm = 1.0 / (params.eta * math.sqrt(2 * math.pi))
        k = params.coupling * psi.epsilon[0] * psi.epsilon[1] / (params.m1 * params.m2 * c**2)
        for n in range(1, N1 + 1):
            for m in range(1, N2 + 1):
                sep = mid1[..., n - 1, :] - mid2[..., m - 1, :]
                s2 = np.sum(sep * sep * g, axis=-1)
                w = norm * np.exp(-0.5 * (s2 / params.eta) ** 2)
                mixed = np.zeros_like(v)
                for mu in range(d):
                    i, hi, pi = first[(1, n, mu)]
                    j, hj, pj = first[(2, m, mu)]
                    mixed += g[mu] * pi * pj * _d1(_d1(v, i, hi), j, hj)
                out += k * w * mixed
    return out


def apply_action_operator(psi: DiscreteWaveFunctional, bc: BoundaryConditions, params: SystemParams,
                          mode: str = "uniform") -> np.ndarray:
    """Values of ÎΨ on the lattice (momentum operators to the right of every coordinate)."""
    for key, val in (("start1", bc.start1), ("start2", bc.start2)):
        if not np.allclose(psi.fixed_endpoints[key], val):
            raise ValueError(f"wave functional {key} does not match the boundary conditions")
    if psi.n_segments != (bc.N1, bc.N2):
        raise ValueError("wave functional lattice does not match the boundary segment counts")
    return _action_values(psi, params, constants(params, mode))


def plane_wave_functional(p_bar1, p_bar2, bc: BoundaryConditions, params: SystemParams,
                          axes, mode: str = "uniform") -> DiscreteWaveFunctional:
    """Ψ = exp[(i/ħ_int) Σ_interior ε p̄·x_n + (i/ħ_end) p̄·x̃] per particle (p̄ contravariant)."""
    consts = constants(params, mode)
    d = bc.dimension
    g = metric(d)
    pl = [np.asarray(p_bar1, float) * g, np.asarray(p_bar2, float) * g]

    def func(X1, X2):
        phase = np.zeros(X1.shape[0])
        for X, p, eps in ((X1, pl[0], bc.eps1), (X2, pl[1], bc.eps2)):
            phase = phase + eps * (X[:, 1:-1, :] @ p).sum(axis=1) / consts.interior
            phase = phase + (X[:, -1, :] @ p) / consts.endpoint
        return np.exp(1j * phase)

    return DiscreteWaveFunctional.from_function(func, axes, bc)


def plane_wave_eigenvalue(p_bar, start, end, S: float, m: float, c: float) -> float:
    """Exact eigenvalue of the free operator on a plane wave: p̄·(x̃ − x₀) + (S/2mc)(p̄·p̄ − m²c²)."""
    p = np.asarray(p_bar, float)
    g = metric(p.shape[0])
    dx = np.asarray(end, float) - np.asarray(start, float)
    return float(np.sum(g * p * dx) + S / (2 * m * c) * (np.sum(g * p * p) - (m * c) ** 2))


# -- eigenvalue accumulation -----------------------------------------------------------


@dataclass
class ActionEigenvalue:
    """Λ with its slab ledger.

    ``value`` is the sum of wrapped increments; adding 2πħ·``branch_offset``
    gives the analytically continued eigenvalue.
    """

    value: complex
    branch_offset: int
    slabs: list = field(default_factory=list)

    def check_ledger(self, tol: float = 1e-12) -> bool:
        total = sum(s["increment"] for s in self.slabs)
        return abs(total - self.value) <= tol * max(1.0, abs(self.value))


def _wrap(angle: float) -> float:
    """Map to (−π, π]."""
    w = math.remainder(angle, 2.0 * math.pi)
    return math.pi if w == -math.pi else w


def eigenvalue_increment(psi_at_S: complex, psi_at_S_minus_eps: complex, hbar: float):
    """δΛ = (ħ/i)[ln ψ(S) − ln ψ(S−ε)] with the phase difference wrapped to (−π, π].

    Returns (δΛ, branch) where ``branch`` counts the 2π turns removed from
    the raw difference of principal arguments.
    """
    a, b = complex(psi_at_S), complex(psi_at_S_minus_eps)
    if a == 0 or b == 0:
        raise NodeCrossingError("wave functional vanishes; eigenvalue increment undefined")
    raw = math.atan2(a.imag, a.real) - math.atan2(b.imag, b.real)
    dphi = _wrap(raw)
    branch = int(round((raw - dphi) / (2.0 * math.pi)))
    dlog = complex(math.log(abs(a) / abs(b)), dphi)
    return complex(hbar / 1j * dlog), branch


def _partial_bc(bc: BoundaryConditions, k1: int, k2: int) -> BoundaryConditions:
    e1 = bc.start1 + (bc.end1 - bc.start1) * k1 / bc.N1
    e2 = bc.start2 + (bc.end2 - bc.start2) * k2 / bc.N2
    return BoundaryConditions(bc.start1, e1, bc.start2, e2, k1 * bc.eps1, k2 * bc.eps2, k1, k2)


def partial_kernel_log(bc: BoundaryConditions, params: SystemParams, k1: int, k2: int,
                       mode: str = "uniform", order: str = "first", n_nodes: int = 96) -> complex:
    """ln Ψ of the partial lattice with k₁, k₂ segments (ends on the straight lines).

    A particle with zero segments contributes the factor 1. The interaction
    factor is exp[(i/ħ)⟨I_int⟩] and needs both particles present.
    """
    consts = constants(params, mode)
    out = 0j
    for k, N, start, end, eps, m in ((k1, bc.N1, bc.start1, bc.end1, bc.eps1, params.m1),
                                     (k2, bc.N2, bc.start2, bc.end2, bc.eps2, params.m2)):
        if k == 0:
            continue
        dx = (end - start) * k / N
        out += free_log_kernel(dx, k * eps, m, params.c, consts.phase)
        out += math.log(measure_factor(k, len(dx), consts))
    if order == "first" and k1 > 0 and k2 > 0 and params.coupling != 0.0:
        mean = first_order_interaction_mean(_partial_bc(bc, k1, k2), params, consts, n_nodes)
        out += 1j * mean / consts.phase
    elif order not in ("free", "first"):
        raise ValueError(f"order must be 'free' or 'first', got {order!r}")
    return out


def default_interleaving(N1: int, N2: int) -> list[int]:
    """Alternate particles 1, 2, 1, 2, … finishing the longer one last."""
    seq, a, b = [], 0, 0
    while a < N1 or b < N2:
        if a < N1 and (a <= b or b >= N2):
            seq.append(1)
            a += 1
        else:
            seq.append(2)
            b += 1
    return seq


def accumulate_eigenvalue(bc: BoundaryConditions, params: SystemParams, mode: str = "uniform",
                          order: str = "first", interleaving=None, n_nodes: int = 96,
                          max_segments: int = 3) -> ActionEigenvalue:
    """Λ as the sum of slab increments from Ψ ≡ 1 on the empty lattice up to (N₁, N₂).

    Slabs are added one segment at a time in ``interleaving`` order (a
    sequence of particle labels); by default the particles alternate, the
    reverse of the peeling order of the Hamiltonian slab decomposition.
    """
    if bc.dimension != 2:
        raise CostGuardError("eigenvalue accumulation is implemented for 1+1 dimensions only")
    if bc.N1 > max_segments or bc.N2 > max_segments:
        raise CostGuardError(f"segment counts ({bc.N1}, {bc.N2}) exceed the cost guard N <= {max_segments}")
    consts = constants(params, mode)
    seq = list(interleaving) if interleaving is not None else default_interleaving(bc.N1, bc.N2)
    if sorted(seq) != sorted([1] * bc.N1 + [2] * bc.N2):
        raise ValueError("interleaving must list particle 1 N1 times and particle 2 N2 times")
    k = [0, 0]
    prev = 0j
    value = 0j
    branch = 0
    slabs = []
    for who in seq:
        k[who - 1] += 1
        cur = partial_kernel_log(bc, params, k[0], k[1], mode, order, n_nodes)
        inc, _ = eigenvalue_increment(np.exp(cur), np.exp(prev), consts.log)
        # turns dropped by the wrapped increment relative to the continued log
        branch += int(round((cur.imag - prev.imag - inc.real / consts.log) / (2 * math.pi)))
        value += inc
        slabs.append({"particle": who, "segment": k[who - 1] - 1, "increment": inc,
                      "k1": k[0], "k2": k[1]})
        prev = cur
    return ActionEigenvalue(complex(value), branch, slabs)


@dataclass
class EquivalenceReport:
    mode: str
    order: str
    lattice: tuple
    lambda_: complex
    log_K: complex
    deviation: float
    branch_offset: int
    damping: float | None = None

    def to_record(self) -> dict:
        return {
            "mode": self.mode,
            "order": self.order,
            "lattice": list(self.lattice),
            "lambda_re": self.lambda_.real,
            "lambda_im": self.lambda_.imag,
            "lnK_re": self.log_K.real,
            "lnK_im": self.log_K.imag,
            "deviation": self.deviation,
            "branch_offset": self.branch_offset,
            "damping": self.damping,
        }


def matched_deviation(lam: complex, log_term: complex, hbar: float) -> float:
    """|Λ − (ħ/i)ln K| after removing whole 2πħ turns from the real part."""
    diff = lam - log_term
    turns = round(diff.real / (2 * math.pi * hbar))
    return abs(diff - 2 * math.pi * hbar * turns)


def equivalence_check(bc: BoundaryConditions, params: SystemParams, spec: QuadratureSpec | None = None,
                      order: str = "free", mode: str = "uniform", n_nodes: int = 96) -> EquivalenceReport:
    """Compare Λ (slab accumulation) with (ħ/i) ln K (vertex quadrature)."""
    spec = spec or QuadratureSpec()
    consts = constants(params, mode)
    eig = accumulate_eigenvalue(bc, params, mode, order, n_nodes=n_nodes)
    K = propagator_quadrature(bc, params, spec, order=order, mode=mode)
    if K.value == 0:
        raise NodeCrossingError("propagator vanishes; ln K undefined")
    log_term = consts.log / 1j * complex(np.log(K.value))
    dev = matched_deviation(eig.value, log_term, consts.log)
    return EquivalenceReport(mode, order, (bc.N1, bc.N2, bc.dimension), eig.value, log_term, dev,
                             eig.branch_offset, spec.interaction_damping if order == "first" else None)


def equivalence_ladder(bc: BoundaryConditions, params: SystemParams, dampings=(1.6, 0.8, 0.4),
                       mode: str = "uniform", spec: QuadratureSpec | None = None) -> list[EquivalenceReport]:
    """First-order equivalence on a refinement ladder of the interaction damping."""
    base = spec or QuadratureSpec()
    fields_ = {k: getattr(base, k) for k in base.__dataclass_fields__}
    out = []
    for kappa in dampings:
        fields_["interaction_damping"] = kappa
        out.append(equivalence_check(bc, params, QuadratureSpec(**fields_), "first", mode))
    return out


# -- nonlocality scaling ---------------------------------------------------------------


def default_psi(t, x1, x2):
    """Smooth single-time factor for the product ansatz."""
    return np.exp(-0.5 * (x1**2 + x2**2) / (1.0 + 0.1 * t**2) + 0.7j * x1 * np.cos(t) - 0.3j * x2)


@dataclass
class ScalingReport:
    sigmas: list
    magnitudes: list
    slope: float
    intercept: float
    max_residual: float
    ok: bool
    message: str = ""


def nonlocality_scaling_check(params: SystemParams, sigma_ladder, psi=default_psi, t_probe: float = 1.0,
                              x_probe=(0.3, -0.2), h: float = 1e-3, max_residual: float = 0.02) -> ScalingReport:
    """Fit log|(1/ε)·Δ²Ψ/Ψ| against log σ on the product ansatz Ψ = Π_n ψ(σn, x₁ₙ, x₂ₙ).

    The lattice step in the time label equals σ, so the same-vertex second
    variational derivative carries 1/σ while ψ''/ψ at a fixed physical time
    stays put. The magnitude is interpolated to the time label ``t_probe``
    from the two bracketing vertices.
    """
    sig = np.asarray(sigma_ladder, dtype=float)
    if sig.size < 2 or np.any(sig <= 0):
        raise ValueError("sigma ladder needs at least two positive values")
    if math.log10(sig.max() / sig.min()) < 1.0:
        raise ValueError("sigma ladder must span at least one decade")
    x1, x2 = x_probe
    mags = []
    for s in sig:
        p = params.replace(D=s * params.c)
        # Ψ is a product, so the ratio only involves the probed site; the two
        # sites bracketing t_probe are interpolated linearly in the time label
        n0 = max(1, math.floor(t_probe / p.sigma))
        frac = t_probe / p.sigma - n0
        vals = []
        for n in (n0, n0 + 1):
            t = p.sigma * n
            f0 = psi(t, x1, x2)
            if f0 == 0:
                raise NodeCrossingError("product ansatz vanishes at the probe")
            second = (psi(t, x1 + h, x2) - 2 * f0 + psi(t, x1 - h, x2)) / h**2
            vals.append(abs(second / f0) / p.sigma)
        mags.append((1 - frac) * vals[0] + frac * vals[1])
    mags = np.asarray(mags)
    if np.all(mags == 0) or not np.all(np.isfinite(mags)) or np.any(mags == 0):
        return ScalingReport(sig.tolist(), mags.tolist(), float("nan"), float("nan"), float("nan"), False,
                             "degenerate input: second variational derivative vanishes")
    X, Y = np.log(sig), np.log(mags)
    slope, intercept = np.polyfit(X, Y, 1)
    resid = float(np.max(np.abs(Y - (slope * X + intercept))))
    ok = resid <= max_residual
    msg = "" if ok else f"fit residual {resid:.3g} exceeds {max_residual}"
    return ScalingReport(sig.tolist(), mags.tolist(), float(slope), float(intercept), resid, ok, msg)
