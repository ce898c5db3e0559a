"""Desk-scale evaluation of the two-charge phase-space propagator.

Momentum integrals are Gaussian for the quadratic Hamiltonian and are done
in closed form: every segment contributes a Fresnel slice kernel

    K_ε(Δx) = (mc / 2πħε)^{d/2} e^{iπ(2-d)/4} exp[-(i/ħ)(mc/2)(Δx·Δx/ε + ε)]

times a measure ratio (ħ_phase / ħ_measure)^d. What remains is an integral
over interior vertices. The interaction enters at first order in e₁e₂
through the linearised phase 1 + (i/ħ) I_int(x) of the smeared double sum,
evaluated with the vertices themselves (after p-integration
⟨p₁⟩·⟨p₂⟩/m₁m₂c² = ẋ₁·ẋ₂).

Two numerical routes are provided:

* ``propagator_quadrature``: midpoint tensor-product grids on the real axis,
  oscillations tamed by a Gaussian damping factor and extrapolated to zero
  damping over a three-point ladder.
* ``propagator_monte_carlo``: the vertex contour is rotated by a small angle
  per component, so the free Fresnel weight acquires a real Gaussian part
  that is sampled directly; the residual phase and the interaction phase
  are importance weights.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from fokker.minkowski import SystemParams, metric
from fokker.solver import BoundaryConditions

MODES = ("uniform", "mixed")
N_BATCHES = 16
_PAIR_CHUNK = 4_000_000


class CostGuardError(ValueError):
    """Requested lattice would exceed the desk-scale work budget."""


@dataclass(frozen=True)
class Constants:
    """Which Planck constant sits where in the discretised integral."""

    phase: float
    interior: float
    endpoint: float
    log: float


def constants(params: SystemParams, mode: str = "uniform") -> Constants:
    """``uniform``: ħ̃ everywhere. ``mixed``: phase, endpoint measure and log use ħ, interior measures ħ̃."""
    if mode == "uniform":
        h = params.hbar_tilde
        return Constants(h, h, h, h)
    if mode == "mixed":
        return Constants(params.hbar, params.hbar_tilde, params.hbar, params.hbar)
    raise ValueError(f"unknown constant mode {mode!r}; expected one of {MODES}")


def free_propagator_analytic(delta_x, S: float, m: float, c: float, hbar: float) -> complex:
    """Closed-form free kernel over total parameter S; depends on Δx·Δx and S only."""
    if not S > 0:
        raise ValueError(f"S must be positive, got {S}")
    dx = np.asarray(delta_x, dtype=float)
    d = dx.shape[0]
    x2 = dx[0] ** 2 - float(np.sum(dx[1:] ** 2))
    pref = (m * c / (2.0 * math.pi * hbar * S)) ** (d / 2.0)
    phase = math.pi * (2 - d) / 4.0 - (m * c / (2.0 * hbar)) * (x2 / S + S)
    return complex(pref * np.exp(1j * phase))


def free_log_kernel(delta_x, S: float, m: float, c: float, hbar: float) -> complex:
    """Unwrapped ln K of the free kernel (continuous in S, no branch ambiguity)."""
    dx = np.asarray(delta_x, dtype=float)
    d = dx.shape[0]
    x2 = dx[0] ** 2 - float(np.sum(dx[1:] ** 2))
    re = (d / 2.0) * math.log(m * c / (2.0 * math.pi * hbar * S))
    im = math.pi * (2 - d) / 4.0 - (m * c / (2.0 * hbar)) * (x2 / S + S)
    return complex(re, im)


def measure_factor(n_segments: int, d: int, consts: Constants) -> float:
    """(ħ_phase/ħ_interior)^{d(N-1)} (ħ_phase/ħ_endpoint)^d for one particle."""
    if n_segments == 0:
        return 1.0
    return (consts.phase / consts.interior) ** (d * (n_segments - 1)) * (
        consts.phase / consts.endpoint
    ) ** d


def lattice_free_kernel(delta_x, S: float, n_segments: int, m: float, c: float,
                        consts: Constants) -> complex:
    d = np.asarray(delta_x).shape[0]
    return measure_factor(n_segments, d, consts) * free_propagator_analytic(delta_x, S, m, c, consts.phase)


@dataclass(frozen=True)
class QuadratureSpec:
    """Damped midpoint grids for the vertex integrals.

    ``damping`` is the smallest ladder value κ of the factor
    exp(-κ β (y - ȳ)²), relative to the local Fresnel curvature β, used for
    the free chains. ``nodes_per_axis`` and ``axis_extent`` (half-width in
    local Fresnel lengths 1/√β) are derived from it when left as None. The
    ``interaction_*`` fields configure the coarser grid on which the
    first-order interaction ratio is averaged.
    """

    damping: float = 0.006
    nodes_per_axis: int | None = None
    axis_extent: float | None = None
    ladder_ratio: float = 1.5
    interaction_damping: float = 0.4
    interaction_nodes: int | None = None
    free_tail: float = 1e-12
    interaction_tail: float = 1e-6

    def __post_init__(self):
        if self.damping <= 0 or self.interaction_damping <= 0:
            raise ValueError("damping must be positive for extrapolation")
        for n in (self.nodes_per_axis, self.interaction_nodes):
            if n is not None and (n < 3 or n % 2 == 0):
                raise ValueError(f"nodes per axis must be odd and >= 3, got {n}")
        if self.ladder_ratio <= 1:
            raise ValueError("ladder_ratio must exceed 1")

    def ladder(self, base: float) -> np.ndarray:
        q = self.ladder_ratio
        return base * np.array([1.0, q, q * q])

    def grid(self, kappa: float, tail: float, nodes: int | None, extent: float | None):
        """(nodes, half-width in Fresnel lengths) so damping tails and aliasing stay below ``tail``."""
        lt = math.log(1.0 / tail)
        half = extent if extent is not None else math.sqrt(lt / kappa)
        if nodes is None:
            # aliasing of exp(-(κ+i)β u²) on spacing h ~ exp(-π² κ / ((1+κ²) β h²)); chains stiffen by 1.5
            h = 0.6 * math.pi * math.sqrt(kappa / ((1 + kappa**2) * lt))
            nodes = 2 * int(math.ceil(half / h)) + 1
        return nodes, half


@dataclass
class PropagatorResult:
    value: complex
    stderr: float
    method: str
    lattice: tuple[int, int, int]
    cost: int
    mode: str = "uniform"
    order: str = "free"
    seed: int | None = None
    ladder_monotone: bool = True
    ladder_values: list = field(default_factory=list)

    def __post_init__(self):
        if not (math.isfinite(self.value.real) and math.isfinite(self.value.imag)):
            raise FloatingPointError("non-finite propagator value")
        if self.stderr < 0:
            raise ValueError("stderr must be non-negative")

    def to_record(self, params: SystemParams) -> dict:
        return {
            "method": self.method,
            "lattice": list(self.lattice),
            "params_hash": params_hash(params),
            "re": float(self.value.real),
            "im": float(self.value.imag),
            "stderr": float(self.stderr),
            "cost": int(self.cost),
            "seed": self.seed,
        }


def params_hash(params: SystemParams) -> str:
    payload = json.dumps(
        {k: getattr(params, k) for k in ("m1", "m2", "e1", "e2", "c", "hbar", "D", "eta", "r_min", "dimension")},
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def richardson(values, ratio: float):
    """Extrapolate F(κ), F(qκ), F(q²κ) to κ → 0 assuming F = F₀ + aκ + bκ²."""
    q = ratio
    k = np.array([1.0, q, q * q])
    A = np.vander(k, 3, increasing=True)
    coef = np.linalg.solve(A, np.asarray(values, dtype=complex))
    return complex(coef[0])


# -- per-particle vertex grids ---------------------------------------------------------


@dataclass
class _ParticleLattice:
    start: np.ndarray
    end: np.ndarray
    n_segments: int
    eps: float
    m: float

    @property
    def d(self):
        return self.start.shape[0]

    @property
    def S(self):
        return self.n_segments * self.eps

    def straight(self):
        u = np.linspace(0.0, 1.0, self.n_segments + 1)[:, None]
        return self.start + u * (self.end - self.start)


def _particles(bc: BoundaryConditions, params: SystemParams):
    return (
        _ParticleLattice(bc.start1, bc.end1, bc.N1, bc.eps1, params.m1),
        _ParticleLattice(bc.start2, bc.end2, bc.N2, bc.eps2, params.m2),
    )


def _slice_1d(delta, eps, sign, alpha):
    """One component of the normalised Fresnel slice kernel (integrates to 1)."""
    return np.sqrt(alpha / (math.pi * eps)) * np.exp(1j * sign * math.pi / 4 - 1j * sign * alpha * delta**2 / eps)


def _axis_tensor(a, b, n_seg, eps, sign, alpha, kappa, nodes, half):
    """Damped chain weights of one component over the interior-vertex grid.

    Returns (offsets, tensor): node offsets from the straight line (shared
    by all vertices) and the weight tensor of shape (nodes,)*(n_seg-1),
    including the midpoint cell volumes.
    """
    beta = 2.0 * alpha / eps
    fl = 1.0 / math.sqrt(beta)
    u = (np.arange(nodes) - (nodes - 1) / 2) * (2.0 * half / (nodes - 1)) * fl
    h = u[1] - u[0] if nodes > 1 else 1.0
    nv = n_seg - 1
    ybar = a + (b - a) * np.arange(1, n_seg) / n_seg
    damp = np.exp(-kappa * beta * u**2) * h
    if nv == 0:
        return u, np.asarray(_slice_1d(b - a, eps, sign, alpha))
    tensor = _slice_1d(ybar[0] + u - a, eps, sign, alpha) * damp
    for j in range(1, nv):
        step = _slice_1d((ybar[j] + u)[None, :] - (ybar[j - 1] + u)[:, None], eps, sign, alpha)
        tensor = tensor[..., :, None] * step.reshape((1,) * (j - 1) + step.shape) * damp
    tensor = tensor * _slice_1d(b - (ybar[-1] + u), eps, sign, alpha).reshape((1,) * (nv - 1) + (nodes,))
    return u, tensor


def _particle_configs(part: _ParticleLattice, alpha, kappa, nodes, half):
    """All vertex configurations on the product grid with their free weights.

    Returns (V, F): V of shape (M, N+1, d) and F of shape (M,), where the
    weight excludes the constant phase exp(-i mc S/2ħ) and measure factors.
    """
    d, nv = part.d, part.n_segments - 1
    g = metric(d)
    base = part.straight()
    if nv == 0:
        w = np.prod([_slice_1d(part.end[c] - part.start[c], part.eps, g[c], alpha) for c in range(d)])
        return base[None], np.array([w])
    axes_u, axes_t = [], []
    for c in range(d):
        u, t = _axis_tensor(part.start[c], part.end[c], part.n_segments, part.eps, g[c], alpha,
                            kappa, nodes, half)
        axes_u.append(u)
        axes_t.append(t)
    # full index order: (c0 v1 .. v_nv, c1 v1 .. v_nv, ...)
    F = axes_t[0]
    for c in range(1, d):
        F = np.multiply.outer(F, axes_t[c])
    M = F.size
    V = np.broadcast_to(base, (M,) + base.shape).copy()
    shape = (nodes,) * (nv * d)
    idx = np.indices(shape).reshape(nv * d, -1)
    for c in range(d):
        for j in range(nv):
            V[:, j + 1, c] += axes_u[c][idx[c * nv + j]]
    return V, F.reshape(-1)


def pair_interaction(V1, V2, coupling: float, eta: float, outer: bool = True):
    """Smeared interaction e₁e₂ Σ δ_η(s²) Δx₁·Δx₂ for batches of (possibly complex) vertex sets.

    ``outer=True`` evaluates every combination (M1, M2); otherwise V1 and V2
    are paired row by row.
    """
    d = V1.shape[-1]
    g = metric(d)
    dx1, dx2 = np.diff(V1, axis=1), np.diff(V2, axis=1)
    mid1, mid2 = 0.5 * (V1[:, 1:] + V1[:, :-1]), 0.5 * (V2[:, 1:] + V2[:, :-1])
    norm = 1.0 / (eta * math.sqrt(2.0 * math.pi))
    M1, M2 = V1.shape[0], V2.shape[0]
    dtype = np.result_type(V1, V2, complex)
    if not outer:
        out = np.zeros(M1, dtype=dtype)
        for n in range(dx1.shape[1]):
            for m in range(dx2.shape[1]):
                sep = mid1[:, n] - mid2[:, m]
                s2 = np.sum(sep * sep * g, axis=-1)
                out += norm * np.exp(-0.5 * (s2 / eta) ** 2) * np.sum(dx1[:, n] * dx2[:, m] * g, axis=-1)
        return coupling * out
    out = np.zeros((M1, M2), dtype=dtype)
    rows = max(1, _PAIR_CHUNK // max(M2, 1))
    for lo in range(0, M1, rows):
        hi = min(M1, lo + rows)
        for n in range(dx1.shape[1]):
            for m in range(dx2.shape[1]):
                sep = mid1[lo:hi, n, None, :] - mid2[None, :, m, :]
                s2 = np.sum(sep * sep * g, axis=-1)
                dd = (dx1[lo:hi, n] * g) @ dx2[:, m].T
                out[lo:hi] += norm * np.exp(-0.5 * (s2 / eta) ** 2) * dd
    return coupling * out


def _check_lattice(bc: BoundaryConditions, params: SystemParams, max_segments: int):
    if bc.dimension != 2 or params.dimension != 2:
        raise CostGuardError("vertex integration is implemented for 1+1 dimensions only")
    if bc.N1 > max_segments or bc.N2 > max_segments:
        raise CostGuardError(f"segment counts ({bc.N1}, {bc.N2}) exceed the cost guard N <= {max_segments}")


def _free_product(parts, params, consts):
    """Exact lattice free kernel K₁K₂ including measure factors."""
    out = 1.0 + 0j
    for p in parts:
        out *= lattice_free_kernel(p.end - p.start, p.S, p.n_segments, p.m, params.c, consts)
    return out


def propagator_quadrature(
    bc: BoundaryConditions,
    params: SystemParams,
    spec: QuadratureSpec | None = None,
    order: str = "free",
    mode: str = "uniform",
    max_points: int = 60_000_000,
) -> PropagatorResult:
    """K from damped midpoint quadrature over interior vertices, extrapolated to zero damping."""
    spec = spec or QuadratureSpec()
    if order not in ("free", "first"):
        raise ValueError(f"order must be 'free' or 'first', got {order!r}")
    _check_lattice(bc, params, 3)
    consts = constants(params, mode)
    parts = _particles(bc, params)
    c = params.c
    cost = 0
    monotone = True

    # free chains, one component at a time
    nodes, half = spec.grid(spec.damping, spec.free_tail, spec.nodes_per_axis, spec.axis_extent)
    value = 1.0 + 0j
    ladder_log = []
    for part in parts:
        alpha = part.m * c / (2.0 * consts.phase)
        g = metric(part.d)
        if part.n_segments - 1 > 0 and nodes ** (part.n_segments - 1) > max_points:
            raise CostGuardError("free quadrature grid exceeds the point budget")
        for comp in range(part.d):
            vals = []
            for kappa in spec.ladder(spec.damping):
                _, t = _axis_tensor(part.start[comp], part.end[comp], part.n_segments, part.eps,
                                    g[comp], alpha, kappa, nodes, half)
                vals.append(complex(np.sum(t)))
                cost += t.size
            mags = np.abs(vals)
            monotone &= bool(np.all(np.diff(mags) >= 0) or np.all(np.diff(mags) <= 0))
            ladder_log.append(vals)
            value *= richardson(vals, spec.ladder_ratio)
        value *= np.exp(-1j * part.m * c * part.S / (2.0 * consts.phase))
        value *= measure_factor(part.n_segments, part.d, consts)

    if order == "first" and params.coupling != 0.0:
        ratio, extra, mono = _interaction_ratio(parts, params, consts, spec, max_points)
        value *= ratio
        cost += extra
        monotone &= mono
    if not monotone:
        warnings.warn("damping extrapolation ladder is not monotone", RuntimeWarning, stacklevel=2)
    return PropagatorResult(
        complex(value), 0.0, "quadrature", (bc.N1, bc.N2, bc.dimension), cost, mode, order,
        None, monotone, [[complex(v) for v in row] for row in ladder_log],
    )


def _interaction_ratio(parts, params, consts, spec, max_points):
    """Extrapolated ⟨1 + i I_int/ħ⟩ over the damped free weight."""
    nodes, half = spec.grid(spec.interaction_damping, spec.interaction_tail, spec.interaction_nodes, None)
    sizes = [nodes ** ((p.n_segments - 1) * p.d) for p in parts]
    if sizes[0] * sizes[1] > max_points:
        raise CostGuardError(
            f"first-order grid of {sizes[0] * sizes[1]:.3g} points exceeds the budget {max_points:.3g}"
        )
    vals = []
    for kappa in spec.ladder(spec.interaction_damping):
        V1, F1 = _particle_configs(parts[0], parts[0].m * params.c / (2 * consts.phase), kappa, nodes, half)
        V2, F2 = _particle_configs(parts[1], parts[1].m * params.c / (2 * consts.phase), kappa, nodes, half)
        I = pair_interaction(V1, V2, params.coupling, params.eta)
        num = F1 @ (1.0 + 1j * I / consts.phase) @ F2
        vals.append(complex(num / (F1.sum() * F2.sum())))
    mags = np.abs(np.array(vals) - 1.0)
    mono = bool(np.all(np.diff(mags) >= 0) or np.all(np.diff(mags) <= 0))
    return richardson(vals, spec.ladder_ratio), 3 * sizes[0] * sizes[1], mono


# -- rotated-contour importance sampling -----------------------------------------------


def _chain_laplacian(part: _ParticleLattice) -> np.ndarray:
    nv = part.n_segments - 1
    return (2.0 * np.eye(nv) - np.eye(nv, k=1) - np.eye(nv, k=-1)) / part.eps


def rotated_sampler(part: _ParticleLattice, alpha: float, theta: float):
    """Sampling data for the free weight on the contour ξ = e^{-isθ} ζ.

    Component with metric sign s has free exponent -isα ξᵀAξ, which becomes
    -α(sin 2θ + is cos 2θ) ζᵀAζ. The real part defines the sampling Gaussian
    (covariance (2α sin 2θ A)⁻¹); the leftover phase exp(-isα cos 2θ ζᵀAζ)
    is an importance weight whose mean is (1 + is cot 2θ)^(-nv/2).
    For 0 < θ < π/8 the smeared interaction still decays along the deformed
    contour, so the deformation is exact.
    """
    if not 0.0 < theta < math.pi / 8:
        raise ValueError("contour rotation must lie in (0, π/8)")
    nv, d = part.n_segments - 1, part.d
    g = metric(d)
    if nv == 0:
        return None, np.ones(d, dtype=complex), np.zeros(d), np.ones(d, dtype=complex)
    A = _chain_laplacian(part)
    L = np.linalg.cholesky(np.linalg.inv(2.0 * alpha * math.sin(2 * theta) * A))
    rot = np.exp(-1j * g * theta)
    osc = alpha * math.cos(2 * theta) * g
    mean_phase = (1.0 + 1j * g / math.tan(2 * theta)) ** (-nv / 2.0)
    return L, rot, osc, mean_phase


def _sample_particle(part, alpha, theta, tau):
    """Complex vertex sets and residual phase weights from standard normals ``tau``."""
    L, rot, osc, mean_phase = rotated_sampler(part, alpha, theta)
    base = part.straight().astype(complex)
    n = tau.shape[0]
    V = np.broadcast_to(base, (n,) + base.shape).copy()
    if L is None:
        return V, np.ones(n, dtype=complex), complex(np.prod(mean_phase))
    A = _chain_laplacian(part)
    zeta = np.einsum("ij,mjc->mic", L, tau)
    V[:, 1:-1, :] += zeta * rot
    quad = np.einsum("mic,ij,mjc->mc", zeta, A, zeta)
    rho = np.exp(-1j * np.sum(osc * quad, axis=-1))
    return V, rho, complex(np.prod(mean_phase))


def propagator_monte_carlo(
    bc: BoundaryConditions,
    params: SystemParams,
    samples: int,
    seed: int,
    order: str = "first",
    mode: str = "uniform",
    theta: float = math.pi / 10,
) -> PropagatorResult:
    """Importance sampling of interior vertices from the (rotated) free Gaussian.

    K = K_free · E_q[ρ g] / E_q[ρ], with q the sampling Gaussian, ρ the
    residual free phase (E_q[ρ] known exactly) and g the first-order
    interaction phase. Batch b draws from ``default_rng([seed, b])`` in a
    single call, so a run with more samples extends the draws of a smaller
    one. The standard error is the spread of the 16 batch means.
    """
    _check_lattice(bc, params, 8)
    if samples < N_BATCHES:
        raise ValueError(f"need at least {N_BATCHES} samples")
    if order not in ("free", "first"):
        raise ValueError(f"order must be 'free' or 'first', got {order!r}")
    consts = constants(params, mode)
    parts = _particles(bc, params)
    k_free = _free_product(parts, params, consts)
    per_batch = samples // N_BATCHES
    means = np.empty(N_BATCHES, dtype=complex)
    for b in range(N_BATCHES):
        rng = np.random.default_rng([seed, b])
        widths = [(p.n_segments - 1) * p.d for p in parts]
        draws = rng.standard_normal((per_batch, sum(widths)))
        Vs, weight, norm = [], np.ones(per_batch, dtype=complex), 1.0 + 0j
        lo = 0
        for p, w in zip(parts, widths):
            alpha = p.m * params.c / (2.0 * consts.phase)
            tau = draws[:, lo:lo + w].reshape(per_batch, p.n_segments - 1, p.d)
            lo += w
            V, rho, mp = _sample_particle(p, alpha, theta, tau)
            Vs.append(V)
            weight *= rho
            norm *= mp
        if order == "first" and params.coupling != 0.0:
            I = pair_interaction(Vs[0], Vs[1], params.coupling, params.eta, outer=False)
            weight *= 1.0 + 1j * I / consts.phase
        means[b] = np.mean(weight) / norm
    mean = means.mean()
    spread = math.sqrt(float(np.sum(np.abs(means - mean) ** 2)) / (N_BATCHES - 1))
    stderr = abs(k_free) * spread / math.sqrt(N_BATCHES)
    return PropagatorResult(
        complex(k_free * mean), stderr, "monte_carlo", (bc.N1, bc.N2, bc.dimension),
        per_batch * N_BATCHES, mode, order, seed,
    )
