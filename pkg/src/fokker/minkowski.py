"""Spacetime geometry on broken world lines.

Conventions: signature (+, -, -, ...), component 0 holds ct so every
component carries length units. The affine parameter of a world line is
measured in the same units (a particle at rest with ẋ = (1, 0) has s = ct).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

FourVector = np.ndarray


class NonTimelikeSegmentError(ValueError):
    """A world-line segment is spacelike, lightlike or past-directed."""


class SingularCrossingError(ValueError):
    """A light-cone crossing lies closer than the near-collision cutoff."""

    def __init__(self, message: str, segment: int | None = None, partner: int | None = None):
        super().__init__(message)
        self.segment = segment
        self.partner = partner


def metric(d: int) -> np.ndarray:
    g = -np.ones(d)
    g[0] = 1.0
    return g


def as_four_vector(x, d: int | None = None) -> FourVector:
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"four-vector must be one-dimensional, got shape {v.shape}")
    if d is not None and v.shape[0] != d:
        raise ValueError(f"expected dimension {d}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise ValueError("four-vector components must be finite")
    return v


def minkowski_dot(a, b) -> float | np.ndarray:
    """Minkowski product a⁰b⁰ − Σ aⁱbⁱ over the last axis (broadcasts)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")
    out = a[..., 0] * b[..., 0] - np.sum(a[..., 1:] * b[..., 1:], axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def lower(v: np.ndarray) -> np.ndarray:
    """Lower (or raise) the index of vectors stored along the last axis."""
    v = np.array(v, dtype=float, copy=True)
    v[..., 1:] *= -1.0
    return v


def interval_squared(x, y) -> float | np.ndarray:
    dx = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return minkowski_dot(dx, dx)


@dataclass(frozen=True)
class SystemParams:
    """Physical constants and numerical regularisation of the two-charge system.

    ``sigma = D / c`` and ``hbar_tilde = hbar * sigma`` are derived on
    construction; passing inconsistent values raises.
    """

    m1: float
    m2: float
    e1: float
    e2: float
    c: float = 1.0
    hbar: float = 1.0
    D: float = 1.0
    eta: float = 0.05
    r_min: float = 1e-6
    dimension: int = 2
    sigma: float = field(default=float("nan"))
    hbar_tilde: float = field(default=float("nan"))

    def __post_init__(self):
        for name in ("m1", "m2", "c", "hbar", "eta", "r_min", "D"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")
        if self.dimension not in (2, 4):
            raise ValueError(f"dimension must be 2 or 4, got {self.dimension}")
        sigma = self.D / self.c
        hbar_tilde = self.hbar * sigma
        if not math.isnan(self.sigma) and not math.isclose(self.sigma, sigma, rel_tol=1e-12):
            raise ValueError(f"sigma={self.sigma} inconsistent with D/c={sigma}")
        if not math.isnan(self.hbar_tilde) and not math.isclose(
            self.hbar_tilde, hbar_tilde, rel_tol=1e-12
        ):
            raise ValueError(f"hbar_tilde={self.hbar_tilde} inconsistent with hbar*sigma={hbar_tilde}")
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "hbar_tilde", hbar_tilde)

    @property
    def coupling(self) -> float:
        return self.e1 * self.e2

    def replace(self, **changes) -> "SystemParams":
        fields = {
            k: getattr(self, k)
            for k in ("m1", "m2", "e1", "e2", "c", "hbar", "D", "eta", "r_min", "dimension")
        }
        fields.update(changes)
        return SystemParams(**fields)


@dataclass(frozen=True)
class WorldLine:
    """Broken line with N+1 vertices on a uniform affine-parameter grid of step ``epsilon``."""

    vertices: np.ndarray
    epsilon: float

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[0] < 2:
            raise ValueError(f"need at least two vertices of shape (N+1, d), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("vertices must be finite")
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @classmethod
    def straight(cls, start, end, n_segments: int, epsilon: float | None = None) -> "WorldLine":
        """Uniformly spaced straight line; ``epsilon`` defaults to proper length / N."""
        start = np.asarray(start, dtype=float)
        end = np.asarray(end, dtype=float)
        u = np.linspace(0.0, 1.0, n_segments + 1)[:, None]
        verts = start + u * (end - start)
        if epsilon is None:
            tau2 = minkowski_dot(end - start, end - start)
            if tau2 <= 0:
                raise NonTimelikeSegmentError("straight line between non-timelike endpoints")
            epsilon = math.sqrt(tau2) / n_segments
        return cls(verts, epsilon)

    @property
    def n_segments(self) -> int:
        return self.vertices.shape[0] - 1

    @property
    def dimension(self) -> int:
        return self.vertices.shape[1]

    @property
    def total_parameter(self) -> float:
        return self.n_segments * self.epsilon

    @property
    def displacements(self) -> np.ndarray:
        return np.diff(self.vertices, axis=0)

    @property
    def velocities(self) -> np.ndarray:
        return self.displacements / self.epsilon

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.vertices[1:] + self.vertices[:-1])

    def with_vertices(self, vertices) -> "WorldLine":
        return WorldLine(vertices, self.epsilon)

    def transformed(self, matrix: np.ndarray, shift=None) -> "WorldLine":
        """Apply x -> Λ x + a to every vertex."""
        v = self.vertices @ np.asarray(matrix, dtype=float).T
        if shift is not None:
            v = v + np.asarray(shift, dtype=float)
        return WorldLine(v, self.epsilon)

    def reversed(self) -> "WorldLine":
        return WorldLine(self.vertices[::-1], self.epsilon)

    def check_timelike(self) -> None:
        dx = self.displacements
        tau2 = minkowski_dot(dx, dx)
        bad = np.flatnonzero((tau2 <= 0) | (dx[:, 0] <= 0))
        if bad.size:
            n = int(bad[0])
            raise NonTimelikeSegmentError(
                f"segment {n} is not timelike future-directed (Δx·Δx={tau2[n]:.3e}, Δct={dx[n, 0]:.3e})"
            )


def proper_length(line: WorldLine) -> float:
    line.check_timelike()
    dx = line.displacements
    return float(np.sum(np.sqrt(minkowski_dot(dx, dx))))


class Crossing(NamedTuple):
    segment: int
    u: float
    point: np.ndarray
    r: float


def lightcone_crossings(point, line: WorldLine, r_min: float = 0.0) -> list[Crossing]:
    """All parameters where the broken line meets the light cone of ``point``.

    Each segment x(u) = a + uΔ gives (a - P + uΔ)² = A u² + 2B u + C = 0,
    solved in closed form. Both retarded and advanced roots are returned,
    ordered by segment then u. u ranges over [0, 1), the final segment also
    accepts u = 1.
    """
    p = as_four_vector(point, line.dimension)
    line.check_timelike()
    a = line.vertices[:-1]
    delta = np.diff(line.vertices, axis=0)
    w = a - p
    A = minkowski_dot(delta, delta)
    B = minkowski_dot(w, delta)
    C = minkowski_dot(w, w)
    scale = np.maximum(np.maximum(np.abs(A), np.abs(B)), np.maximum(np.abs(C), 1e-300))
    bad = np.flatnonzero(np.abs(A) <= 1e-14 * scale)
    if bad.size:
        n = int(bad[0])
        raise SingularCrossingError(f"degenerate light-cone quadratic on segment {n}", segment=n)
    disc = B * B - A * C
    n_seg = line.n_segments
    out: list[Crossing] = []
    for n in np.flatnonzero(disc >= 0):
        sq = math.sqrt(disc[n])
        if sq == 0.0:
            roots = [-B[n] / A[n]]
        else:
            q = -(B[n] + math.copysign(sq, B[n]))
            roots = sorted({q / A[n], C[n] / q})
        upper = 1.0 if n == n_seg - 1 else 1.0 - 1e-15
        for u in roots:
            if u < 0.0 or u > upper:
                continue
            x = a[n] + u * delta[n]
            r = float(np.linalg.norm(x[1:] - p[1:]))
            if r < max(r_min, 0.0) or r == 0.0:
                raise SingularCrossingError(
                    f"light-cone crossing at spatial distance {r:.3e} below r_min={r_min:.3e} "
                    f"on segment {n}",
                    segment=int(n),
                )
            out.append(Crossing(int(n), float(u), x, r))
    return out


def boost_matrix(velocity) -> np.ndarray:
    """Pure boost with 3-velocity ``velocity`` in units of c (length d-1)."""
    beta = np.asarray(velocity, dtype=float)
    d = beta.shape[0] + 1
    b2 = float(beta @ beta)
    if b2 >= 1.0:
        raise ValueError("|v| < c required")
    L = np.eye(d)
    if b2 == 0.0:
        return L
    gamma = 1.0 / math.sqrt(1.0 - b2)
    L[0, 0] = gamma
    L[0, 1:] = gamma * beta
    L[1:, 0] = gamma * beta
    L[1:, 1:] += (gamma - 1.0) * np.outer(beta, beta) / b2
    return L


def rotation_matrix(spatial_rotation) -> np.ndarray:
    R = np.asarray(spatial_rotation, dtype=float)
    d = R.shape[0] + 1
    L = np.eye(d)
    L[1:, 1:] = R
    return L


def random_poincare(rng: np.random.Generator, d: int, max_speed: float = 0.9, max_shift: float = 10.0):
    """Random (matrix, shift) pair: rotation, boost with |v| ≤ max_speed, translation."""
    ds = d - 1
    direction = rng.normal(size=ds)
    direction /= np.linalg.norm(direction)
    speed = max_speed * rng.uniform(0.0, 1.0)
    L = boost_matrix(speed * direction)
    if ds > 1:
        q, r = np.linalg.qr(rng.normal(size=(ds, ds)))
        q = q * np.sign(np.diag(r))
        if np.linalg.det(q) < 0:
            q[:, 0] *= -1
        L = L @ rotation_matrix(q)
    shift = rng.uniform(-max_shift, max_shift, size=d)
    return L, shift
