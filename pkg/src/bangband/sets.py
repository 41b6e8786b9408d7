"""Pointwise control sets with membership, extreme-point and splitting oracles.

Two variants are supported: axis-aligned boxes (full oracle surface) and
vertex-listed polytopes (membership, linear minimization and defect only).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError
from .mesh import ControlField, DualField, _fsum


@dataclass(frozen=True, eq=False)
class Box:
    """Product of closed intervals [lo_j, hi_j] with lo < hi componentwise."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lo and hi must be m-vectors of equal length")
        if not np.all(lo < hi):
            raise ValueError("box needs lo < hi componentwise")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def m(self) -> int:
        return self.lo.size

    @property
    def vertices(self) -> np.ndarray:
        corners = itertools.product(*zip(self.lo, self.hi))
        return np.array(sorted(corners))

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))

    @property
    def sup_norm(self) -> float:
        return float(max(np.linalg.norm(v) for v in self.vertices))

    def default_tol(self) -> float:
        # the a.e.-extreme notion has no finite analogue; defects are
        # measured against a diameter-relative tolerance
        return 1e-9 * self.diameter

    def __eq__(self, other):
        if not isinstance(other, Box):
            return NotImplemented
        return (np.array_equal(self.lo, other.lo)
                and np.array_equal(self.hi, other.hi))

    def __hash__(self):
        return hash((self.lo.tobytes(), self.hi.tobytes()))


@dataclass(frozen=True, eq=False)
class Polytope:
    """Convex hull of an explicit, deduplicated list of extreme points."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[0] < 2:
            raise ValueError("polytope needs at least two vertices")
        v = np.array(sorted(map(tuple, v)))
        keep = np.ones(len(v), dtype=bool)
        for i in range(1, len(v)):
            if np.array_equal(v[i], v[i - 1]):
                keep[i] = False
        v = v[keep]
        if v.shape[0] < 2:
            raise ValueError("polytope collapses to a single point")
        for i in range(v.shape[0]):
            others = np.delete(v, i, axis=0)
            if _in_hull(others, v[i]) <= 1e-12:
                raise ValueError(f"vertex {v[i]} is not an extreme point")
        v.flags.writeable = False
        object.__setattr__(self, "vertices", v)

    @property
    def m(self) -> int:
        return self.vertices.shape[1]

    @property
    def diameter(self) -> float:
        v = self.vertices
        return float(max(np.linalg.norm(a - b) for a in v for b in v))

    @property
    def sup_norm(self) -> float:
        return float(max(np.linalg.norm(v) for v in self.vertices))

    def default_tol(self) -> float:
        return 1e-9 * self.diameter

    def __eq__(self, other):
        if not isinstance(other, Polytope):
            return NotImplemented
        return np.array_equal(self.vertices, other.vertices)

    def __hash__(self):
        return hash(self.vertices.tobytes())


def _in_hull(vertices: np.ndarray, x: np.ndarray) -> float:
    """Smallest L-infinity defect of representing x as a convex combination."""
    from scipy.optimize import linprog

    k, m = vertices.shape
    # variables: (lambda_1..k, s); minimize s subject to |V^T lam - x| <= s
    c = np.zeros(k + 1)
    c[-1] = 1.0
    a_ub = np.zeros((2 * m, k + 1))
    a_ub[:m, :k] = vertices.T
    a_ub[:m, -1] = -1.0
    a_ub[m:, :k] = -vertices.T
    a_ub[m:, -1] = -1.0
    b_ub = np.concatenate([x, -x])
    a_eq = np.zeros((1, k + 1))
    a_eq[0, :k] = 1.0
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[1.0],
                  bounds=[(0, None)] * k + [(0, None)], method="highs")
    if not res.success:
        raise RuntimeError(f"hull membership LP failed: {res.message}")
    return float(res.fun)


def contains(cset, v, tol: float = 0.0) -> bool:
    """Membership test, within tol (infinity norm for boxes, hull LP otherwise)."""
    if tol < 0:
        raise ValueError("tol must be >= 0")
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if isinstance(cset, Box):
        return bool(np.all(v >= cset.lo - tol) and np.all(v <= cset.hi + tol))
    return _in_hull(cset.vertices, v) <= tol + 1e-12


def lmo_pointwise(cset, c) -> np.ndarray:
    """Vertex minimizing c . v; ties resolved to the lexicographically smallest."""
    c = np.atleast_1d(np.asarray(c, dtype=float))
    if isinstance(cset, Box):
        # per-component argmin; on ties the lexicographic minimum is lo
        return np.where(c < 0, cset.hi, cset.lo).astype(float)
    verts = cset.vertices  # already lexicographically sorted
    dots = verts @ c
    return verts[int(np.argmin(dots))].copy()


def lmo_field(cset, sigma: DualField) -> ControlField:
    """Cellwise linear minimization: one vertex per cell."""
    if isinstance(cset, Box):
        vals = np.where(sigma.values < 0, cset.hi, cset.lo)
        return ControlField(sigma.mesh, vals)
    dots = sigma.values @ cset.vertices.T
    idx = np.argmin(dots, axis=1)
    return ControlField(sigma.mesh, cset.vertices[idx])


def vertex_distances(cset, u: ControlField) -> np.ndarray:
    """Per-cell infinity-norm distance to the nearest vertex of the set."""
    verts = cset.vertices
    d = np.abs(u.values[:, None, :] - verts[None, :, :]).max(axis=2)
    return d.min(axis=1)


def extreme_defect(u: ControlField, cset, tol: float | None = None) -> float:
    """Measure of the cells farther than tol from every vertex of the set."""
    if tol is None:
        tol = cset.default_tol()
    if tol < 0:
        raise ValueError("tol must be >= 0")
    bad = vertex_distances(cset, u) > tol
    return _fsum(u.mesh.cell_measure[bad])


def kkt_residual_pointwise(box: Box, u_x, sigma_x, tol: float | None = None) -> float:
    """Distance of -sigma to the normal cone of the box at u_x (max over components)."""
    if not isinstance(box, Box):
        raise TypeError("kkt residual is only defined for boxes")
    if tol is None:
        tol = box.default_tol()
    u_x = np.atleast_1d(np.asarray(u_x, dtype=float))
    s = np.atleast_1d(np.asarray(sigma_x, dtype=float))
    if not contains(box, u_x, tol):
        raise PreconditionError("point lies outside the box")
    at_lo = u_x <= box.lo + tol
    at_hi = u_x >= box.hi - tol
    res = np.abs(s)                        # interior: N = {0}
    res = np.where(at_lo, np.maximum(-s, 0.0), res)   # N = (-inf, 0]
    res = np.where(at_hi, np.maximum(s, 0.0), res)    # N = [0, inf)
    res = np.where(at_lo & at_hi, 0.0, res)           # degenerate: N = R
    return float(res.max())


def kkt_residual_field(box: Box, u: ControlField, sigma: DualField,
                       tol: float | None = None) -> np.ndarray:
    """Vectorized per-cell KKT residual (same rule as the pointwise version)."""
    if tol is None:
        tol = box.default_tol()
    uv, s = u.values, sigma.values
    if np.any(uv < box.lo - tol) or np.any(uv > box.hi + tol):
        raise PreconditionError("field leaves the box")
    at_lo = uv <= box.lo + tol
    at_hi = uv >= box.hi - tol
    res = np.abs(s)
    res = np.where(at_lo, np.maximum(-s, 0.0), res)
    res = np.where(at_hi, np.maximum(s, 0.0), res)
    res = np.where(at_lo & at_hi, 0.0, res)
    return res.max(axis=1)


def midpoint_split(box: Box, u_x, tol: float | None = None):
    """Endpoints of the longest admissible centered segment through u_x.

    Returns None when u_x is (within tol) a vertex; otherwise splits along
    the component with maximal two-sided slack, which maximizes |beta-alpha|.
    """
    if tol is None:
        tol = box.default_tol()
    u_x = np.atleast_1d(np.asarray(u_x, dtype=float))
    if not contains(box, u_x, tol):
        raise PreconditionError("point lies outside the box")
    lo_slack = u_x - box.lo
    hi_slack = box.hi - u_x
    if np.all(np.minimum(lo_slack, hi_slack) <= tol):
        return None
    slack = np.minimum(lo_slack, hi_slack)
    j = int(np.argmax(slack))
    s = slack[j]
    alpha = u_x.copy()
    beta = u_x.copy()
    alpha[j] -= s
    beta[j] += s
    return alpha, beta


@dataclass
class RadiusEstimates:
    """Sampling-based lower bounds on the stability radii of a reference control.

    Sampling can only certify a radius, never refute it, so every entry is a
    lower bound tagged with the probe that produced it.
    """

    r_hat: float = 0.0         # strict minimality
    gamma_hat: float = 0.0     # stability under linear perturbations
    kappa_hat: float = 0.0     # subregularity
    r_check: float = 0.0       # critical radius
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("r_hat", "gamma_hat", "kappa_hat", "r_check"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def record(self, name: str, value: float, probe: str):
        if value < 0 or math.isnan(value):
            raise ValueError("radius estimates must be nonnegative")
        setattr(self, name, value)
        self.provenance[name] = probe
