"""Discretized 1D measure space and piecewise-constant field arithmetic.

Controls live in a discrete surrogate of L1, dual quantities (switching
fields, perturbations, test functionals) in a surrogate of L-infinity.
All integrals reduce to exact finite sums; norms and pairings accumulate
through ``math.fsum`` so that equality-style checks hold to 1e-10.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyBankError, IncompatibleFieldError


def _fsum(a: np.ndarray) -> float:
    return math.fsum(a.ravel().tolist())


@dataclass(frozen=True, eq=False)
class Mesh1D:
    """Partition of a bounded interval into cells of positive Lebesgue measure."""

    boundaries: np.ndarray  # shape (n_cells + 1,), strictly increasing

    def __post_init__(self):
        b = np.asarray(self.boundaries, dtype=float)
        if b.ndim != 1 or b.size < 2:
            raise ValueError("mesh needs at least one cell")
        if not np.all(np.diff(b) > 0):
            raise ValueError("cell boundaries must be strictly increasing")
        if not np.all(np.isfinite(b)):
            raise ValueError("cell boundaries must be finite")
        b = b.copy()
        b.flags.writeable = False
        object.__setattr__(self, "boundaries", b)

    @classmethod
    def uniform(cls, a: float, b: float, n_cells: int) -> "Mesh1D":
        if n_cells < 1:
            raise ValueError("n_cells must be >= 1")
        return cls(np.linspace(a, b, n_cells + 1))

    @property
    def a(self) -> float:
        return float(self.boundaries[0])

    @property
    def b(self) -> float:
        return float(self.boundaries[-1])

    @property
    def n_cells(self) -> int:
        return self.boundaries.size - 1

    @property
    def cell_measure(self) -> np.ndarray:
        return np.diff(self.boundaries)

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.boundaries[:-1] + self.boundaries[1:])

    @property
    def total_measure(self) -> float:
        return self.b - self.a

    def refine(self, levels: int = 1) -> "Mesh1D":
        """Bisect every cell ``levels`` times; total measure is preserved exactly."""
        if levels < 0:
            raise ValueError("levels must be >= 0")
        b = self.boundaries
        for _ in range(levels):
            mids = 0.5 * (b[:-1] + b[1:])
            out = np.empty(2 * b.size - 1)
            out[0::2] = b
            out[1::2] = mids
            b = out
        return Mesh1D(b)

    def is_refinement_of(self, coarse: "Mesh1D") -> bool:
        if coarse is self:
            return True
        idx = np.searchsorted(self.boundaries, coarse.boundaries)
        if idx[-1] >= self.boundaries.size:
            return False
        return bool(np.all(self.boundaries[idx] == coarse.boundaries))

    def __eq__(self, other):
        if not isinstance(other, Mesh1D):
            return NotImplemented
        return np.array_equal(self.boundaries, other.boundaries)

    __hash__ = object.__hash__


@dataclass(frozen=True, eq=False)
class _Field:
    mesh: Mesh1D
    values: np.ndarray  # shape (n_cells, m)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v.reshape(-1, 1)
        if v.ndim != 2 or v.shape[0] != self.mesh.n_cells:
            raise IncompatibleFieldError(
                f"value count {v.shape} does not match mesh with {self.mesh.n_cells} cells"
            )
        v = np.ascontiguousarray(v)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @classmethod
    def constant(cls, mesh: Mesh1D, value) -> "_Field":
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(mesh, np.tile(value, (mesh.n_cells, 1)))

    @classmethod
    def from_function(cls, mesh: Mesh1D, fn) -> "_Field":
        """Sample ``fn`` at cell midpoints (one scalar or m-vector per midpoint)."""
        vals = np.array([np.atleast_1d(fn(t)) for t in mesh.midpoints], dtype=float)
        return cls(mesh, vals)

    def with_values(self, values) -> "_Field":
        return type(self)(self.mesh, values)


class ControlField(_Field):
    """Piecewise-constant m-vector control; an element of the discrete L1 space."""


class DualField(_Field):
    """Piecewise-constant m-vector dual quantity; discrete L-infinity element."""


def _check_compatible(u: _Field, v: _Field):
    if u.mesh != v.mesh or u.m != v.m:
        raise IncompatibleFieldError("fields live on different meshes or have different m")


def l1_distance(u: _Field, v: _Field) -> float:
    """Sum over cells of measure times the component-wise absolute difference."""
    _check_compatible(u, v)
    diff = np.abs(u.values - v.values) * u.mesh.cell_measure[:, None]
    return _fsum(diff)


def l1_norm(u: _Field) -> float:
    return _fsum(np.abs(u.values) * u.mesh.cell_measure[:, None])


def linf_norm(xi: _Field) -> float:
    return float(np.max(np.abs(xi.values))) if xi.values.size else 0.0


def pairing(xi: _Field, u: _Field) -> float:
    """Bilinear duality product: sum of measure * xi * u over cells and components."""
    _check_compatible(xi, u)
    return _fsum(xi.values * u.values * xi.mesh.cell_measure[:, None])


def refine_and_prolong(field: _Field, levels: int) -> _Field:
    """Copy each cell value onto its 2**levels children on the refined mesh."""
    if levels < 0:
        raise ValueError("levels must be >= 0")
    if levels == 0:
        return field
    fine = field.mesh.refine(levels)
    return type(field)(fine, np.repeat(field.values, 2 ** levels, axis=0))


def prolong_to(field: _Field, fine: Mesh1D) -> _Field:
    """Prolong a piecewise-constant field onto a mesh refining its own."""
    if field.mesh == fine:
        return type(field)(fine, field.values)
    if not fine.is_refinement_of(field.mesh):
        raise IncompatibleFieldError("target mesh does not refine the field's mesh")
    # child cell i of the fine mesh belongs to the coarse cell whose left
    # boundary is the last one not exceeding the child's midpoint
    idx = np.searchsorted(field.mesh.boundaries, fine.midpoints) - 1
    return type(field)(fine, field.values[idx])


def common_mesh(*fields: _Field) -> Mesh1D:
    """Finest mesh among the fields; every other mesh must be coarsening of it."""
    finest = max(fields, key=lambda f: f.mesh.n_cells).mesh
    for f in fields:
        if not finest.is_refinement_of(f.mesh):
            raise IncompatibleFieldError("fields are not prolongable to a common mesh")
    return finest


@dataclass(frozen=True)
class TestBank:
    """Finite bank of dual test fields standing in for weak-L1 functionals."""

    __test__ = False  # not a pytest class despite the name

    members: tuple
    sup_norms: tuple

    def __post_init__(self):
        if len(self.members) != len(self.sup_norms):
            raise ValueError("one sup-norm per bank member")
        for s in self.sup_norms:
            if not s > 0:
                raise ValueError("bank members must have positive sup-norm")

    @classmethod
    def monomials(cls, mesh: Mesh1D, max_degree: int = 8) -> "TestBank":
        """Cell-averaged monomials t^0 .. t^max_degree.

        The recorded sup-norm is that of the generating monomial on the
        interval (not of its cell averages), so gaps normalize the same way
        at every refinement level.
        """
        left = mesh.boundaries[:-1]
        right = mesh.boundaries[1:]
        mu = mesh.cell_measure
        members = []
        sups = []
        for d in range(max_degree + 1):
            avg = (right ** (d + 1) - left ** (d + 1)) / ((d + 1) * mu)
            members.append(DualField(mesh, avg))
            sups.append(max(abs(mesh.a), abs(mesh.b)) ** d if d else 1.0)
        return cls(tuple(members), tuple(sups))


def weak_gap(u: ControlField, v: ControlField, bank: TestBank) -> float:
    """Largest normalized tested moment of u - v; zero iff all moments agree."""
    if not bank.members:
        raise EmptyBankError("weak_gap needs a nonempty test bank")
    fine = common_mesh(u, v, *bank.members)
    diff = ControlField(fine, prolong_to(u, fine).values - prolong_to(v, fine).values)
    gap = 0.0
    for phi, sup in zip(bank.members, bank.sup_norms):
        gap = max(gap, abs(pairing(prolong_to(phi, fine), diff)) / sup)
    return gap


def field_to_csv(field: _Field, path):
    """Serialize a field; floats use shortest round-trip representation."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["cell_index", "t_left", "t_right", "measure"]
        header += [f"v{c}" for c in range(field.m)]
        writer.writerow(header)
        b = field.mesh.boundaries
        mu = field.mesh.cell_measure
        for i in range(field.mesh.n_cells):
            row = [i, repr(float(b[i])), repr(float(b[i + 1])), repr(float(mu[i]))]
            row += [repr(float(x)) for x in field.values[i]]
            writer.writerow(row)


def field_from_csv(path, cls=ControlField) -> _Field:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        m = len(header) - 4
        lefts, rights, vals = [], [], []
        for row in reader:
            lefts.append(float(row[1]))
            rights.append(float(row[2]))
            vals.append([float(x) for x in row[4 : 4 + m]])
    boundaries = np.array(lefts + rights[-1:])
    return cls(Mesh1D(boundaries), np.array(vals))
