"""Conditional-gradient solver, the L1-ball linear oracle, and criticality residuals.

The solver's atoms are cellwise extreme points, so every run doubles as a
constructive witness of the bang-bang phenomenology: conditional-gradient
directions have extreme defect exactly zero.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import PreconditionError, SolverInternalError
from .mesh import ControlField, DualField, l1_distance, pairing
from .sets import Box, kkt_residual_field, lmo_field, lmo_pointwise
from .problems import Problem

_GOLDEN = (math.sqrt(5) - 1) / 2


@dataclass(frozen=True)
class SolveOptions:
    max_iter: int = 5000
    tol_gap: float = 1e-8            # relative: stop at gap <= tol_gap * (1 + |J|)
    line_search: str = "golden"      # "golden" (exact 1D) or "armijo"
    golden_iters: int = 60
    armijo_c1: float = 1e-4
    seed: int = 0
    trace_every: int = 1

    def __post_init__(self):
        if self.tol_gap <= 0:
            raise ValueError("tol_gap must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.line_search not in ("golden", "armijo"):
            raise ValueError("line_search must be 'golden' or 'armijo'")


@dataclass
class SolveReport:
    u: ControlField
    J: float
    gap: float
    residual: float
    iters: int
    converged: bool
    wall_time: float
    trace: tuple  # ((k, J, gap), ...)

    def to_json_dict(self) -> dict:
        return {
            "J": self.J,
            "gap": self.gap,
            "residual": self.residual,
            "iters": self.iters,
            "converged": self.converged,
            "trace": [{"k": k, "J": j, "gap": g} for (k, j, g) in self.trace],
        }


def _golden_section(phi, n_iters: int) -> tuple[float, float]:
    """Exact-style 1D minimization on [0, 1]; endpoints win ties so linear
    sections land exactly on vertices."""
    a, b = 0.0, 1.0
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = phi(c), phi(d)
    for _ in range(n_iters):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = phi(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = phi(d)
    t_mid = 0.5 * (a + b)
    candidates = [(phi(0.0), 0.0), (phi(1.0), 1.0), (phi(t_mid), t_mid)]
    best = min(candidates, key=lambda p: (p[0], abs(p[1] - t_mid)))
    return best[1], best[0]


def _armijo(phi, j0: float, slope: float, c1: float) -> tuple[float, float]:
    t = 1.0
    for _ in range(60):
        jt = phi(t)
        if jt <= j0 + c1 * t * slope:
            return t, jt
        t *= 0.5
    return t, phi(t)


def criticality_residual(problem: Problem, u: ControlField, cset: Box,
                         tol: float | None = None) -> float:
    """Max over cells of the pointwise KKT residual; 0 iff u is discrete-critical."""
    sigma = problem.switching(u)
    return float(kkt_residual_field(cset, u, sigma, tol).max())


def default_start(cset, mesh) -> ControlField:
    return ControlField.constant(mesh, lmo_pointwise(cset, np.zeros(cset.m)))


def frank_wolfe(problem: Problem, cset, mesh=None, opts: SolveOptions | None = None,
                *, start: ControlField | None = None, lmo=None) -> SolveReport:
    """Conditional-gradient descent with cellwise linear minimization atoms.

    ``lmo`` may be swapped (e.g. for the L1-ball-localized oracle); it receives
    the switching field and the current iterate and must return an admissible
    field.  The gap pairing(sigma, u - v) certifies first-order criticality at 0.
    """
    opts = opts or SolveOptions()
    if start is None:
        if mesh is None:
            raise ValueError("either start or mesh must be given")
        start = default_start(cset, mesh)
    if lmo is None:
        lmo = lambda sigma, u: lmo_field(cset, sigma)

    t0 = time.perf_counter()
    u = start
    j = problem.evaluate(u)
    gap = math.inf
    trace = []
    converged = False
    iters = 0
    for k in range(opts.max_iter):
        iters = k
        sigma = problem.switching(u)
        v = lmo(sigma, u)
        direction = v.values - u.values
        gap = pairing(sigma, ControlField(u.mesh, -direction))
        if k % opts.trace_every == 0:
            trace.append((k, j, gap))
        if gap <= opts.tol_gap * (1 + abs(j)):
            converged = True
            break
        phi = problem.segment(u, direction)
        if opts.line_search == "golden":
            t, j_new = _golden_section(phi, opts.golden_iters)
        else:
            t, j_new = _armijo(phi, j, -gap, opts.armijo_c1)
        if j_new > j + 1e-12 * (1 + abs(j)):
            raise SolverInternalError(
                "objective increased across an exact line search; "
                "switching field is inconsistent with the objective"
            )
        u = ControlField(u.mesh, u.values + t * direction)
        j = j_new
    wall = time.perf_counter() - t0
    residual = criticality_residual(problem, u, cset) if isinstance(cset, Box) else float("nan")
    if not trace or trace[-1][0] != iters:
        trace.append((iters, j, gap))
    return SolveReport(u=u, J=j, gap=gap, residual=residual, iters=iters,
                       converged=converged, wall_time=wall, trace=tuple(trace))


def lmo_l1ball(c: DualField, center: ControlField, gamma: float, cset: Box) -> ControlField:
    """Exact minimizer of pairing(c, u) over the box intersected with the
    L1 ball of radius gamma around the center.

    Greedy continuous knapsack: per cell/component the move toward the
    minimizing bound gains |c| per unit of L1 mass; spend the budget on moves
    sorted by gain density, fractional last move, ties by (cell, component).
    """
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    tol = cset.default_tol()
    if np.any(center.values < cset.lo - tol) or np.any(center.values > cset.hi + tol):
        raise PreconditionError("center is infeasible for the box")
    mu = center.mesh.cell_measure[:, None]
    cv = c.values
    # target bound per component: hi where c < 0, lo otherwise (the
    # lexicographic tie rule sends zero-cost components to lo)
    target = np.where(cv < 0, cset.hi, cset.lo)
    reach = np.abs(target - center.values)           # control units
    capacity = (mu * reach).ravel()                  # L1 mass per move
    density = np.abs(cv).ravel()                     # objective gain per unit mass
    order = np.lexsort((
        np.tile(np.arange(center.m), center.mesh.n_cells),
        np.repeat(np.arange(center.mesh.n_cells), center.m),
        -density,
    ))
    out = center.values.copy()
    flat_target = target.ravel()
    budget = gamma
    n_cols = center.m
    for idx in order:
        if budget <= 0:
            break
        cap = capacity[idx]
        if cap <= 0:
            continue
        i, comp = divmod(idx, n_cols)
        if cap <= budget:
            out[i, comp] = flat_target[idx]
            budget -= cap
        else:
            frac = budget / cap
            out[i, comp] += frac * (flat_target[idx] - out[i, comp])
            budget = 0.0
    return ControlField(center.mesh, out)


def solve_localized(problem: Problem, xi: DualField, center: ControlField,
                    gamma: float, cset: Box, opts: SolveOptions | None = None) -> SolveReport:
    """Conditional gradient on J - <xi, .> restricted to the L1 ball around center."""
    from .problems import with_linear_perturbation

    perturbed = with_linear_perturbation(problem, xi)
    oracle = lambda sigma, u: lmo_l1ball(sigma, center, gamma, cset)
    return frank_wolfe(perturbed, cset, opts=opts, start=center, lmo=oracle)


@dataclass
class MultistartResult:
    best: SolveReport
    reports: tuple
    value_spread: float


def random_vertex_field(cset, mesh, rng) -> ControlField:
    if isinstance(cset, Box):
        pick = rng.integers(0, 2, size=(mesh.n_cells, cset.m))
        vals = np.where(pick == 1, cset.hi, cset.lo)
    else:
        verts = cset.vertices
        vals = verts[rng.integers(0, len(verts), size=mesh.n_cells)]
    return ControlField(mesh, vals)


def multistart_global(problem: Problem, cset, mesh, n_starts: int,
                      opts: SolveOptions | None = None, threads: int = 1) -> MultistartResult:
    """Heuristic surrogate for the global solution mapping: best of n_starts
    conditional-gradient runs from seeded random vertex fields."""
    if n_starts < 1:
        raise ValueError("n_starts must be >= 1")
    opts = opts or SolveOptions()

    def run(i: int) -> SolveReport:
        rng = np.random.default_rng([opts.seed, i])
        return frank_wolfe(problem, cset, opts=opts,
                           start=random_vertex_field(cset, mesh, rng))

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(run, range(n_starts)))
    else:
        reports = [run(i) for i in range(n_starts)]
    values = [r.J for r in reports]
    best = reports[int(np.argmin(values))]
    return MultistartResult(best=best, reports=tuple(reports),
                            value_spread=float(max(values) - min(values)))
