"""Objective/switching-field contracts and the shipped instance catalog.

Every problem exposes J(u) and its exact discrete gradient as a dual field,
valid on any refinement level of the mesh the control lives on.  Gradients
are discrete adjoints of the chosen discretization, so conditional-gradient
gaps and KKT residuals are true certificates for the discrete problem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.linalg import solve_banded

from .errors import IncompatibleFieldError, IntegrationFailureError, NewtonConvergenceError
from .mesh import ControlField, DualField, Mesh1D, _fsum, pairing, prolong_to


class Problem:
    """Contract: evaluate(u) -> J, switching(u) -> dual field dJ(u)."""

    def evaluate(self, u: ControlField) -> float:
        raise NotImplementedError

    def switching(self, u: ControlField) -> DualField:
        raise NotImplementedError

    def segment(self, u: ControlField, direction: np.ndarray):
        """1D restriction t -> J(u + t * direction); subclasses may speed this up."""
        mesh, base = u.mesh, u.values

        def phi(t: float) -> float:
            return self.evaluate(ControlField(mesh, base + t * direction))

        return phi


def _poly_cell_averages(coeffs, mesh: Mesh1D) -> np.ndarray:
    """Exact cell averages of a polynomial with ascending coefficients."""
    anti = np.polynomial.polynomial.polyint(np.asarray(coeffs, dtype=float))
    vals = np.polynomial.polynomial.polyval(mesh.boundaries, anti)
    return np.diff(vals) / mesh.cell_measure


@dataclass(frozen=True, eq=False)
class MomentProblem(Problem):
    """J(u) = phi(<w_1,u>, ..., <w_K,u>) with polynomial weight duals.

    Weights are given as ascending polynomial coefficient tuples per component,
    materialized exactly (antiderivative cell averages) on whatever mesh the
    control lives on; weak sequential continuity holds by construction.
    """

    weights: tuple          # K entries; each an (m, deg+1)-like nested tuple
    phi: object             # callable R^K -> R
    phi_grad: object        # callable R^K -> R^K
    name: str = "moment"

    def _materialize(self, mesh: Mesh1D) -> np.ndarray:
        # (K, n_cells, m)
        out = np.empty((len(self.weights), mesh.n_cells, self._m()))
        for k, w in enumerate(self.weights):
            for c, coeffs in enumerate(w):
                out[k, :, c] = _poly_cell_averages(coeffs, mesh)
        return out

    def _m(self) -> int:
        return len(self.weights[0])

    def moments(self, u: ControlField) -> np.ndarray:
        w = self._materialize(u.mesh)
        mu = u.mesh.cell_measure[:, None]
        return np.array([_fsum(wk * u.values * mu) for wk in w])

    def evaluate(self, u: ControlField) -> float:
        return float(self.phi(self.moments(u)))

    def switching(self, u: ControlField) -> DualField:
        w = self._materialize(u.mesh)
        g = np.asarray(self.phi_grad(self.moments(u)), dtype=float)
        return DualField(u.mesh, np.tensordot(g, w, axes=1))

    def segment(self, u, direction):
        w = self._materialize(u.mesh)
        mu = u.mesh.cell_measure[:, None]
        m_u = np.array([_fsum(wk * u.values * mu) for wk in w])
        m_d = np.array([_fsum(wk * direction * mu) for wk in w])

        def phi(t: float) -> float:
            return float(self.phi(m_u + t * m_d))

        return phi


def linear_phi(coeffs):
    """Outer map phi(M) = sum coeffs_k M_k."""
    c = np.asarray(coeffs, dtype=float)
    return (lambda m: float(c @ m)), (lambda m: c.copy())


def square_sum_phi(coeffs):
    """Outer map phi(M) = sum coeffs_k M_k^2."""
    c = np.asarray(coeffs, dtype=float)
    return (lambda m: float(c @ (np.asarray(m) ** 2))), (lambda m: 2 * c * np.asarray(m))


@dataclass(frozen=True, eq=False)
class LinearlyPerturbedProblem(Problem):
    """J'(u) = J(u) - <xi, u>; the switching field shifts by exactly -xi."""

    base: Problem
    xi: DualField

    def _xi_on(self, mesh: Mesh1D) -> DualField:
        return prolong_to(self.xi, mesh) if mesh != self.xi.mesh else self.xi

    def evaluate(self, u):
        return self.base.evaluate(u) - pairing(self._xi_on(u.mesh), u)

    def switching(self, u):
        xi = self._xi_on(u.mesh)
        return DualField(u.mesh, self.base.switching(u).values - xi.values)

    def segment(self, u, direction):
        base_phi = self.base.segment(u, direction)
        xi = self._xi_on(u.mesh)
        mu = u.mesh.cell_measure[:, None]
        a0 = _fsum(xi.values * u.values * mu)
        a1 = _fsum(xi.values * direction * mu)
        return lambda t: base_phi(t) - (a0 + t * a1)


def with_linear_perturbation(problem: Problem, xi: DualField) -> Problem:
    return LinearlyPerturbedProblem(problem, xi)


@dataclass(frozen=True, eq=False)
class PRegularizedProblem(Problem):
    """J'(u) = J(u) + (eta/p) * integral |u|^p; adds eta |u|^{p-2} u to switching.

    p is restricted to [2, inf): below 2 the added gradient is non-Lipschitz
    at 0 and the line-search analysis breaks down.
    """

    base: Problem
    p: float
    eta: float

    def __post_init__(self):
        if self.p < 2:
            raise ValueError("p must be >= 2")
        if self.eta <= 0:
            raise ValueError("eta must be > 0")

    def _radii(self, values: np.ndarray) -> np.ndarray:
        return np.linalg.norm(values, axis=1)

    def evaluate(self, u):
        mu = u.mesh.cell_measure
        extra = (self.eta / self.p) * _fsum(mu * self._radii(u.values) ** self.p)
        return self.base.evaluate(u) + extra

    def switching(self, u):
        r = self._radii(u.values)
        w = np.where(r > 0, r ** (self.p - 2), 0.0)
        if self.p == 2:
            w = np.ones_like(r)
        add = self.eta * w[:, None] * u.values
        return DualField(u.mesh, self.base.switching(u).values + add)

    def segment(self, u, direction):
        base_phi = self.base.segment(u, direction)
        mu = u.mesh.cell_measure[:, None]
        if self.p == 2:
            q0 = _fsum(mu * u.values * u.values)
            q1 = _fsum(mu * u.values * direction)
            q2 = _fsum(mu * direction * direction)
            half_eta = 0.5 * self.eta
            return lambda t: base_phi(t) + half_eta * (q0 + t * (2 * q1 + t * q2))
        base_vals, mesh = u.values, u.mesh

        def phi(t: float) -> float:
            r = self._radii(base_vals + t * direction)
            return base_phi(t) + (self.eta / self.p) * _fsum(mesh.cell_measure * r ** self.p)

        return phi


def with_p_regularizer(problem: Problem, p: float, eta: float) -> Problem:
    return PRegularizedProblem(problem, p, eta)


# --------------------------------------------------------------------------
# ODE-affine problem: y' = f0(t,y) + sum f_i(t,y) u_i, cost s_T(y(T)) +
# integral of g0 + sum g_i u_i.  RK4 with steps aligned to control cells;
# the switching field is the discrete adjoint of that integrator.
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class VectorMap:
    """(t, y) -> R^n together with its Jacobian in y."""

    fn: object
    jac_y: object

    def __call__(self, t, y):
        return np.atleast_1d(np.asarray(self.fn(t, y), dtype=float))

    def jac(self, t, y):
        return np.atleast_2d(np.asarray(self.jac_y(t, y), dtype=float))


@dataclass(frozen=True)
class ScalarMap:
    """(t, y) -> R together with its gradient in y."""

    fn: object
    grad_y: object

    def __call__(self, t, y):
        return float(self.fn(t, y))

    def grad(self, t, y):
        return np.atleast_1d(np.asarray(self.grad_y(t, y), dtype=float))


@dataclass(frozen=True)
class TerminalCost:
    fn: object
    grad_y: object

    def __call__(self, y):
        return float(self.fn(y))

    def grad(self, y):
        return np.atleast_1d(np.asarray(self.grad_y(y), dtype=float))


ZERO_TERMINAL = TerminalCost(lambda y: 0.0, lambda y: np.zeros_like(y))


@dataclass(frozen=True, eq=False)
class OdeAffineProblem(Problem):
    horizon: float
    y0: np.ndarray
    drift: VectorMap                 # f_0
    control_fields: tuple            # f_1..f_m
    running_cost: ScalarMap          # g_0
    control_costs: tuple             # g_1..g_m
    terminal_cost: TerminalCost = ZERO_TERMINAL
    name: str = "ode"

    def __post_init__(self):
        object.__setattr__(self, "y0", np.atleast_1d(np.asarray(self.y0, dtype=float)))
        if self.horizon <= 0:
            raise ValueError("horizon must be > 0")
        if len(self.control_costs) != len(self.control_fields):
            raise ValueError("one running cost per control field")

    @property
    def n(self) -> int:
        return self.y0.size

    @property
    def m(self) -> int:
        return len(self.control_fields)

    def _check_mesh(self, u: ControlField):
        if u.m != self.m:
            raise IncompatibleFieldError("control has wrong component count")
        if abs(u.mesh.a) > 1e-12 or abs(u.mesh.b - self.horizon) > 1e-12:
            raise IncompatibleFieldError("control mesh must cover [0, T]")

    def _rhs(self, t, y, uc):
        f = self.drift(t, y).copy()
        g = self.running_cost(t, y)
        for i, (fi, gi) in enumerate(zip(self.control_fields, self.control_costs)):
            f += fi(t, y) * uc[i]
            g += gi(t, y) * uc[i]
        return f, g

    def forward(self, u: ControlField):
        """RK4 trajectory at cell boundaries plus the accumulated running cost."""
        self._check_mesh(u)
        times = u.mesh.boundaries
        n = self.n
        states = np.empty((times.size, n))
        states[0] = self.y0
        z = 0.0
        y = self.y0.copy()
        for k in range(u.mesh.n_cells):
            t, h = times[k], times[k + 1] - times[k]
            uc = u.values[k]
            k1, l1 = self._rhs(t, y, uc)
            k2, l2 = self._rhs(t + h / 2, y + h / 2 * k1, uc)
            k3, l3 = self._rhs(t + h / 2, y + h / 2 * k2, uc)
            k4, l4 = self._rhs(t + h, y + h * k3, uc)
            y = y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
            z = z + (h / 6) * (l1 + 2 * l2 + 2 * l3 + l4)
            if not (np.all(np.isfinite(y)) and math.isfinite(z)):
                raise IntegrationFailureError(f"state blew up in step {k}", step=k)
            states[k + 1] = y
        return states, z

    def evaluate(self, u):
        states, z = self.forward(u)
        return self.terminal_cost(states[-1]) + z

    def _stage_jacobians(self, t, y, uc):
        """Augmented Jacobian of (f, g) in (y, z) and derivative in u."""
        n, m = self.n, self.m
        big = np.zeros((n + 1, n + 1))
        big[:n, :n] = self.drift.jac(t, y)
        grad = self.running_cost.grad(t, y).copy()
        b = np.zeros((n + 1, m))
        for i, (fi, gi) in enumerate(zip(self.control_fields, self.control_costs)):
            big[:n, :n] += fi.jac(t, y) * uc[i]
            grad += gi.grad(t, y) * uc[i]
            b[:n, i] = fi(t, y)
            b[n, i] = gi(t, y)
        big[n, :n] = grad
        return big, b

    def switching(self, u) -> DualField:
        """Backward sweep of the exact discrete adjoint of the RK4 forward solve."""
        states, _ = self.forward(u)
        times = u.mesh.boundaries
        n, m = self.n, self.m
        lam = np.zeros(n + 1)
        lam[:n] = self.terminal_cost.grad(states[-1])
        lam[n] = 1.0
        eye = np.eye(n + 1)
        grads = np.empty((u.mesh.n_cells, m))
        for k in range(u.mesh.n_cells - 1, -1, -1):
            t, h = times[k], times[k + 1] - times[k]
            y = states[k]
            uc = u.values[k]
            # recompute the RK4 stages of this cell
            k1, _ = self._rhs(t, y, uc)
            k2, _ = self._rhs(t + h / 2, y + h / 2 * k1, uc)
            k3, _ = self._rhs(t + h / 2, y + h / 2 * k2, uc)
            m1, b1 = self._stage_jacobians(t, y, uc)
            m2, b2 = self._stage_jacobians(t + h / 2, y + h / 2 * k1, uc)
            m3, b3 = self._stage_jacobians(t + h / 2, y + h / 2 * k2, uc)
            m4, b4 = self._stage_jacobians(t + h, y + h * k3, uc)
            kk1 = m1
            kk2 = m2 @ (eye + (h / 2) * kk1)
            kk3 = m3 @ (eye + (h / 2) * kk2)
            kk4 = m4 @ (eye + h * kk3)
            step_jac = eye + (h / 6) * (kk1 + 2 * kk2 + 2 * kk3 + kk4)
            d1 = b1
            d2 = b2 + m2 @ ((h / 2) * d1)
            d3 = b3 + m3 @ ((h / 2) * d2)
            d4 = b4 + m4 @ (h * d3)
            du = (h / 6) * (d1 + 2 * d2 + 2 * d3 + d4)
            grads[k] = du.T @ lam
            lam = step_jac.T @ lam
        return DualField(u.mesh, grads / u.mesh.cell_measure[:, None])


def ode_forward(problem: OdeAffineProblem, u: ControlField):
    return problem.forward(u)


def ode_switching(problem: OdeAffineProblem, u: ControlField) -> DualField:
    return problem.switching(u)


# --------------------------------------------------------------------------
# Semilinear elliptic problem in 1D: -y'' + d(x, y) = u, y = 0 on the
# boundary; J = integral of L(x, y).  Central differences at the cell
# boundaries, damped Newton (monotone d gives global convergence), trapezoid
# quadrature for the cost, and the transposed linearized system as adjoint.
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ScalarXY:
    """(x, y) -> R with partial derivative in y; vectorized over arrays."""

    fn: object
    dy: object

    def __call__(self, x, y):
        return np.asarray(self.fn(x, y), dtype=float)

    def d_y(self, x, y):
        return np.asarray(self.dy(x, y), dtype=float)


@dataclass(eq=False)
class EllipticProblem(Problem):
    length: float
    reaction: ScalarXY       # d(x, y), with d_y >= 0
    tracking: ScalarXY       # L(x, y)
    lower: float = -1.0      # admissible bounds u_a < u_b
    upper: float = 1.0
    newton_tol: float = 1e-12
    max_newton: int = 60
    name: str = "elliptic"

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError("needs u_a < u_b")
        self._memo = {}

    def _check(self, u: ControlField):
        if u.m != 1:
            raise IncompatibleFieldError("elliptic problem takes scalar controls")
        if abs(u.mesh.a) > 1e-12 or abs(u.mesh.b - self.length) > 1e-12:
            raise IncompatibleFieldError("control mesh must cover (0, length)")
        tol = 1e-9 * (self.upper - self.lower)
        if np.any(u.values < self.lower - tol) or np.any(u.values > self.upper + tol):
            raise IncompatibleFieldError("control violates the admissible bounds")

    def _nodal_control(self, u: ControlField) -> np.ndarray:
        # interior nodes are shared cell boundaries; average the two cells
        v = u.values[:, 0]
        return 0.5 * (v[:-1] + v[1:])

    def _solve_state(self, u: ControlField) -> np.ndarray:
        key = (u.mesh.boundaries.tobytes(), u.values.tobytes())
        if key in self._memo:
            return self._memo[key]
        self._check(u)
        x = u.mesh.boundaries
        h = np.diff(x)
        n_int = x.size - 2
        if n_int < 1:
            raise IncompatibleFieldError("need at least 2 cells")
        xi = x[1:-1]
        un = self._nodal_control(u)
        hl, hr = h[:-1], h[1:]
        w = 2.0 / (hl + hr)

        rho = 0.5 * (hl + hr)  # convergence is judged on the integrated residual,
        # whose rounding floor stays below newton_tol at desk-scale meshes

        def residual(y_int):
            y = np.concatenate([[0.0], y_int, [0.0]])
            lap = w * ((y[1:-1] - y[:-2]) / hl - (y[2:] - y[1:-1]) / hr)
            return lap + self.reaction(xi, y_int) - un

        def jacobian_bands(y_int):
            diag = w * (1.0 / hl + 1.0 / hr) + self.reaction.d_y(xi, y_int)
            upper_band = np.concatenate([[0.0], -w[:-1] / hr[:-1]])
            lower_band = np.concatenate([-w[1:] / hl[1:], [0.0]])
            return np.vstack([upper_band, diag, lower_band])

        y_int = np.zeros(n_int)
        r = residual(y_int)
        tol = self.newton_tol * (1.0 + np.max(np.abs(un)))
        for _ in range(self.max_newton):
            rnorm = np.max(np.abs(rho * r))
            if rnorm <= tol:
                break
            step = solve_banded((1, 1), jacobian_bands(y_int), -r)
            t = 1.0
            for _ in range(40):
                y_try = y_int + t * step
                r_try = residual(y_try)
                if np.max(np.abs(rho * r_try)) < rnorm:
                    y_int, r = y_try, r_try
                    break
                t *= 0.5
            else:
                raise NewtonConvergenceError("line search stagnated")
        else:
            raise NewtonConvergenceError(
                f"Newton did not reach tol {self.newton_tol} in {self.max_newton} iterations"
            )
        if len(self._memo) > 8:
            self._memo.clear()
        self._memo[key] = y_int
        return y_int

    def state(self, u: ControlField) -> np.ndarray:
        """Full nodal state including the homogeneous boundary values."""
        return np.concatenate([[0.0], self._solve_state(u), [0.0]])

    def _quad_weights(self, mesh: Mesh1D) -> np.ndarray:
        h = mesh.cell_measure
        w = np.zeros(mesh.boundaries.size)
        w[:-1] += 0.5 * h
        w[1:] += 0.5 * h
        return w

    def evaluate(self, u):
        y = self.state(u)
        w = self._quad_weights(u.mesh)
        return _fsum(w * self.tracking(u.mesh.boundaries, y))

    def switching(self, u) -> DualField:
        y_int = self._solve_state(u)
        x = u.mesh.boundaries
        h = np.diff(x)
        hl, hr = h[:-1], h[1:]
        wlap = 2.0 / (hl + hr)
        diag = wlap * (1.0 / hl + 1.0 / hr) + self.reaction.d_y(x[1:-1], y_int)
        upper_band = np.concatenate([[0.0], -wlap[:-1] / hr[:-1]])
        lower_band = np.concatenate([-wlap[1:] / hl[1:], [0.0]])
        # the FD operator is symmetric only on uniform meshes; transpose bands
        bands_t = np.vstack([
            np.concatenate([[0.0], lower_band[:-1]]),
            diag,
            np.concatenate([upper_band[1:], [0.0]]),
        ])
        g = self._quad_weights(u.mesh)[1:-1] * self.tracking.d_y(x[1:-1], y_int)
        p = solve_banded((1, 1), bands_t, g)
        p_full = np.concatenate([[0.0], p, [0.0]])
        per_cell = 0.5 * (p_full[:-1] + p_full[1:])
        return DualField(u.mesh, per_cell / u.mesh.cell_measure)


def elliptic_solve(problem: EllipticProblem, u: ControlField) -> np.ndarray:
    return problem.state(u)


def elliptic_switching(problem: EllipticProblem, u: ControlField) -> DualField:
    return problem.switching(u)


# --------------------------------------------------------------------------
# Instance catalog anchoring the experiment numbers.
# --------------------------------------------------------------------------


def instance_a() -> MomentProblem:
    """Linear moment objective J(u) = integral (t - 1/2) u(t) dt on [0, 1]."""
    phi, grad = linear_phi([1.0])
    return MomentProblem(weights=(((-0.5, 1.0),),), phi=phi, phi_grad=grad,
                         name="instance_a")


def instance_b() -> MomentProblem:
    """J(u) = (integral u)^2 + (integral t u)^2; minimized (at 0) by any
    zero-moment field, so the zero control is a non-strict, non-bang-bang
    minimizer."""
    phi, grad = square_sum_phi([1.0, 1.0])
    return MomentProblem(weights=(((1.0,),), ((0.0, 1.0),)), phi=phi,
                         phi_grad=grad, name="instance_b")


def instance_c() -> OdeAffineProblem:
    """Scalar integrator y' = u, J = integral of y; adjoint is 1 - t."""
    zero_vec = VectorMap(lambda t, y: np.zeros(1), lambda t, y: np.zeros((1, 1)))
    unit_vec = VectorMap(lambda t, y: np.ones(1), lambda t, y: np.zeros((1, 1)))
    g0 = ScalarMap(lambda t, y: float(y[0]), lambda t, y: np.ones(1))
    g1 = ScalarMap(lambda t, y: 0.0, lambda t, y: np.zeros(1))
    return OdeAffineProblem(horizon=1.0, y0=np.zeros(1), drift=zero_vec,
                            control_fields=(unit_vec,), running_cost=g0,
                            control_costs=(g1,), name="instance_c")


def instance_e() -> EllipticProblem:
    """Poisson tracking on (0, 1): -y'' = u, J = 1/2 integral y^2."""
    zero = ScalarXY(lambda x, y: np.zeros_like(np.asarray(y, dtype=float)),
                    lambda x, y: np.zeros_like(np.asarray(y, dtype=float)))
    track = ScalarXY(lambda x, y: 0.5 * np.asarray(y, dtype=float) ** 2,
                     lambda x, y: np.asarray(y, dtype=float))
    return EllipticProblem(length=1.0, reaction=zero, tracking=track,
                           lower=-1.0, upper=1.0, name="instance_e")


def zero_moment_problem() -> MomentProblem:
    """J identically zero; every admissible control is optimal."""
    phi, grad = linear_phi([0.0])
    return MomentProblem(weights=(((0.0,),),), phi=phi, phi_grad=grad,
                         name="zero_moment")


CATALOG = {
    "instance_a": instance_a,
    "instance_b": instance_b,
    "instance_c": instance_c,
    "instance_e": instance_e,
    "zero_moment": zero_moment_problem,
}
