"""Run configuration: a small key=value language with nested tagged blocks.

Grammar (one statement per line, ``#`` comments)::

    file      := { NAME "=" value }
    value     := NUMBER | STRING | NAME | list | tag
    list      := "[" [ value { "," value } ] "]"
    tag       := NAME ("(" | "{") [ NAME "=" value { "," ... } ] (")" | "}")

Examples::

    problem  = instance_a
    set      = box(lo=[-1], hi=[1])
    mesh     = mesh(a=0, b=1, n=1024)
    solver   = solver(max_iter=5000, tol_gap=1e-8, line_search=golden)
    probe    = stability(gamma=0.5, deltas=[0.01, 0.02], samples=50)
    seed     = 0
    out_dir  = "out"

Problem blocks accept a small arithmetic-expression form (parsed with sympy)
for the state-dependent coefficients, e.g.
``elliptic{d="y**3", L="0.5*y**2"}`` or
``ode{f0="0", f1="1", g0="y", T=1, y0=0}``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import ConfigError
from .mesh import Mesh1D
from .sets import Box, Polytope
from .solver import SolveOptions
from .problems import (CATALOG, EllipticProblem, MomentProblem,
                       OdeAffineProblem, ScalarMap, ScalarXY, TerminalCost,
                       VectorMap, ZERO_TERMINAL, linear_phi, square_sum_phi)

# --------------------------------------------------------------------------
# lexer / parser
# --------------------------------------------------------------------------

_TOKEN = re.compile(
    r"""\s*(?:
        (?P<comment>\#[^\n]*)
      | (?P<number>[+-]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
      | (?P<name>[A-Za-z_][A-Za-z0-9_-]*)
      | (?P<string>"(?:[^"\\]|\\.)*")
      | (?P<sym>[=\[\](){},])
    )""",
    re.VERBOSE,
)


@dataclass(frozen=True)
class Tag:
    """A named block ``name(key=value, ...)`` from the config language."""

    name: str
    kwargs: dict

    def get(self, key, default=None):
        return self.kwargs.get(key, default)

    def require(self, key):
        if key not in self.kwargs:
            raise ConfigError(f"block '{self.name}' is missing key '{key}'")
        return self.kwargs[key]

    def check_keys(self, allowed):
        unknown = set(self.kwargs) - set(allowed)
        if unknown:
            raise ConfigError(
                f"block '{self.name}' has unknown keys: {sorted(unknown)}"
            )


def _tokenize(text: str):
    tokens = []
    pos = 0
    line = 1
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            rest = text[pos:].lstrip()
            if not rest:
                break
            raise ConfigError(f"line {line}: cannot tokenize near {rest[:20]!r}")
        line += text.count("\n", pos, m.end())
        pos = m.end()
        kind = m.lastgroup
        if kind == "comment":
            continue
        tokens.append((kind, m.group(kind), line))
    return tokens


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None, None)

    def next(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expect(self, kind, value=None):
        k, v, line = self.next()
        if k != kind or (value is not None and v != value):
            raise ConfigError(
                f"line {line}: expected {value or kind}, found {v!r}"
            )
        return v

    def parse_value(self):
        kind, v, line = self.peek()
        if kind == "number":
            self.next()
            return float(v) if any(c in v for c in ".eE") else int(v)
        if kind == "string":
            self.next()
            return v[1:-1].replace('\\"', '"').replace("\\\\", "\\")
        if kind == "sym" and v == "[":
            return self.parse_list()
        if kind == "name":
            self.next()
            nkind, nv, _ = self.peek()
            if nkind == "sym" and nv in "({":
                return self.parse_tag(v, nv)
            return v
        raise ConfigError(f"line {line}: expected a value, found {v!r}")

    def parse_list(self):
        self.expect("sym", "[")
        out = []
        kind, v, _ = self.peek()
        if kind == "sym" and v == "]":
            self.next()
            return out
        while True:
            out.append(self.parse_value())
            kind, v, line = self.next()
            if kind == "sym" and v == "]":
                return out
            if not (kind == "sym" and v == ","):
                raise ConfigError(f"line {line}: expected ',' or ']' in list")

    def parse_tag(self, name, opener):
        closer = ")" if opener == "(" else "}"
        self.expect("sym", opener)
        kwargs = {}
        kind, v, _ = self.peek()
        if kind == "sym" and v == closer:
            self.next()
            return Tag(name, kwargs)
        while True:
            key = self.expect("name")
            self.expect("sym", "=")
            if key in kwargs:
                raise ConfigError(f"block '{name}': duplicate key '{key}'")
            kwargs[key] = self.parse_value()
            kind, v, line = self.next()
            if kind == "sym" and v == closer:
                return Tag(name, kwargs)
            if not (kind == "sym" and v == ","):
                raise ConfigError(
                    f"line {line}: expected ',' or '{closer}' in block '{name}'"
                )

    def parse_file(self):
        out = {}
        while self.i < len(self.tokens):
            key = self.expect("name")
            self.expect("sym", "=")
            if key in out:
                raise ConfigError(f"duplicate top-level key '{key}'")
            out[key] = self.parse_value()
        return out


def parse_config_text(text: str) -> dict:
    return _Parser(_tokenize(text)).parse_file()


# --------------------------------------------------------------------------
# builders
# --------------------------------------------------------------------------


def _as_float_list(v, what):
    if not isinstance(v, list):
        raise ConfigError(f"{what} must be a list of numbers")
    try:
        return [float(x) for x in v]
    except (TypeError, ValueError):
        raise ConfigError(f"{what} must be a list of numbers") from None


def build_set(value):
    if not isinstance(value, Tag):
        raise ConfigError("set must be box(...) or polytope(...)")
    if value.name == "box":
        value.check_keys({"lo", "hi"})
        return Box(lo=_as_float_list(value.require("lo"), "box lo"),
                   hi=_as_float_list(value.require("hi"), "box hi"))
    if value.name == "polytope":
        value.check_keys({"vertices"})
        verts = value.require("vertices")
        if not isinstance(verts, list) or not verts:
            raise ConfigError("polytope vertices must be a non-empty list")
        return Polytope([_as_float_list(v, "polytope vertex") for v in verts])
    raise ConfigError(f"unknown set kind '{value.name}'")


def build_mesh(value):
    if not isinstance(value, Tag) or value.name != "mesh":
        raise ConfigError("mesh must be mesh(a=..., b=..., n=...)")
    value.check_keys({"a", "b", "n"})
    n = value.require("n")
    if not isinstance(n, int) or n < 1:
        raise ConfigError("mesh n must be a positive integer")
    return Mesh1D.uniform(float(value.get("a", 0.0)), float(value.get("b", 1.0)), n)


def build_solver(value) -> SolveOptions:
    if value is None:
        return SolveOptions()
    if not isinstance(value, Tag) or value.name != "solver":
        raise ConfigError("solver must be solver(...)")
    value.check_keys({"max_iter", "tol_gap", "line_search", "golden_iters", "seed"})
    try:
        return SolveOptions(
            max_iter=int(value.get("max_iter", 5000)),
            tol_gap=float(value.get("tol_gap", 1e-8)),
            line_search=str(value.get("line_search", "golden")),
            golden_iters=int(value.get("golden_iters", 60)),
            seed=int(value.get("seed", 0)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _sympy_scalar(expr_text, symbols, what):
    """Compile an arithmetic expression of the given symbols to a function."""
    import sympy

    try:
        expr = sympy.sympify(expr_text, rational=False)
    except (sympy.SympifyError, SyntaxError, TypeError):
        raise ConfigError(f"{what}: cannot parse expression {expr_text!r}") from None
    free = {str(s) for s in expr.free_symbols}
    allowed = {str(s) for s in symbols}
    if not free <= allowed:
        raise ConfigError(
            f"{what}: expression {expr_text!r} uses unknown symbols "
            f"{sorted(free - allowed)} (allowed: {sorted(allowed)})"
        )
    return expr


def _ode_pair(expr_text, what):
    """ScalarMap (t, y) -> R with gradient in the scalar state y."""
    import sympy

    t, y = sympy.symbols("t y")
    expr = _sympy_scalar(expr_text, (t, y), what)
    f = sympy.lambdify((t, y), expr, "numpy")
    g = sympy.lambdify((t, y), sympy.diff(expr, y), "numpy")
    return (lambda tt, yy: float(f(tt, float(yy[0]))),
            lambda tt, yy: np.array([float(g(tt, float(yy[0])))]))


def build_problem(value):
    if isinstance(value, str):
        if value not in CATALOG:
            raise ConfigError(
                f"unknown problem '{value}'; catalog: {sorted(CATALOG)}"
            )
        return CATALOG[value]()
    if not isinstance(value, Tag):
        raise ConfigError("problem must be a catalog name or a tagged block")
    if value.name == "moment":
        return _build_moment(value)
    if value.name == "ode":
        return _build_ode(value)
    if value.name == "elliptic":
        return _build_elliptic(value)
    raise ConfigError(f"unknown problem kind '{value.name}'")


def _build_moment(tag: Tag) -> MomentProblem:
    """moment{linear=[c0,c1,...], squares=[[...], ...]}: J(u) =
    integral(c(t) u) + sum_k (integral(q_k(t) u))^2 for scalar controls."""
    tag.check_keys({"linear", "squares"})
    weights = []
    coeffs = []
    linear = tag.get("linear")
    if linear is not None:
        weights.append((tuple(_as_float_list(linear, "moment linear")),))
        coeffs.append(("lin", 1.0))
    for q in tag.get("squares", []):
        weights.append((tuple(_as_float_list(q, "moment square weight")),))
        coeffs.append(("sq", 1.0))
    if not weights:
        raise ConfigError("moment{...} needs 'linear' and/or 'squares'")
    kinds = [k for k, _ in coeffs]

    def phi(m):
        m = np.asarray(m)
        return float(sum(v if k == "lin" else v * v for k, v in zip(kinds, m)))

    def phi_grad(m):
        m = np.asarray(m)
        return np.array([1.0 if k == "lin" else 2.0 * v for k, v in zip(kinds, m)])

    return MomentProblem(weights=tuple(weights), phi=phi, phi_grad=phi_grad,
                         name="moment")


def _build_ode(tag: Tag) -> OdeAffineProblem:
    """ode{f0="...", f1="...", g0="...", g1="...", sT="...", T=..., y0=...}
    for a scalar state y and scalar control; expressions in t and y (sT in y)."""
    import sympy

    tag.check_keys({"f0", "f1", "g0", "g1", "sT", "T", "y0"})
    horizon = float(tag.get("T", 1.0))
    if horizon <= 0:
        raise ConfigError("ode T must be > 0")
    y0 = float(tag.get("y0", 0.0))

    def vec(expr_text, what):
        fn, grad = _ode_pair(expr_text, what)
        return VectorMap(lambda t, y: np.array([fn(t, y)]),
                         lambda t, y: np.array([grad(t, y)]))

    def sca(expr_text, what):
        fn, grad = _ode_pair(expr_text, what)
        return ScalarMap(fn, grad)

    drift = vec(str(tag.get("f0", "0")), "ode f0")
    field1 = vec(str(tag.get("f1", "1")), "ode f1")
    g0 = sca(str(tag.get("g0", "0")), "ode g0")
    g1 = sca(str(tag.get("g1", "0")), "ode g1")
    st_text = tag.get("sT")
    if st_text is None:
        terminal = ZERO_TERMINAL
    else:
        ysym = sympy.symbols("y")
        expr = _sympy_scalar(str(st_text), (ysym,), "ode sT")
        f = sympy.lambdify(ysym, expr, "numpy")
        g = sympy.lambdify(ysym, sympy.diff(expr, ysym), "numpy")
        terminal = TerminalCost(lambda y: float(f(float(y[0]))),
                                lambda y: np.array([float(g(float(y[0])))]))
    return OdeAffineProblem(horizon=horizon, y0=np.array([y0]), drift=drift,
                            control_fields=(field1,), running_cost=g0,
                            control_costs=(g1,), terminal_cost=terminal)


def _build_elliptic(tag: Tag) -> EllipticProblem:
    """elliptic{d="...", L="...", length=..., lower=..., upper=...} with
    expressions in x and y; d must be nondecreasing in y."""
    import sympy

    tag.check_keys({"d", "L", "length", "lower", "upper"})
    x, y = sympy.symbols("x y")

    def xy(expr_text, what):
        expr = _sympy_scalar(expr_text, (x, y), what)
        f = sympy.lambdify((x, y), expr, "numpy")
        g = sympy.lambdify((x, y), sympy.diff(expr, y), "numpy")
        broad = lambda fn: (lambda xx, yy: np.broadcast_to(
            np.asarray(fn(np.asarray(xx, dtype=float), np.asarray(yy, dtype=float)),
                       dtype=float), np.broadcast(np.asarray(xx), np.asarray(yy)).shape).copy())
        return ScalarXY(broad(f), broad(g))

    lower = float(tag.get("lower", -1.0))
    upper = float(tag.get("upper", 1.0))
    if not lower < upper:
        raise ConfigError("elliptic bounds need lower < upper")
    return EllipticProblem(length=float(tag.get("length", 1.0)),
                           reaction=xy(str(tag.get("d", "0")), "elliptic d"),
                           tracking=xy(str(tag.get("L", "0.5*y**2")), "elliptic L"),
                           lower=lower, upper=upper)


# --------------------------------------------------------------------------
# RunConfig
# --------------------------------------------------------------------------

_TOP_KEYS = {"problem", "set", "mesh", "solver", "probe", "seed", "out_dir",
             "ustar", "xi"}


@dataclass
class RunConfig:
    """Validated run description: problem, admissible set, mesh, solver
    options, optional probe block, seed and output directory."""

    problem: object
    cset: object
    mesh: Mesh1D
    solver: SolveOptions
    probe: Tag | None
    seed: int
    out_dir: str
    problem_name: str
    ustar_spec: Tag | None = None
    xi_spec: Tag | None = None

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        raw = parse_config_text(text)
        unknown = set(raw) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
        for key in ("problem", "set", "mesh"):
            if key not in raw:
                raise ConfigError(f"missing required key '{key}'")
        problem_value = raw["problem"]
        problem = build_problem(problem_value)
        cset = build_set(raw["set"])
        mesh = build_mesh(raw["mesh"])
        if not isinstance(cset, Box) and getattr(cset, "m", None) is None:
            raise ConfigError("set has no dimension")
        solver = build_solver(raw.get("solver"))
        probe = raw.get("probe")
        if probe is not None and not isinstance(probe, Tag):
            raise ConfigError("probe must be a tagged block")
        seed = raw.get("seed", 0)
        if not isinstance(seed, int):
            raise ConfigError("seed must be an integer")
        out_dir = raw.get("out_dir", ".")
        if not isinstance(out_dir, str):
            raise ConfigError("out_dir must be a string")
        for opt_key in ("ustar", "xi"):
            if opt_key in raw and not isinstance(raw[opt_key], Tag):
                raise ConfigError(f"{opt_key} must be a tagged block")
        name = problem_value if isinstance(problem_value, str) else problem_value.name
        return cls(problem=problem, cset=cset, mesh=mesh, solver=solver,
                   probe=probe, seed=seed, out_dir=out_dir, problem_name=name,
                   ustar_spec=raw.get("ustar"), xi_spec=raw.get("xi"))

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_text(text)
