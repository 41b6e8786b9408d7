"""Experiment layer: instability witnesses, moduli estimates and paths.

Each probe draws seeded perturbation samples, runs the relevant solve or
construction, and aggregates rows deterministically by sample index, so a
fixed seed reproduces records byte for byte.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass

import numpy as np

from .errors import NoSplitError, PreconditionError, RadiusExceededError
from .mesh import (ControlField, DualField, TestBank, _fsum, l1_distance,
                   linf_norm, pairing, prolong_to, weak_gap)
from .problems import Problem, _poly_cell_averages, with_linear_perturbation, with_p_regularizer
from .sets import Box, extreme_defect, midpoint_split
from .simplex import simplex_maximize
from .solver import (SolveOptions, criticality_residual, frank_wolfe,
                     multistart_global, solve_localized)


# --------------------------------------------------------------------------
# records
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ProbeRecord:
    kind: str
    params: dict
    seed: int
    rows: tuple        # tuple of dicts with identical key order
    summary: dict

    def __post_init__(self):
        if self.rows:
            keys = tuple(self.rows[0].keys())
            for r in self.rows:
                if tuple(r.keys()) != keys:
                    raise ValueError("probe rows must share one schema")

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            if not self.rows:
                return
            keys = list(self.rows[0].keys())
            writer.writerow(keys)
            for r in self.rows:
                writer.writerow([_csv_cell(r[k]) for k in keys])

    def to_json(self, path):
        payload = {"kind": self.kind, "seed": self.seed,
                   "params": self.params, "summary": self.summary}
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _csv_cell(x):
    if isinstance(x, float):
        return repr(x)
    return x


@dataclass(frozen=True)
class GrowthProfile:
    """Empirical upper estimate of the growth function over (0, delta].

    The estimate is a minimum over samples, hence an upper bound of the true
    infimum; the pooled nested-bin construction makes it nondecreasing in eta
    by design.
    """

    delta: float
    entries: tuple     # (eta, omega_hat, n_samples_in_bin, argmin_sample)
    rows: tuple

    def omega_hat(self, eta: float) -> float:
        for e, w, _, _ in self.entries:
            if abs(e - eta) <= 1e-12:
                return w
        raise KeyError(f"eta {eta} not in profile grid")

    def to_record(self, seed: int = 0) -> "ProbeRecord":
        summary = {repr(e): {"omega_hat": w, "bin_count": n, "argmin": a}
                   for e, w, n, a in self.entries}
        return ProbeRecord(kind="growth", params={"delta": self.delta},
                           seed=seed, rows=self.rows,
                           summary={"omega_hat": summary})


# --------------------------------------------------------------------------
# clustering sequences (the constructive instability witness)
# --------------------------------------------------------------------------


def _split_fields(u_star: ControlField, cset: Box):
    """Per-cell segment endpoints; alpha = beta = u on extremal cells."""
    alpha = u_star.values.copy()
    beta = u_star.values.copy()
    for i in range(u_star.mesh.n_cells):
        pair = midpoint_split(cset, u_star.values[i])
        if pair is not None:
            alpha[i], beta[i] = pair
    return alpha, beta


def split_radius(u_star: ControlField, cset: Box) -> float:
    """Largest certified radius delta_0 = |beta - alpha|_L1 / 2 of the split."""
    alpha, beta = _split_fields(u_star, cset)
    mu = u_star.mesh.cell_measure[:, None]
    return 0.5 * _fsum(np.abs(beta - alpha) * mu)


@dataclass(frozen=True)
class ClusteringResult:
    field: ControlField     # the level-n member, on the refined mesh
    delta0: float
    level: int
    delta: float


def clustering_sequence(u_star: ControlField, cset: Box, delta: float,
                        level: int) -> ClusteringResult:
    """Level-n member of a sequence at exact L1 distance delta from u_star.

    Within every original cell the construction alternates the two split
    endpoints in a dyadic pattern of 2**level children, then blends back
    toward u_star so the distance equals delta while all tested moments
    shrink geometrically with the level.
    """
    if level < 1:
        raise ValueError("level must be >= 1")
    if delta <= 0:
        raise ValueError("delta must be > 0")
    alpha, beta = _split_fields(u_star, cset)
    mu = u_star.mesh.cell_measure[:, None]
    delta0 = 0.5 * _fsum(np.abs(beta - alpha) * mu)
    if delta0 == 0.0:
        raise NoSplitError("reference field is bang-bang; no non-extremal mass to split")
    if delta > delta0 * (1 + 1e-12):
        raise RadiusExceededError(f"delta {delta} exceeds the certified radius {delta0}")
    fine = u_star.mesh.refine(level)
    reps = 2 ** level
    # children of even index take beta, odd take alpha
    pattern = np.empty((u_star.mesh.n_cells * reps, u_star.m))
    pattern[0::2] = np.repeat(beta, reps // 2, axis=0)
    pattern[1::2] = np.repeat(alpha, reps // 2, axis=0)
    u_prol = np.repeat(u_star.values, reps, axis=0)
    vals = u_prol + (delta / delta0) * (pattern - u_prol)
    return ClusteringResult(field=ControlField(fine, vals), delta0=delta0,
                            level=level, delta=delta)


@dataclass(frozen=True)
class VpCasasResult:
    found: bool
    level: int | None
    field: ControlField | None
    trace: tuple      # ((level, value_gap), ...)


def vpcasas_check(problem: Problem, u_star: ControlField, cset: Box,
                  delta: float, eps: float, n_max: int = 12) -> VpCasasResult:
    """Search the clustering sequence for a member at distance delta whose
    objective exceeds the reference by at most eps."""
    j_star = problem.evaluate(u_star)
    trace = []
    for n in range(1, n_max + 1):
        member = clustering_sequence(u_star, cset, delta, n)
        gap = problem.evaluate(member.field) - j_star
        trace.append((n, gap))
        if gap <= eps:
            return VpCasasResult(found=True, level=n, field=member.field,
                                 trace=tuple(trace))
    return VpCasasResult(found=False, level=None, field=None, trace=tuple(trace))


# --------------------------------------------------------------------------
# adversarial weak ball (the dichotomy test)
# --------------------------------------------------------------------------


def adversarial_weak_ball(u_star: ControlField, cset: Box, eps: float,
                          bank: TestBank):
    """Largest L1 excursion inside the finite weak eps-ball around u_star.

    Per cell/component the move decomposes into a stretch toward each box
    face; with one simplex row per cell tying the two stretches, the search
    is a linear program solved by the dense simplex routine.  The returned
    distance is the one achieved by the reconstructed feasible maximizer.
    """
    if eps < 0:
        raise ValueError("eps must be >= 0")
    from .mesh import common_mesh

    fine = common_mesh(u_star, *bank.members)
    u0 = prolong_to(u_star, fine)
    mu = fine.cell_measure[:, None]
    up = np.clip(cset.hi - u0.values, 0.0, None)     # stretch toward hi
    down = np.clip(u0.values - cset.lo, 0.0, None)   # stretch toward lo
    n_groups = fine.n_cells * u0.m

    c = np.concatenate([(mu * up).ravel(), (mu * down).ravel()])
    n_var = 2 * n_groups
    n_bank = len(bank.members)
    a = np.zeros((n_groups + 2 * n_bank, n_var))
    b = np.empty(n_groups + 2 * n_bank)
    idx = np.arange(n_groups)
    a[idx, idx] = 1.0
    a[idx, n_groups + idx] = 1.0
    b[:n_groups] = 1.0
    for j, (phi, sup) in enumerate(zip(bank.members, bank.sup_norms)):
        phi_f = prolong_to(phi, fine)
        row_up = (mu * phi_f.values * up).ravel()
        row_down = (mu * phi_f.values * down).ravel()
        a[n_groups + 2 * j, :n_groups] = row_up
        a[n_groups + 2 * j, n_groups:] = -row_down
        a[n_groups + 2 * j + 1] = -a[n_groups + 2 * j]
        b[n_groups + 2 * j] = eps * sup
        b[n_groups + 2 * j + 1] = eps * sup
    _, x = simplex_maximize(c, a, b)
    p = x[:n_groups].reshape(fine.n_cells, u0.m)
    q = x[n_groups:].reshape(fine.n_cells, u0.m)
    w = up * p - down * q
    out = ControlField(fine, np.clip(u0.values + w, cset.lo, cset.hi))
    return l1_distance(out, u0), out


# --------------------------------------------------------------------------
# perturbation draw families
# --------------------------------------------------------------------------


def _sign_perturbation(mesh, m, magnitude, rng) -> DualField:
    signs = rng.integers(0, 2, size=(mesh.n_cells, m)) * 2 - 1
    return DualField(mesh, magnitude * signs.astype(float))


def _poly_perturbation(mesh, m, magnitude, rng, degree: int = 5) -> DualField:
    vals = np.empty((mesh.n_cells, m))
    for c in range(m):
        coeffs = rng.standard_normal(degree + 1)
        vals[:, c] = _poly_cell_averages(coeffs, mesh)
    peak = np.max(np.abs(vals))
    if peak == 0.0:
        return DualField(mesh, vals)
    return DualField(mesh, vals * (magnitude / peak))


# --------------------------------------------------------------------------
# growth profile
# --------------------------------------------------------------------------


def _flip_sample(u_star: ControlField, cset: Box, target: float, rng,
                 candidates=None) -> ControlField:
    """Reflect random cells across the box toward an L1 excursion ~ target."""
    out = u_star.values.copy()
    mu = u_star.mesh.cell_measure
    cells = np.arange(u_star.mesh.n_cells) if candidates is None else np.asarray(candidates)
    if cells.size == 0:
        return ControlField(u_star.mesh, out)
    order = rng.permutation(cells)
    reflected = np.where(np.abs(u_star.values - cset.lo) > np.abs(u_star.values - cset.hi),
                         cset.lo, cset.hi)
    spent = 0.0
    for i in order:
        move = float(np.sum(np.abs(reflected[i] - out[i])) * mu[i])
        if move == 0.0:
            continue
        if spent + move > target:
            frac = (target - spent) / move
            out[i] += frac * (reflected[i] - out[i])
            spent = target
            break
        out[i] = reflected[i]
        spent += move
    return ControlField(u_star.mesh, out)


def growth_profile(problem: Problem, u_star: ControlField, cset: Box,
                   delta: float, eta_grid, n_samples: int, seed: int,
                   criticality_tol: float = 1e-6) -> GrowthProfile:
    """Sampled upper estimate of the local growth function around a critical point."""
    eta_grid = sorted(float(e) for e in eta_grid)
    if any(e > delta for e in eta_grid):
        raise PreconditionError("empty bin: eta beyond the outer radius delta")
    if any(e <= 0 for e in eta_grid):
        raise PreconditionError("eta values must be positive")
    if criticality_residual(problem, u_star, cset) > criticality_tol:
        raise PreconditionError("reference field is not critical")
    j_star = problem.evaluate(u_star)
    try:
        delta0 = split_radius(u_star, cset)
    except Exception:
        delta0 = 0.0
    rows = []
    lo_eta = eta_grid[0]
    for s in range(n_samples):
        rng = np.random.default_rng([seed, s])
        target = float(rng.uniform(lo_eta, delta))
        if delta0 > 0 and s % 3 == 2:
            member = clustering_sequence(u_star, cset, min(target, delta0),
                                         int(rng.integers(1, 7)))
            u = member.field
            dist = l1_distance(u, prolong_to(u_star, u.mesh))
            family = "clustering"
        else:
            u = _flip_sample(u_star, cset, target, rng)
            dist = l1_distance(u, u_star)
            family = "flip"
        gap = problem.evaluate(u) - j_star
        rows.append({"sample": s, "family": family, "distance": dist,
                     "value_gap": gap})
    entries = []
    for eta in eta_grid:
        in_bin = [(r["value_gap"], r["sample"]) for r in rows
                  if eta <= r["distance"] <= delta * (1 + 1e-12)]
        if in_bin:
            w, arg = min(in_bin)
            entries.append((eta, max(w, 0.0), len(in_bin), arg))
        else:
            entries.append((eta, float("inf"), 0, -1))
    return GrowthProfile(delta=delta, entries=tuple(entries), rows=tuple(rows))


# --------------------------------------------------------------------------
# stability probe (localized solves under linear perturbations)
# --------------------------------------------------------------------------


def stability_probe(problem: Problem, u_star: ControlField, cset: Box,
                    gamma: float, delta_list, n_samples: int, seed: int,
                    opts: SolveOptions | None = None) -> ProbeRecord:
    """Empirical modulus delta -> max L1 move of localized minimizers."""
    opts = opts or SolveOptions()
    rows = []
    eps_hat = {}
    for j, delta in enumerate(delta_list):
        worst = 0.0
        for s in range(n_samples):
            rng = np.random.default_rng([seed, j, s])
            if s % 2 == 0:
                xi = _sign_perturbation(u_star.mesh, u_star.m, delta, rng)
                family = "signs"
            else:
                xi = _poly_perturbation(u_star.mesh, u_star.m, delta, rng)
                family = "poly"
            row = {"delta": float(delta), "sample": s, "family": family,
                   "xi_linf": linf_norm(xi), "distance": float("nan"),
                   "value": float("nan"), "gap": float("nan"),
                   "boundary_hit": 0, "error": ""}
            try:
                rep = solve_localized(problem, xi, u_star, gamma, cset, opts)
                dist = l1_distance(rep.u, u_star)
                row.update(distance=dist, value=rep.J, gap=rep.gap,
                           boundary_hit=int(dist >= gamma - 1e-9))
                worst = max(worst, dist)
            except Exception as exc:  # per-sample failures are data, not fatal
                row["error"] = type(exc).__name__
            rows.append(row)
        eps_hat[float(delta)] = worst
    # monotone envelope in delta
    env, run = {}, 0.0
    for d in sorted(eps_hat):
        run = max(run, eps_hat[d])
        env[repr(d)] = run
    return ProbeRecord(kind="stability", seed=seed,
                       params={"gamma": gamma, "delta_list": [float(d) for d in delta_list],
                               "n_samples": n_samples},
                       rows=tuple(rows), summary={"eps_hat": env})


# --------------------------------------------------------------------------
# subregularity probe (residual-to-distance error bound)
# --------------------------------------------------------------------------


def _balanced_pattern(u_star: ControlField, cset: Box, amplitude: float):
    """Interior +,-,-,+ tiling with exactly zero constant and linear moments."""
    slack = np.minimum(u_star.values - cset.lo, cset.hi - u_star.values)
    comp = int(np.argmax(slack.min(axis=0)))
    room = float(slack[:, comp].min())
    if room <= 0:
        return None
    a = min(amplitude, room)
    n = u_star.mesh.n_cells - (u_star.mesh.n_cells % 4)
    if n < 4:
        return None
    signs = np.zeros(u_star.mesh.n_cells)
    tile = np.array([1.0, -1.0, -1.0, 1.0])
    signs[:n] = np.tile(tile, n // 4)
    out = u_star.values.copy()
    out[:, comp] += a * signs
    return ControlField(u_star.mesh, out)


def subregularity_probe(problem: Problem, u_star: ControlField, cset: Box,
                        kappa: float, n_samples: int, seed: int,
                        r_grid=None, opts: SolveOptions | None = None,
                        criticality_tol: float = 1e-6) -> ProbeRecord:
    """Sample (criticality residual, distance) pairs inside the kappa-ball."""
    if criticality_residual(problem, u_star, cset) > criticality_tol:
        raise PreconditionError("reference field is not critical")
    opts = opts or SolveOptions()
    sigma_star = problem.switching(u_star)
    # residual each cell would carry after reflecting across the box
    at_hi = np.abs(u_star.values - cset.hi) <= np.abs(u_star.values - cset.lo)
    flip_res = np.where(at_hi, np.maximum(-sigma_star.values, 0.0),
                        np.maximum(sigma_star.values, 0.0))
    flip_res = np.where(
        np.minimum(u_star.values - cset.lo, cset.hi - u_star.values) > cset.default_tol(),
        np.abs(sigma_star.values), flip_res)
    cell_flip_res = flip_res.max(axis=1)
    res_ceiling = float(cell_flip_res.max()) if cell_flip_res.size else 0.0
    try:
        delta0 = split_radius(u_star, cset)
    except Exception:
        delta0 = 0.0
    j_star = problem.evaluate(u_star)

    rows = []
    for s in range(n_samples):
        rng = np.random.default_rng([seed, s])
        family = s % 4
        u = None
        if family == 0 and res_ceiling > 0:
            rho = float(rng.uniform(0.0, res_ceiling))
            candidates = np.flatnonzero(cell_flip_res <= rho)
            u = _flip_sample(u_star, cset, float(rng.uniform(0, kappa)), rng,
                             candidates=candidates)
            name = "threshold_flip"
        elif family == 1:
            u = _balanced_pattern(u_star, cset,
                                  float(rng.uniform(0.1, 1.0)) * kappa / max(u_star.mesh.total_measure, 1e-12))
            name = "balanced_pattern"
        elif family == 2 and delta0 > 0:
            d = float(rng.uniform(0.1, 1.0)) * min(kappa, delta0)
            u = clustering_sequence(u_star, cset, d, int(rng.integers(1, 5))).field
            name = "clustering"
        elif family == 3:
            eta = float(rng.choice([0.2, 0.1, 0.05]))
            rep = frank_wolfe(with_p_regularizer(problem, 2.0, eta), cset,
                              start=u_star, opts=opts)
            u = rep.u
            name = "regularized"
        if u is None:
            u = _flip_sample(u_star, cset, float(rng.uniform(0, kappa)), rng)
            name = "flip"
        base = prolong_to(u_star, u.mesh) if u.mesh != u_star.mesh else u_star
        dist = l1_distance(u, base)
        if dist > kappa * (1 + 1e-9):
            continue
        res = criticality_residual(problem, u, cset)
        rows.append({"sample": s, "family": name, "residual": res,
                     "distance": dist, "value_gap": problem.evaluate(u) - j_star})
    if r_grid is None:
        r_grid = [0.001, 0.01, 0.05, 0.1]
    summary = {}
    for r in sorted(float(r) for r in r_grid):
        near = [row["distance"] for row in rows if row["residual"] <= r]
        summary[repr(r)] = max(near) if near else 0.0
    return ProbeRecord(kind="subregularity", seed=seed,
                       params={"kappa": kappa, "n_samples": n_samples,
                               "r_grid": [float(r) for r in r_grid]},
                       rows=tuple(rows), summary={"max_distance_at_residual": summary})


# --------------------------------------------------------------------------
# genericity probe
# --------------------------------------------------------------------------


def genericity_probe(problem: Problem, cset: Box, mesh, eps_list,
                     n_samples: int, seed: int,
                     opts: SolveOptions | None = None, n_starts: int = 3,
                     defect_tol: float = 1e-9) -> ProbeRecord:
    """Fraction of randomly perturbed problems whose solutions are bang-bang."""
    opts = opts or SolveOptions()
    rows = []
    summary = {}
    for j, eps in enumerate(eps_list):
        hits = 0
        clean = 0
        degenerate = 0
        for s in range(n_samples):
            rng = np.random.default_rng([seed, j, s])
            scale = float(eps * rng.uniform(0.25, 1.0))
            xi = _poly_perturbation(mesh, cset.m, scale, rng)
            min_cell = float(np.min(np.max(np.abs(xi.values), axis=1)))
            is_degenerate = min_cell < 1e-12
            run_opts = dataclasses.replace(
                opts, seed=int(np.random.default_rng([seed, j, s, 1]).integers(2 ** 62)))
            result = multistart_global(with_linear_perturbation(problem, xi),
                                       cset, mesh, n_starts, run_opts)
            defect = extreme_defect(result.best.u, cset)
            rows.append({"eps": float(eps), "sample": s, "xi_linf": linf_norm(xi),
                         "min_cell_xi": min_cell, "degenerate": int(is_degenerate),
                         "defect": defect, "value": result.best.J,
                         "spread": result.value_spread})
            if is_degenerate:
                degenerate += 1
            else:
                clean += 1
                hits += int(defect <= defect_tol)
        summary[repr(float(eps))] = {
            "bang_bang_fraction": hits / clean if clean else float("nan"),
            "n_degenerate": degenerate,
        }
    return ProbeRecord(kind="genericity", seed=seed,
                       params={"eps_list": [float(e) for e in eps_list],
                               "n_samples": n_samples, "n_starts": n_starts},
                       rows=tuple(rows), summary=summary)


# --------------------------------------------------------------------------
# regularization path
# --------------------------------------------------------------------------


def regularization_path(problem: Problem, u_star: ControlField, cset: Box,
                        p: float, eta_list, opts: SolveOptions | None = None,
                        seed: int = 0) -> ProbeRecord:
    """Solve the p-regularized family along a decreasing eta schedule.

    Runs are warm-started at the previous solution; every row verifies the
    bound |xi_eta|_inf <= eta * (sup U)^(p-1) for xi_eta = eta |u|^(p-2) u.
    """
    etas = [float(e) for e in eta_list]
    if any(b >= a for a, b in zip(etas, etas[1:])):
        raise ValueError("eta_list must be strictly decreasing")
    opts = opts or SolveOptions()
    sup_u = cset.sup_norm
    warm = u_star
    rows = []
    for eta in etas:
        prob = with_p_regularizer(problem, p, eta) if eta > 0 else problem
        row = {"eta": eta, "distance": float("nan"), "xi_linf": float("nan"),
               "bound_ok": 0, "value": float("nan"), "gap": float("nan"),
               "iters": 0, "converged": 0, "error": ""}
        try:
            rep = frank_wolfe(prob, cset, start=warm, opts=opts)
            warm = rep.u
            r = np.linalg.norm(rep.u.values, axis=1)
            weight = np.ones_like(r) if p == 2 else np.where(r > 0, r ** (p - 2), 0.0)
            xi_eta = DualField(rep.u.mesh, eta * weight[:, None] * rep.u.values)
            xi_inf = linf_norm(xi_eta)
            bound = eta * sup_u ** (p - 1)
            row.update(distance=l1_distance(rep.u, u_star), xi_linf=xi_inf,
                       bound_ok=int(xi_inf <= bound + 1e-12), value=rep.J,
                       gap=rep.gap, iters=rep.iters, converged=int(rep.converged))
        except Exception as exc:
            row["error"] = type(exc).__name__
        rows.append(row)
    summary = {"distances": {repr(r["eta"]): r["distance"] for r in rows},
               "all_bounds_ok": int(all(r["bound_ok"] for r in rows if not r["error"]))}
    return ProbeRecord(kind="regpath", seed=seed,
                       params={"p": p, "eta_list": etas}, rows=tuple(rows),
                       summary=summary)
