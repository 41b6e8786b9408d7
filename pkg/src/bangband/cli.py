"""Batch front door: parse a run config, dispatch solves and probes, write
CSV/JSON artifacts.

Exit codes: 0 success, 2 validation error, 3 solver nonconvergence or
gradient-check failure, 4 probe precondition failure.  All errors also emit
one machine-readable JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from .errors import (BangbandError, ConfigError, IntegrationFailureError,
                     NewtonConvergenceError, NoSplitError, PreconditionError,
                     RadiusExceededError)
from .mesh import (ControlField, DualField, TestBank, field_from_csv,
                   field_to_csv, l1_distance, linf_norm, pairing, prolong_to)
from .sets import Box, contains
from .problems import _poly_cell_averages, with_linear_perturbation
from .solver import (SolveOptions, frank_wolfe, multistart_global,
                     solve_localized)
from .analysis import (adversarial_weak_ball, clustering_sequence,
                       genericity_probe, growth_profile, regularization_path,
                       stability_probe, subregularity_probe, vpcasas_check)
from .config import RunConfig, Tag

_EXIT_OK = 0
_EXIT_VALIDATION = 2
_EXIT_NONCONVERGENCE = 3
_EXIT_PRECONDITION = 4


class _CliFailure(Exception):
    def __init__(self, code: int, payload: dict):
        super().__init__(payload.get("message", ""))
        self.code = code
        self.payload = payload


def _fail(code, error, message, **extra):
    raise _CliFailure(code, {"error": error, "message": message, **extra})


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _out_path(cfg, args, stem):
    out_dir = args.out_dir or cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    return os.path.join(out_dir, stem)


def _load_config(args) -> RunConfig:
    if not args.config:
        _fail(_EXIT_VALIDATION, "ConfigError", "--config is required")
    if not os.path.exists(args.config):
        _fail(_EXIT_VALIDATION, "ConfigError", f"config not found: {args.config}")
    cfg = RunConfig.from_file(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _field_from_tag(tag: Tag, mesh, m, cls=ControlField):
    if tag.name == "const":
        tag.check_keys({"v"})
        v = tag.require("v")
        vals = [float(x) for x in (v if isinstance(v, list) else [v])]
        if len(vals) != m:
            raise ConfigError(f"const field needs {m} components, got {len(vals)}")
        return cls.constant(mesh, vals)
    if tag.name == "poly":
        tag.check_keys({"coeffs"})
        coeffs = tag.require("coeffs")
        rows = coeffs if isinstance(coeffs[0], list) else [coeffs]
        if len(rows) != m:
            raise ConfigError(f"poly field needs {m} coefficient rows, got {len(rows)}")
        vals = np.column_stack([_poly_cell_averages([float(c) for c in r], mesh)
                                for r in rows])
        return cls(mesh, vals)
    if tag.name == "file":
        tag.check_keys({"path"})
        return field_from_csv(str(tag.require("path")), cls)
    raise ConfigError(f"unknown field spec '{tag.name}' (const/poly/file)")


def _resolve_ustar(cfg, args) -> ControlField:
    """Reference control: --ustar CSV, config `ustar = ...`, else a fresh solve."""
    if getattr(args, "ustar", None):
        u = field_from_csv(args.ustar)
    elif cfg.ustar_spec is not None:
        u = _field_from_tag(cfg.ustar_spec, cfg.mesh, cfg.cset.m)
    else:
        report = frank_wolfe(cfg.problem, cfg.cset, cfg.mesh, cfg.solver)
        if not report.converged:
            _fail(_EXIT_NONCONVERGENCE, "Nonconvergence",
                  "reference solve did not converge", gap=report.gap)
        u = report.u
    tol = cfg.cset.default_tol()
    if not all(contains(cfg.cset, row, tol) for row in u.values):
        _fail(_EXIT_VALIDATION, "ConfigError",
              "reference control violates the admissible set")
    return u


def _probe_tag(cfg, expected: str) -> Tag:
    if cfg.probe is None:
        _fail(_EXIT_VALIDATION, "ConfigError",
              f"config needs a probe = {expected}(...) block")
    if cfg.probe.name != expected:
        _fail(_EXIT_VALIDATION, "ConfigError",
              f"probe block is '{cfg.probe.name}', expected '{expected}'")
    return cfg.probe


def _write_probe(record, cfg, args, stem):
    csv_path = _out_path(cfg, args, stem + ".csv")
    json_path = _out_path(cfg, args, stem + ".json")
    record.to_csv(csv_path)
    record.to_json(json_path)
    return csv_path


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def _cmd_solve(cfg, args):
    if args.starts > 1:
        result = multistart_global(cfg.problem, cfg.cset, cfg.mesh, args.starts,
                                   cfg.solver, threads=args.threads)
        report = result.best
    else:
        report = frank_wolfe(cfg.problem, cfg.cset, cfg.mesh, cfg.solver)
    stem = f"solve_{cfg.problem_name}_{cfg.seed}"
    _write_json(_out_path(cfg, args, stem + ".json"), report.to_json_dict())
    field_to_csv(report.u, _out_path(cfg, args, stem + "_u.csv"))
    print(f"solve {cfg.problem_name}: J={report.J!r} gap={report.gap!r} "
          f"residual={report.residual!r} iters={report.iters}")
    if not report.converged:
        _fail(_EXIT_NONCONVERGENCE, "Nonconvergence",
              "gap tolerance not reached", gap=report.gap, iters=report.iters)
    return _EXIT_OK


def _cmd_localize(cfg, args):
    if cfg.xi_spec is None:
        _fail(_EXIT_VALIDATION, "ConfigError",
              "localize needs an xi = const/poly/file block")
    xi = _field_from_tag(cfg.xi_spec, cfg.mesh, cfg.cset.m, DualField)
    center = _resolve_ustar(cfg, args)
    report = solve_localized(cfg.problem, xi, center, args.gamma, cfg.cset,
                             cfg.solver)
    stem = f"localize_{cfg.problem_name}_{cfg.seed}"
    payload = report.to_json_dict()
    payload["gamma"] = args.gamma
    payload["distance_to_center"] = l1_distance(report.u, center)
    _write_json(_out_path(cfg, args, stem + ".json"), payload)
    field_to_csv(report.u, _out_path(cfg, args, stem + "_u.csv"))
    print(f"localize {cfg.problem_name}: J={report.J!r} "
          f"moved={payload['distance_to_center']!r} of gamma={args.gamma!r}")
    if not report.converged:
        _fail(_EXIT_NONCONVERGENCE, "Nonconvergence",
              "gap tolerance not reached", gap=report.gap)
    return _EXIT_OK


def _cmd_cluster(cfg, args):
    u_star = _resolve_ustar(cfg, args)
    stem = f"cluster_{cfg.problem_name}_{cfg.seed}"
    levels = []
    for n in range(1, args.levels + 1):
        member = clustering_sequence(u_star, cfg.cset, args.delta, n)
        path = _out_path(cfg, args, f"{stem}_level{n}.csv")
        field_to_csv(member.field, path)
        u_prol = prolong_to(u_star, member.field.mesh)
        levels.append({"level": n, "delta": member.delta,
                       "distance": l1_distance(member.field, u_prol),
                       "file": os.path.basename(path)})
    from .analysis import split_radius

    _write_json(_out_path(cfg, args, stem + ".json"),
                {"delta": args.delta,
                 "delta0": split_radius(u_star, cfg.cset),
                 "levels": levels})
    print(f"cluster {cfg.problem_name}: {args.levels} levels at delta={args.delta!r}")
    return _EXIT_OK


def _cmd_weakball(cfg, args):
    u_star = _resolve_ustar(cfg, args)
    bank = TestBank.monomials(cfg.mesh, args.degree)
    distance, field = adversarial_weak_ball(u_star, cfg.cset, args.eps, bank)
    stem = f"weakball_{cfg.problem_name}_{cfg.seed}"
    _write_json(_out_path(cfg, args, stem + ".json"),
                {"eps": args.eps, "degree": args.degree, "distance": distance})
    field_to_csv(field, _out_path(cfg, args, stem + "_u.csv"))
    print(f"weakball {cfg.problem_name}: distance={distance!r} at eps={args.eps!r}")
    return _EXIT_OK


def _cmd_growth(cfg, args):
    tag = _probe_tag(cfg, "growth")
    tag.check_keys({"delta", "etas", "samples"})
    u_star = _resolve_ustar(cfg, args)
    profile = growth_profile(cfg.problem, u_star, cfg.cset,
                             float(tag.require("delta")),
                             [float(e) for e in tag.require("etas")],
                             int(tag.get("samples", 200)), cfg.seed)
    record = profile.to_record(cfg.seed)
    path = _write_probe(record, cfg, args, f"growth_{cfg.problem_name}_{cfg.seed}")
    print(f"growth {cfg.problem_name}: {len(profile.entries)} bins -> {path}")
    return _EXIT_OK


def _cmd_probe_stability(cfg, args):
    tag = _probe_tag(cfg, "stability")
    tag.check_keys({"gamma", "deltas", "samples"})
    u_star = _resolve_ustar(cfg, args)
    record = stability_probe(cfg.problem, u_star, cfg.cset,
                             float(tag.require("gamma")),
                             [float(d) for d in tag.require("deltas")],
                             int(tag.get("samples", 50)), cfg.seed, cfg.solver)
    path = _write_probe(record, cfg, args,
                        f"stability_{cfg.problem_name}_{cfg.seed}")
    print(f"stability {cfg.problem_name}: eps_hat="
          f"{record.summary['eps_hat']} -> {path}")
    return _EXIT_OK


def _cmd_probe_subreg(cfg, args):
    tag = _probe_tag(cfg, "subreg")
    tag.check_keys({"kappa", "samples", "r_grid"})
    u_star = _resolve_ustar(cfg, args)
    r_grid = tag.get("r_grid")
    record = subregularity_probe(cfg.problem, u_star, cfg.cset,
                                 float(tag.require("kappa")),
                                 int(tag.get("samples", 100)), cfg.seed,
                                 r_grid=[float(r) for r in r_grid] if r_grid else None,
                                 opts=cfg.solver)
    path = _write_probe(record, cfg, args, f"subreg_{cfg.problem_name}_{cfg.seed}")
    print(f"subreg {cfg.problem_name}: "
          f"{record.summary['max_distance_at_residual']} -> {path}")
    return _EXIT_OK


def _cmd_probe_genericity(cfg, args):
    tag = _probe_tag(cfg, "genericity")
    tag.check_keys({"eps_list", "samples", "starts"})
    record = genericity_probe(cfg.problem, cfg.cset, cfg.mesh,
                              [float(e) for e in tag.require("eps_list")],
                              int(tag.get("samples", 100)), cfg.seed,
                              opts=cfg.solver, n_starts=int(tag.get("starts", 3)))
    path = _write_probe(record, cfg, args,
                        f"genericity_{cfg.problem_name}_{cfg.seed}")
    fractions = {k: v["bang_bang_fraction"] for k, v in record.summary.items()}
    print(f"genericity {cfg.problem_name}: {fractions} -> {path}")
    return _EXIT_OK


def _cmd_regpath(cfg, args):
    tag = _probe_tag(cfg, "regpath")
    tag.check_keys({"p", "etas"})
    u_star = _resolve_ustar(cfg, args)
    record = regularization_path(cfg.problem, u_star, cfg.cset,
                                 float(tag.get("p", 2.0)),
                                 [float(e) for e in tag.require("etas")],
                                 cfg.solver, cfg.seed)
    path = _write_probe(record, cfg, args,
                        f"regpath_{cfg.problem_name}_{cfg.seed}")
    print(f"regpath {cfg.problem_name}: {len(record.rows)} etas -> {path}")
    return _EXIT_OK


def _interior_base(cset: Box, mesh) -> ControlField:
    if isinstance(cset, Box):
        mid = 0.5 * (cset.lo + cset.hi)
    else:
        mid = np.mean(cset.vertices, axis=0)
    return ControlField.constant(mesh, mid)


def gradcheck_report(problem, cset, mesh, n_directions: int = 20, seed: int = 0,
                     fd_eps: float = 1e-6, tol: float = 1e-5,
                     switching=None) -> dict:
    """Central finite differences of J against pairing(sigma, direction).

    Directions are random fields scaled so the perturbed controls stay inside
    the set; errors are relative with a mixed 1 + |slope| denominator.
    ``switching`` may override the problem's own (negative-control fixture).
    """
    switching = switching or problem.switching
    base = _interior_base(cset, mesh)
    slack = float(np.min(np.minimum(base.values - cset.lo,
                                    cset.hi - base.values))) \
        if isinstance(cset, Box) else 0.1
    rows = []
    worst = None
    for k in range(n_directions):
        rng = np.random.default_rng([seed, k])
        direction = rng.standard_normal(base.values.shape)
        direction *= 0.5 * slack / max(np.max(np.abs(direction)), 1e-300)
        up = ControlField(mesh, base.values + fd_eps * direction)
        dn = ControlField(mesh, base.values - fd_eps * direction)
        fd = float(problem.evaluate(up) - problem.evaluate(dn)) / (2 * fd_eps)
        slope = float(pairing(switching(base), ControlField(mesh, direction)))
        rel = abs(fd - slope) / (1 + abs(slope))
        rows.append({"direction": k, "fd": fd, "slope": slope, "rel_err": rel})
        if worst is None or rel > worst["rel_err"]:
            worst = rows[-1]
    return {"n_directions": n_directions, "fd_eps": fd_eps, "tol": tol,
            "max_rel_err": worst["rel_err"],
            "passed": bool(worst["rel_err"] <= tol),
            "worst": worst, "rows": rows}


def _cmd_gradcheck(cfg, args):
    report = gradcheck_report(cfg.problem, cfg.cset, cfg.mesh,
                              n_directions=args.directions, seed=cfg.seed,
                              tol=args.tol)
    stem = f"gradcheck_{cfg.problem_name}_{cfg.seed}"
    _write_json(_out_path(cfg, args, stem + ".json"), report)
    print(f"gradcheck {cfg.problem_name}: max_rel_err={report['max_rel_err']!r} "
          f"{'pass' if report['passed'] else 'FAIL'}")
    if not report["passed"]:
        _fail(_EXIT_NONCONVERGENCE, "GradcheckFailure",
              "finite differences disagree with the switching field",
              worst=report["worst"])
    return _EXIT_OK


def _cmd_vpcasas(cfg, args):
    u_star = _resolve_ustar(cfg, args)
    result = vpcasas_check(cfg.problem, u_star, cfg.cset, args.delta, args.eps,
                           args.levels)
    stem = f"vpcasas_{cfg.problem_name}_{cfg.seed}"
    payload = {"delta": args.delta, "eps": args.eps, "found": result.found,
               "level": result.level,
               "trace": [{"level": n, "value_gap": g} for n, g in result.trace]}
    _write_json(_out_path(cfg, args, stem + ".json"), payload)
    if result.found:
        field_to_csv(result.field, _out_path(cfg, args, stem + "_u.csv"))
    print(f"vpcasas {cfg.problem_name}: found={result.found} level={result.level}")
    return _EXIT_OK if result.found else _EXIT_NONCONVERGENCE


_COMMANDS = {
    "solve": _cmd_solve,
    "localize": _cmd_localize,
    "cluster": _cmd_cluster,
    "weakball": _cmd_weakball,
    "growth": _cmd_growth,
    "probe-stability": _cmd_probe_stability,
    "probe-subreg": _cmd_probe_subreg,
    "probe-genericity": _cmd_probe_genericity,
    "regpath": _cmd_regpath,
    "gradcheck": _cmd_gradcheck,
    "vpcasas": _cmd_vpcasas,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bangband",
        description="Bang-bang stability experiments for affine optimal control.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="run configuration file")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--out-dir", default=None,
                       help="override the config output directory")
        p.add_argument("--threads", type=int,
                       default=int(os.environ.get("BANGBAND_THREADS", "1")),
                       help="worker threads for multistart sweeps")

    p = sub.add_parser("solve", help="conditional-gradient solve")
    common(p)
    p.add_argument("--starts", type=int, default=1,
                   help="random multistart count (best-of)")

    p = sub.add_parser("localize", help="solve the perturbed localized problem")
    common(p)
    p.add_argument("--gamma", type=float, required=True, help="L1 ball radius")
    p.add_argument("--ustar", default=None, help="center field CSV")

    p = sub.add_parser("cluster", help="emit clustering-sequence members")
    common(p)
    p.add_argument("--delta", type=float, required=True, help="L1 distance")
    p.add_argument("--levels", type=int, default=8)
    p.add_argument("--ustar", default=None, help="reference field CSV")

    p = sub.add_parser("weakball", help="adversarial weak-ball excursion")
    common(p)
    p.add_argument("--eps", type=float, required=True, help="weak-gap radius")
    p.add_argument("--degree", type=int, default=8, help="test-bank degree")
    p.add_argument("--ustar", default=None, help="reference field CSV")

    p = sub.add_parser("vpcasas", help="near-optimal clustering witness search")
    common(p)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--levels", type=int, default=12)
    p.add_argument("--ustar", default=None, help="reference field CSV")

    for name in ("growth", "probe-stability", "probe-subreg",
                 "probe-genericity", "regpath"):
        p = sub.add_parser(name, help=f"run the {name} probe")
        common(p)
        if name != "probe-genericity":
            p.add_argument("--ustar", default=None, help="reference field CSV")

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    common(p)
    p.add_argument("--directions", type=int, default=20)
    p.add_argument("--tol", type=float, default=1e-5)
    return parser


def run(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return _EXIT_VALIDATION if exc.code not in (0, None) else 0
    try:
        cfg = _load_config(args)
        return _COMMANDS[args.command](cfg, args)
    except _CliFailure as exc:
        print(json.dumps(exc.payload, sort_keys=True), file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(json.dumps({"error": "ConfigError", "message": str(exc)},
                         sort_keys=True), file=sys.stderr)
        return _EXIT_VALIDATION
    except (PreconditionError, NoSplitError, RadiusExceededError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)},
                         sort_keys=True), file=sys.stderr)
        return _EXIT_PRECONDITION
    except (IntegrationFailureError, NewtonConvergenceError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)},
                         sort_keys=True), file=sys.stderr)
        return _EXIT_NONCONVERGENCE
    except (BangbandError, ValueError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)},
                         sort_keys=True), file=sys.stderr)
        return _EXIT_VALIDATION


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
