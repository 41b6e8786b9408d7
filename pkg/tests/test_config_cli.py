import json
import os

import numpy as np
import pytest

from bangband import (Box, Mesh1D, Polytope, RunConfig, gradcheck_report,
                      instance_a, parse_config_text, run)
from bangband.config import Tag, build_problem, build_set
from bangband.errors import ConfigError
from bangband.mesh import DualField, field_from_csv
from bangband.problems import EllipticProblem, MomentProblem, OdeAffineProblem

BASE = """
problem = instance_a
set     = box(lo=[-1], hi=[1])
mesh    = mesh(a=0, b=1, n=64)
seed    = 0
out_dir = "out"
"""


class TestGrammar:
    def test_scalar_kinds(self):
        raw = parse_config_text('a = 1\nb = 2.5\nc = "text"\nd = word\n')
        assert raw == {"a": 1, "b": 2.5, "c": "text", "d": "word"}

    def test_lists_and_tags(self):
        raw = parse_config_text("s = box(lo=[-1, 0], hi=[1, 2])")
        assert raw["s"] == Tag("box", {"lo": [-1, 0], "hi": [1, 2]})

    def test_brace_blocks(self):
        raw = parse_config_text('p = elliptic{d="y**3", length=1}')
        assert raw["p"].name == "elliptic"
        assert raw["p"].kwargs["d"] == "y**3"

    def test_comments_ignored(self):
        raw = parse_config_text("# header\na = 1  # trailing\n")
        assert raw == {"a": 1}

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigError):
            parse_config_text("a = 1\na = 2\n")

    def test_garbage_rejected_with_line(self):
        with pytest.raises(ConfigError, match="line 2"):
            parse_config_text("a = 1\nb = @@@\n")


class TestRunConfig:
    def test_catalog_problem(self):
        cfg = RunConfig.from_text(BASE)
        assert isinstance(cfg.problem, MomentProblem)
        assert cfg.mesh == Mesh1D.uniform(0.0, 1.0, 64)
        assert cfg.cset == Box(lo=[-1.0], hi=[1.0])

    def test_unknown_top_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown top-level"):
            RunConfig.from_text(BASE + "bogus = 1\n")

    def test_unknown_block_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown keys"):
            RunConfig.from_text(BASE.replace("box(lo=[-1], hi=[1])",
                                             "box(lo=[-1], hi=[1], q=3)"))

    def test_missing_problem_rejected(self):
        with pytest.raises(ConfigError, match="problem"):
            RunConfig.from_text("set = box(lo=[0], hi=[1])\n"
                                "mesh = mesh(n=4)\n")

    def test_polytope_set(self):
        cset = build_set(parse_config_text(
            "s = polytope(vertices=[[0,0],[1,0],[0,1]])")["s"])
        assert isinstance(cset, Polytope)

    def test_moment_block(self):
        problem = build_problem(parse_config_text(
            "p = moment{linear=[-0.5, 1]}")["p"])
        mesh = Mesh1D.uniform(0.0, 1.0, 64)
        ref = instance_a()
        from bangband import ControlField
        u = ControlField.constant(mesh, [0.7])
        assert problem.evaluate(u) == pytest.approx(ref.evaluate(u), abs=1e-12)

    def test_ode_block_expressions(self):
        problem = build_problem(parse_config_text(
            'p = ode{f0="0", f1="1", g0="y", T=1, y0=0}')["p"])
        assert isinstance(problem, OdeAffineProblem)
        mesh = Mesh1D.uniform(0.0, 1.0, 100)
        from bangband import ControlField
        # y' = u, u = -1: J = integral of -t dt = -1/2
        value = problem.evaluate(ControlField.constant(mesh, [-1.0]))
        assert value == pytest.approx(-0.5, abs=1e-10)

    def test_elliptic_block_expressions(self):
        problem = build_problem(parse_config_text(
            'p = elliptic{d="y**3", L="0.5*y**2"}')["p"])
        assert isinstance(problem, EllipticProblem)

    def test_bad_expression_rejected(self):
        with pytest.raises(ConfigError, match="unknown symbols"):
            build_problem(parse_config_text('p = ode{f0="z + 1"}')["p"])


def run_cli(argv, tmp_path, config_text=BASE):
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text(config_text)
    return run([argv[0], "--config", str(cfg_path),
                "--out-dir", str(tmp_path / "out")] + argv[1:])


class TestCliExitCodes:
    def test_solve_success(self, tmp_path, capsys):
        assert run_cli(["solve"], tmp_path) == 0
        report = json.loads((tmp_path / "out" / "solve_instance_a_0.json")
                            .read_text())
        assert report["J"] == pytest.approx(-0.25, abs=1e-4)
        assert "J=" in capsys.readouterr().out

    def test_missing_config_is_validation_error(self, tmp_path, capsys):
        assert run(["solve", "--config", str(tmp_path / "nope.cfg")]) == 2
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "ConfigError"

    def test_bad_config_is_validation_error(self, tmp_path, capsys):
        assert run_cli(["solve"], tmp_path, "problem = wat\n") == 2

    def test_cluster_on_vertex_field_is_precondition_error(self, tmp_path,
                                                           capsys):
        # the instance-A solve returns a bang-bang field: nothing to split
        code = run_cli(["cluster", "--delta", "0.1", "--levels", "2"], tmp_path)
        assert code == 4
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "NoSplitError"

    def test_cluster_writes_level_files(self, tmp_path):
        config = BASE.replace("problem = instance_a",
                              "problem = instance_b\nustar = const(v=[0])")
        code = run_cli(["cluster", "--delta", "0.1", "--levels", "3"], tmp_path,
                       config)
        assert code == 0
        for level in (1, 2, 3):
            path = tmp_path / "out" / f"cluster_instance_b_0_level{level}.csv"
            field = field_from_csv(path)
            assert field.mesh.n_cells == 64 * 2 ** level

    def test_gradcheck_pass(self, tmp_path):
        assert run_cli(["gradcheck"], tmp_path) == 0
        report = json.loads((tmp_path / "out" / "gradcheck_instance_a_0.json")
                            .read_text())
        assert report["passed"]
        assert report["max_rel_err"] <= 1e-5

    def test_seed_override_in_filenames(self, tmp_path):
        assert run_cli(["solve", "--seed", "5"], tmp_path) == 0
        assert (tmp_path / "out" / "solve_instance_a_5.json").exists()


class TestCliReproducibility:
    def test_probe_outputs_byte_identical(self, tmp_path):
        config = BASE + "probe = stability(gamma=0.5, deltas=[0.02], samples=5)\n"
        for sub in ("a", "b"):
            cfg_path = tmp_path / f"{sub}.cfg"
            cfg_path.write_text(config)
            assert run(["probe-stability", "--config", str(cfg_path),
                        "--out-dir", str(tmp_path / sub)]) == 0
        for name in ("stability_instance_a_0.csv", "stability_instance_a_0.json"):
            assert (tmp_path / "a" / name).read_bytes() == \
                (tmp_path / "b" / name).read_bytes()


class TestGradcheckNegativeControl:
    def test_corrupted_switching_fails(self, unit_box):
        mesh = Mesh1D.uniform(0.0, 1.0, 32)
        problem = instance_a()

        def corrupted(u):
            sigma = problem.switching(u)
            return DualField(u.mesh, sigma.values + 0.01)

        report = gradcheck_report(problem, unit_box, mesh,
                                  switching=corrupted)
        assert not report["passed"]

    def test_exact_gradient_is_tight(self, unit_box):
        mesh = Mesh1D.uniform(0.0, 1.0, 32)
        report = gradcheck_report(instance_a(), unit_box, mesh)
        assert report["max_rel_err"] <= 1e-10
