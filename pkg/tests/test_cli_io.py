import csv
import json
import os
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from stochshape import __version__
from stochshape.cli import main
from stochshape.config import ConfigError, build_config, parse_config
from stochshape.dynamics import PhaseState, Trajectory, integrate_geodesic
from stochshape.kernels import Kernel
from stochshape.noise import DyadicMultiplier, Scalar
from stochshape.serialize import (read_trajectory, to_jsonable, write_json, write_snapshot_svg,
                                  write_table, write_trajectory)
from stochshape.shapes import circle

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
PRESETS = sorted(f for f in os.listdir(os.path.join(ROOT, "configs")) if f.endswith(".json"))

BASE = {"kernel": {"family": "gaussian", "width": 1.0}, "shape": {"type": "circle", "n": 8}}


def cfg(**extra):
    d = json.loads(json.dumps(BASE))
    d.update(extra)
    return d


def write_cfg(tmp_path, data, name="run.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


class TestConfig:
    def test_defaults(self):
        c = build_config(cfg())
        assert c.convention == "point" and c.T == 1.0 and c.steps == 200 and c.s == 1.5
        assert c.max_level == 10 and c.seed == 0 and c.trials == 20 and c.levels == (3, 4, 5, 6, 7)
        assert isinstance(c.sigma, Scalar) and c.sigma.epsilon == 0.0
        assert np.all(c.weights == 1)
        resolved = c.to_dict()
        assert resolved["time"] == {"T": 1.0, "steps": 200}
        assert build_config(resolved).to_dict() == resolved

    def test_full(self):
        c = build_config(cfg(convention="density", sigma={"type": "multiplier", "cells": [0.0, 1.0]},
                             noise={"max_level": 4, "seed": 7}, time={"T": 2.0, "steps": 10},
                             analysis={"s": 1.2, "levels": [1, 2], "trials": 3},
                             target={"type": "ellipse", "n": 8, "params": {"a": 2.0, "b": 1.0}}))
        assert isinstance(c.sigma, DyadicMultiplier) and np.allclose(c.weights, 1 / 8)
        assert c.target.points("point").shape == (8, 2)
        dens = c.shape.points("density")
        assert np.allclose(np.linalg.norm(dens, axis=1), np.sinc(1 / 8), rtol=1e-3)  # quadrature cell averages

    @pytest.mark.parametrize("data,field", [
        (cfg(kernel={"family": "gaussian", "width": 0.0}), "kernel.width"),
        (cfg(kernel={"family": "laplace", "width": 1.0}), "kernel.family"),
        (cfg(bogus=1), "<root>"),
        (cfg(shape={"type": "circle", "n": 2}), "shape.n"),
        (cfg(shape={"type": "circle", "n": 8, "params": {"radius": -1.0}}), "shape.params.radius"),
        (cfg(convention="density", shape={"type": "circle", "n": 6}), "shape.n"),
        (cfg(target={"type": "circle", "n": 9}), "target.n"),
        (cfg(sigma={"type": "scalar", "epsilon": -1.0}), "sigma.epsilon"),
        (cfg(sigma={"type": "multiplier", "cells": [1.0, 2.0]}), "sigma.cells"),
        (cfg(noise={"max_level": 21}), "noise.max_level"),
        (cfg(noise={"seed": -1}), "noise.seed"),
        (cfg(convention="density", noise={"max_level": 2}), "noise.max_level"),
        (cfg(time={"T": 0.0}), "time.T"),
        (cfg(time={"steps": 0}), "time.steps"),
        (cfg(analysis={"s": 2.0}), "analysis.s"),
        (cfg(analysis={"trials": 0}), "analysis.trials"),
        (cfg(time={"steps": "ten"}), "time.steps"),
    ])
    def test_rejections_name_the_field(self, data, field):
        with pytest.raises(ConfigError) as err:
            build_config(data)
        assert str(err.value).startswith(field)

    def test_malformed_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{"kernel": {\n  "family": }')
        with pytest.raises(ConfigError, match="line 2"):
            parse_config(p)
        with pytest.raises(ConfigError, match="cannot read"):
            parse_config(tmp_path / "missing.json")

    def test_polyline_relative_path(self, tmp_path):
        (tmp_path / "sq.txt").write_text("0 0\n1 0\n1 1\n0 1\n")
        path = write_cfg(tmp_path, cfg(shape={"type": "polyline_file", "n": 8, "params": {"path": "sq.txt"}}))
        c = parse_config(path)
        assert c.shape.points("point", c.base_dir).shape == (8, 2)

    @pytest.mark.parametrize("name", PRESETS)
    def test_presets_parse(self, name):
        parse_config(os.path.join(ROOT, "configs", name))


class TestSerialize:
    def test_trajectory_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        x0 = PhaseState.points(circle(5), rng.standard_normal((5, 2)))
        tr = integrate_geodesic(x0, Kernel("gaussian", 1.0), 1.0, 7)
        path = tmp_path / "t.csv"
        write_trajectory(tr, path)
        back = read_trajectory(path)
        assert np.max(np.abs(back.q - tr.q)) <= 1e-15 and np.max(np.abs(back.p - tr.p)) <= 1e-15
        assert np.array_equal(back.times, tr.times)

    def test_three_row_example(self, tmp_path):
        q = np.array([[[0.0, 1.0]], [[0.5, 1.0]], [[1.0, 1.0]]])
        p = np.ones_like(q) * [0.5, 0.0]
        tr = Trajectory(np.array([0.0, 0.5, 1.0]), q, p, np.ones(1), {})
        path = tmp_path / "t.csv"
        write_trajectory(tr, path)
        rows = list(csv.reader(open(path)))
        assert rows[0] == ["t", "i", "q0", "q1", "p0", "p1"]
        assert rows[1:] == [["0", "0", "0", "1", "0.5", "0"], ["0.5", "0", "0.5", "1", "0.5", "0"],
                            ["1", "0", "1", "1", "0.5", "0"]]

    def test_rejects_batched(self, tmp_path):
        tr = Trajectory(np.zeros(2), np.zeros((2, 3, 4, 2)), np.zeros((2, 3, 4, 2)), np.ones(4), {})
        with pytest.raises(ValueError):
            write_trajectory(tr, tmp_path / "t.csv")

    def test_json_and_table(self, tmp_path):
        obj = {"b": np.float64(1.5), "a": np.arange(3), "c": np.bool_(True), "d": float("nan")}
        assert to_jsonable(obj) == {"b": 1.5, "a": [0, 1, 2], "c": True, "d": "nan"}
        write_json(tmp_path / "x.json", obj)
        text = (tmp_path / "x.json").read_text()
        assert text.index('"a"') < text.index('"b"')
        write_table(tmp_path / "x.csv", ["k", "v"], [(1, 0.1)])
        assert (tmp_path / "x.csv").read_text() == "k,v\n1,0.10000000000000001\n"

    def test_svg(self, tmp_path):
        x0 = PhaseState.points(circle(6), 0.3 * circle(6))
        tr = integrate_geodesic(x0, Kernel("gaussian", 1.0), 1.0, 10)
        write_snapshot_svg(tr, tmp_path / "a.svg", stride=3)
        root = ET.parse(tmp_path / "a.svg").getroot()
        polys = root.findall("{http://www.w3.org/2000/svg}polygon")
        assert len(polys) == 5  # frames 0, 3, 6, 9 and the last
        assert polys[0].get("stroke") == "#1f77b4" and polys[-1].get("stroke") == "#d62728"

    def test_svg_constant_and_dimension(self, tmp_path):
        tr = Trajectory(np.arange(3.0), np.zeros((3, 4, 2)), np.zeros((3, 4, 2)), np.ones(4), {})
        write_snapshot_svg(tr, tmp_path / "c.svg")
        ET.parse(tmp_path / "c.svg")
        tr3 = Trajectory(np.arange(3.0), np.zeros((3, 4, 3)), np.zeros((3, 4, 3)), np.ones(4), {})
        with pytest.raises(ValueError):
            write_snapshot_svg(tr3, tmp_path / "d.svg")


class TestCli:
    def test_version(self, capsys):
        assert main(["version"]) == 0
        assert __version__ in capsys.readouterr().out

    def test_usage_errors(self, tmp_path, capsys):
        assert main(["frobnicate"]) == 1
        assert main(["geodesic"]) == 1
        assert "--config" in capsys.readouterr().err
        path = write_cfg(tmp_path, cfg(kernel={"family": "gaussian", "width": -1.0}))
        assert main(["geodesic", "--config", path, "--out", str(tmp_path / "o")]) == 1
        assert "kernel.width" in capsys.readouterr().err
        assert main(["sde", "--config", path, "--seed", "-3"]) == 1
        assert main(["sde", "--config", path, "--trials", "0"]) == 1

    def test_geodesic_outputs(self, tmp_path):
        path = write_cfg(tmp_path, cfg(time={"steps": 10}))
        out = tmp_path / "geo"
        assert main(["geodesic", "--config", path, "--out", str(out)]) == 0
        assert {"trajectory.csv", "snapshot.svg", "manifest.json"} <= set(os.listdir(out))
        man = json.loads((out / "manifest.json").read_text())
        assert man["command"] == "geodesic" and man["exit_code"] == 0 and man["version"] == __version__
        assert man["config"]["time"]["steps"] == 10
        assert man["summary"]["H0"] == 0.0

    def test_sde_deterministic_bytes(self, tmp_path):
        path = write_cfg(tmp_path, cfg(sigma={"type": "scalar", "epsilon": 1.0}, time={"steps": 20},
                                       noise={"seed": 3}))
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["sde", "--config", path, "--out", str(a)]) == 0
        assert main(["sde", "--config", path, "--out", str(b)]) == 0
        assert (a / "trajectory.csv").read_bytes() == (b / "trajectory.csv").read_bytes()
        assert (a / "snapshot.svg").read_bytes() == (b / "snapshot.svg").read_bytes()
        c = tmp_path / "c"
        assert main(["sde", "--config", path, "--out", str(c), "--seed", "4"]) == 0
        assert (a / "trajectory.csv").read_bytes() != (c / "trajectory.csv").read_bytes()

    def test_sde_trials_and_abort_exit(self, tmp_path):
        path = write_cfg(tmp_path, cfg(sigma={"type": "scalar", "epsilon": 1.0}, time={"steps": 20}))
        out = tmp_path / "t"
        assert main(["sde", "--config", path, "--out", str(out), "--trials", "3"]) == 0
        assert len((out / "aborts.csv").read_text().splitlines()) == 4
        huge = write_cfg(tmp_path, cfg(sigma={"type": "scalar", "epsilon": 1e308}, time={"steps": 5}), "h.json")
        assert main(["sde", "--config", huge, "--out", str(tmp_path / "h")]) == 2
        man = json.loads((tmp_path / "h" / "manifest.json").read_text())
        assert man["exit_code"] == 2 and "error" in man["summary"]

    def test_analysis_commands(self, tmp_path):
        dens = cfg(convention="density", sigma={"type": "scalar", "epsilon": 1.0}, time={"steps": 20},
                   noise={"max_level": 3}, analysis={"levels": [1, 2, 3], "trials": 4})
        path = write_cfg(tmp_path, dens)
        for cmd in ("converge", "energy", "norms", "kunita", "equivariance", "reparam"):
            out = tmp_path / cmd
            assert main([cmd, "--config", path, "--out", str(out)]) == 0, cmd
            assert (out / "report.json").exists() and (out / "manifest.json").exists()
        eq = json.loads((tmp_path / "equivariance" / "report.json").read_text())
        assert eq["deterministic_deviation"] <= 1e-12 and eq["stochastic_deviation"] <= 1e-12
        point = write_cfg(tmp_path, cfg(), "p.json")
        assert main(["energy", "--config", point, "--out", str(tmp_path / "e")]) == 1

    def test_shoot_command(self, tmp_path):
        path = write_cfg(tmp_path, cfg(kernel={"family": "gaussian", "width": 0.5},
                                       shape={"type": "circle", "n": 6},
                                       target={"type": "ellipse", "n": 6, "params": {"a": 1.2, "b": 0.9}}))
        out = tmp_path / "s"
        assert main(["shoot", "--config", path, "--out", str(out)]) == 0
        hist = json.loads((out / "loss_history.json").read_text())
        assert hist["converged"] and hist["loss"][-1] <= 1e-6
        assert main(["shoot", "--config", write_cfg(tmp_path, cfg(), "n.json"), "--out", str(out)]) == 1

    def test_sde_preset(self, tmp_path):
        out = tmp_path / "preset"
        assert main(["sde", "--config", os.path.join(ROOT, "configs", "circle_to_ellipse_sde.json"),
                     "--out", str(out)]) == 0
        man = json.loads((out / "manifest.json").read_text())
        assert man["config"]["sigma"]["epsilon"] == 1.7 and man["summary"]["aborted"] == 0
