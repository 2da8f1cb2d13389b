"""Strict JSON run configuration."""

from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass

import jsonschema
import numpy as np

from .dyadic import DyadicFunction
from .kernels import Kernel
from .noise import DyadicMultiplier, Scalar, SigmaOperator
from .shapes import circle, circle_curve, ellipse, polyline_curve, read_polyline, resample_closed


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


DEFAULTS = {"T": 1.0, "steps": 200, "s": 1.5, "max_level": 10}

_NUM = {"type": "number"}
_INT = {"type": "integer"}
_POINT2 = {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


_SHAPE = {
    "oneOf": [
        _obj({"type": {"const": "circle"}, "n": _INT,
              "params": _obj({"radius": _NUM, "center": _POINT2})}, ["type", "n"]),
        _obj({"type": {"const": "ellipse"}, "n": _INT,
              "params": _obj({"a": _NUM, "b": _NUM, "center": _POINT2})}, ["type", "n"]),
        _obj({"type": {"const": "polyline_file"}, "n": _INT,
              "params": _obj({"path": {"type": "string"}}, ["path"])}, ["type", "n", "params"]),
    ]
}

SCHEMA = _obj({
    "kernel": _obj({"family": {"enum": ["gaussian", "cauchy"]}, "width": _NUM}, ["family", "width"]),
    "shape": _SHAPE,
    "target": _SHAPE,
    "convention": {"enum": ["point", "density"]},
    "sigma": {"oneOf": [_obj({"type": {"const": "scalar"}, "epsilon": _NUM}, ["type", "epsilon"]),
                        _obj({"type": {"const": "multiplier"},
                              "cells": {"type": "array", "items": _NUM, "minItems": 1}},
                             ["type", "cells"])]},
    "noise": _obj({"max_level": _INT, "seed": _INT}),
    "time": _obj({"T": _NUM, "steps": _INT}),
    "analysis": _obj({"s": _NUM, "levels": {"type": "array", "items": _INT, "minItems": 1},
                      "trials": _INT}),
    "output": {"type": "string"},
}, ["kernel", "shape"])


def _is_pow2(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


@dataclass(frozen=True)
class ShapeConfig:
    type: str
    n: int
    params: dict

    def points(self, convention: str, base_dir: str = ".") -> np.ndarray:
        """Landmarks (point convention) or cell averages of the curve (density convention)."""
        if self.type == "polyline_file":
            return resample_closed(self._polyline(base_dir), self.n)
        if convention == "density":
            return DyadicFunction.from_callable(self.curve(base_dir), int(np.log2(self.n))).values
        if self.type == "circle":
            return circle(self.n, self.params.get("radius", 1.0), self.params.get("center", (0.0, 0.0)))
        return ellipse(self.n, self.params.get("a", 1.4), self.params.get("b", 0.8),
                       self.params.get("center", (0.0, 0.0)))

    def curve(self, base_dir: str = "."):
        """The underlying closed curve as a map [0, 1) -> R^2."""
        if self.type == "polyline_file":
            return polyline_curve(self._polyline(base_dir))
        c = np.asarray(self.params.get("center", (0.0, 0.0)), dtype=float)
        if self.type == "circle":
            scale = np.array([1.0, 1.0]) * self.params.get("radius", 1.0)
        else:
            scale = np.array([self.params.get("a", 1.4), self.params.get("b", 0.8)])
        return lambda x: circle_curve(x) * scale + c

    def _polyline(self, base_dir):
        path = self.params["path"]
        return read_polyline(path if os.path.isabs(path) else os.path.join(base_dir, path))


@dataclass(frozen=True)
class RunConfig:
    kernel: Kernel
    shape: ShapeConfig
    target: ShapeConfig | None
    convention: str
    sigma: SigmaOperator
    max_level: int
    seed: int
    T: float
    steps: int
    s: float
    levels: tuple
    trials: int
    output: str
    base_dir: str
    raw: dict

    @property
    def weights(self) -> np.ndarray:
        n = self.shape.n
        return np.full(n, 1.0 / n) if self.convention == "density" else np.ones(n)

    def to_dict(self) -> dict:
        """Fully resolved configuration (defaults filled in), suitable for re-running."""
        d = copy.deepcopy(self.raw)
        d["convention"] = self.convention
        d["noise"] = {"max_level": self.max_level, "seed": self.seed}
        d["time"] = {"T": self.T, "steps": self.steps}
        d["analysis"] = {"s": self.s, "levels": list(self.levels), "trials": self.trials}
        d["output"] = self.output
        if "sigma" not in d:
            d["sigma"] = {"type": "scalar", "epsilon": 0.0}
        return d


def _fail(field: str, msg: str):
    raise ConfigError(f"{field}: {msg}")


def _shape(d: dict, field: str) -> ShapeConfig:
    params = dict(d.get("params", {}))
    if d["n"] < 3:
        _fail(f"{field}.n", f"need at least 3 landmarks, got {d['n']}")
    for key in ("radius", "a", "b"):
        if key in params and not params[key] > 0:
            _fail(f"{field}.params.{key}", f"must be positive, got {params[key]}")
    return ShapeConfig(d["type"], int(d["n"]), params)


def build_config(data: dict, base_dir: str = ".") -> RunConfig:
    """Validate a decoded JSON object and fill defaults."""
    try:
        jsonschema.validate(data, SCHEMA)
    except jsonschema.ValidationError as exc:
        field = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{field}: {exc.message}") from None

    kd = data["kernel"]
    if not kd["width"] > 0:
        _fail("kernel.width", f"must be positive, got {kd['width']}")
    kernel = Kernel(kd["family"], kd["width"])

    shape = _shape(data["shape"], "shape")
    target = _shape(data["target"], "target") if "target" in data else None
    convention = data.get("convention", "point")
    if convention == "density" and not _is_pow2(shape.n):
        _fail("shape.n", f"density convention needs a power of 2, got {shape.n}")
    if target is not None and target.n != shape.n:
        _fail("target.n", f"must equal shape.n ({shape.n}), got {target.n}")

    sd = data.get("sigma", {"type": "scalar", "epsilon": 0.0})
    if sd["type"] == "scalar":
        if not (np.isfinite(sd["epsilon"]) and sd["epsilon"] >= 0):
            _fail("sigma.epsilon", f"must be finite and >= 0, got {sd['epsilon']}")
        sigma = Scalar(float(sd["epsilon"]))
    else:
        cells = np.asarray(sd["cells"], dtype=float)
        if not _is_pow2(len(cells)):
            _fail("sigma.cells", f"cell count must be a power of 2, got {len(cells)}")
        if convention != "density":
            _fail("sigma.cells", "a multiplier needs the density convention")
        sigma = DyadicMultiplier(DyadicFunction(cells[:, None]))

    nd = data.get("noise", {})
    max_level = nd.get("max_level", DEFAULTS["max_level"])
    seed = nd.get("seed", 0)
    if not 0 <= max_level <= 20:
        _fail("noise.max_level", f"must lie in [0, 20], got {max_level}")
    if not 0 <= seed < 2**64:
        _fail("noise.seed", f"must be an unsigned 64-bit integer, got {seed}")
    if convention == "density" and 2**max_level < shape.n:
        _fail("noise.max_level", f"2**max_level must be >= shape.n ({shape.n})")

    td = data.get("time", {})
    T = float(td.get("T", DEFAULTS["T"]))
    steps = td.get("steps", DEFAULTS["steps"])
    if not (np.isfinite(T) and T > 0):
        _fail("time.T", f"must be positive, got {T}")
    if steps < 1:
        _fail("time.steps", f"must be >= 1, got {steps}")

    ad = data.get("analysis", {})
    s = float(ad.get("s", DEFAULTS["s"]))
    if not 1 < s < 2:
        _fail("analysis.s", f"must lie in (1, 2), got {s}")
    levels = tuple(ad.get("levels", (3, 4, 5, 6, 7)))
    if any(n < 0 for n in levels):
        _fail("analysis.levels", "levels must be >= 0")
    trials = ad.get("trials", 20)
    if trials < 1:
        _fail("analysis.trials", f"must be >= 1, got {trials}")

    return RunConfig(kernel, shape, target, convention, sigma, int(max_level), int(seed), T,
                     int(steps), s, levels, int(trials), data.get("output", "out"), base_dir,
                     copy.deepcopy(data))


def parse_config(path) -> RunConfig:
    """Read and validate a JSON config file; relative polyline paths resolve against its directory."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return build_config(data, os.path.dirname(os.path.abspath(path)))
