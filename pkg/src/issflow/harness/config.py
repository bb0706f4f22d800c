"""Experiment configuration: TOML loading, validation, canonical hashing.

A configuration file is one TOML document per experiment.  Matrices may be
written either as nested TOML arrays or as strings holding the same JSON,
whichever reads better in the file.  Parsing normalizes everything into an
ExperimentConfig whose canonical JSON form is hashed, so reruns of an
identical file always land on the same hash.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

import numpy as np

from issflow.domains import norm_size, open_interval, size_from_loss
from issflow.linctrl import CostWeights, LinearSystem
from issflow.lqr import make_lqr
from issflow.problems import polynomial_loss, quadratic_loss

PROBLEMS = ("quadratic", "scalar-lqr", "matrix-lqr", "custom-polynomial")
SIGNALS = ("constant", "sinusoidal", "decaying")
NOISE_KINDS = ("zero", "constant", "absolute", "relative", "decaying")


class ConfigError(Exception):
    """A configuration file failed validation; the message names the field."""


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def _as_float(value, where: str) -> float:
    _require(isinstance(value, (int, float)) and not isinstance(value, bool), f"{where} must be a number")
    return float(value)


def _as_int(value, where: str) -> int:
    _require(isinstance(value, int) and not isinstance(value, bool), f"{where} must be an integer")
    return int(value)


def _as_str(value, where: str, allowed=None) -> str:
    _require(isinstance(value, str), f"{where} must be a string")
    if allowed is not None:
        _require(value in allowed, f"{where} must be one of {', '.join(allowed)}")
    return value


def _as_vector(value, where: str) -> list:
    if isinstance(value, str):
        try:
            value = json.loads(value)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{where} is not valid JSON: {exc}") from exc
    _require(isinstance(value, list) and len(value) > 0, f"{where} must be a nonempty array")
    return [_as_float(v, where) for v in value]


def _as_matrix(value, where: str, rows: int | None = None, cols: int | None = None) -> list:
    if isinstance(value, str):
        try:
            value = json.loads(value)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{where} is not valid JSON: {exc}") from exc
    _require(isinstance(value, list) and len(value) > 0, f"{where} must be a nonempty matrix")
    _require(all(isinstance(r, list) for r in value), f"{where} must be a matrix (array of arrays)")
    width = len(value[0])
    _require(width > 0, f"{where} has an empty row")
    _require(all(len(r) == width for r in value), f"{where} has rows of unequal length")
    out = [[_as_float(v, where) for v in r] for r in value]
    if rows is not None:
        _require(len(out) == rows, f"{where} must have {rows} rows, got {len(out)}")
    if cols is not None:
        _require(width == cols, f"{where} must have {cols} columns, got {width}")
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: a problem instance plus sweep axes and tolerances."""

    name: str
    problem: str
    out_dir: str
    system: dict
    sweep: dict
    flow: dict
    descent: dict
    tolerances: dict
    certificates: dict

    def canonical(self) -> dict:
        return {
            "name": self.name,
            "problem": self.problem,
            "out_dir": self.out_dir,
            "system": self.system,
            "sweep": self.sweep,
            "flow": self.flow,
            "descent": self.descent,
            "tolerances": self.tolerances,
            "certificates": self.certificates,
        }

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    @property
    def dimension(self) -> int:
        if self.problem == "quadratic":
            return len(self.system["hessian"])
        if self.problem == "scalar-lqr":
            return 1
        if self.problem == "matrix-lqr":
            return len(self.system["b"][0]) * len(self.system["a"])
        return 1

    def build_loss(self):
        if self.problem == "quadratic":
            return quadratic_loss(np.asarray(self.system["hessian"], dtype=float))
        if self.problem == "scalar-lqr":
            s = self.system
            lin = LinearSystem(np.array([[s["a"]]]), np.array([[s["b"]]]))
            w = CostWeights(np.array([[s["q"]]]), np.array([[s["r"]]]), np.array([[s["sigma"]]]))
            return make_lqr(lin, w).as_loss()
        if self.problem == "matrix-lqr":
            s = self.system
            lin = LinearSystem(np.asarray(s["a"], dtype=float), np.asarray(s["b"], dtype=float))
            w = CostWeights(
                np.asarray(s["q"], dtype=float),
                np.asarray(s["r"], dtype=float),
                np.asarray(s["sigma"], dtype=float),
            )
            return make_lqr(lin, w).as_loss()
        s = self.system
        lo, hi = s["interval"]
        dom = open_interval(lo, hi, s["equilibrium"])
        return polynomial_loss(s["coefficients"], dom)

    def build_instance(self):
        """The LQRInstance behind an lqr problem (None otherwise)."""
        if self.problem == "scalar-lqr":
            s = self.system
            lin = LinearSystem(np.array([[s["a"]]]), np.array([[s["b"]]]))
            w = CostWeights(np.array([[s["q"]]]), np.array([[s["r"]]]), np.array([[s["sigma"]]]))
            return make_lqr(lin, w)
        if self.problem == "matrix-lqr":
            s = self.system
            lin = LinearSystem(np.asarray(s["a"], dtype=float), np.asarray(s["b"], dtype=float))
            w = CostWeights(
                np.asarray(s["q"], dtype=float),
                np.asarray(s["r"], dtype=float),
                np.asarray(s["sigma"], dtype=float),
            )
            return make_lqr(lin, w)
        return None

    def build_size(self, loss):
        if self.system["size"] == "norm":
            return norm_size(loss.domain)
        return size_from_loss(loss)


def _parse_system(problem: str, raw: dict) -> dict:
    if problem == "quadratic":
        _require("hessian" in raw, "system.hessian is required for the quadratic problem")
        h = _as_matrix(raw["hessian"], "system.hessian")
        _require(len(h) == len(h[0]), "system.hessian must be a square matrix")
        out = {"hessian": h}
    elif problem == "scalar-lqr":
        out = {k: _as_float(raw.get(k, 1.0), f"system.{k}") for k in ("a", "b", "q", "r", "sigma")}
    elif problem == "matrix-lqr":
        for key in ("a", "b", "q", "r", "sigma"):
            _require(key in raw, f"system.{key} is required for the matrix-lqr problem")
        a = _as_matrix(raw["a"], "system.a")
        n = len(a)
        _require(len(a[0]) == n, "system.a must be a square matrix")
        b = _as_matrix(raw["b"], "system.b", rows=n)
        m = len(b[0])
        q = _as_matrix(raw["q"], "system.q", rows=n, cols=n)
        r = _as_matrix(raw["r"], "system.r", rows=m, cols=m)
        sigma = _as_matrix(raw["sigma"], "system.sigma", rows=n, cols=n)
        out = {"a": a, "b": b, "q": q, "r": r, "sigma": sigma}
    else:
        _require("coefficients" in raw, "system.coefficients is required for the polynomial problem")
        coeffs = _as_vector(raw["coefficients"], "system.coefficients")
        interval = _as_vector(raw.get("interval", [-1.0, 1.0]), "system.interval")
        _require(len(interval) == 2 and interval[0] < interval[1], "system.interval must be [lo, hi] with lo < hi")
        eq = _as_float(raw.get("equilibrium", 0.0), "system.equilibrium")
        _require(interval[0] < eq < interval[1], "system.equilibrium must lie inside system.interval")
        out = {"coefficients": coeffs, "interval": interval, "equilibrium": eq}

    out["eta"] = _as_float(raw.get("eta", 1.0), "system.eta")
    _require(out["eta"] > 0, "system.eta must be positive")
    default_size = "norm" if problem == "quadratic" else "gap"
    out["size"] = _as_str(raw.get("size", default_size), "system.size", allowed=("norm", "gap"))
    return out


def _parse_sweep(raw: dict, dimension: int) -> dict:
    _require("seeds" in raw, "sweep.seeds is required; randomness must be explicit")
    seeds = raw["seeds"]
    _require(isinstance(seeds, list) and len(seeds) > 0, "sweep.seeds must be a nonempty array")
    seeds = [_as_int(s, "sweep.seeds") for s in seeds]
    _require(all(s >= 0 for s in seeds), "sweep.seeds must be nonnegative")

    mags = raw.get("noise_magnitudes", [0.0])
    _require(isinstance(mags, list) and len(mags) > 0, "sweep.noise_magnitudes must be a nonempty array")
    mags = [_as_float(v, "sweep.noise_magnitudes") for v in mags]
    _require(all(v >= 0 for v in mags), "sweep.noise_magnitudes must be nonnegative")
    _require(all(b > a for a, b in zip(mags, mags[1:])), "sweep.noise_magnitudes must be strictly increasing")

    etas = raw.get("etas", [])
    _require(isinstance(etas, list), "sweep.etas must be an array")
    etas = [_as_float(v, "sweep.etas") for v in etas]
    _require(all(v > 0 for v in etas), "sweep.etas must be positive")

    _require("initial_points" in raw, "sweep.initial_points is required")
    pts = raw["initial_points"]
    _require(isinstance(pts, list) and len(pts) > 0, "sweep.initial_points must be a nonempty array")
    pts = [_as_vector(p, "sweep.initial_points") for p in pts]
    for p in pts:
        _require(
            len(p) == dimension,
            f"sweep.initial_points entries must have dimension {dimension}, got {len(p)}",
        )

    signals = raw.get("signals", ["constant"])
    _require(isinstance(signals, list) and len(signals) > 0, "sweep.signals must be a nonempty array")
    signals = [_as_str(s, "sweep.signals", allowed=SIGNALS) for s in signals]

    return {
        "noise_magnitudes": mags,
        "etas": etas,
        "initial_points": pts,
        "seeds": seeds,
        "signals": signals,
    }


def _parse_flow(raw: dict) -> dict:
    horizon = _as_float(raw.get("horizon", 20.0), "flow.horizon")
    _require(horizon > 0, "flow.horizon must be positive")
    burn_in = _as_float(raw.get("burn_in", horizon / 2.0), "flow.burn_in")
    _require(0 <= burn_in < horizon, "flow.burn_in must lie in [0, horizon)")
    n_record = _as_int(raw.get("n_record", 201), "flow.n_record")
    _require(n_record >= 2, "flow.n_record must be at least 2")
    ode_tol = _as_float(raw.get("ode_tol", 1e-8), "flow.ode_tol")
    _require(ode_tol > 0, "flow.ode_tol must be positive")
    return {"horizon": horizon, "burn_in": burn_in, "n_record": n_record, "ode_tol": ode_tol}


def _parse_descent(raw: dict, dimension: int) -> dict:
    steps = _as_int(raw.get("steps", 40), "descent.steps")
    _require(steps >= 1, "descent.steps must be at least 1")
    kind = _as_str(raw.get("noise_kind", "absolute"), "descent.noise_kind", allowed=NOISE_KINDS)
    rate = _as_float(raw.get("noise_rate", 0.5), "descent.noise_rate")
    _require(0 <= rate < 1, "descent.noise_rate must lie in [0, 1)")
    vector = raw.get("noise_vector", [])
    _require(isinstance(vector, list), "descent.noise_vector must be an array")
    vector = [_as_float(v, "descent.noise_vector") for v in vector]
    if kind == "constant":
        _require(
            len(vector) == dimension,
            f"descent.noise_vector must have dimension {dimension} for constant noise",
        )
    return {"steps": steps, "noise_kind": kind, "noise_rate": rate, "noise_vector": vector}


def _parse_tolerances(raw: dict) -> dict:
    out = {
        "gradient_fd": 1e-5,
        "linesearch_grid": 1e-4,
        "residual": 1e-10,
        "terminal_gradient": 1e-6,
        "convergence": 1e-6,
    }
    for key, value in raw.items():
        _require(key in out, f"tolerances.{key} is not a known tolerance")
        out[key] = _as_float(value, f"tolerances.{key}")
        _require(out[key] > 0, f"tolerances.{key} must be positive")
    return out


def _parse_certificates(raw: dict) -> dict:
    levels = raw.get("pl_levels", [])
    _require(isinstance(levels, list), "certificates.pl_levels must be an array")
    levels = [_as_float(v, "certificates.pl_levels") for v in levels]
    _require(all(v > 0 for v in levels), "certificates.pl_levels must be positive")
    _require(all(b > a for a, b in zip(levels, levels[1:])), "certificates.pl_levels must be increasing")
    lows = raw.get("sample_lows", [])
    highs = raw.get("sample_highs", [])
    _require(isinstance(lows, list) and isinstance(highs, list), "certificates.sample_lows/highs must be arrays")
    lows = [_as_float(v, "certificates.sample_lows") for v in lows]
    highs = [_as_float(v, "certificates.sample_highs") for v in highs]
    _require(len(lows) == len(highs), "certificates.sample_lows and sample_highs must have equal length")
    _require(all(h > lo for lo, h in zip(lows, highs)), "certificates.sample_highs must exceed sample_lows")
    n_samples = _as_int(raw.get("n_samples", 2048), "certificates.n_samples")
    _require(n_samples >= 64, "certificates.n_samples must be at least 64")
    return {"pl_levels": levels, "sample_lows": lows, "sample_highs": highs, "n_samples": n_samples}


def parse_config(data: dict) -> ExperimentConfig:
    _require(isinstance(data, dict), "the configuration must be a table")
    known = {"name", "problem", "out_dir", "system", "sweep", "flow", "descent", "tolerances", "certificates"}
    for key in data:
        _require(key in known, f"unknown top-level key '{key}'")
    name = _as_str(data.get("name", "experiment"), "name")
    _require("problem" in data, "problem is required")
    problem = _as_str(data["problem"], "problem", allowed=PROBLEMS)
    out_dir = _as_str(data.get("out_dir", "runs"), "out_dir")

    system = _parse_system(problem, data.get("system", {}))
    cfg = ExperimentConfig(
        name=name,
        problem=problem,
        out_dir=out_dir,
        system=system,
        sweep={},
        flow=_parse_flow(data.get("flow", {})),
        descent={},
        tolerances=_parse_tolerances(data.get("tolerances", {})),
        certificates=_parse_certificates(data.get("certificates", {})),
    )
    sweep = _parse_sweep(data.get("sweep", {}), cfg.dimension)
    if not sweep["etas"]:
        sweep["etas"] = [system["eta"]]
    descent = _parse_descent(data.get("descent", {}), cfg.dimension)
    return ExperimentConfig(
        name=name,
        problem=problem,
        out_dir=out_dir,
        system=system,
        sweep=sweep,
        flow=cfg.flow,
        descent=descent,
        tolerances=cfg.tolerances,
        certificates=cfg.certificates,
    )


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file is not valid TOML: {exc}") from exc
    return parse_config(data)
