"""Flat ``key = value`` scenario files.

Keys are dotted (``model.name``, ``gains.alpha``); ``#`` starts a comment.
Vectors are whitespace or comma separated, matrix rows are separated by
``;``. Unknown keys, duplicates and malformed values are reported with their
line number.
"""
from __future__ import annotations

import importlib
import re
from dataclasses import dataclass, field

import numpy as np

from .constraint import ConstraintData, GainPair, ParameterEstimate
from .errors import ConfigError, ContractViolation
from .model import ScenarioModel, make_scenario_model
from .sdp import SolverOptions
from .sim import Scenario

__all__ = ["KEYS", "Config", "parse_config", "load_config", "dumps"]

# key -> value kind
KEYS = {
    "model.name": "str",
    "model.n": "int",
    "model.goal": "vec",
    "model.k": "float",
    "model.factory": "str",
    "barrier.name": "str",
    "barrier.center": "vec",
    "barrier.radius": "float",
    "gains.alpha": "float",
    "gains.beta": "float",
    "theta.true": "vec",
    "estimate.theta_hat": "vec",
    "estimate.eta": "float",
    "estimator.mode": "str",
    "estimator.period": "int",
    "state.xA": "vec",
    "state.xR": "vec",
    "sim.dt": "float",
    "sim.duration": "float",
    "sim.seed": "int",
    "solver.tol": "float",
    "solver.max_iter": "int",
    "solver.mu0": "float",
    "solver.mu_factor": "float",
    "solver.phase1_margin": "float",
    "solver.slack_mode": "bool",
    "solver.slack_weight": "float",
    "coeffs.C": "mat",
    "coeffs.d": "vec",
    "coeffs.H": "mat",
    "coeffs.fcoef": "vec",
    "coeffs.g": "float",
}

_KEY_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)+$")
_TRUE = ("true", "yes", "on", "1")
_FALSE = ("false", "no", "off", "0")


def _parse_value(kind: str, text: str):
    if kind == "str":
        if not text:
            raise ValueError("empty string")
        return text
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    if kind == "bool":
        low = text.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if kind == "vec":
        parts = text.replace(",", " ").split()
        if not parts:
            raise ValueError("empty vector")
        return np.array([float(x) for x in parts])
    if kind == "mat":
        rows = [r.replace(",", " ").split() for r in text.split(";")]
        if not rows or any(not r for r in rows) or len({len(r) for r in rows}) != 1:
            raise ValueError("matrix rows must be nonempty and of equal length")
        return np.array([[float(x) for x in r] for r in rows])
    raise AssertionError(kind)


def _format_value(kind: str, value) -> str:
    if kind == "bool":
        return "true" if value else "false"
    if kind in ("str", "int"):
        return str(value)
    if kind == "float":
        return repr(float(value))
    if kind == "vec":
        return " ".join(repr(float(x)) for x in value)
    return "; ".join(" ".join(repr(float(x)) for x in row) for row in value)


@dataclass
class Config:
    values: dict = field(default_factory=dict)
    lines: dict = field(default_factory=dict)  # key -> source line, for error anchoring

    def get(self, key, default=None):
        return self.values.get(key, default)

    def __contains__(self, key):
        return key in self.values

    def __eq__(self, other):
        if not isinstance(other, Config) or self.values.keys() != other.values.keys():
            return False
        return all(np.array_equal(np.asarray(v), np.asarray(other.values[k])) for k, v in self.values.items())

    def error(self, key: str, message: str) -> ConfigError:
        return ConfigError(f"{key}: {message}", self.lines.get(key))

    @property
    def raw_mode(self) -> bool:
        return any(k.startswith("coeffs.") for k in self.values)

    # ------------------------------------------------------------------
    # builders

    def require(self, key):
        if key not in self.values:
            raise ConfigError(f"missing required key {key!r}")
        return self.values[key]

    def scenario_model(self) -> ScenarioModel:
        factory = self.get("model.factory")
        n = int(self.get("model.n", 2))
        if factory is not None:
            model = _load_factory(self, factory, n)
        else:
            model_params = {}
            if "model.goal" in self:
                model_params["goal"] = self.values["model.goal"]
            if "model.k" in self:
                model_params["k"] = self.values["model.k"]
            barrier_params = {"radius": self.get("barrier.radius", 1.0)}
            if "barrier.center" in self:
                barrier_params["center"] = self.values["barrier.center"]
            try:
                model = make_scenario_model(
                    self.get("model.name", "linear"),
                    self.get("barrier.name", "disk"),
                    n,
                    model_params,
                    barrier_params,
                )
            except ContractViolation as exc:
                raise ConfigError(str(exc)) from exc
        if model.n != n and "model.n" in self:
            raise self.error("model.n", f"model dimension is {model.n}")
        return model

    def gains(self) -> GainPair:
        try:
            return GainPair(self.get("gains.alpha", 2.0), self.get("gains.beta", 1.0))
        except ContractViolation as exc:
            raise ConfigError(str(exc), self.lines.get("gains.alpha")) from exc

    def estimate(self) -> ParameterEstimate:
        try:
            return ParameterEstimate(self.require("estimate.theta_hat"), self.get("estimate.eta", 0.0))
        except ContractViolation as exc:
            raise self.error("estimate.eta", str(exc)) from exc

    def solver_options(self, slack_mode: bool = False) -> SolverOptions:
        kw = {}
        for key in ("tol", "max_iter", "mu0", "mu_factor", "phase1_margin", "slack_weight"):
            if f"solver.{key}" in self:
                kw[key] = self.values[f"solver.{key}"]
        kw["slack_mode"] = bool(slack_mode or self.get("solver.slack_mode", False))
        try:
            return SolverOptions(**kw)
        except ContractViolation as exc:
            raise ConfigError(f"solver options: {exc}") from exc

    def state(self, model: ScenarioModel):
        xA, xR = self.require("state.xA"), self.require("state.xR")
        for key, v in (("state.xA", xA), ("state.xR", xR)):
            if v.size != model.n:
                raise self.error(key, f"has length {v.size}, model dimension is {model.n}")
        return xA, xR

    def constraint_data(self) -> ConstraintData:
        """Coefficients given directly under ``coeffs.*``."""
        C = self.require("coeffs.C")
        p = C.shape[0]
        try:
            return ConstraintData(
                C=C,
                d=self.get("coeffs.d", np.zeros(C.shape[1])),
                H=self.get("coeffs.H", np.zeros((p, p))),
                fcoef=self.get("coeffs.fcoef", np.zeros(p)),
                g=float(self.get("coeffs.g", 0.0)),
            )
        except ContractViolation as exc:
            raise ConfigError(f"coeffs: {exc}") from exc

    def scenario(self, seed: int | None = None, slack_mode: bool = False) -> Scenario:
        model = self.scenario_model()
        xA, xR = self.state(model)
        theta = self.require("theta.true")
        est = self.estimate()
        if theta.size != model.p or est.theta_hat.size != model.p:
            raise self.error("theta.true", f"parameter vectors must have length p={model.p}")
        try:
            return Scenario(
                model=model,
                theta_true=theta,
                estimate=est,
                xA0=xA,
                xR0=xR,
                gains=self.gains(),
                dt=self.get("sim.dt", 0.01),
                duration=self.get("sim.duration", 5.0),
                estimator=self.get("estimator.mode", "set-membership"),
                estimator_period=self.get("estimator.period", 10),
                solver=self.solver_options(slack_mode),
                seed=self.get("sim.seed", 0) if seed is None else seed,
            )
        except ContractViolation as exc:
            raise ConfigError(str(exc)) from exc


def _load_factory(cfg: Config, target: str, n: int) -> ScenarioModel:
    mod_name, _, fn_name = target.partition(":")
    if not mod_name or not fn_name:
        raise cfg.error("model.factory", "expected 'module:function'")
    try:
        fn = getattr(importlib.import_module(mod_name), fn_name)
    except (ImportError, AttributeError) as exc:
        raise cfg.error("model.factory", f"cannot load {target!r}: {exc}") from exc
    model = fn(n=n)
    if not isinstance(model, ScenarioModel):
        raise cfg.error("model.factory", f"{target} did not return a ScenarioModel")
    return model


def parse_config(text: str) -> Config:
    cfg = Config()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno)
        key, _, value = (s.strip() for s in line.partition("="))
        if not _KEY_RE.match(key):
            raise ConfigError(f"malformed key {key!r}", lineno)
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in cfg.values:
            raise ConfigError(f"duplicate key {key!r} (first set on line {cfg.lines[key]})", lineno)
        try:
            cfg.values[key] = _parse_value(KEYS[key], value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}", lineno) from exc
        cfg.lines[key] = lineno
    return cfg


def load_config(path) -> Config:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_config(text)


def dumps(cfg: Config) -> str:
    """Canonical text form: known keys in schema order, full float precision."""
    out = []
    section = None
    for key, kind in KEYS.items():
        if key not in cfg.values:
            continue
        head = key.split(".", 1)[0]
        if section is not None and head != section:
            out.append("")
        section = head
        out.append(f"{key} = {_format_value(kind, cfg.values[key])}")
    return "\n".join(out) + "\n"
