"""Declarative model files (TOML).

A model file has the sections ``[space]``, ``[dynamics]``, ``[costs]``,
``[solver]`` and ``[simulate]``.  Matrix models give every coefficient as a
number, a (nested) list, or a table ``{times = [...], values = [...]}`` for
time-dependent data.  Vintage models (``dynamics.kind = "vintage"``) give
the price coefficients as arithmetic expressions in ``tau`` and ``s``.

Example::

    [space]
    dim = 1

    [dynamics]
    A = [[0.0]]
    T = 1.0

    [costs]
    Q = [[1.0]]

    [solver]
    grid = 2000
"""

from __future__ import annotations

import ast
import copy
import math
import operator
import sys

import jsonschema
import numpy as np

from .hilbert import MatrixExponentialSemigroup, TimePath
from .problem import make_problem
from .riccati import SolverConfig
from .simulate import SimConfig
from .vintage import VintageModel, build_problem

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["ModelError", "load_model", "parse_model", "compile_expression", "MODEL_SCHEMA", "Model"]


class ModelError(ValueError):
    """Invalid model file."""


# ---------------------------------------------------------------------------
# expressions

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNOPS = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCS = {"exp": np.exp, "sin": np.sin, "cos": np.cos, "sqrt": np.sqrt, "log": np.log}
_CONSTS = {"pi": math.pi}


def compile_expression(text, variables=("tau", "s")):
    """Compile an arithmetic expression into a vectorised function of ``variables``.

    Only numbers, ``+ - * / **``, ``exp sin cos sqrt log``, ``pi`` and the
    named variables are accepted.
    """
    if isinstance(text, (int, float)):
        val = float(text)
        return lambda *args: np.full(np.broadcast(*[np.asarray(a) for a in args]).shape, val) if args else val
    try:
        tree = ast.parse(str(text), mode="eval")
    except SyntaxError as exc:
        raise ModelError(f"cannot parse expression {text!r}: {exc.msg}") from None

    def build(node):
        if isinstance(node, ast.Expression):
            return build(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
            v = float(node.value)
            return lambda env: v
        if isinstance(node, ast.Name):
            if node.id in variables:
                return lambda env, k=node.id: env[k]
            if node.id in _CONSTS:
                v = _CONSTS[node.id]
                return lambda env: v
            raise ModelError(f"unknown name {node.id!r} in {text!r}")
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            op, lhs, rhs = _BINOPS[type(node.op)], build(node.left), build(node.right)
            return lambda env: op(lhs(env), rhs(env))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
            op, arg = _UNOPS[type(node.op)], build(node.operand)
            return lambda env: op(arg(env))
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS:
            if len(node.args) != 1 or node.keywords:
                raise ModelError(f"{node.func.id} takes one argument in {text!r}")
            fn, arg = _FUNCS[node.func.id], build(node.args[0])
            return lambda env: fn(arg(env))
        raise ModelError(f"unsupported syntax in expression {text!r}")

    body = build(tree)

    def fn(*args):
        env = dict(zip(variables, (np.asarray(a, dtype=float) for a in args)))
        shape = np.broadcast(*env.values()).shape if env else ()
        return np.broadcast_to(np.asarray(body(env), dtype=float), shape).copy()

    return fn


# ---------------------------------------------------------------------------
# schema

_NUM = {"type": "number"}
_ARRAY = {"type": "array"}
_TABLE = {
    "type": "object",
    "properties": {
        "times": {"type": "array", "items": _NUM, "minItems": 1},
        "values": {"type": "array", "minItems": 1},
        "interpolation": {"enum": ["linear", "constant-left"]},
    },
    "required": ["times", "values"],
    "additionalProperties": False,
}
_DATA = {"anyOf": [_NUM, _ARRAY, _TABLE]}
_EXPR = {"anyOf": [_NUM, {"type": "string"}]}
_STATE = {"anyOf": [_NUM, _ARRAY, {"type": "string"}]}

MODEL_SCHEMA = {
    "type": "object",
    "properties": {
        "label": {"type": "string"},
        "space": {
            "type": "object",
            "properties": {"dim": {"type": "integer", "minimum": 1}, "basis": {"type": "integer", "minimum": 2}},
            "additionalProperties": False,
        },
        "dynamics": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["matrix", "vintage"]},
                "A": _ARRAY,
                "B": _ARRAY,
                "sigma": {"anyOf": [_NUM, _ARRAY]},
                "T": {"type": "number", "exclusiveMinimum": 0},
                "bound_M": {"type": "number", "minimum": 1},
                "bound_omega": {"type": "number", "minimum": 0},
                "sbar": {"type": "number", "exclusiveMinimum": 0},
                "nu": {"type": "number", "minimum": 0},
                "rho": {"type": "number", "minimum": 0},
                "data_steps": {"type": "integer", "minimum": 1},
            },
            "required": ["T"],
            "additionalProperties": False,
        },
        "costs": {
            "type": "object",
            "properties": {
                **{k: _DATA for k in ("R", "Q", "S", "Z", "eta", "zeta", "lambda")},
                **{k: {"anyOf": [_NUM, _ARRAY]} for k in ("Q_T", "S_T", "Z_T", "eta_T", "zeta_T")},
                "lambda_T": _NUM,
                "a": _EXPR,
                "b": _EXPR,
                "g": _EXPR,
            },
            "additionalProperties": False,
        },
        "solver": {
            "type": "object",
            "properties": {
                "grid": {"type": "integer", "minimum": 1},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 1},
                "faithful": {"type": "boolean"},
                "strict": {"type": "boolean"},
                "epsilon": {"type": "number", "exclusiveMinimum": 0},
                "initial_guess": {"enum": ["terminal", "zero"]},
                "acknowledge_degenerate_control": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "simulate": {
            "type": "object",
            "properties": {
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "paths": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "t0": {"type": "number", "minimum": 0},
                "x0": _STATE,
                "ybar0": _STATE,
                "store_paths": {"type": "integer", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "values": {
            "type": "object",
            "properties": {
                "times": {"type": "array", "items": _NUM},
                "points": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "properties": {"x": {"anyOf": [_NUM, _ARRAY]}, "y": {"anyOf": [_NUM, _ARRAY]}},
                        "required": ["x", "y"],
                        "additionalProperties": False,
                    },
                },
            },
            "additionalProperties": False,
        },
        "vintage": {
            "type": "object",
            "properties": {
                "oracle_ns": {"type": "array", "items": {"type": "integer", "minimum": 2}},
                "profile_steps": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
    },
    "required": ["dynamics"],
    "additionalProperties": False,
}


class Model:
    """A validated model: problem data plus solver and simulation settings."""

    def __init__(self, raw, pd, solver: SolverConfig, sim: dict, values: dict, vintage=None, vintage_opts=None):
        self.raw = raw
        self.pd = pd
        self.solver = solver
        self.sim = sim
        self.values = values
        self.vintage = vintage
        self.vintage_opts = vintage_opts or {}

    @property
    def is_vintage(self):
        return self.vintage is not None

    def sim_config(self, seed=None, threads=1):
        s = dict(self.sim)
        n = self.pd.dim
        return SimConfig(
            dt=s.get("dt", self.pd.horizon_T / self.solver.grid),
            n_paths=s.get("paths", 1000),
            seed=s.get("seed", 0) if seed is None else seed,
            t0=s.get("t0", 0.0),
            x0=self._state(s.get("x0", 0.0), n),
            ybar0=None if s.get("ybar0") is None else self._state(s["ybar0"], n),
            store_paths=s.get("store_paths", 0) > 0,
            threads=threads,
        )

    def _state(self, v, n):
        if isinstance(v, str):
            if not self.is_vintage:
                raise ModelError("expression initial states are only available for vintage models")
            f = compile_expression(v, ("s",))
            basis = self.pd.sg_A.basis
            return basis.to_orthonormal(basis.project(f))
        arr = np.asarray(v, dtype=float)
        return np.full(n, float(arr)) if arr.ndim == 0 else arr


def load_model(path, overrides=None):
    with open(path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ModelError(f"{path}: {exc}") from None
    return parse_model(raw, overrides)


def _solver_cfg(raw, overrides):
    s = dict(raw.get("solver", {}))
    s.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return SolverConfig(**s)


def _data(value, T, name):
    if isinstance(value, dict):
        times = np.asarray(value["times"], dtype=float)
        vals = np.asarray(value["values"], dtype=float)
        if vals.shape[0] != times.size:
            raise ModelError(f"costs.{name}: {times.size} times but {vals.shape[0]} values")
        if times[0] > 0 or times[-1] < T:
            raise ModelError(f"costs.{name}: table must cover [0, {T}]")
        try:
            return TimePath(times, vals, value.get("interpolation", "linear"))
        except ValueError as exc:
            raise ModelError(f"costs.{name}: {exc}") from None
    return None if value is None else np.asarray(value, dtype=float)


def parse_model(raw, overrides=None):
    """Validate a decoded model document and build the problem."""
    raw = copy.deepcopy(raw)
    try:
        jsonschema.validate(raw, MODEL_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ModelError(f"model file invalid at {where}: {exc.message}") from None
    dyn = raw["dynamics"]
    costs = raw.get("costs", {})
    space = raw.get("space", {})
    T = float(dyn["T"])
    try:
        solver = _solver_cfg(raw, overrides)
    except TypeError as exc:
        raise ModelError(str(exc)) from None
    sim = raw.get("simulate", {})
    values = raw.get("values", {})
    label = raw.get("label", "")

    if dyn.get("kind", "matrix") == "vintage":
        bad = set(costs) - {"a", "b", "g"}
        if bad:
            raise ModelError(f"vintage costs take only a, b, g (got {sorted(bad)})")
        bad = set(dyn) - {"kind", "T", "sbar", "nu", "rho", "sigma", "data_steps"}
        if bad:
            raise ModelError(f"vintage dynamics do not accept {sorted(bad)}")
        if "basis" not in space:
            raise ModelError("vintage models need space.basis")
        if not isinstance(dyn.get("sigma", 0.0), (int, float)):
            raise ModelError("vintage sigma must be a scalar noise level")
        vm = VintageModel(
            sbar=float(dyn.get("sbar", 1.0)),
            nu=float(dyn.get("nu", 0.0)),
            rho=float(dyn.get("rho", 0.0)),
            a_fun=compile_expression(costs.get("a", 0.0)),
            b_fun=compile_expression(costs.get("b", 0.0)),
            g_fun=compile_expression(costs.get("g", 0.0), ("s",)),
            horizon_T=T,
            sigma=float(dyn.get("sigma", 0.0)),
        )
        try:
            pd = build_problem(vm, space["basis"], dyn.get("data_steps", 64), label=label or "vintage")
        except (ValueError, FloatingPointError) as exc:
            raise ModelError(str(exc)) from None
        return Model(raw, pd, solver, sim, values, vm, raw.get("vintage", {}))

    if any(k in costs for k in ("a", "b", "g")) or any(k in dyn for k in ("sbar", "nu", "rho", "data_steps")):
        raise ModelError("vintage keys given for a matrix model (set dynamics.kind = \"vintage\")")
    if "A" not in dyn and "dim" not in space:
        raise ModelError("matrix models need dynamics.A or space.dim")
    n = space.get("dim")
    try:
        A = np.atleast_2d(np.asarray(dyn["A"], dtype=float)) if "A" in dyn else np.zeros((n, n))
        if n is not None and A.shape != (n, n):
            raise ModelError(f"dynamics.A has shape {A.shape}, space.dim is {n}")
        sg = MatrixExponentialSemigroup(A, bound_M=dyn.get("bound_M"), bound_omega=dyn.get("bound_omega"))
        sigma = dyn.get("sigma")
        if sigma is not None and np.ndim(sigma) == 0:
            sigma = float(sigma) * np.eye(A.shape[0])
        pd = make_problem(
            A=sg,
            B=dyn.get("B"),
            sigma=sigma,
            R=_data(costs.get("R"), T, "R"),
            Q=_data(costs.get("Q"), T, "Q"),
            S=_data(costs.get("S"), T, "S"),
            Z=_data(costs.get("Z"), T, "Z"),
            eta=_data(costs.get("eta"), T, "eta"),
            zeta=_data(costs.get("zeta"), T, "zeta"),
            lam=_data(costs.get("lambda"), T, "lambda"),
            Q_T=costs.get("Q_T"),
            S_T=costs.get("S_T"),
            Z_T=costs.get("Z_T"),
            eta_T=costs.get("eta_T"),
            zeta_T=costs.get("zeta_T"),
            lambda_T=costs.get("lambda_T", 0.0),
            T=T,
            label=label,
        )
    except ModelError:
        raise
    except ValueError as exc:
        raise ModelError(str(exc)) from None
    return Model(raw, pd, solver, sim, values)
