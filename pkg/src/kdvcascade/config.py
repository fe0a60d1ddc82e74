"""Scenario files: JSON documents describing a plant, solver options and initial data.

Example
-------
::

    {
      "plant": {"A": [[0, 1], [1, 0]], "B": [[0], [1]], "K": [[-3, -4]],
                "l": 1.0, "lambda": 1.0},
      "kernel": {"D": 40, "tol": 1e-13, "max_iter": 60},
      "sim": {"N": 128, "dt": 0.001, "T": 10.0, "record_every": 10},
      "certify": {"Q": [[1, 0], [0, 1]], "envelope_tol": 0.05},
      "initial": {"X0": [1.0, -0.5], "u0": "zero"}
    }

``u0`` is ``"zero"``, ``{"gauss_bump": {"center", "width", "amplitude"}}``,
``{"samples": [...]}`` (``N + 1`` values) or ``{"target_mode": {"amplitude"}}``.
The last one maps the slowest target eigenfunction back through the inverse
transformation, which gives smooth initial data compatible with the feedback.

Default tolerances can be overridden with the ``KDVCASCADE_TOLERANCES``
environment variable holding a JSON object, e.g.
``KDVCASCADE_TOLERANCES='{"residual": 1e-8}'``.
"""
from dataclasses import dataclass, field, replace
import json
import os

import jsonschema
import numpy as np

from .errors import KdvCascadeError, PlantError
from .gains import Plant
from .sim import SimConfig

__all__ = ["Scenario", "ConfigError", "parse_config", "load_scenario", "tolerances",
           "DEFAULT_TOLERANCES", "TOLERANCE_ENV"]

TOLERANCE_ENV = "KDVCASCADE_TOLERANCES"

DEFAULT_TOLERANCES = {
    "residual": 1e-6,          # kernel PDE / boundary / diagonal-derivative residuals
    "diag": 1e-10,             # |q(x, x)|
    "g2": 1e-10,               # closed-form second iterate, relative
    "reciprocity": 1e-6,
    "composition_ratio": [3.0, 5.0],
    "energy_ratio": [3.0, 5.0],
    "envelope": 0.05,
    "compat": 1e-3,
}


class ConfigError(KdvCascadeError):
    """Missing or malformed scenario file; ``path`` names the offending field."""

    def __init__(self, msg, path=""):
        super().__init__(f"{path}: {msg}" if path else msg)
        self.path = path


_matrix = {"type": "array", "minItems": 1,
           "items": {"type": "array", "minItems": 1, "items": {"type": "number"}}}
_vector = {"type": "array", "minItems": 1, "items": {"type": "number"}}
_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_posint = {"type": "integer", "minimum": 1}

SCHEMA = {
    "type": "object",
    "required": ["plant"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "plant": {
            "type": "object",
            "required": ["A", "B", "K", "l", "lambda"],
            "additionalProperties": False,
            "properties": {"A": _matrix, "B": {"anyOf": [_matrix, _vector]},
                           "K": {"anyOf": [_matrix, _vector]}, "l": _num, "lambda": _num},
        },
        "kernel": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"D": {"type": "integer", "minimum": 6}, "tol": _pos,
                           "max_iter": _posint},
        },
        "sim": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"N": {"type": "integer", "minimum": 32, "multipleOf": 2},
                           "dt": _pos, "T": _pos, "record_every": _posint,
                           "scheme": {"enum": ["tr_bdf2", "trapezoidal"]}},
        },
        "certify": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"Q": _matrix, "envelope_tol": {"type": "number", "minimum": 0}},
        },
        "initial": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "X0": _vector,
                "u0": {"oneOf": [
                    {"const": "zero"},
                    {"type": "object", "required": ["gauss_bump"], "additionalProperties": False,
                     "properties": {"gauss_bump": {
                         "type": "object", "required": ["center", "width", "amplitude"],
                         "additionalProperties": False,
                         "properties": {"center": _num, "width": _pos, "amplitude": _num}}}},
                    {"type": "object", "required": ["samples"], "additionalProperties": False,
                     "properties": {"samples": _vector}},
                    {"type": "object", "required": ["target_mode"], "additionalProperties": False,
                     "properties": {"target_mode": {
                         "type": "object", "additionalProperties": False,
                         "properties": {"amplitude": _num}}}},
                ]},
            },
        },
    },
}


def tolerances(overlay=None):
    """Default tolerances updated by the environment overlay (and ``overlay``)."""
    tol = dict(DEFAULT_TOLERANCES)
    raw = os.environ.get(TOLERANCE_ENV)
    if raw:
        try:
            env = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"not valid JSON ({exc.msg})", TOLERANCE_ENV) from None
        if not isinstance(env, dict):
            raise ConfigError("must be a JSON object", TOLERANCE_ENV)
        for k in env:
            if k not in DEFAULT_TOLERANCES:
                raise ConfigError(f"unknown tolerance {k!r}", f"{TOLERANCE_ENV}.{k}")
        tol.update(env)
    if overlay:
        tol.update(overlay)
    return tol


@dataclass(frozen=True)
class Scenario:
    """Validated scenario: plant, solver options and initial data."""

    plant: Plant
    D: int = 40
    kernel_tol: float = 1e-13
    max_iter: int = 60
    sim: SimConfig = field(default_factory=SimConfig)
    Q: np.ndarray = None
    envelope_tol: float = 0.05
    X0: np.ndarray = None
    u0: object = "zero"
    name: str = "scenario"

    def with_param(self, param, value):
        """Copy with ``lambda``, ``N`` or ``dt`` replaced (used by sweeps)."""
        if param == "lambda":
            return replace(self, plant=self.plant.replace(lam=float(value)))
        if param == "N":
            if float(value) != int(value):
                raise ConfigError("N must be an integer", "values")
            return replace(self, sim=replace(self.sim, N=int(value)))
        if param == "dt":
            return replace(self, sim=replace(self.sim, dt=float(value)))
        raise ConfigError(f"unknown sweep parameter {param!r}", "param")

    def initial_X(self):
        return np.zeros(self.plant.n) if self.X0 is None else np.array(self.X0, float)

    def initial_u(self, table=None):
        """Samples of ``u0`` on the ``sim.N`` grid.

        ``table`` (a :class:`~kdvcascade.transform.KernelTable`) is required
        for ``target_mode`` data.
        """
        N, l = self.sim.N, self.plant.l
        x = np.linspace(0.0, l, N + 1)
        data = self.u0
        if data == "zero":
            return np.zeros(N + 1)
        kind, p = next(iter(data.items()))
        if kind == "gauss_bump":
            return p["amplitude"] * np.exp(-((x - p["center"]) / p["width"]) ** 2)
        if kind == "samples":
            s = np.asarray(p, float)
            if s.size != N + 1:
                raise ConfigError(f"expected {N + 1} samples for N = {N}, got {s.size}",
                                  "initial.u0.samples")
            return s
        if kind == "target_mode":
            from .sim import slow_mode
            from .transform import SampledState, inverse
            if table is None:
                raise ValueError("target_mode initial data needs a kernel table")
            _, f = slow_mode(l, N=N)
            w = p.get("amplitude", 1.0) * f
            return inverse(SampledState(self.initial_X(), w, l), table).u
        raise ConfigError(f"unknown u0 kind {kind!r}", "initial.u0")


def _path(err):
    return ".".join(str(p) for p in err.absolute_path) or "<root>"


def load_scenario(doc, check=True):
    """Build a :class:`Scenario` from an already parsed JSON document."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigError(e.message, _path(e))
    p = doc["plant"]
    A = np.array(p["A"], float)
    n = A.shape[0]
    if A.ndim != 2 or A.shape != (n, n):
        raise ConfigError("must be a square matrix", "plant.A")
    for key in ("B", "K"):
        arr = np.asarray(p[key], dtype=float)
        if arr.size != n:
            raise ConfigError(f"must hold {n} entries", f"plant.{key}")
    plant = Plant(A, p["B"], p["K"], l=p["l"], lam=p["lambda"], check=False)
    if check:
        bad = plant.violations()
        if bad:
            raise PlantError(bad[0], f"plant invariant violated: {', '.join(bad)}")
    kern = doc.get("kernel", {})
    sim = SimConfig(**{k: v for k, v in doc.get("sim", {}).items()})
    cert = doc.get("certify", {})
    Q = None
    if "Q" in cert:
        Q = np.array(cert["Q"], float)
        if Q.shape != (n, n):
            raise ConfigError(f"must be {n}x{n}", "certify.Q")
    init = doc.get("initial", {})
    X0 = None
    if "X0" in init:
        X0 = np.array(init["X0"], float)
        if X0.size != n:
            raise ConfigError(f"must hold {n} entries", "initial.X0")
    tol = tolerances()
    return Scenario(plant=plant, D=kern.get("D", 40), kernel_tol=kern.get("tol", 1e-13),
                    max_iter=kern.get("max_iter", 60), sim=sim, Q=Q,
                    envelope_tol=cert.get("envelope_tol", tol["envelope"]), X0=X0,
                    u0=init.get("u0", "zero"), name=doc.get("name", "scenario"))


def parse_config(path, check=True):
    """Read and validate a scenario file.

    Raises
    ------
    ConfigError
        Missing file, invalid JSON or a schema violation (``.path`` names
        the field).
    PlantError
        The plant violates one of its invariants (``.violation``).
    """
    try:
        with open(path) as fh:
            text = fh.read()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return load_scenario(doc, check)
