"""Run configuration: YAML ingestion, schema validation and conversion to specs.

Numbers are exact: integers or strings such as ``"3/4"``.  YAML floats are
rejected so that oracle inputs never pass through binary floating point.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import jsonschema
import numpy as np
import yaml

from .errors import ConfigError, PAdicError
from .kernel import DivergenceForm, OperatorSpec, PolynomialForm
from .padic_core import Ball, Cover, PolyDisc, Region, partition

_NUMBER = {
    "oneOf": [
        {"type": "integer"},
        {"type": "string", "pattern": r"^\s*-?\d+(\s*/\s*\d+)?\s*$"},
    ]
}
_BALL = {
    "type": "object",
    "required": ["center", "level"],
    "additionalProperties": False,
    "properties": {"center": _NUMBER, "level": {"type": "integer"}},
}
_COEFF = {"oneOf": [_NUMBER, {"type": "array", "items": _NUMBER, "minItems": 1}]}

SCHEMA = {
    "type": "object",
    "required": ["p", "d", "level", "cover", "alphas"],
    "additionalProperties": False,
    "properties": {
        "p": {"type": "integer", "minimum": 2},
        "d": {"type": "integer", "minimum": 1},
        "level": {"type": "integer", "minimum": 1},
        "cover": {
            "type": "array",
            "minItems": 1,
            "items": {"type": "array", "minItems": 1, "items": _BALL},
        },
        "alphas": {"type": "array", "minItems": 1, "items": _NUMBER},
        "weights": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "array", "items": _NUMBER}},
        },
        "domain": {"type": "array", "minItems": 1, "items": {"type": "array", "items": _BALL}},
        "operator": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "polynomial": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "required": ["exponents", "coefficient"],
                        "additionalProperties": False,
                        "properties": {
                            "exponents": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                            "coefficient": _NUMBER,
                        },
                    },
                },
                "divergence": {
                    "type": "object",
                    "required": ["a"],
                    "additionalProperties": False,
                    "properties": {
                        "level": {"type": "integer", "minimum": 0},
                        "a": {"type": "array", "items": {"type": "array", "items": _COEFF}},
                        "b": {"type": "array", "items": _COEFF},
                        "c": _COEFF,
                    },
                },
            },
            "oneOf": [{"required": ["polynomial"]}, {"required": ["divergence"]}],
        },
        "rhs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "values": {"type": "array", "items": _NUMBER},
                "random_seed": {"type": "integer", "minimum": 0},
                "wavelet": {
                    "type": "object",
                    "required": ["coordinate", "n", "center", "j"],
                    "additionalProperties": False,
                    "properties": {
                        "coordinate": {"type": "integer", "minimum": 1},
                        "n": {"type": "integer"},
                        "center": _NUMBER,
                        "j": {"type": "integer", "minimum": 1},
                        "scale": _NUMBER,
                    },
                },
            },
        },
        "mu_shift": _NUMBER,
        "t_grid": {"type": "string"},
        "points": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 2, "maxItems": 2},
        },
        "simulate": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "start": {"type": "integer", "minimum": 0},
                "horizon": _NUMBER,
                "paths": {"type": "integer", "minimum": 1},
                "events_limit": {"type": "integer", "minimum": 0},
            },
        },
        "seed": {"type": "integer", "minimum": 0},
        "samples": {"type": "integer", "minimum": 0},
    },
}

DEFAULTS = {
    "mu_shift": None,
    "t_grid": "0:1:1/4",
    "seed": 0,
    "samples": 100,
    "simulate": {"start": 0, "horizon": "1", "paths": 10000, "events_limit": 1000},
}


def _line_of(node, path):
    """1-based line of the YAML node at ``path`` (deepest existing ancestor)."""
    line = node.start_mark.line + 1 if node is not None else None
    for key in path:
        if isinstance(node, yaml.MappingNode):
            nxt = next((v for k, v in node.value if k.value == key), None)
            if nxt is None:
                nxt = next((k for k, v in node.value if k.value == key), None)
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            nxt = node.value[key]
        else:
            nxt = None
        if nxt is None:
            break
        node = nxt
        line = node.start_mark.line + 1
    return line


def _float_node(node, path=()):
    if isinstance(node, yaml.ScalarNode):
        return (node, path) if node.tag == "tag:yaml.org,2002:float" else None
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            hit = _float_node(v, path + (k.value,))
            if hit:
                return hit
    if isinstance(node, yaml.SequenceNode):
        for a, v in enumerate(node.value):
            hit = _float_node(v, path + (a,))
            if hit:
                return hit
    return None


def num(x):
    return Fraction(str(x).replace(" ", ""))


def load_config(text):
    """Parse and validate a YAML configuration; errors carry the offending line."""
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {getattr(exc, 'problem', exc)}",
                          mark.line + 1 if mark else None) from None
    if data is None:
        raise ConfigError("empty configuration", 1)
    hit = _float_node(node)
    if hit:
        n, path = hit
        raise ConfigError(f"{'/'.join(map(str, path))}: write numbers as integers or exact "
                          f"strings like \"1/2\", not {n.value}", n.start_mark.line + 1)
    validator = jsonschema.Draft7Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        path = list(err.absolute_path)
        if err.validator == "additionalProperties":
            extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
            path += extra[:1]
        where = "/".join(map(str, path)) or "<root>"
        raise ConfigError(f"{where}: {err.message}", _line_of(node, path))
    cfg = effective_config(data)
    try:
        build(cfg)
    except _Located as exc:
        raise ConfigError(f"{'/'.join(map(str, exc.path))}: {exc.message}", _line_of(node, exc.path)) from None
    return cfg


class _Located(ConfigError):
    """Semantic error tied to a config path; turned into a line-precise ConfigError."""

    def __init__(self, path, message):
        super().__init__(f"{'/'.join(map(str, path))}: {message}")
        self.path, self.message = list(path), message


def _guard(path, fn, *args):
    try:
        return fn(*args)
    except _Located:
        raise
    except (PAdicError, ValueError, TypeError, ZeroDivisionError) as exc:
        raise _Located(path, str(exc)) from None


def effective_config(data):
    """Configuration with every default written out."""
    cfg = dict(data)
    for key, value in DEFAULTS.items():
        if key not in cfg:
            cfg[key] = dict(value) if isinstance(value, dict) else value
        elif isinstance(value, dict):
            cfg[key] = {**value, **cfg[key]}
    if "operator" not in cfg:
        cfg["operator"] = {"polynomial": [
            {"exponents": [1 if j == i else 0 for j in range(cfg["d"])], "coefficient": 1}
            for i in range(cfg["d"])
        ]}
    return cfg


@dataclass(frozen=True, eq=False)
class Run:
    """A validated configuration turned into library objects."""

    config: dict
    spec: OperatorSpec
    region: Region
    level: int


def _ball(p, b):
    return Ball(p, int(b["level"]), num(b["center"]))


def _coeff(value, n, path=()):
    if isinstance(value, list):
        if len(value) != n:
            raise _Located(path, f"coefficient table needs {n} cell values, got {len(value)}")
        return np.array([float(num(v)) for v in value])
    return np.full(n, float(num(value)))


def build(cfg, level=None):
    """Turn a validated configuration into a :class:`Run`."""
    p, d = cfg["p"], cfg["d"]
    if p < 2 or any(p % q == 0 for q in range(2, int(p**0.5) + 1)):
        raise _Located(["p"], f"{p} is not a prime")
    if len(cfg["cover"]) != d:
        raise _Located(["cover"], f"{len(cfg['cover'])} coordinates listed, d = {d}")
    cover = _guard(["cover"], lambda: Cover(tuple(tuple(_ball(p, b) for b in discs) for discs in cfg["cover"])))
    alphas = tuple(num(a) for a in cfg["alphas"])
    weights = None
    if "weights" in cfg:
        weights = tuple(tuple(tuple(num(x) for x in row) for row in w) for w in cfg["weights"])
    spec = _guard(["weights"] if weights else ["alphas"], OperatorSpec, cover, alphas, weights)
    op = cfg["operator"]
    if "polynomial" in op:
        coeffs = {}
        for k_, term in enumerate(op["polynomial"]):
            k = tuple(term["exponents"])
            if len(k) != d:
                raise _Located(["operator", "polynomial", k_, "exponents"], f"need {d} exponents")
            coeffs[k] = coeffs.get(k, 0.0) + float(num(term["coefficient"]))
        form = PolynomialForm(coeffs)
    else:
        div = op["divergence"]
        where = ["operator", "divergence"]
        ell = div.get("level", cover.max_level)
        n = _guard(where + ["level"], lambda: len(partition(spec.domain, ell)))
        a = div["a"]
        if len(a) != d or any(len(row) != d for row in a):
            raise _Located(where + ["a"], f"must be a {d}x{d} table")
        A = np.array([[_coeff(x, n, where + ["a", r, c]) for c, x in enumerate(row)] for r, row in enumerate(a)])
        b = div.get("b", [0] * d)
        if len(b) != d:
            raise _Located(where + ["b"], f"needs {d} entries")
        B = np.array([_coeff(x, n, where + ["b", r]) for r, x in enumerate(b)])
        C = _coeff(div.get("c", 0), n, where + ["c"])
        form = _guard(where, DivergenceForm, ell, A, B, C)
    spec = _guard(["operator"], spec.with_form, form)
    if "domain" in cfg:
        region = _guard(["domain"], lambda: Region(tuple(PolyDisc(tuple(_ball(p, b) for b in q))
                                                         for q in cfg["domain"])))
        if region.d != d:
            raise _Located(["domain"], f"polydiscs need {d} balls")
        for cell in partition(region, max(region.max_level, cover.max_level)):
            if not spec.domain.contains(cell):
                raise _Located(["domain"], f"cell {cell} is not inside F")
    else:
        region = spec.domain
    M = cfg["level"] if level is None else level
    if M < spec.min_level() or M < region.max_level:
        raise _Located(["level"], f"{M} is too coarse; need at least {max(spec.min_level(), region.max_level)}")
    return Run(cfg, spec, region, M)


def parse_t_grid(text):
    """``"a:b:step"`` to the inclusive list of exact times ``a, a+step, ..., <= b``."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"t grid {text!r} must look like a:b:step")
    try:
        a, b, step = (num(x) for x in parts)
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"t grid {text!r} has a non-numeric part") from None
    if step <= 0 or a < 0 or b < a:
        raise ConfigError(f"t grid {text!r} needs 0 <= a <= b and step > 0")
    out = []
    t = a
    while t <= b:
        out.append(t)
        t += step
    return out
