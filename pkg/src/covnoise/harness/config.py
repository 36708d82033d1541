"""Strict JSON experiment configuration.

Every experiment document has a ``kind`` plus the common keys ``seed``,
``seeds``, ``out`` and ``description``; the remaining keys depend on the kind
(see ``SCHEMAS``). Unknown keys are rejected, missing optional keys are filled
with their defaults, and nested tables are validated the same way.
"""

import json
import math
from dataclasses import dataclass, field

from ..errors import ConfigParseError, ConfigValidationError

KINDS = ("quadratic", "toy2d", "train", "diagnose", "stability")
QUADRATIC_NOISES = ("zero", "full", "diag", "trace", "identity")
TRAIN_REGIMES = ("none", "fisher_full", "fisher_diag", "fisher_rademacher", "fisher_trace", "true_fisher")
REQUIRED = object()


@dataclass
class ExperimentConfig:
    kind: str
    seed: int = 0
    seeds: int = 1
    out: str = None
    description: str = ""
    params: dict = field(default_factory=dict)

    @property
    def seed_list(self):
        return list(range(self.seed, self.seed + self.seeds))

    def with_overrides(self, seed=None, seeds=None):
        return ExperimentConfig(
            self.kind,
            self.seed if seed is None else seed,
            self.seeds if seeds is None else seeds,
            self.out,
            self.description,
            self.params,
        )


# --- scalar validators: (value, field path) -> normalized value


def _fail(path, msg):
    raise ConfigValidationError(path, msg)


def _int(lo=None, hi=None):
    def check(v, path):
        if isinstance(v, bool) or not isinstance(v, int):
            _fail(path, f"expected an integer, got {v!r}")
        if lo is not None and v < lo:
            _fail(path, f"must be >= {lo}, got {v}")
        if hi is not None and v > hi:
            _fail(path, f"must be <= {hi}, got {v}")
        return v

    return check


def _real(lo=None, strict_lo=False, hi=None):
    def check(v, path):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            _fail(path, f"expected a finite number, got {v!r}")
        v = float(v)
        if lo is not None and (v <= lo if strict_lo else v < lo):
            _fail(path, f"must be {'>' if strict_lo else '>='} {lo}, got {v}")
        if hi is not None and v > hi:
            _fail(path, f"must be <= {hi}, got {v}")
        return v

    return check


def _str(v, path):
    if not isinstance(v, str):
        _fail(path, f"expected a string, got {v!r}")
    return v


def _choice(options):
    def check(v, path):
        if v not in options:
            _fail(path, f"must be one of {', '.join(options)}; got {v!r}")
        return v

    return check


def _optional(inner):
    def check(v, path):
        return None if v is None else inner(v, path)

    return check


def _list(inner, min_len=0, length=None, unique=False):
    def check(v, path):
        if not isinstance(v, list):
            _fail(path, f"expected a list, got {v!r}")
        if length is not None and len(v) != length:
            _fail(path, f"expected {length} entries, got {len(v)}")
        if len(v) < min_len:
            _fail(path, f"needs at least {min_len} entries")
        out = [inner(x, f"{path}[{i}]") for i, x in enumerate(v)]
        if unique and len(set(map(repr, out))) != len(out):
            _fail(path, "entries must be distinct")
        return out

    return check


def _matrix(v, path):
    rows = _list(_list(_real(), min_len=1), min_len=1)(v, path)
    n = len(rows)
    if any(len(r) != n for r in rows):
        _fail(path, f"expected a square matrix, got rows of lengths {[len(r) for r in rows]}")
    return rows


def _table(schema):
    def check(v, path):
        return _validate(v, schema, path)

    return check


def _one_of(tag, variants):
    """Tagged union of tables: ``{tag: name, ...}`` validated with variants[name]."""

    def check(v, path):
        if not isinstance(v, dict):
            _fail(path, f"expected an object, got {v!r}")
        name = v.get(tag)
        if name not in variants:
            _fail(f"{path}.{tag}", f"must be one of {', '.join(variants)}; got {name!r}")
        rest = {k: x for k, x in v.items() if k != tag}
        out = _validate(rest, variants[name], path)
        out[tag] = name
        return out

    return check


def _matrix_or_random(v, path):
    if not isinstance(v, dict):
        return _matrix(v, path)
    if set(v) != {"random"}:
        _fail(path, 'expected a square matrix or {"random": {...}}')
    return {"random": _validate(v["random"], RANDOM_MATRIX, f"{path}.random")}


def _diffusion(v, path):
    if isinstance(v, str):
        return _choice(("sqrtA", "identity", "sqrt_diag"))(v, path)
    return _matrix(v, path)


def _validate(obj, schema, path=""):
    if not isinstance(obj, dict):
        _fail(path or "<root>", f"expected an object, got {obj!r}")
    prefix = f"{path}." if path else ""
    for key in obj:
        if key not in schema:
            _fail(prefix + key, "unknown key")
    out = {}
    for key, (check, default) in schema.items():
        if key in obj:
            out[key] = check(obj[key], prefix + key)
        elif default is REQUIRED:
            _fail(prefix + key, "required key is missing")
        else:
            out[key] = default
    return out


RANDOM_MATRIX = {
    "dim": (_int(1, 500), REQUIRED),
    "cond": (_real(1.0), 10.0),
    "seed": (_int(0), 0),
}

SCHEDULE = _one_of(
    "type",
    {
        "decay": {"alpha0": (_optional(_real(0.0, strict_lo=True)), None)},
        "constant": {"alpha": (_real(0.0, strict_lo=True), REQUIRED)},
    },
)

DATA = _one_of(
    "source",
    {
        "blobs": {
            "n": (_int(2), 200),
            "in_dim": (_int(1), 4),
            "classes": (_int(2), 3),
            "spread": (_real(0.0), 1.0),
            "seed": (_int(0), 0),
        },
        "idx": {
            "images": (_str, REQUIRED),
            "labels": (_str, REQUIRED),
            "limit": (_optional(_int(1)), None),
        },
    },
)

NETWORK = {
    "data": (DATA, REQUIRED),
    "hidden": (_list(_int(1)), [16]),
    "activation": (_choice(("relu", "tanh")), "tanh"),
    "init_scale": (_real(0.0, strict_lo=True), 1.0),
    "init_seed": (_int(0), 0),
}

COMMON = {
    "kind": (_choice(KINDS), REQUIRED),
    "seed": (_int(0, 2**63), 0),
    "seeds": (_int(1), 1),
    "out": (_optional(_str), None),
    "description": (_str, ""),
}

SCHEMAS = {
    "quadratic": {
        "matrix": (_matrix_or_random, REQUIRED),
        "theta0": (_optional(_list(_real(), min_len=1)), None),
        "noises": (_list(_choice(QUADRATIC_NOISES), min_len=1, unique=True), ["full", "diag"]),
        "noise_scale": (_real(0.0), 1.0),
        "schedule": (SCHEDULE, {"type": "decay", "alpha0": None}),
        "steps": (_int(1), REQUIRED),
        "log_every": (_int(1), 1),
        "epsilons": (_list(_real(0.0, strict_lo=True)), [0.1, 0.01]),
    },
    "toy2d": {
        "n": (_int(2), 200),
        "noise_sd": (_real(0.0), 0.5),
        "data_seed": (_int(0), 0),
        "w_true": (_list(_real(), length=2), [2.0, -1.0]),
        "theta0": (_list(_real(), length=2), [-2.0, 3.0]),
        "noises": (_list(_choice(QUADRATIC_NOISES), min_len=1, unique=True), ["zero", "full", "diag"]),
        "noise_scale": (_real(0.0), 1.0),
        "alpha": (_real(0.0, strict_lo=True), 0.1),
        "steps": (_int(1), 500),
        "log_every": (_int(1), 10),
    },
    "train": {
        **NETWORK,
        "regimes": (_list(_choice(TRAIN_REGIMES), min_len=1, unique=True), ["none", "fisher_diag", "fisher_full"]),
        "m_small": (_int(1), REQUIRED),
        "m_large": (_optional(_int(1)), None),
        "large_batch": (_optional(_int(1)), None),
        "alpha": (_real(0.0, strict_lo=True), REQUIRED),
        "steps": (_int(1), REQUIRED),
        "log_every": (_int(1), 1),
        "termination_fraction": (_real(0.0, hi=1.0), 0.25),
        "loss_threshold": (_optional(_real(0.0, strict_lo=True)), None),
    },
    "diagnose": {
        **NETWORK,
        "alpha": (_real(0.0, strict_lo=True), 0.5),
        "train_steps": (_int(0), 200),
        "checkpoint_every": (_int(1), 50),
        "m_small": (_int(1), REQUIRED),
        "m_large": (_optional(_int(1)), None),
        "draws": (_int(2), 2000),
        "max_iters": (_int(1), 500),
        "tol": (_real(0.0, strict_lo=True), 1e-6),
    },
    "stability": {
        "systems": (
            _list(
                _table(
                    {
                        "A": (_matrix, REQUIRED),
                        "C": (_diffusion, "sqrtA"),
                        "alpha": (_real(0.0, strict_lo=True), 0.1),
                        "theta0": (_list(_real(), min_len=1), REQUIRED),
                    }
                ),
                length=2,
            ),
            REQUIRED,
        ),
        "times": (_list(_real(0.0), min_len=1), [0.1, 1.0, 10.0]),
        "lambdas": (_list(_real(0.0, strict_lo=True), min_len=1), [1e-3, 1e-2, 1e-1, 1.0]),
        "riccati_dt": (_real(0.0, strict_lo=True), 1e-4),
    },
}


def _check_dims(kind, p):
    if kind == "quadratic":
        m = p["matrix"]
        d = m["random"]["dim"] if isinstance(m, dict) else len(m)
        if p["theta0"] is not None and len(p["theta0"]) != d:
            _fail("theta0", f"has {len(p['theta0'])} entries but the matrix is {d}x{d}")
    elif kind in ("train", "diagnose"):
        data = p["data"]
        if data["source"] == "blobs" and data["classes"] > data["in_dim"]:
            _fail("data.classes", "blob generator needs classes <= in_dim")
        if data["source"] == "blobs" and data["n"] < data["classes"]:
            _fail("data.n", "need at least one sample per class")
        if p["m_large"] is not None and p["m_large"] < p["m_small"]:
            _fail("m_large", "must be >= m_small")
    elif kind == "stability":
        for i, s in enumerate(p["systems"]):
            d = len(s["A"])
            if len(s["theta0"]) != d:
                _fail(f"systems[{i}].theta0", f"has {len(s['theta0'])} entries but A is {d}x{d}")
            if isinstance(s["C"], list) and len(s["C"]) != d:
                _fail(f"systems[{i}].C", f"must be {d}x{d}")
        if len(p["systems"][0]["A"]) != len(p["systems"][1]["A"]):
            _fail("systems", "both systems must have the same dimension")


def validate_config(obj):
    if not isinstance(obj, dict):
        _fail("<root>", "the document must be a JSON object")
    kind = _choice(KINDS)(obj.get("kind"), "kind")
    schema = {**COMMON, **SCHEMAS[kind]}
    v = _validate(obj, schema)
    _check_dims(kind, v)
    params = {k: v[k] for k in SCHEMAS[kind]}
    return ExperimentConfig(kind, v["seed"], v["seeds"], v["out"], v["description"], params)


def parse_config(text):
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigParseError(e.msg, e.lineno, e.colno) from e
    return validate_config(obj)
