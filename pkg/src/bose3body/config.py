"""Run configuration: TOML file + flag overrides, validated against a strict schema."""
from __future__ import annotations

import copy
import hashlib
import json
import math
import re
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .functionals import B_CRIT


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending key path."""

    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}")
        self.path = path


def _power_of_two(m):
    return m >= 16 and (m & (m - 1)) == 0


REAL = "real"
INT = "int"
STR = "str"
BOOL = "bool"
REALS = "reals"
INTS = "ints"

# key -> (type, default, validator or None, message)
SCHEMA = {
    "seed": (INT, 0, lambda v: v >= 0, "must be >= 0"),
    "workers": (INT, 0, lambda v: v >= 0, "must be >= 0 (0 = available parallelism)"),
    "output": {
        "dir": (STR, "runs/out", None, ""),
    },
    "grid": {
        "L": (REAL, 20.0, lambda v: v > 0, "must be positive"),
        "M": (INT, 2048, _power_of_two, "must be a power of two >= 16"),
    },
    "model": {
        "a": (REAL, 0.0, None, ""),
        "b": (REAL, 0.0, lambda v: v >= 0, "must be >= 0"),
        "s": (REAL, 2.0, lambda v: v > 0, "must be positive"),
        "alpha": (REAL, 0.5, lambda v: v > 0, "must be positive"),
        "beta": (REAL, 0.5, lambda v: v > 0, "must be positive"),
        "N": (REAL, 100.0, lambda v: v >= 1, "must be >= 1"),
    },
    "kernel": {
        "two_body": (STR, "gaussian", None, ""),
        "two_body_sigma": (REAL, 1.0, lambda v: v > 0, "must be positive"),
        "three_body": (STR, "gaussian", None, ""),
        "three_body_sigma": (REAL, 1.0, lambda v: v > 0, "must be positive"),
        "allow_delta": (BOOL, False, None, ""),
    },
    "solver": {
        "tau0": (REAL, 0.5, lambda v: v > 0, "must be positive"),
        "backtrack": (REAL, 0.5, lambda v: 0 < v < 1, "must lie in (0, 1)"),
        "grow": (REAL, 1.6, lambda v: v >= 1, "must be >= 1"),
        "max_iter": (INT, 4000, lambda v: v >= 1, "must be >= 1"),
        "tol": (REAL, 1e-8, lambda v: v > 0, "must be positive"),
        "init": (STR, "scaled_Q0", lambda v: v in ("gaussian", "scaled_Q0", "file"),
                 "must be gaussian | scaled_Q0 | file"),
        "init_file": (STR, "", None, ""),
        "method": (STR, "cg", lambda v: v in ("cg", "gradient"), "must be cg | gradient"),
        "kinetic_ceiling": (REAL, 0.0, lambda v: v >= 0, "must be >= 0 (0 = default)"),
        "instability_probe": (BOOL, False, None, ""),
    },
    "phase": {
        "a_values": (REALS, [-1.0, 0.0, 1.0], None, ""),
        "b_values": (REALS, [0.9 * B_CRIT, B_CRIT, 1.1 * B_CRIT], lambda v: all(x >= 0 for x in v),
                     "entries must be >= 0"),
    },
    "regime": {
        "kind": (STR, "nls", lambda v: v in ("nls", "hartree"), "must be nls | hartree"),
        "zeta": (REAL, 6.0, lambda v: v >= 0 and math.isfinite(v), "must be finite and >= 0"),
        "driver": (STR, "b", lambda v: v in ("a", "b"), "must be a | b"),
        "c": (REAL, 1.0, lambda v: v > 0, "must be positive"),
        "p": (REAL, 1.0, lambda v: v > 0, "must be positive"),
        "kappa": (REAL, 0.0, None, ""),
        "n_values": (REALS, [10.0, 100.0, 1000.0], lambda v: len(v) >= 1 and all(x > 0 for x in v),
                     "needs positive entries"),
        "L": (REAL, 10.0, lambda v: v > 0, "must be positive"),
        "points_per_scale": (REAL, 20.0, lambda v: v >= 4, "must be >= 4"),
        "eta": (REAL, 0.08, lambda v: v > 0, "must be positive"),
        "ell0": (REAL, 1.0, lambda v: v > 0, "must be positive"),
        "N_values": (REALS, [10.0, 100.0, 1000.0], lambda v: all(x >= 1 for x in v), "entries must be >= 1"),
    },
    "manybody": {
        "N_values": (INTS, [3, 4, 5], lambda v: all(3 <= x <= 8 for x in v), "entries must lie in 3..8"),
        "K": (INT, 8, lambda v: 1 <= v <= 12, "must lie in 1..12"),
        "L": (REAL, 12.0, lambda v: v > 0, "must be positive"),
        "M": (INT, 256, _power_of_two, "must be a power of two >= 16"),
        "dump_gamma": (BOOL, False, None, ""),
    },
    "compare": {
        "N_values": (REALS, [100.0, 1000.0, 10000.0], lambda v: len(v) >= 1 and all(x >= 1 for x in v),
                     "entries must be >= 1"),
    },
}

_BCRIT_RE = re.compile(r"^\s*([-+]?[0-9.eE+-]*)\s*\*?\s*bcrit\s*$")


def parse_real(value, path: str) -> float:
    """Floats, ints, or strings such as '1.05bcrit' / 'bcrit'."""
    if isinstance(value, bool):
        raise ConfigError(path, f"expected a real number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        m = _BCRIT_RE.match(value)
        if m:
            f = m.group(1)
            return (float(f) if f not in ("", "+", "-") else float(f + "1")) * B_CRIT
        try:
            return float(value)
        except ValueError:
            pass
    raise ConfigError(path, f"expected a real number, got {value!r}")


def _coerce(kind, value, path):
    if kind == REAL:
        return parse_real(value, path)
    if kind == INT:
        if isinstance(value, bool):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        if isinstance(value, int):
            return value
        if isinstance(value, float) and value.is_integer():
            return int(value)
        if isinstance(value, str):
            try:
                return int(value)
            except ValueError:
                pass
        raise ConfigError(path, f"expected an integer, got {value!r}")
    if kind == STR:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    if kind == BOOL:
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false", "1", "0", "yes", "no"):
            return value.lower() in ("true", "1", "yes")
        raise ConfigError(path, f"expected true or false, got {value!r}")
    if kind in (REALS, INTS):
        if isinstance(value, str):
            value = [v for v in value.split(",") if v.strip()]
        if not isinstance(value, (list, tuple)):
            value = [value]
        inner = REAL if kind == REALS else INT
        return [_coerce(inner, v, f"{path}[{i}]") for i, v in enumerate(value)]
    raise AssertionError(kind)


def defaults() -> dict:
    def walk(node):
        return {k: walk(v) if isinstance(v, dict) else copy.deepcopy(v[1]) for k, v in node.items()}

    return walk(SCHEMA)


def validate(raw: dict, base: dict | None = None, prefix: str = "", schema: dict = SCHEMA) -> dict:
    """Merge ``raw`` over ``base`` (defaults) and check every key against the schema."""
    out = copy.deepcopy(base) if base is not None else defaults()
    if not isinstance(raw, dict):
        raise ConfigError(prefix.rstrip(".") or "<root>", "expected a table")
    for key, value in raw.items():
        path = f"{prefix}{key}"
        if key not in schema:
            raise ConfigError(path, "unknown key")
        spec = schema[key]
        if isinstance(spec, dict):
            out[key] = validate(value, out[key], path + ".", spec)
            continue
        kind, _, check, msg = spec
        v = _coerce(kind, value, path)
        if check is not None and not check(v):
            raise ConfigError(path, f"{msg} (got {v!r})")
        out[key] = v
    return out


def load(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError("<file>", f"config file {path} not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<file>", f"cannot parse {path}: {exc}") from None


def set_path(tree: dict, dotted: str, value) -> None:
    """tree['a']['b'] = value for dotted = 'a.b'."""
    parts = dotted.split(".")
    node = tree
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(dotted, "not a table")
    node[parts[-1]] = value


def resolve(path: str | None, overrides: dict) -> dict:
    """Defaults, then the file, then flag overrides (dotted keys)."""
    cfg = validate(load(path))
    extra = {}
    for dotted, value in overrides.items():
        set_path(extra, dotted, value)
    return validate(extra, cfg)


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()
