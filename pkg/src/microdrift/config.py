"""JSON system files, resonance files and experiment configurations."""

from __future__ import annotations

import copy
import json
from fractions import Fraction
from pathlib import Path

import jsonschema

from .hamiltonian import FourierPerturbation, NearIntegrableSystem, Polynomial
from .lattice import ResonanceData, resonance_from_adapted, resonance_from_rational


class ConfigError(ValueError):
    """Malformed or schema-violating configuration."""


_INT_LIST = {"type": "array", "items": {"type": "integer"}}
_NUM_LIST = {"type": "array", "items": {"type": "number"}}

MONOMIAL_SCHEMA = {
    "type": "object",
    "properties": {"alpha": {**_INT_LIST, "items": {"type": "integer", "minimum": 0}}, "coeff": {"type": "number"}},
    "required": ["alpha", "coeff"],
    "additionalProperties": False,
}

RESONANCE_SCHEMA = {
    "type": "object",
    "properties": {
        "i_star": _NUM_LIST,
        "omega": {"type": "array", "items": {"type": ["string", "integer"]}},
        "d": {"type": "integer", "minimum": 1},
        "omega_tilde": _NUM_LIST,
    },
    "required": ["i_star"],
    "oneOf": [{"required": ["omega"]}, {"required": ["d", "omega_tilde"]}],
    "additionalProperties": False,
}

SYSTEM_SCHEMA = {
    "type": "object",
    "properties": {
        "n": {"type": "integer", "minimum": 2},
        "domain_radius": {"type": "number", "exclusiveMinimum": 0},
        "epsilon": {"type": "number", "minimum": 0},
        "h": {"type": "array", "items": MONOMIAL_SCHEMA},
        "f": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "k": _INT_LIST,
                    "re": {"type": "number"},
                    "im": {"type": "number"},
                    "coeff_poly": {"type": "array", "items": MONOMIAL_SCHEMA},
                },
                "required": ["k"],
                "additionalProperties": False,
            },
        },
        "resonance": RESONANCE_SCHEMA,
    },
    "required": ["n", "h", "f"],
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "system": {"oneOf": [{"type": "string"}, SYSTEM_SCHEMA]},
        "resonance": {"oneOf": [{"type": "string"}, RESONANCE_SCHEMA]},
        "kappa": {"type": "number", "exclusiveMinimum": 0},
        "mu0": {"type": "number", "exclusiveMinimum": 0},
        "q_max": {"type": "integer", "minimum": 1},
        "eps": {"type": "number", "exclusiveMinimum": 0},
        "eps_list": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 2},
        "theta_transverse": {"oneOf": [{"type": "null"}, _NUM_LIST]},
        "phase_sweep": {"type": "integer", "minimum": 0},
        "h_step": {"oneOf": [{"type": "null"}, {"type": "number", "exclusiveMinimum": 0}]},
        "samples": {"type": "integer", "minimum": 1},
        "seed": {"oneOf": [{"type": "null"}, {"type": "integer", "minimum": 0}]},
        "threads": {"type": "integer", "minimum": 1},
        "omega_tilde": _NUM_LIST,
        "x": {"type": "number", "exclusiveMinimum": 0},
        "theta0": _NUM_LIST,
        "i0": _NUM_LIST,
        "T": {"type": "number"},
        "samples_out": {"type": "integer", "minimum": 1},
    },
    "additionalProperties": False,
}

CONFIG_DEFAULTS = {
    "kappa": 1.0,
    "mu0": 0.1,
    "q_max": 200,
    "eps": 1e-4,
    "eps_list": [10 ** (-2 - 0.5 * i) for i in range(9)],
    "theta_transverse": None,
    "phase_sweep": 0,
    "h_step": None,
    "samples": 2000,
    "seed": None,
    "threads": 1,
    "samples_out": 200,
}


def _validate(doc, schema, source):
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        where = err.json_path
        raise ConfigError(f"{source}: schema violation at {where}: {err.message}")


def read_json(path):
    path = Path(path)
    text = path.read_text()  # I/O errors propagate as OSError
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: JSON parse error: {exc.msg}") from None


def _poly_from(entries, n):
    terms = {}
    for m in entries:
        alpha = tuple(m["alpha"])
        if len(alpha) != n:
            raise ConfigError(f"monomial {list(alpha)} does not have length n={n}")
        terms[alpha] = terms.get(alpha, 0) + m["coeff"]
    return Polynomial(terms, n)


def system_from_dict(doc, source="<system>") -> NearIntegrableSystem:
    _validate(doc, SYSTEM_SCHEMA, source)
    n = doc["n"]
    h = _poly_from(doc["h"], n)
    modes = {}
    for i, entry in enumerate(doc["f"]):
        k = tuple(entry["k"])
        if len(k) != n:
            raise ConfigError(f"{source}: schema violation at $.f[{i}].k: length {len(k)} != n={n}")
        scalar = complex(entry.get("re", 1.0 if "coeff_poly" in entry else 0.0), entry.get("im", 0.0))
        poly = _poly_from(entry.get("coeff_poly", [{"alpha": [0] * n, "coeff": 1.0}]), n) * scalar
        modes[k] = modes[k] + poly if k in modes else poly
    try:
        f = FourierPerturbation(modes, n)
        return NearIntegrableSystem(h, f, float(doc.get("epsilon", 0.0)), float(doc.get("domain_radius", 1.0)))
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def _num(c):
    c = complex(c)
    return c.real, c.imag


def system_to_dict(system: NearIntegrableSystem, resonance: dict | None = None) -> dict:
    n = system.n
    doc = {
        "n": n,
        "domain_radius": system.domain_radius,
        "epsilon": system.epsilon,
        "h": [{"alpha": list(a), "coeff": float(complex(c).real)} for a, c in system.h.terms.items()],
        "f": [],
    }
    for k, poly in system.f.mode_table.items():
        for alpha, c in poly.terms.items():
            re, im = _num(c)
            entry = {"k": list(k), "re": re}
            if im:
                entry["im"] = im
            if any(alpha):
                entry["coeff_poly"] = [{"alpha": list(alpha), "coeff": 1.0}]
            doc["f"].append(entry)
    if resonance is not None:
        doc["resonance"] = resonance
    return doc


def load_system(path) -> NearIntegrableSystem:
    return system_from_dict(read_json(path), str(path))


def resonance_from_dict(doc, system: NearIntegrableSystem | None, source="<resonance>") -> ResonanceData:
    _validate(doc, RESONANCE_SCHEMA, source)
    try:
        if "omega" in doc:
            omega = [Fraction(w) if isinstance(w, str) else Fraction(int(w)) for w in doc["omega"]]
            return resonance_from_rational(system, doc["i_star"], omega)
        return resonance_from_adapted(system, doc["i_star"], doc["d"], doc["omega_tilde"])
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_resonance(path, system=None) -> ResonanceData:
    return resonance_from_dict(read_json(path), system, str(path))


def load_config(path) -> dict:
    """Validated experiment description with defaults filled in.

    ``system`` / ``resonance`` may be inline objects or paths relative to the
    config file.  The returned dict carries the parsed objects under
    ``"_system"`` and ``"_resonance"`` next to the plain JSON snapshot.
    """
    path = Path(path)
    doc = read_json(path)
    return config_from_dict(doc, str(path), base=path.parent)


def config_from_dict(doc, source="<config>", base=Path(".")) -> dict:
    _validate(doc, CONFIG_SCHEMA, source)
    cfg = copy.deepcopy(CONFIG_DEFAULTS)
    cfg.update(copy.deepcopy(doc))
    sys_doc = cfg.get("system")
    if isinstance(sys_doc, str):
        sys_doc = read_json(base / sys_doc)
    system = system_from_dict(sys_doc, source + ":system") if sys_doc is not None else None
    res_doc = cfg.get("resonance", (sys_doc or {}).get("resonance"))
    if isinstance(res_doc, str):
        res_doc = read_json(base / res_doc)
    cfg["system"] = sys_doc
    cfg["resonance"] = res_doc
    cfg["_system"] = system
    cfg["_resonance"] = None
    if res_doc is not None and system is not None:
        cfg["_resonance"] = resonance_from_dict(res_doc, system, source + ":resonance")
    return cfg


def public_config(cfg: dict) -> dict:
    """The JSON-serialisable part of a loaded config."""
    return {k: v for k, v in cfg.items() if not k.startswith("_")}
