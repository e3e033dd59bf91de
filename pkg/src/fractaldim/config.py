"""JSON run configuration: system, weights, seeds and per-command settings."""

from __future__ import annotations

import copy
import hashlib
import json
import re
from dataclasses import dataclass, field
from typing import Optional

from .errors import ValidationError
from .expr import number
from .ifs import IFSSystem, map_from_dict, region_from_dict
from .symbolic import Sequence
from .weights import AffineWeight, ConstantWeight, ExpressionWeight, WeightSystem

DEFAULTS = {
    "stationary": {"resolution": 4096, "tol_tv": 1e-9, "max_iter": 10_000, "n_steps": 1_000_000,
                   "burn_in": 100, "chains": 1},
    "dimension": {"gibbs_depth": 12, "n_points": 100, "ensemble_chains": 1000, "ensemble_steps": 1050,
                  "std_tol": 0.05, "r2_tol": 0.98, "trajectory_steps": 200_000, "box_points": 100_000},
    "unfold": {"omega": {"preperiod": [], "period": [1]}, "K": None, "n_max": 1000, "depth": 10,
               "s": 1.0, "gibbs_depth": 8},
    "rscc": {"kind": "urn", "a": [1, 1], "d": [1, 0], "w0": None, "n": 1, "m": 2, "A": [[1, 1]],
             "chains": 100_000, "T": 20, "save_chains": 10, "states": 3, "indices": 2, "past": 4, "future": 4, "s": 1.0},
}


class ConfigError(ValidationError):
    def __init__(self, msg, line=None, path=None):
        where = f"{path or '<config>'}" + (f":{line}" if line else "")
        super().__init__(f"{where}: {msg}")
        self.line = line


def _line_of(text, key):
    if not text:
        return None
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def weights_from_dict(d):
    if d is None:
        return None
    kind = d.get("kind", "constant")
    tail = number(d.get("tail_mass_bound", 0.0))
    if kind == "constant":
        return WeightSystem.constant([number(v) for v in d["p"]], tail)
    if kind == "affine":
        return WeightSystem.affine([(number(a), number(b)) for a, b in d["coeffs"]], tail)
    if kind == "expression":
        C, a = d.get("holder", [0.0, 1.0])
        return WeightSystem.expressions(list(d["p"]), tail, (number(C), number(a)))
    raise ValidationError(f"unknown weights kind {kind!r}")


def weights_to_dict(w: WeightSystem):
    if all(isinstance(q, ConstantWeight) for q in w.p):
        d = {"kind": "constant", "p": [q.c for q in w.p]}
    elif all(isinstance(q, AffineWeight) for q in w.p):
        d = {"kind": "affine", "coeffs": [[q.a, q.b] for q in w.p]}
    elif all(isinstance(q, ExpressionWeight) for q in w.p):
        d = {"kind": "expression", "p": [q.to_dict() for q in w.p], "holder": list(w.holder)}
    else:
        raise ValidationError("mixed weight kinds cannot be serialized")
    d["tail_mass_bound"] = w.tail_mass_bound
    return d


def sequence_from_dict(d):
    if isinstance(d, (list, tuple)):
        return Sequence.periodic(tuple(int(a) for a in d))
    return Sequence(tuple(int(a) for a in d.get("preperiod", [])), tuple(int(a) for a in d.get("period", [])))


def parse_sequence(text):
    """'1,2' -> periodic (1,2)^inf; '7;1,2' -> preperiod (7), period (1,2)."""
    pre, _, per = text.rpartition(";")
    toint = lambda s: tuple(int(a) for a in s.split(",") if a.strip())
    return Sequence(toint(pre), toint(per))


@dataclass
class SystemConfig:
    system: IFSSystem
    weights: Optional[WeightSystem]
    seed: int = 0
    sections: dict = field(default_factory=dict)
    declared: dict = field(default_factory=dict)
    source: str = ""
    path: Optional[str] = None

    @classmethod
    def from_text(cls, text, path=None):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc.msg} (column {exc.colno})", exc.lineno, path) from None
        if not isinstance(raw, dict):
            raise ConfigError("top level must be an object", 1, path)
        return cls.from_dict(raw, text, path)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_text(fh.read(), path)

    @classmethod
    def from_dict(cls, raw, text="", path=None):
        key = "system"
        try:
            sd = raw["system"]
            key = "V"
            V = region_from_dict(sd["V"])
            key = "maps"
            maps = [map_from_dict(m) for m in sd["maps"]]
            key = "s"
            s = number(sd["s"])
            alpha = number(sd["alpha"]) if sd.get("alpha") is not None else None
            key = "tail_region"
            tail = region_from_dict(sd["tail_region"]) if sd.get("tail_region") else None
            key = "H"
            system = IFSSystem(tuple(maps), V, s, alpha, number(sd.get("H", 0.0)), number(sd.get("beta", 1.0)),
                               bool(sd.get("countable", False)), bool(sd.get("tail_certified", False)), tail)
            key = "weights"
            weights = weights_from_dict(raw.get("weights"))
            if weights is not None:
                weights.validate(system)
            key = "seed"
            seed = int(raw.get("seed", 0))
            if seed < 0 or seed >= 2**64:
                raise ValidationError("seed must be an unsigned 64-bit integer")
            sections = {}
            for name, dflt in DEFAULTS.items():
                key = name
                given = raw.get(name, {}) or {}
                unknown = set(given) - set(dflt)
                if unknown:
                    raise ValidationError(f"unknown keys in {name!r}: {sorted(unknown)}")
                sections[name] = {**copy.deepcopy(dflt), **given}
            key = "declared"
            declared = dict(raw.get("declared", {}) or {})
            for k, v in declared.items():
                if isinstance(v, (int, float)) and not v > 0:
                    raise ValidationError(f"declared constant {k!r} must be positive")
        except ValidationError as exc:
            raise ConfigError(str(exc), _line_of(text, key), path) from None
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad or missing entry near {key!r}: {exc}", _line_of(text, key), path) from None
        return cls(system, weights, seed, sections, declared, text, path)

    def to_dict(self):
        sysd = self.system
        d = {
            "system": {
                "V": sysd.V.to_dict(),
                "maps": [m.to_dict() for m in sysd.maps],
                "s": sysd.s,
                "alpha": sysd.alpha,
                "H": sysd.H,
                "beta": sysd.beta,
                "countable": sysd.countable,
                "tail_certified": sysd.tail_certified,
                "tail_region": sysd.tail_region.to_dict() if sysd.tail_region is not None else None,
            },
            "weights": weights_to_dict(self.weights) if self.weights is not None else None,
            "seed": self.seed,
            "declared": self.declared,
        }
        d.update(copy.deepcopy(self.sections))
        return d

    def emit(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def sha256(self):
        return hashlib.sha256(self.emit().encode()).hexdigest()
