"""Experiment configuration in TOML.

Parsing reports the offending line (syntax errors) or the dotted field path
(semantic errors) through :class:`ConfigError`.
"""

from __future__ import annotations

import copy
import hashlib
import sys
from dataclasses import dataclass, field
from typing import Any, Optional

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from .girsanov import DEFAULT_BOUND, ScenarioShift
from .hedge import Claim
from .intensity import IntensitySpec, TimeGrid, intensity_model
from .market import MarketCoefficients
from .noise import JumpMeasureSpec
from .regression import check_filtration

CLAIM_KINDS = ("call", "put", "digital", "intensity_exp", "zero")

DEFAULTS: dict[str, Any] = {
    "seed": 20240601,
    "n_paths": 50000,
    "filtration": "F",
    "output": "out",
    "grid": {"horizon": 1.0, "n_steps": 32},
    "intensity": {
        "B": {"kind": "cir", "speed": 2.0, "mean": 1.0, "vol": 0.3, "initial": 1.0},
        "H": {"kind": "constant", "level": 1.0},
    },
    "jumps": {"marks": [0.1, -0.08], "weights": [0.6, 0.4]},
    "market": {"r": 0.03, "alpha": 0.07, "sigma": 0.2, "gamma": [0.1, -0.08], "spot": 100.0},
    "claim": {"kind": "call", "strike": 100.0},
    "scenario": {"rule": "minimal-norm", "bound": DEFAULT_BOUND, "one_sided": False},
    "risk": {"scales": [0.0, 0.5, 1.0, 1.5], "mark_tilts": [0.25]},
    "regression": {"degree": 2, "hinges": {"logS": 8}},
    "export": {"max_paths": 200},
    "validate": {"seeds": [1, 2, 3, 4, 5]},
}


class ConfigError(ValueError):
    """Invalid configuration; ``where`` is a line or a dotted field path."""

    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where
        self.message = message


# tables replaced as a whole (their keys depend on a "kind") or open to extra keys
_REPLACED = {"intensity.B", "intensity.H", "claim", "regression.hinges"}
_OPEN = {"scenario"}


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        where = f"{path}.{k}" if path else k
        if where in _REPLACED:
            if not isinstance(v, dict):
                raise ConfigError(where, "expected a table")
            out[k] = copy.deepcopy(v)
        elif k not in base:
            if path not in _OPEN:
                raise ConfigError(where, "unknown field")
            out[k] = v
        elif isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(where, "expected a table")
            out[k] = _merge(base[k], v, where)
        else:
            out[k] = v
    return out


@dataclass
class ExperimentConfig:
    data: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    # -- construction ------------------------------------------------------------

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        try:
            raw = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(_line_of(exc), str(exc)) from None
        return cls.from_dict(raw)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            with open(path, "rb") as fh:
                text = fh.read().decode("utf-8")
        except OSError as exc:
            raise ConfigError(str(path), f"cannot read config: {exc.strerror}") from None
        return cls.from_text(text)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        cfg = cls(_merge(DEFAULTS, raw))
        cfg.validate()
        return cfg

    def to_text(self, include_output: bool = True) -> str:
        data = self.data if include_output else {k: v for k, v in self.data.items() if k != "output"}
        return tomli_w.dumps(data)

    def digest(self) -> str:
        """Hash of the experiment definition; the output location is not part of it."""
        return hashlib.sha256(self.to_text(include_output=False).encode("utf-8")).hexdigest()

    def with_overrides(self, seed: Optional[int] = None, n_paths: Optional[int] = None, output: Optional[str] = None) -> "ExperimentConfig":
        d = copy.deepcopy(self.data)
        if seed is not None:
            d["seed"] = int(seed)
        if n_paths is not None:
            d["n_paths"] = int(n_paths)
        if output is not None:
            d["output"] = str(output)
        out = ExperimentConfig(d)
        out.validate()
        return out

    # -- typed views --------------------------------------------------------------

    def _get(self, path: str):
        node = self.data
        for part in path.split("."):
            node = node[part]
        return node

    def _build(self, path: str, fn):
        try:
            return fn()
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            msg = exc.args[0] if exc.args else str(exc)
            raise ConfigError(path, str(msg)) from None

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    @property
    def n_paths(self) -> int:
        return int(self.data["n_paths"])

    @property
    def filtration(self) -> str:
        return check_filtration(self.data["filtration"])

    @property
    def output(self) -> str:
        return str(self.data["output"])

    def grid(self) -> TimeGrid:
        g = self.data["grid"]
        return self._build("grid", lambda: TimeGrid(float(g["horizon"]), int(g["n_steps"])))

    def intensity(self) -> IntensitySpec:
        def one(key):
            spec = dict(self.data["intensity"][key])
            kind = spec.pop("kind", None)
            if kind is None:
                raise ConfigError(f"intensity.{key}.kind", "missing")
            return self._build(f"intensity.{key}", lambda: intensity_model(kind, **spec))

        return IntensitySpec(one("B"), one("H"))

    def jumps(self) -> JumpMeasureSpec:
        j = self.data["jumps"]
        return self._build("jumps", lambda: JumpMeasureSpec(tuple(j["marks"]), tuple(j["weights"])))

    def market(self) -> MarketCoefficients:
        m = self.data["market"]
        n_marks = len(self.data["jumps"]["marks"])

        def build():
            gamma = m["gamma"]
            if isinstance(gamma, list) and len(gamma) != n_marks:
                raise ConfigError("market.gamma", f"expected {n_marks} values, one per mark")
            return MarketCoefficients(float(m["r"]), float(m["alpha"]), float(m["sigma"]), gamma, float(m["spot"]))

        return self._build("market", build)

    def claim(self) -> Claim:
        c = dict(self.data["claim"])
        kind = c.pop("kind", None)
        if kind not in CLAIM_KINDS:
            raise ConfigError("claim.kind", f"must be one of {', '.join(CLAIM_KINDS)}")
        if kind in ("call", "put", "digital") and "strike" not in c:
            raise ConfigError("claim.strike", "missing")
        return Claim(kind, c)

    def scenario_options(self) -> dict:
        s = self.data["scenario"]
        rule = s.get("rule", "minimal-norm")
        if rule not in ("minimal-norm", "user-supplied"):
            raise ConfigError("scenario.rule", "must be 'minimal-norm' or 'user-supplied'")
        opts = {"rule": rule, "bound": float(s.get("bound", DEFAULT_BOUND)), "one_sided": bool(s.get("one_sided", False))}
        if rule == "user-supplied":
            if "theta_B" not in s or "theta_H" not in s:
                raise ConfigError("scenario", "user-supplied rule needs theta_B and theta_H")
            opts["theta_B"] = float(s["theta_B"])
            opts["theta_H"] = [float(v) for v in (s["theta_H"] if isinstance(s["theta_H"], list) else [s["theta_H"]])]
        return opts

    def user_theta(self) -> Optional[ScenarioShift]:
        o = self.scenario_options()
        if o["rule"] != "user-supplied":
            return None
        return ScenarioShift.constant(o["theta_B"], o["theta_H"], bound=o["bound"], filtration=self.filtration, one_sided=o["one_sided"])

    def regression_options(self) -> dict:
        r = self.data["regression"]
        return {"degree": int(r["degree"]), "hinges": dict(r.get("hinges", {}))}

    def validate(self) -> None:
        for key in ("seed", "n_paths"):
            if not isinstance(self.data[key], int) or isinstance(self.data[key], bool):
                raise ConfigError(key, "expected an integer")
        if self.n_paths < 2:
            raise ConfigError("n_paths", "need at least 2 paths")
        self._build("filtration", lambda: self.filtration)
        self.grid()
        self.intensity()
        self.jumps()
        self.market()
        self.claim()
        self.scenario_options()
        r = self.data["regression"]
        if not isinstance(r.get("degree"), int) or r["degree"] < 0:
            raise ConfigError("regression.degree", "expected a nonnegative integer")
        for k, v in r.get("hinges", {}).items():
            if not isinstance(v, int) or v < 0:
                raise ConfigError(f"regression.hinges.{k}", "expected a nonnegative integer")
        for k in ("scales", "mark_tilts"):
            if not isinstance(self.data["risk"][k], list):
                raise ConfigError(f"risk.{k}", "expected a list")


def _line_of(exc) -> str:
    lineno = getattr(exc, "lineno", None)
    if lineno is None:
        import re

        m = re.search(r"line (\d+)", str(exc))
        lineno = m.group(1) if m else "?"
    return f"line {lineno}"
