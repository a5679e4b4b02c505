"""Run configuration and machine-readable reports."""

from __future__ import annotations

import json
import math
import operator
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

REQUIRED = ("command", "K", "seed")

_RELATIONS = {
    "<=": operator.le,
    "<": operator.lt,
    ">=": operator.ge,
    ">": operator.gt,
    "==": operator.eq,
}


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("invalid configuration:\n  " + "\n  ".join(problems))


@dataclass
class Tolerances:
    quad_tol: float = 1e-12
    mc_sigma: float = 3.0
    coeff_tol: float = 1e-8


@dataclass
class RunConfig:
    command: str
    K: int = 64
    seed: int = 0
    D_max: int = 12
    p: float | None = None
    grid: str = "0:4:401"
    N: int = 100_000
    threads: int = 1
    chunk: int = 16384
    tolerances: Tolerances = field(default_factory=Tolerances)
    params: dict = field(default_factory=dict)

    def validate(self) -> "RunConfig":
        problems = []
        if not isinstance(self.command, str) or not self.command:
            problems.append("command: required, e.g. 'ito.square' or 'suite'")
        if not isinstance(self.K, int) or not 1 <= self.K <= 4096:
            problems.append(f"K: integer in [1, 4096] expected, got {self.K!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            problems.append(f"seed: nonnegative integer expected, got {self.seed!r}")
        if not isinstance(self.D_max, int) or self.D_max < 1:
            problems.append(f"D_max: positive integer expected, got {self.D_max!r}")
        if not isinstance(self.N, int) or self.N < 2:
            problems.append(f"N: integer >= 2 expected, got {self.N!r}")
        if not isinstance(self.threads, int) or self.threads < 1:
            problems.append(f"threads: positive integer expected, got {self.threads!r}")
        if self.p is not None and not (isinstance(self.p, (int, float)) and 0 <= self.p <= 64):
            problems.append(f"p: number in [0, 64] expected, got {self.p!r}")
        if problems:
            raise ConfigError(problems)
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        missing = [k for k in REQUIRED if k not in data]
        if missing:
            raise ConfigError([f"{k}: required field missing" for k in missing])
        known = {f for f in cls.__dataclass_fields__}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError([f"{k}: unknown field" for k in unknown])
        data = dict(data)
        tol = data.pop("tolerances", None) or {}
        if not isinstance(tol, dict):
            raise ConfigError(["tolerances: mapping expected"])
        return cls(tolerances=Tolerances(**tol), **data).validate()

    @classmethod
    def load(cls, path) -> "RunConfig":
        """JSON, or flat key=value lines (params.<name>=... for command parameters)."""
        text = Path(path).read_text()
        if text.lstrip().startswith("{"):
            return cls.from_dict(json.loads(text))
        data: dict = {}
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError([f"line {n}: expected key=value"])
            key, val = (s.strip() for s in line.split("=", 1))
            try:
                val = json.loads(val)
            except json.JSONDecodeError:
                pass
            if key.startswith("params."):
                data.setdefault("params", {})[key[7:]] = val
            elif key.startswith("tolerances."):
                data.setdefault("tolerances", {})[key[11:]] = val
            else:
                data[key] = val
        return cls.from_dict(data)


def clean(obj):
    """Convert numpy scalars/arrays and non-finite floats into plain JSON values."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, complex):
        return {"re": clean(obj.real), "im": clean(obj.imag)}
    return obj


@dataclass
class Check:
    name: str
    value: float
    target: float
    relation: str = "<="
    stderr: float | None = None
    detail: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        try:
            return bool(_RELATIONS[self.relation](self.value, self.target))
        except TypeError:
            return False

    def to_dict(self) -> dict:
        return clean({"name": self.name, "value": self.value, "target": self.target,
                      "relation": self.relation, "stderr": self.stderr,
                      "pass": self.passed, "detail": self.detail})


def flag(name: str, ok: bool, detail: dict | None = None) -> Check:
    """A boolean check recorded as value 1/0 against target 1."""
    return Check(name, 1.0 if ok else 0.0, 1.0, "==", None, detail or {})


@dataclass
class Report:
    command: str
    config: dict
    checks: list = field(default_factory=list)
    data: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return clean({
            "command": self.command,
            "config": self.config,
            "pass": self.passed,
            "checks": [c.to_dict() for c in self.checks],
            "data": self.data,
            "provenance": self.provenance,
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def write(self, path, elapsed: float | None = None) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json())
        if elapsed is not None:
            # wall-clock kept apart so the report itself is reproducible
            side = path.with_name(path.stem + ".timing.json")
            side.write_text(json.dumps({"wall_clock_s": round(elapsed, 3)}) + "\n")
        return path
