"""Report records shared by all checks, with JSON-safe serialization."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, is_dataclass
from typing import Any

import numpy as np


def jsonable(obj: Any) -> Any:
    """Convert numpy scalars/arrays and non-finite floats into JSON-safe values."""
    if is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: jsonable(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


@dataclass
class InequalityReport:
    """Outcome of checking ``lhs <= rhs`` (or a fitted-constant statement).

    ``tolerance`` is the slack the comparison was judged with; ``constants``
    holds fitted or analytic constants; ``details`` carries per-sample data.
    """

    name: str
    lhs: float
    rhs: float
    passed: bool
    tolerance: float
    constants: dict = field(default_factory=dict)
    samples: int = 0
    details: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def ratio(self) -> float:
        if self.rhs == 0:
            return 0.0 if self.lhs == 0 else math.inf
        return self.lhs / self.rhs

    def to_dict(self) -> dict:
        d = jsonable(self)
        d["kind"] = "inequality"
        return d


@dataclass
class HarnackReport:
    name: str
    center: Any
    radius: Any
    sup: Any
    l2_average: Any
    ratio: Any
    passed: bool
    tolerance: float
    xi_factor: Any = None
    epsilon: float | None = None
    C: float | None = None
    residual: float | None = None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = jsonable(self)
        d["kind"] = "harnack"
        return d


@dataclass
class WeakNormReport:
    function_id: str
    p: float
    quasinorm: float
    attained_at: float
    gammas_used: int
    tolerance: float = 0.0

    def to_dict(self) -> dict:
        d = jsonable(self)
        d["kind"] = "weak-norm"
        return d
