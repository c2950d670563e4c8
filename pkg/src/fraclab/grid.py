"""Piecewise-constant grid functions on [-L, L]^n with an exterior model.

A :class:`GridFunction` stores one value per cell of a uniform grid and
declares how it continues outside the box.  Four exterior models exist:

``zero``
    the function vanishes outside the box (members of X_0);
``constant``
    a constant value outside the box;
``closure``
    a vectorized callable ``g(points) -> values``, with ``far_value`` used
    by the discrete solver beyond the extended radius ``L_ext``;
``sampled``
    an outer grid function on [-L_ext, L_ext]^n (same spacing) supplying
    values in the annulus between the two boxes; zero beyond.

The ``.gf`` file format is a short ASCII header followed by raw
little-endian float64 cell values in row-major (C) order::

    FRACLAB-GRIDFUNCTION 1
    n 2
    L 1.0
    N 64
    h 0.03125
    exterior zero | constant <c> | closure <far_value> | sampled <L_ext> <N_ext>
    dtype <f8
    order C
    END
    <N**n float64 values>
    [<N_ext**n float64 values of the outer grid, sampled exterior only>]

Closures cannot be serialized; they are written with their far value and
read back as ``undeclared``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .geometry import cell_centers

EXTERIOR_KINDS = ("zero", "constant", "closure", "sampled", "undeclared")


class ExteriorError(ValueError):
    """Raised when a value outside the box is needed but no model exists."""


@dataclass(frozen=True)
class Exterior:
    kind: str = "zero"
    value: float = 0.0
    func: Optional[Callable] = None
    outer: Optional["GridFunction"] = None

    def __post_init__(self):
        if self.kind not in EXTERIOR_KINDS:
            raise ValueError(f"unknown exterior model {self.kind!r}")
        if self.kind == "closure" and self.func is None:
            raise ValueError("closure exterior needs a callable")
        if self.kind == "sampled" and self.outer is None:
            raise ValueError("sampled exterior needs an outer grid")

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def constant(cls, c: float):
        return cls("constant", value=float(c))

    @classmethod
    def closure(cls, g: Callable, far_value: float = 0.0):
        return cls("closure", value=float(far_value), func=g)

    @classmethod
    def sampled(cls, outer: "GridFunction"):
        return cls("sampled", outer=outer)

    @property
    def far_value(self) -> float:
        """Value assumed infinitely far away."""
        if self.kind in ("constant", "closure"):
            return self.value
        return 0.0

    def tag(self) -> str:
        if self.kind == "constant":
            return f"constant {self.value!r}"
        if self.kind == "closure":
            return f"closure {self.value!r}"
        if self.kind == "sampled":
            return f"sampled {self.outer.L!r} {self.outer.N}"
        return self.kind


@dataclass
class GridFunction:
    """Cell values on the box [-L, L]^n plus an exterior model.

    ``values`` has shape ``(N,) * n``; axis d runs along coordinate d.
    """

    values: np.ndarray
    L: float
    exterior: Exterior = field(default_factory=Exterior.zero)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        shape = self.values.shape
        if len(shape) == 0 or len(set(shape)) != 1:
            raise ValueError(f"values must be a cube array, got shape {shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid values must be finite")
        if self.L <= 0:
            raise ValueError("L must be positive")

    @property
    def n(self) -> int:
        return self.values.ndim

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def cell_measure(self) -> float:
        return self.h**self.n

    def centers(self) -> np.ndarray:
        return cell_centers(self.n, self.N, self.L)

    @classmethod
    def from_function(cls, f: Callable, n: int, N: int, L: float, exterior=None):
        """Sample a vectorized callable at cell centres."""
        vals = f(cell_centers(n, N, L))
        return cls(np.broadcast_to(vals, (N,) * n).copy(), L, exterior or Exterior.zero())

    def with_values(self, values) -> "GridFunction":
        return GridFunction(np.asarray(values, float), self.L, self.exterior)

    def with_exterior(self, exterior: Exterior) -> "GridFunction":
        return GridFunction(self.values, self.L, exterior)

    def __call__(self, x) -> np.ndarray:
        return self.evaluate(x)

    def evaluate(self, x) -> np.ndarray:
        """Evaluate at points ``x`` of shape (..., n); exterior model outside the box."""
        x = np.asarray(x, dtype=float)
        if self.n == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        pts = x.reshape(-1, self.n)
        idx = np.floor((pts + self.L) / self.h).astype(np.int64)
        inside = np.all((idx >= 0) & (idx < self.N), axis=1)
        out = np.empty(len(pts))
        if inside.any():
            out[inside] = self.values[tuple(idx[inside].T)]
        if (~inside).any():
            out[~inside] = self.exterior_values(pts[~inside])
        return out.reshape(x.shape[:-1])

    def exterior_values(self, pts) -> np.ndarray:
        ext = self.exterior
        pts = np.asarray(pts, dtype=float)
        if ext.kind == "zero":
            return np.zeros(len(pts))
        if ext.kind == "constant":
            return np.full(len(pts), ext.value)
        if ext.kind == "closure":
            return np.broadcast_to(np.asarray(ext.func(pts), float), (len(pts),)).copy()
        if ext.kind == "sampled":
            outer = ext.outer
            idx = np.floor((pts + outer.L) / outer.h).astype(np.int64)
            ok = np.all((idx >= 0) & (idx < outer.N), axis=1)
            out = np.zeros(len(pts))
            out[ok] = outer.values[tuple(idx[ok].T)]
            return out
        raise ExteriorError("evaluation outside the box without an exterior model")

    def extended(self, factor: int) -> "GridFunction":
        """Resample onto the box [-factor*L, factor*L]^n with the same spacing.

        Inner cells keep their values; outer cells take the exterior model at
        their centres.
        """
        if factor < 1 or int(factor) != factor:
            raise ValueError("factor must be a positive integer")
        factor = int(factor)
        Ne = self.N * factor
        Le = self.L * factor
        c = cell_centers(self.n, Ne, Le).reshape(-1, self.n)
        vals = self.exterior_values(c).reshape((Ne,) * self.n) if self.exterior.kind != "zero" \
            else np.zeros((Ne,) * self.n)
        off = (Ne - self.N) // 2
        sl = tuple(slice(off, off + self.N) for _ in range(self.n))
        vals[sl] = self.values
        return GridFunction(vals, Le, self.exterior)

    # ---- serialization -------------------------------------------------
    def header(self) -> str:
        lines = [
            "FRACLAB-GRIDFUNCTION 1",
            f"n {self.n}",
            f"L {self.L!r}",
            f"N {self.N}",
            f"h {self.h!r}",
            f"exterior {self.exterior.tag()}",
            "dtype <f8",
            "order C",
            "END",
        ]
        return "\n".join(lines) + "\n"

    def to_bytes(self) -> bytes:
        data = self.header().encode("ascii") + self.values.astype("<f8").tobytes(order="C")
        if self.exterior.kind == "sampled":
            data += self.exterior.outer.values.astype("<f8").tobytes(order="C")
        return data

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.to_bytes())
        return path

    @classmethod
    def from_bytes(cls, data: bytes) -> "GridFunction":
        end = data.find(b"END\n")
        if not data.startswith(b"FRACLAB-GRIDFUNCTION") or end < 0:
            raise ValueError("not a grid-function file")
        head = data[:end].decode("ascii").splitlines()
        meta = {}
        for line in head[1:]:
            key, _, rest = line.partition(" ")
            meta[key] = rest
        n, N, L = int(meta["n"]), int(meta["N"]), float(meta["L"])
        if meta.get("dtype", "<f8") != "<f8" or meta.get("order", "C") != "C":
            raise ValueError("unsupported dtype/order")
        body = data[end + 4:]
        count = N**n
        vals = np.frombuffer(body[: 8 * count], dtype="<f8").reshape((N,) * n).copy()
        ext_tag = meta.get("exterior", "zero").split()
        kind = ext_tag[0]
        if kind == "zero":
            ext = Exterior.zero()
        elif kind == "constant":
            ext = Exterior.constant(float(ext_tag[1]))
        elif kind == "closure":
            ext = Exterior("undeclared", value=float(ext_tag[1]))
        elif kind == "sampled":
            Le, Ne = float(ext_tag[1]), int(ext_tag[2])
            ov = np.frombuffer(body[8 * count: 8 * (count + Ne**n)], dtype="<f8")
            ext = Exterior.sampled(GridFunction(ov.reshape((Ne,) * n).copy(), Le))
        else:
            ext = Exterior("undeclared")
        return cls(vals, L, ext)

    @classmethod
    def load(cls, path) -> "GridFunction":
        return cls.from_bytes(Path(path).read_bytes())
