"""Box domains, piecewise-constant fields, and the grid neighbour index."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernels import get_kernels

MAX_INDEX_CELLS = 1 << 22


def ball_volume_coeff(d: int) -> float:
    """Volume of the unit ball in R^d."""
    if d == 1:
        return 2.0
    if d == 2:
        return math.pi
    if d == 3:
        return 4.0 * math.pi / 3.0
    raise ValueError(f"unsupported dimension d={d}; expected 1, 2 or 3")


@dataclass(frozen=True)
class BoxDomain:
    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if len(lo) != len(hi):
            raise ValueError("lower and upper must have the same length")
        if not 1 <= len(lo) <= 3:
            raise ValueError(f"dimension must be 1, 2 or 3, got {len(lo)}")
        if not all(math.isfinite(a) and math.isfinite(b) and a < b for a, b in zip(lo, hi)):
            raise ValueError(f"need finite lower < upper on every axis, got {lo} / {hi}")

    @classmethod
    def unit(cls, d: int) -> "BoxDomain":
        return cls((0.0,) * d, (1.0,) * d)

    @property
    def d(self) -> int:
        return len(self.lower)

    @property
    def lo(self) -> np.ndarray:
        return np.array(self.lower)

    @property
    def hi(self) -> np.ndarray:
        return np.array(self.upper)

    @property
    def sides(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return x.shape == (self.d,) and bool(np.all(x >= self.lo) and np.all(x <= self.hi))

    def ball_inside(self, x, r) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x - r >= self.lo) and np.all(x + r <= self.hi))

    def to_dict(self):
        return {"lower": list(self.lower), "upper": list(self.upper)}


class Field:
    """Scalar function on a box, constant or piecewise constant on a uniform grid.

    ``values`` is either a 0-d array (constant) or a d-dimensional array whose
    shape is the per-axis grid resolution; cells are looked up by
    ``floor((x - lower) / h)`` clamped to the last cell on the upper face.
    """

    def __init__(self, domain: BoxDomain, values):
        arr = np.array(values, dtype=float)
        if arr.ndim not in (0, domain.d):
            raise ValueError(f"field values must be scalar or {domain.d}-dimensional, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("field values must be finite")
        arr.setflags(write=False)
        self.domain = domain
        self.values = arr

    @property
    def is_constant(self) -> bool:
        return self.values.ndim == 0

    @property
    def resolution(self) -> tuple:
        return (1,) * self.domain.d if self.is_constant else self.values.shape

    @property
    def cell_widths(self) -> np.ndarray:
        return self.domain.sides / np.array(self.resolution)

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())

    def cell_of(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        res = np.array(self.resolution, dtype=np.int64)
        idx = np.floor((x - self.domain.lo) / self.cell_widths).astype(np.int64)
        np.clip(idx, 0, res - 1, out=idx)
        return np.ravel_multi_index(tuple(idx.T), tuple(res))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = self.flat[self.cell_of(x)]
        return out[0] if x.ndim == 1 else out

    def __eq__(self, other):
        return (isinstance(other, Field) and self.domain == other.domain
                and self.values.shape == other.values.shape
                and bool(np.array_equal(self.values, other.values)))

    def __repr__(self):
        if self.is_constant:
            return f"Field({float(self.values)})"
        return f"Field(resolution={self.resolution})"

    def to_spec(self):
        if self.is_constant:
            return float(self.values)
        return {"resolution": list(self.resolution), "values": self.flat.tolist()}

    @classmethod
    def from_spec(cls, domain, spec) -> "Field":
        if isinstance(spec, dict):
            res = tuple(int(v) for v in spec["resolution"])
            return cls(domain, np.asarray(spec["values"], dtype=float).reshape(res))
        return cls(domain, float(spec))


class RadiusField:
    """Interaction radius R(x); depends on the query point only."""

    def __init__(self, field: Field):
        if field.min() <= 0:
            raise ValueError(f"interaction radius must be positive everywhere, min is {field.min()}")
        self.field = field

    @classmethod
    def constant(cls, domain, r) -> "RadiusField":
        return cls(Field(domain, r))

    @classmethod
    def grid(cls, domain, values) -> "RadiusField":
        return cls(Field(domain, values))

    @property
    def domain(self):
        return self.field.domain

    @property
    def r_min(self) -> float:
        return self.field.min()

    @property
    def r_max(self) -> float:
        return self.field.max()

    def __call__(self, x):
        return self.field(x)

    def __eq__(self, other):
        return isinstance(other, RadiusField) and self.field == other.field

    def to_spec(self):
        if self.field.is_constant:
            return {"kind": "constant", "r": float(self.field.values)}
        return {"kind": "grid", **self.field.to_spec()}


class GridIndex:
    """Uniform cell index over stored points, kept as per-cell linked lists.

    ``head[cell]`` is the most recently inserted point of a cell and
    ``nxt[i]`` the next older point in the same cell (-1 terminates).
    The coordinate buffer lives here as well so the kernels can scan it.
    """

    def __init__(self, domain: BoxDomain, cell_size: float, capacity: int = 16):
        if not cell_size > 0:
            raise ValueError("cell_size must be positive")
        self.domain = domain
        self.lower = domain.lo
        res = np.maximum(np.ceil(domain.sides / cell_size), 1).astype(np.int64)
        while np.prod(res) > MAX_INDEX_CELLS:
            cell_size *= 2.0
            res = np.maximum(np.ceil(domain.sides / cell_size), 1).astype(np.int64)
        self.cell_size = float(cell_size)
        self.res = res
        self.head = np.full(int(np.prod(res)), -1, dtype=np.int64)
        capacity = max(int(capacity), 1)
        self.points = np.empty((capacity, domain.d))
        self.nxt = np.empty(capacity, dtype=np.int64)
        self.count = 0

    @staticmethod
    def default_cell_size(domain: BoxDomain, r_min: float) -> float:
        return min(r_min, float(domain.sides.min()) / 8.0)

    def reserve(self, n: int):
        if n <= self.points.shape[0]:
            return
        cap = max(n, 2 * self.points.shape[0])
        pts = np.empty((cap, self.domain.d))
        pts[: self.count] = self.points[: self.count]
        nxt = np.empty(cap, dtype=np.int64)
        nxt[: self.count] = self.nxt[: self.count]
        self.points, self.nxt = pts, nxt

    def cell_coords(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        idx = np.floor((x - self.lower) / self.cell_size).astype(np.int64)
        return np.clip(idx, 0, self.res - 1)

    def insert(self, x):
        x = np.asarray(x, dtype=float)
        self.reserve(self.count + 1)
        cid = int(np.ravel_multi_index(tuple(self.cell_coords(x)[0]), tuple(self.res)))
        n = self.count
        self.points[n] = x
        self.nxt[n] = self.head[cid]
        self.head[cid] = n
        self.count = n + 1

    def cells(self) -> dict:
        """Map of cell coordinates to stored point indices (oldest first)."""
        out = {}
        for cid in np.flatnonzero(self.head >= 0):
            members = []
            p = self.head[cid]
            while p >= 0:
                members.append(int(p))
                p = self.nxt[p]
            key = tuple(int(v) for v in np.unravel_index(cid, tuple(self.res)))
            out[key] = members[::-1]
        return out

    def count_ball(self, queries, radii, cap: int = -1, limit=None, backend=None):
        """Number of stored points in the closed ball around each query.

        ``cap > 0`` stops counting at ``cap``; ``limit`` restricts to the
        first ``limit`` stored points (a prefix of the sequence).
        """
        q = np.atleast_2d(np.asarray(queries, dtype=float))
        r = np.broadcast_to(np.asarray(radii, dtype=float), (q.shape[0],)).copy()
        lim = self.count if limit is None else min(int(limit), self.count)
        k = get_kernels(backend)
        out = k.count_many(q, r, self.points, lim, self.head, self.nxt,
                           self.lower, self.cell_size, self.res, int(cap))
        return out if np.ndim(queries) > 1 else int(out[0])


def neighbor_count(x, state, radius: RadiusField | None = None, backend=None) -> int:
    """n(x, X): stored points within distance R(x) of x (closed ball).

    ``state`` is a process state, or a bare ``GridIndex`` together with ``radius``.
    """
    x = np.asarray(x, dtype=float)
    if radius is None:
        index, radius = state.index, state.model.radius
    else:
        index = state
    return index.count_ball(x, radius(x), backend=backend)
