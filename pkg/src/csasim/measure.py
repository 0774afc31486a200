"""Midpoint quadrature on the box and the functionals built on it.

Everything is evaluated at cell centres, which makes the quadrature exact
for integrands that are piecewise constant on the grid (or on any coarser
grid it refines).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, Refusal
from .geometry import BoxDomain
from .kernels import get_kernels

MAX_MOMENT_ORDER = 6
MIN_CUMULANT_SAMPLES = 30


class QuadratureGrid:
    """Uniform grid of ``resolution[i]`` cells along axis ``i`` of ``domain``."""

    def __init__(self, domain: BoxDomain, resolution):
        res = tuple(int(r) for r in np.broadcast_to(np.atleast_1d(resolution), (domain.d,)))
        if min(res) < 1:
            raise ValueError(f"resolution must be positive, got {res}")
        self.domain = domain
        self.resolution = res
        self.widths = domain.sides / np.array(res)
        self.cell_volume = float(np.prod(self.widths))
        self.n_cells = int(np.prod(res))
        axes = [domain.lo[i] + (np.arange(res[i]) + 0.5) * self.widths[i] for i in range(domain.d)]
        mesh = np.meshgrid(*axes, indexing="ij")
        self.centers = np.stack([g.reshape(-1) for g in mesh], axis=1)

    def __repr__(self):
        return f"QuadratureGrid({self.domain.lower}..{self.domain.upper}, res={self.resolution})"

    def cell_of(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        res = np.array(self.resolution)
        idx = np.floor((x - self.domain.lo) / self.widths).astype(np.int64)
        np.clip(idx, 0, res - 1, out=idx)
        return np.ravel_multi_index(tuple(idx.T), self.resolution)

    def cell_lower(self, cells) -> np.ndarray:
        idx = np.stack(np.unravel_index(np.asarray(cells), self.resolution), axis=-1)
        return self.domain.lo + idx * self.widths

    def refines(self, resolution) -> bool:
        """True when every cell of a ``resolution`` grid is a union of our cells."""
        return all(r % s == 0 for r, s in zip(self.resolution, resolution))

    def integrate(self, values) -> float:
        return float(np.sum(values) * self.cell_volume)


# test functions -----------------------------------------------------------

@dataclass(frozen=True)
class TestFunction:
    """Bounded test function f on D.

    kinds: ``indicator_box`` (closed box), ``monomial`` (prod x_i^e_i),
    ``cosine`` (cos(2 pi w.x)), ``constant``.
    """

    __test__ = False  # keep pytest from collecting this class

    kind: str
    params: dict = field(default_factory=dict)

    @classmethod
    def indicator_box(cls, lower, upper):
        return cls("indicator_box", {"lower": [float(v) for v in np.atleast_1d(lower)],
                                     "upper": [float(v) for v in np.atleast_1d(upper)]})

    @classmethod
    def monomial(cls, exponents):
        return cls("monomial", {"exponents": [int(e) for e in np.atleast_1d(exponents)]})

    @classmethod
    def cosine(cls, frequency):
        return cls("cosine", {"frequency": [float(v) for v in np.atleast_1d(frequency)]})

    @classmethod
    def constant(cls, c):
        return cls("constant", {"c": float(c)})

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        pts = np.atleast_2d(x)
        p = self.params
        if self.kind == "indicator_box":
            out = np.all((pts >= p["lower"]) & (pts <= p["upper"]), axis=1).astype(float)
        elif self.kind == "monomial":
            out = np.prod(pts ** np.array(p["exponents"]), axis=1)
        elif self.kind == "cosine":
            out = np.cos(2.0 * math.pi * (pts @ np.array(p["frequency"])))
        elif self.kind == "constant":
            out = np.full(pts.shape[0], p["c"])
        else:
            raise ValueError(f"unknown test function kind {self.kind!r}")
        return float(out[0]) if x.ndim == 1 else out

    def sup_norm(self, domain: BoxDomain) -> float:
        """Exact sup of |f| over ``domain``."""
        p = self.params
        lo, hi = domain.lo, domain.hi
        if self.kind == "indicator_box":
            inter = np.all(np.maximum(lo, p["lower"]) <= np.minimum(hi, p["upper"]))
            return 1.0 if inter else 0.0
        if self.kind == "monomial":
            e = np.array(p["exponents"])
            return float(np.prod(np.maximum(np.abs(lo), np.abs(hi)) ** e))
        if self.kind == "cosine":
            w = np.array(p["frequency"])
            a = float(np.sum(np.minimum(w * lo, w * hi)))
            b = float(np.sum(np.maximum(w * lo, w * hi)))
            # |cos(2 pi t)| peaks at t = k/2 and is monotone in between
            if math.floor(2 * b) >= math.ceil(2 * a):
                return 1.0
            return max(abs(math.cos(2 * math.pi * a)), abs(math.cos(2 * math.pi * b)))
        return abs(p["c"])

    def to_spec(self):
        return {"kind": self.kind, **self.params}

    @classmethod
    def from_spec(cls, spec):
        spec = dict(spec)
        kind = spec.pop("kind", None)
        makers = {"indicator_box": lambda s: cls.indicator_box(s["lower"], s["upper"]),
                  "monomial": lambda s: cls.monomial(s["exponents"]),
                  "cosine": lambda s: cls.cosine(s["frequency"]),
                  "constant": lambda s: cls.constant(s["c"])}
        if kind not in makers:
            raise ValueError(f"unknown test function kind {kind!r}")
        return makers[kind](spec)


# quadrature functionals ---------------------------------------------------

def _limit_at_centers(family, grid):
    return family.beta_limit(grid.centers)


def quad_alpha(family, grid: QuadratureGrid, counts=None) -> float:
    """Integral of beta_{counts(c)}(c) over D, or of the limit when ``counts`` is None."""
    if counts is None:
        return grid.integrate(_limit_at_centers(family, grid))
    return grid.integrate(family.beta_by_cell(np.asarray(counts), family.cell_of(grid.centers)))


def _weighted_limit_mean(values, family, grid):
    beta = _limit_at_centers(family, grid)
    return float(np.sum(values * beta) * grid.cell_volume / quad_alpha(family, grid))


def compute_J(f: TestFunction, family, grid: QuadratureGrid) -> float:
    """Limit mean of f under the density beta / alpha."""
    return _weighted_limit_mean(f(grid.centers), family, grid)


def compute_G(f: TestFunction, g: TestFunction, family, grid: QuadratureGrid) -> float:
    """Limit covariance kernel J(fg) - J(f) J(g)."""
    fv, gv = f(grid.centers), g(grid.centers)
    return (_weighted_limit_mean(fv * gv, family, grid)
            - _weighted_limit_mean(fv, family, grid) * _weighted_limit_mean(gv, family, grid))


def compute_Un(f: TestFunction, n: int, family, grid: QuadratureGrid) -> float:
    """n-th central moment of f(Y), Y ~ beta/alpha, via the binomial expansion in J(f^i)."""
    if not 1 <= n <= MAX_MOMENT_ORDER:
        raise Refusal(f"central moment order must be in 1..{MAX_MOMENT_ORDER}, got {n}")
    fv = f(grid.centers)
    J = [1.0] + [_weighted_limit_mean(fv ** i, family, grid) for i in range(1, n + 1)]
    return float(sum((-1) ** (n - i) * math.comb(n, i) * J[i] * J[1] ** (n - i)
                     for i in range(n + 1)))


# prefix-dependent quantities ----------------------------------------------

def prefix_integrals_at(model, points, queries, weights, backend=None) -> np.ndarray:
    """Row k holds sum_q beta_{n(q, X(k))}(q) * weights[q] for k = 0..m.

    Counts at each query q are taken against the first k points with the
    radius R(q) of the query.
    """
    d = model.domain.d
    points = np.asarray(points, dtype=float).reshape(-1, d)
    queries = np.ascontiguousarray(np.asarray(queries, dtype=float).reshape(-1, d))
    w = np.asarray(weights, dtype=float)
    if w.ndim == 1:
        w = w[:, None]
    t = model.family.kernel_tables(points.shape[0])
    qcell = model.family.cell_of(queries)
    radii = np.asarray(model.radius(queries), dtype=float).reshape(-1)
    k = get_kernels(backend)
    return k.prefix_sums(np.ascontiguousarray(points), queries, radii, qcell,
                         np.ascontiguousarray(w), t.mode, t.T, t.tab, t.beta_lim, t.amp, t.phi_tab)


def prefix_integrals(model, points, grid: QuadratureGrid, weights, backend=None) -> np.ndarray:
    """``prefix_integrals_at`` over the cell centres of ``grid``, times the cell volume."""
    return prefix_integrals_at(model, points, grid.centers, weights, backend) * grid.cell_volume


DEFAULT_CELLS_PER_AXIS = {1: 1000, 2: 200, 3: 40}


def default_grid(model, per_axis=None) -> QuadratureGrid:
    """Grid with about ``per_axis`` cells per axis that refines every model field."""
    d = model.domain.d
    target = per_axis or DEFAULT_CELLS_PER_AXIS[d]
    res = []
    for i in range(d):
        base = math.lcm(model.family.resolution[i], model.radius.field.resolution[i])
        res.append(base * max(1, round(target / base)))
    return QuadratureGrid(model.domain, res)


def center_counts(state, grid: QuadratureGrid, cap=-1, limit=None, backend=None) -> np.ndarray:
    """n(c, X) at every cell centre c of ``grid`` (optionally a prefix of X)."""
    radii = np.asarray(state.model.radius(grid.centers), dtype=float)
    return state.index.count_ball(grid.centers, radii, cap=cap, limit=limit, backend=backend)


def conditional_mean_Jk(f: TestFunction, state_prefix, grid: QuadratureGrid, backend=None) -> float:
    """E(f(X_k) | X_1..X_{k-1}) by quadrature, given the prefix X_1..X_{k-1}."""
    fam = state_prefix.model.family
    t = fam.kernel_tables(len(state_prefix))
    counts = center_counts(state_prefix, grid, cap=t.cap, backend=backend)
    beta = fam.beta_by_cell(counts, fam.cell_of(grid.centers))
    return float(np.sum(f(grid.centers) * beta) / np.sum(beta))


def conditional_means(f: TestFunction, state, grid: QuadratureGrid, backend=None) -> np.ndarray:
    """J_k(f) for k = 1..m along one trajectory (index k-1 in the result)."""
    fv = f(grid.centers)
    sums = prefix_integrals(state.model, state.points, grid, np.stack([fv, np.ones_like(fv)], 1),
                            backend=backend)
    return sums[:-1, 0] / sums[:-1, 1]


def centered_scaled_sum(f: TestFunction, state, mean_reference) -> float:
    """(1/sqrt(m)) * sum_k (f(X_k) - mean_reference[k])."""
    vals = np.atleast_1d(f(state.points)) if len(state) else np.zeros(0)
    ref = np.asarray(mean_reference, dtype=float)
    if ref.shape != vals.shape:
        raise ValueError(f"mean_reference has {ref.size} entries for {vals.size} points")
    if vals.size == 0:
        raise ValueError("centered sum needs at least one point")
    return float(np.sum(vals - ref) / math.sqrt(vals.size))


class BallCount(NamedTuple):
    count: int
    radius: float
    clipped: bool   # shrunken ball leaves D; the Poisson limit assumes it does not


def ball_count(state, x, r: float) -> BallCount:
    """Points of the state within distance r * m^(-1/d) of x (closed ball)."""
    m = len(state)
    if m < 1:
        raise ValueError("ball_count needs at least one point")
    dom = state.model.domain
    rho = r * m ** (-1.0 / dom.d)
    x = np.asarray(x, dtype=float)
    d2 = np.sum((state.points - x) ** 2, axis=1)
    return BallCount(int(np.count_nonzero(d2 <= rho * rho)), rho, not dom.ball_inside(x, rho))


# sample statistics --------------------------------------------------------

def central_moments(values, max_order=MAX_MOMENT_ORDER) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    c = v - v.mean()
    return np.array([np.mean(c ** k) for k in range(1, max_order + 1)])


def cumulant_estimate(samples, order: int) -> float:
    """Plug-in cumulant from central moments (no small-sample correction)."""
    v = np.asarray(samples, dtype=float)
    if v.size < MIN_CUMULANT_SAMPLES:
        raise Refusal(f"need at least {MIN_CUMULANT_SAMPLES} samples, got {v.size}")
    if order not in (2, 3, 4):
        raise ValueError(f"cumulant order must be 2, 3 or 4, got {order}")
    m = central_moments(v, 4)
    if order == 2:
        return float(m[1])
    if order == 3:
        return float(m[2])
    return float(m[3] - 3.0 * m[1] ** 2)


@dataclass
class SampleStatistics:
    values: np.ndarray
    mean: float
    variance: float
    central_moments: np.ndarray
    k2: float
    k3: float
    k4: float

    @classmethod
    def from_values(cls, values) -> "SampleStatistics":
        v = np.asarray(values, dtype=float)
        if v.size == 0:
            raise ValueError("no samples")
        cm = central_moments(v)
        return cls(v, float(v.mean()), float(cm[1]), cm,
                   float(cm[1]), float(cm[2]), float(cm[3] - 3.0 * cm[1] ** 2))


def check_grid_compatible(grid: QuadratureGrid, model):
    """Raise unless the grid refines both the intensity and the radius grids."""
    problems = []
    if not grid.refines(model.family.resolution):
        problems.append(f"grid {grid.resolution} does not refine intensity grid {model.family.resolution}")
    if not grid.refines(model.radius.field.resolution):
        problems.append(f"grid {grid.resolution} does not refine radius grid {model.radius.field.resolution}")
    if problems:
        raise ConfigError("; ".join(problems), problems)
