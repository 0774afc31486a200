"""Sequential allocation of points: acceptance-rejection, exact discretised
sampling, the joint-density oracle, and birth-process jump times."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DomainViolation, Refusal, SamplerStall
from .geometry import BoxDomain, GridIndex, RadiusField
from .intensity import IntensityFamily, validate_family
from .kernels import get_kernels
from .measure import QuadratureGrid, check_grid_compatible, prefix_integrals

MAX_ATTEMPTS = 10**6
ORACLE_MAX_POINTS = 4
ORACLE_MAX_ENTRIES = 10**6

_MASK = (1 << 64) - 1
_TIME_SALT = 0x5851F42D4C957F2D


def stream_seed(base_seed: int, replicate_id: int) -> int:
    """splitmix64 finaliser over base + (id + 1) * golden gamma.

    Injective in ``replicate_id`` for a fixed base, so replicate streams of
    one ensemble never share a seed.
    """
    z = (int(base_seed) + (int(replicate_id) + 1) * 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def make_rng(base_seed: int, replicate_id: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(stream_seed(base_seed, replicate_id)))


class KernelModel(NamedTuple):
    lower: np.ndarray
    span: np.ndarray
    upper: np.ndarray
    r_h: np.ndarray
    r_res: np.ndarray
    r_vals: np.ndarray
    f_h: np.ndarray
    f_res: np.ndarray
    mode: int
    T: int
    tab: np.ndarray
    beta_lim: np.ndarray
    amp: np.ndarray
    phi_tab: np.ndarray
    beta_max: float
    cap: int


@dataclass(eq=True)
class CSAModel:
    """Domain, interaction radius and intensity family of one CSA process."""

    domain: BoxDomain
    radius: RadiusField
    family: IntensityFamily

    def __post_init__(self):
        if self.radius.domain != self.domain or self.family.domain != self.domain:
            raise ValueError("radius and intensity must be defined on the model domain")

    def violations(self):
        return validate_family(self.family)

    def kernel_model(self, n_max: int) -> KernelModel:
        dom, rad, fam = self.domain, self.radius.field, self.family
        t = fam.kernel_tables(n_max)
        return KernelModel(
            dom.lo, dom.sides, dom.hi,
            rad.cell_widths, np.array(rad.resolution, dtype=np.int64), rad.flat.copy(),
            fam.cell_widths, np.array(fam.resolution, dtype=np.int64),
            int(t.mode), int(t.T), t.tab, t.beta_lim, t.amp, t.phi_tab,
            float(fam.beta_max), int(t.cap))


class ProcessState:
    """The ordered configuration X_1..X_k with its grid index (append-only)."""

    def __init__(self, model: CSAModel, rng_seed: int = 0, replicate_id: int = 0,
                 capacity: int = 16, cell_size: float | None = None):
        self.model = model
        self.rng_seed = int(rng_seed)
        self.replicate_id = int(replicate_id)
        cs = cell_size or GridIndex.default_cell_size(model.domain, model.radius.r_min)
        self.index = GridIndex(model.domain, cs, capacity)
        self._attempts = np.zeros(max(capacity, 1), dtype=np.int64)

    def __len__(self):
        return self.index.count

    @property
    def points(self) -> np.ndarray:
        return self.index.points[: self.index.count]

    @property
    def attempt_counts(self) -> np.ndarray:
        return self._attempts[: self.index.count]

    def reserve(self, n):
        self.index.reserve(n)
        if n > self._attempts.size:
            a = np.zeros(max(n, 2 * self._attempts.size), dtype=np.int64)
            a[: self._attempts.size] = self._attempts
            self._attempts = a

    def insert(self, x, attempts: int = 0):
        x = np.asarray(x, dtype=float)
        if not self.model.domain.contains(x):
            raise DomainViolation(f"point {x.tolist()} lies outside {self.model.domain}")
        self.reserve(len(self) + 1)
        self._attempts[len(self)] = attempts
        self.index.insert(x)
        return self

    def neighbor_count(self, x, backend=None) -> int:
        x = np.asarray(x, dtype=float)
        return self.index.count_ball(x, self.model.radius(x), backend=backend)


def insert_point(state: ProcessState, x) -> ProcessState:
    return state.insert(x)


def _run_ar(state: ProcessState, m_target: int, draw, km: KernelModel,
            max_attempts: int, backend) -> None:
    k = get_kernels(backend)
    idx = state.index
    state.reserve(m_target)
    n, pending = len(state), 0
    while n < m_target:
        U = draw(m_target - n)
        n, _, pending, stalled = k.ar_fill(
            idx.points, n, idx.head, idx.nxt, state._attempts, m_target, U, 0, pending,
            max_attempts, idx.cell_size, idx.res, *km)
        idx.count = n
        if stalled:
            raise SamplerStall(
                f"no acceptance after {max_attempts} proposals at point {n + 1}; "
                f"beta_min/beta_max = {state.model.family.beta_min / state.model.family.beta_max:.3g}")


def next_point_ar(state: ProcessState, rng: np.random.Generator,
                  max_attempts: int = MAX_ATTEMPTS, backend=None):
    """Draw and insert X_{k+1} by acceptance-rejection with uniform proposals.

    A proposal Y is accepted with probability beta_{n(Y, X(k))}(Y) / beta_max.
    Returns the accepted point and the number of proposals used.
    """
    d = state.model.domain.d
    km = state.model.kernel_model(len(state) + 1)
    _run_ar(state, len(state) + 1, lambda _: rng.random((1, d + 1)), km, max_attempts, backend)
    return state.points[-1].copy(), int(state.attempt_counts[-1])


def simulate(model: CSAModel, m: int, seed: int, replicate_id: int = 0,
             max_attempts: int = MAX_ATTEMPTS, backend=None, cell_size=None) -> ProcessState:
    """Allocate m points.  Output is a pure function of (seed, replicate_id)."""
    if m < 0:
        raise ValueError("m must be nonnegative")
    state = ProcessState(model, seed, replicate_id, capacity=max(m, 1), cell_size=cell_size)
    if m == 0:
        return state
    rng = make_rng(seed, replicate_id)
    d = model.domain.d
    ratio = model.family.beta_max / model.family.beta_min if model.family.beta_min > 0 else 8.0

    def draw(remaining):
        # the stream is consumed row by row, so the buffer size never changes the output
        rows = int(min(max(64, 1.2 * ratio * remaining + 16), 1 << 16))
        return rng.random((rows, d + 1))

    _run_ar(state, m, draw, model.kernel_model(m), max_attempts, backend)
    return state


@dataclass
class BirthTrajectory:
    times: np.ndarray   # jump times T_1 < ... < T_m
    rates: np.ndarray   # total birth rate alpha(X(k)) during holding time k


def simulate_birth_process(model: CSAModel, m: int, seed: int, replicate_id: int = 0,
                           grid: QuadratureGrid | None = None, backend=None, **kw):
    """``simulate`` plus continuous-time jump times of the equivalent birth process.

    Holding time k is exponential with rate alpha(X(k)), computed by
    quadrature on ``grid``.  Times come from a separate stream, so the points
    are identical to ``simulate(model, m, seed, replicate_id)``.
    """
    grid = grid or QuadratureGrid(model.domain, model.family.resolution)
    state = simulate(model, m, seed, replicate_id, backend=backend, **kw)
    alpha = prefix_integrals(model, state.points, grid, np.ones(grid.n_cells), backend=backend)[:m, 0]
    trng = np.random.Generator(np.random.PCG64(stream_seed(seed ^ _TIME_SALT, replicate_id)))
    times = np.cumsum(trng.standard_exponential(m) / alpha)
    return state, BirthTrajectory(times, alpha)


# discretised model ---------------------------------------------------------
#
# Every field is read at cell centres and so is n(., .): a stored point counts
# for centre c when its own cell centre lies within R(c) of c.  The model is
# then a finite chain on cells (uniform inside the chosen cell) and its
# tuple masses are computed exactly.

class _CellModel(NamedTuple):
    fcell: np.ndarray   # family cell of each quadrature centre
    incl: np.ndarray    # incl[c, j]: centre j is within R(c) of centre c


_cell_cache: dict = {}


def _cell_model(model: CSAModel, grid: QuadratureGrid) -> _CellModel:
    key = (id(model), id(grid))
    hit = _cell_cache.get(key)
    if hit is not None and hit[0] is model and hit[1] is grid:
        return hit[2]
    check_grid_compatible(grid, model)
    c = grid.centers
    r = np.asarray(model.radius(c), dtype=float)
    d2 = np.zeros((c.shape[0], c.shape[0]))
    for i in range(c.shape[1]):
        t = c[None, :, i] - c[:, i, None]
        d2 += t * t
    cm = _CellModel(model.family.cell_of(c), d2 <= (r * r)[:, None])
    if len(_cell_cache) > 32:
        _cell_cache.clear()
    _cell_cache[key] = (model, grid, cm)
    return cm


def exact_cell_weights(model: CSAModel, grid: QuadratureGrid, prefix_cells) -> np.ndarray:
    """beta_{n(c, prefix)}(c) * cell_volume for every cell c of the discretised model."""
    cm = _cell_model(model, grid)
    counts = cm.incl[:, np.asarray(prefix_cells, dtype=np.int64)].sum(axis=1)
    return model.family.beta_by_cell(counts, cm.fcell) * grid.cell_volume


def next_point_exact(state: ProcessState, rng: np.random.Generator, grid: QuadratureGrid):
    """Draw and insert the next point of the discretised model by inverse CDF."""
    w = exact_cell_weights(state.model, grid, grid.cell_of(state.points) if len(state) else [])
    cdf = np.cumsum(w)
    cell = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    cell = min(cell, grid.n_cells - 1)
    lo = grid.cell_lower(cell)
    x = np.minimum(lo + rng.random(grid.domain.d) * grid.widths, state.model.domain.hi)
    state.insert(x, attempts=1)
    return x


def oracle_mass_table(model: CSAModel, grid: QuadratureGrid, m: int) -> np.ndarray:
    """P(X_1 in c_1, ..., X_m in c_m) for the discretised model, shape (cells,) * m."""
    if not 1 <= m <= ORACLE_MAX_POINTS:
        raise Refusal(f"oracle supports 1..{ORACLE_MAX_POINTS} points, got {m}")
    G = grid.n_cells
    if G ** m > ORACLE_MAX_ENTRIES:
        raise Refusal(f"tuple table would have {G ** m} entries (limit {ORACLE_MAX_ENTRIES})")
    cm = _cell_model(model, grid)
    add = cm.incl.T.astype(np.int64)          # add[j] = counts contributed by a point in cell j
    counts = np.zeros((1, G), dtype=np.int64)
    mass = np.ones(1)
    for k in range(m):
        w = model.family.beta_by_cell(counts, cm.fcell[None, :])
        mass = (mass[:, None] * (w / w.sum(axis=1, keepdims=True))).reshape(-1)
        if k + 1 < m:
            counts = (counts[:, None, :] + add[None, :, :]).reshape(-1, G)
    return mass.reshape((G,) * m)


def joint_density_oracle(points, model: CSAModel, grid: QuadratureGrid) -> float:
    """Joint density p_m(x_1..x_m) of the discretised model, by direct product."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    m = pts.shape[0]
    if m > ORACLE_MAX_POINTS:
        raise Refusal(f"oracle supports at most {ORACLE_MAX_POINTS} points, got {m}")
    for x in pts:
        if not model.domain.contains(x):
            raise DomainViolation(f"point {x.tolist()} lies outside {model.domain}")
    cells = grid.cell_of(pts)
    dens = 1.0
    for k in range(m):
        w = exact_cell_weights(model, grid, cells[:k])
        dens *= (w[cells[k]] / grid.cell_volume) / w.sum()
    return float(dens)


def coarsen_mass(table: np.ndarray, fine: QuadratureGrid, coarse: QuadratureGrid) -> np.ndarray:
    """Sum a fine-grid tuple table into the cells of a coarser aligned grid."""
    if not fine.refines(coarse.resolution):
        raise ValueError(f"{fine.resolution} does not refine {coarse.resolution}")
    m = table.ndim
    d = fine.domain.d
    shape = []
    for _ in range(m):
        for i in range(d):
            shape += [coarse.resolution[i], fine.resolution[i] // coarse.resolution[i]]
    t = table.reshape(shape)
    t = t.sum(axis=tuple(range(1, 2 * m * d, 2)))
    return t.reshape((coarse.n_cells,) * m)
