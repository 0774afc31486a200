"""Count-indexed intensity families beta_n(x) with their limits and rates."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .geometry import BoxDomain, Field

KINDS = ("constant", "limit_plus_exp", "limit_plus_poly", "finite_perturbation")

# largest saturation row searched when tabulating exponential families
TABLE_MAX = 4096
N_CHECK = 1000


class KernelTables(NamedTuple):
    mode: int          # 0: saturating table, 1: limit * (1 + amp * phi[n])
    T: int             # table row used for every count >= T
    tab: np.ndarray    # (T + 1, cells)
    beta_lim: np.ndarray
    amp: np.ndarray
    phi_tab: np.ndarray
    cap: int           # counting cap: T in mode 0 (0 disables counting), -1 in mode 1


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    hypothesis: str
    location: dict | None = None

    def __str__(self):
        loc = f" at {self.location}" if self.location else ""
        return f"{self.code}: {self.message}{loc}"


class IntensityFamily:
    """A sequence beta_0, beta_1, ... of positive bounded fields and its limit.

    Use the named constructors.  All non-constant fields of one family must
    share a grid resolution; that grid is the family's cell grid.
    """

    def __init__(self, kind, domain: BoxDomain, beta_limit: Field, a: Field | None = None,
                 gamma=None, q=None, overrides=()):
        if kind not in KINDS:
            raise ValueError(f"unknown intensity kind {kind!r}")
        self.kind = kind
        self.domain = domain
        self.beta_limit_field = beta_limit
        self.a_field = a
        self.gamma = None if gamma is None else float(gamma)
        self.q = None if q is None else float(q)
        self.overrides = tuple(overrides)
        fields = [beta_limit] + ([a] if a is not None else []) + list(self.overrides)
        shapes = {f.resolution for f in fields if not f.is_constant}
        if len(shapes) > 1:
            raise ValueError(f"fields of one family must share a resolution, got {sorted(shapes)}")
        self.resolution = shapes.pop() if shapes else (1,) * domain.d
        self.n_cells = int(np.prod(self.resolution))
        self._lim = self._cells(beta_limit)
        self._amp = self._cells(a) if a is not None else np.zeros(self.n_cells)
        self._over = (np.stack([self._cells(f) for f in self.overrides])
                      if self.overrides else np.zeros((0, self.n_cells)))
        self._tables = None

    # constructors ------------------------------------------------------

    @classmethod
    def constant(cls, domain, beta):
        return cls("constant", domain, _as_field(domain, beta))

    @classmethod
    def limit_plus_exp(cls, domain, beta_limit, a, gamma):
        return cls("limit_plus_exp", domain, _as_field(domain, beta_limit),
                   a=_as_field(domain, a), gamma=gamma)

    @classmethod
    def limit_plus_poly(cls, domain, beta_limit, a, q):
        return cls("limit_plus_poly", domain, _as_field(domain, beta_limit),
                   a=_as_field(domain, a), q=q)

    @classmethod
    def finite_perturbation(cls, domain, beta_limit, overrides):
        return cls("finite_perturbation", domain, _as_field(domain, beta_limit),
                   overrides=[_as_field(domain, f) for f in overrides])

    # evaluation ----------------------------------------------------------

    def _cells(self, field: Field) -> np.ndarray:
        if field.is_constant:
            return np.full(self.n_cells, float(field.values))
        return field.flat.copy()

    @property
    def cell_widths(self):
        return self.domain.sides / np.array(self.resolution)

    def cell_of(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        res = np.array(self.resolution, dtype=np.int64)
        idx = np.floor((x - self.domain.lo) / self.cell_widths).astype(np.int64)
        np.clip(idx, 0, res - 1, out=idx)
        return np.ravel_multi_index(tuple(idx.T), tuple(res))

    def beta_by_cell(self, n, cell):
        """beta_n at family cell ``cell``; broadcasts over ``n`` and ``cell``."""
        n = np.asarray(n)
        cell = np.asarray(cell)
        lim = self._lim[cell]
        if self.kind == "constant":
            return np.broadcast_to(lim, np.broadcast_shapes(n.shape, cell.shape)).copy()
        if self.kind == "finite_perturbation":
            n0 = len(self.overrides)
            if n0 == 0:
                return np.broadcast_to(lim, np.broadcast_shapes(n.shape, cell.shape)).copy()
            over = self._over[np.minimum(n, n0 - 1), cell]
            return np.where(n < n0, over, lim)
        phi = self.phi_rate(n)
        return lim * (1.0 + self._amp[cell] * phi)

    def beta_n(self, x, n):
        x = np.asarray(x, dtype=float)
        out = self.beta_by_cell(n, self.cell_of(x))
        return float(out[0]) if x.ndim == 1 and np.ndim(n) == 0 else out

    def beta_limit(self, x):
        x = np.asarray(x, dtype=float)
        out = self._lim[self.cell_of(x)]
        return float(out[0]) if x.ndim == 1 else out

    def phi_rate(self, s):
        """Convergence rate phi(s): |beta_n - beta| <= tau_sup * phi(n)."""
        s = np.asarray(s, dtype=float)
        if self.kind == "constant":
            out = np.zeros_like(s)
        elif self.kind == "limit_plus_exp":
            out = np.exp(-self.gamma * s)
        elif self.kind == "limit_plus_poly":
            out = (1.0 + s) ** (-self.q)
        else:
            out = np.where(s < len(self.overrides), 1.0, 0.0)
        return float(out) if out.ndim == 0 else out

    # bounds --------------------------------------------------------------

    def _extreme_rows(self):
        rows = [self._lim]
        if self.kind in ("limit_plus_exp", "limit_plus_poly"):
            # phi(0) = 1 and phi decreases to 0, so beta_n sits between these two
            rows.append(self._lim * (1.0 + self._amp))
        elif self.kind == "finite_perturbation":
            rows.extend(self._over)
        return np.stack(rows)

    @property
    def beta_min(self) -> float:
        return float(self._extreme_rows().min())

    @property
    def beta_max(self) -> float:
        return float(self._extreme_rows().max())

    @property
    def tau_sup(self) -> float:
        if self.kind in ("limit_plus_exp", "limit_plus_poly"):
            return float(np.max(np.abs(self._lim * self._amp)))
        if self.kind == "finite_perturbation" and self.overrides:
            return float(np.max(np.abs(self._over - self._lim)))
        return 0.0

    @property
    def count_independent(self) -> bool:
        """True when beta_n does not depend on n (the binomial case)."""
        t = self.kernel_tables(0)
        return t.mode == 0 and t.T == 0

    @property
    def exponential_rate(self) -> bool:
        """Rate bounded by C * exp(-gamma * n) for some gamma > 0."""
        return self.kind != "limit_plus_poly" or self.count_independent

    # kernel encoding -----------------------------------------------------

    def kernel_tables(self, n_max: int) -> KernelTables:
        """Arrays the kernels use to evaluate beta_n for counts 0..n_max."""
        if self._tables is None:
            self._tables = self._saturating_table()
        if self._tables:
            T, tab = self._tables
            return KernelTables(0, T, tab, self._lim, self._amp, np.zeros(1), T)
        phi = np.asarray(self.phi_rate(np.arange(max(n_max, 0) + 1)), dtype=float)
        return KernelTables(1, 0, self._lim[None, :].copy(), self._lim, self._amp, phi, -1)

    def _saturating_table(self):
        if self.kind == "constant":
            return 0, self._lim[None, :].copy()
        if self.kind == "finite_perturbation":
            return len(self.overrides), np.vstack([self._over, self._lim[None, :]])
        if self.kind == "limit_plus_poly" and not np.any(self._amp):
            return 0, self._lim[None, :].copy()
        if self.kind == "limit_plus_poly":
            return ()
        cells = np.arange(self.n_cells)
        rows = []
        for start in range(0, TABLE_MAX + 1, 64):
            n = np.arange(start, min(start + 64, TABLE_MAX + 1))
            block = self.beta_by_cell(n[:, None], cells[None, :])
            same = np.all(block == self._lim[None, :], axis=1)
            if same.any():
                # 1 + a*exp(-g n) rounds to 1 from here on, so the row is exact forever
                T = start + int(np.argmax(same))
                rows.append(block[: T - start + 1])
                return T, np.vstack(rows)
            rows.append(block)
        return ()

    # serialisation -------------------------------------------------------

    def to_spec(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "beta": self.beta_limit_field.to_spec()}
        spec = {"kind": self.kind, "beta_limit": self.beta_limit_field.to_spec()}
        if self.kind == "limit_plus_exp":
            spec.update(a=self.a_field.to_spec(), gamma=self.gamma)
        elif self.kind == "limit_plus_poly":
            spec.update(a=self.a_field.to_spec(), q=self.q)
        else:
            spec["overrides"] = [f.to_spec() for f in self.overrides]
        return spec

    @classmethod
    def from_spec(cls, domain, spec) -> "IntensityFamily":
        kind = spec.get("kind")
        f = lambda key: Field.from_spec(domain, spec[key])  # noqa: E731
        if kind == "constant":
            return cls.constant(domain, f("beta"))
        if kind == "limit_plus_exp":
            return cls.limit_plus_exp(domain, f("beta_limit"), f("a"), spec["gamma"])
        if kind == "limit_plus_poly":
            return cls.limit_plus_poly(domain, f("beta_limit"), f("a"), spec["q"])
        if kind == "finite_perturbation":
            return cls.finite_perturbation(
                domain, f("beta_limit"), [Field.from_spec(domain, o) for o in spec.get("overrides", [])])
        raise ValueError(f"unknown intensity kind {kind!r}")

    def __eq__(self, other):
        return isinstance(other, IntensityFamily) and self.to_spec() == other.to_spec() \
            and self.domain == other.domain

    def __repr__(self):
        return f"IntensityFamily({self.to_spec()})"


def _as_field(domain, v) -> Field:
    return v if isinstance(v, Field) else Field(domain, v)


def validate_family(family: IntensityFamily, n_check: int = N_CHECK) -> list:
    """Check the family hypotheses exhaustively over its cells.

    Returns a list of :class:`Violation`; an empty list means the family is
    valid.  Fields are piecewise constant, so cell-wise checks are exact.
    """
    out = []
    res = family.resolution

    def loc(flat_cell, n=None):
        d = {"cell": [int(v) for v in np.unravel_index(int(flat_cell), res)]}
        if n is not None:
            d["n"] = int(n)
        return d

    rows = family._extreme_rows()
    if rows.min() <= 0:
        r, c = np.unravel_index(int(np.argmin(rows)), rows.shape)
        n = 0 if family.kind != "finite_perturbation" else (r - 1 if r > 0 else None)
        out.append(Violation(
            "beta_min_nonpositive",
            f"beta_min = {rows.min():g}; every beta_n must be bounded below by a positive constant",
            "positivity", loc(c, n)))
    if family._lim.min() <= 0:
        c = int(np.argmin(family._lim))
        out.append(Violation(
            "beta_limit_nonpositive",
            f"limit intensity has infimum {family._lim.min():g}; it must be positive",
            "limit-positivity", loc(c)))
    if not np.all(np.isfinite(rows)):
        out.append(Violation("beta_unbounded", "intensities must be finite", "positivity"))

    if family.kind == "limit_plus_exp" and not family.gamma > 0:
        out.append(Violation("gamma_nonpositive", f"gamma = {family.gamma}; need gamma > 0", "rate"))
    if family.kind == "limit_plus_poly" and not family.q > 0.5:
        out.append(Violation(
            "rate_condition",
            f"q = {family.q}; need q > 1/2 so that n^(-1/2) * sum_k phi(k*delta) -> 0",
            "rate"))

    n = np.arange(n_check + 1)
    phi = np.asarray(family.phi_rate(n), dtype=float)
    if np.any(np.diff(phi) > 0):
        k = int(np.argmax(np.diff(phi) > 0))
        out.append(Violation("phi_increasing", f"phi increases between n={k} and n={k + 1}", "rate"))
    if family.kind == "limit_plus_poly" and not family.q > 0:
        out.append(Violation("phi_not_vanishing",
                             f"q = {family.q}; phi(n) = (1+n)^(-q) tends to 0 only for q > 0", "rate"))

    cells = np.arange(family.n_cells)
    vals = family.beta_by_cell(n[:, None], cells[None, :])
    gap = np.abs(vals - family._lim[None, :]) - family.tau_sup * phi[:, None]
    slack = 1e-12 * max(family.beta_max, 1.0)
    if gap.max() > slack:
        i, c = np.unravel_index(int(np.argmax(gap)), gap.shape)
        out.append(Violation(
            "tau_bound", f"|beta_n - beta| exceeds tau_sup * phi(n) by {gap.max():g}",
            "rate", loc(c, i)))
    return out
