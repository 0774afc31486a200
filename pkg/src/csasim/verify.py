"""Replicated-ensemble checks of the limit theorems, each producing a
self-contained :class:`VerificationReport`.

Every verdict is a comparison between a stored observed value and a stored
threshold, so a report can be re-judged from its JSON alone (``recompute``).
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import Refusal
from .geometry import ball_volume_coeff
from .intensity import validate_family
from .measure import (QuadratureGrid, TestFunction, compute_G, compute_J, cumulant_estimate,
                      default_grid, prefix_integrals_at, quad_alpha)
from .sampler import (CSAModel, ProcessState, coarsen_mass, make_rng, next_point_exact,
                      oracle_mass_table, simulate)

THREADS_ENV = "CSA_SIM_THREADS"
CALIBRATION_SALT = 0xC0FFEE5EED
POISSON_BINS = 5            # {0, 1, 2, 3, >=4}
DEGENERATE_VARIANCE = 1e-15


# threads and ensembles ------------------------------------------------------

def resolve_threads(threads=None) -> int:
    if threads:
        return max(1, int(threads))
    env = os.environ.get(THREADS_ENV, "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def ensemble_map(model: CSAModel, m: int, N: int, seed: int, stat, threads=None, backend=None):
    """``[stat(simulate(model, m, seed, i)) for i in range(N)]``, run in parallel.

    Output order and values do not depend on the thread count.
    """
    def one(rid):
        return stat(simulate(model, m, seed, rid, backend=backend))

    n_threads = min(resolve_threads(threads), max(N, 1))
    if n_threads == 1:
        return [one(i) for i in range(N)]
    with ThreadPoolExecutor(n_threads) as ex:
        return list(ex.map(one, range(N)))


def calibration_means(model, f, m, N, seed, threads=None, backend=None) -> np.ndarray:
    """Per-step means of f(X_k) from an ensemble independent of the main one."""
    rows = ensemble_map(model, m, N, seed ^ CALIBRATION_SALT,
                        lambda st: np.asarray(f(st.points), dtype=float), threads, backend)
    return np.mean(rows, axis=0)


# reports ---------------------------------------------------------------------

def _holds(op, obs, val) -> bool:
    if op == "<":
        return obs < val
    if op == "<=":
        return obs <= val
    if op == ">":
        return obs > val
    if op == ">=":
        return obs >= val
    if op == "within":
        return val[0] <= obs <= val[1]
    if op == "strictly_decreasing":
        o = np.asarray(obs, dtype=float)
        return bool(np.all(o == 0) or np.all(np.diff(o) < 0))
    if op == "nonincreasing_to_zero":
        o = np.asarray(obs, dtype=float)
        return bool(np.all(np.diff(o) <= 0) and o[-1] == 0)
    raise ValueError(f"unknown comparison {op!r}")


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, np.bool_):
        return bool(v)
    return v


@dataclass
class VerificationReport:
    """Outcome of one check.

    ``threshold`` maps a criterion name to ``{"observed": key, "op": op,
    "value": v}`` and optionally ``"skip": reason``.  ``statistics`` holds
    per-replicate values for CSV export and stays out of the JSON body.
    """

    test: str
    params: dict
    observed: dict
    reference: dict
    threshold: dict
    seed: int
    warnings: list = field(default_factory=list)
    verdict: dict = field(default_factory=dict)
    runtime_ms: float = 0.0
    statistics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.verdict:
            self.verdict = judge(self.observed, self.threshold)

    @property
    def passed(self) -> bool:
        return self.verdict["overall"] == "PASS"

    def to_dict(self) -> dict:
        """Deterministic body; timings live in the sidecar written by ``emit_report``."""
        return _jsonable({
            "test": self.test, "params": self.params, "observed": self.observed,
            "reference": self.reference, "threshold": self.threshold,
            "verdict": self.verdict, "warnings": list(self.warnings), "seed": self.seed})

    @classmethod
    def from_dict(cls, d) -> "VerificationReport":
        return cls(d["test"], d["params"], d["observed"], d["reference"], d["threshold"],
                   d["seed"], list(d.get("warnings", [])), d.get("verdict") or {})


def judge(observed: dict, threshold: dict) -> dict:
    criteria = {}
    for name, t in threshold.items():
        if t.get("skip"):
            criteria[name] = "SKIP"
        else:
            criteria[name] = "PASS" if _holds(t["op"], observed[t["observed"]], t["value"]) else "FAIL"
    overall = "FAIL" if "FAIL" in criteria.values() or not criteria else "PASS"
    return {"overall": overall, "criteria": criteria}


def recompute(report) -> dict:
    """Re-derive the verdict of a report (object or JSON dict) from its stored fields."""
    d = report.to_dict() if isinstance(report, VerificationReport) else report
    return judge(d["observed"], d["threshold"])


def _crit(observed_key, op, value, skip=None):
    t = {"observed": observed_key, "op": op, "value": value}
    if skip:
        t["skip"] = skip
    return t


def _timed(fn):
    def wrapper(*args, **kw):
        t0 = time.perf_counter()
        rep = fn(*args, **kw)
        rep.runtime_ms = (time.perf_counter() - t0) * 1e3
        return rep
    wrapper.__name__, wrapper.__doc__ = fn.__name__, fn.__doc__
    wrapper.__wrapped__ = fn
    return wrapper


# preconditions ---------------------------------------------------------------

def _require_valid(model: CSAModel, need_rate=False, what=""):
    hard, rate = [], []
    for v in validate_family(model.family):
        (rate if v.hypothesis == "rate" else hard).append(v)
    if hard:
        raise Refusal("invalid intensity family: " + "; ".join(str(v) for v in hard))
    if need_rate and rate:
        raise Refusal(f"{what} needs the rate condition on phi "
                      f"(n^(-1/2) * sum_k phi(k*delta) -> 0 for every delta > 0); "
                      + "; ".join(str(v) for v in rate))


def _min_n_warning(warnings, name, value, minimum):
    if value < minimum:
        warnings.append(f"{name} = {value} is below the recommended minimum {minimum}")


def _f_spec(f: TestFunction):
    return f.to_spec()


# law of large numbers -------------------------------------------------------

@_timed
def run_lln(model: CSAModel, f: TestFunction, m_list=(100, 1000, 10000), N=200, seed=0,
            tol=0.02, grid=None, threads=None, backend=None) -> VerificationReport:
    """Median |(1/m) sum f(X_i) - J(f)| must fall strictly along m_list and end below tol."""
    m_list = [int(m) for m in m_list]
    if not m_list or any(b <= a for a, b in zip(m_list, m_list[1:])) or m_list[0] < 1:
        raise ValueError(f"m_list must be positive and strictly increasing, got {m_list}")
    _require_valid(model)
    grid = grid or default_grid(model)
    J = compute_J(f, model.family, grid)
    idx = np.array(m_list) - 1

    def stat(st):
        c = np.cumsum(f(st.points))
        return c[idx] / np.array(m_list)

    means = np.array(ensemble_map(model, m_list[-1], N, seed, stat, threads, backend))
    err = np.median(np.abs(means - J), axis=0)
    warnings = []
    _min_n_warning(warnings, "N", N, 200)
    if np.all(err == 0):
        warnings.append("degenerate: error is identically zero (f is constant under the law)")
    return VerificationReport(
        "lln",
        {"f": _f_spec(f), "m_list": m_list, "N": N, "tol": tol, "grid": list(grid.resolution)},
        {"median_abs_error": err.tolist(), "median_abs_error_at_max_m": float(err[-1])},
        {"J": J, "provenance": "midpoint quadrature of f * beta / alpha"},
        {"decreasing": _crit("median_abs_error", "strictly_decreasing", None),
         "final_error": _crit("median_abs_error_at_max_m", "<", tol)},
        seed, warnings,
        statistics={f"mean_f_m{m}": means[:, i] for i, m in enumerate(m_list)})


# central limit theorem ----------------------------------------------------------

def _centering(model, f, m, N, seed, centering, J, threads, backend):
    if centering == "calibration":
        return calibration_means(model, f, m, N, seed, threads, backend), (
            "centering uses per-step means of an independent calibration ensemble "
            "in place of the exact expectations E f(X_k)")
    if centering == "limit":
        return np.full(m, J), (
            "centering uses the limit J(f) for every step; adds a drift that vanishes "
            "only as the rate sum grows slower than sqrt(m)")
    raise ValueError(f"centering must be 'calibration' or 'limit', got {centering!r}")


@_timed
def run_clt(model: CSAModel, f: TestFunction, m=2000, N=500, seed=0, slack=0.05, ks_slack=0.02,
            centering="calibration", grid=None, threads=None, backend=None) -> VerificationReport:
    """Variance and KS checks of S_m(f) against Normal(0, G(f, f))."""
    _require_valid(model, need_rate=True, what="the Gaussian limit")
    grid = grid or default_grid(model)
    G = compute_G(f, f, model.family, grid)
    J = compute_J(f, model.family, grid)
    ref, note = _centering(model, f, m, N, seed, centering, J, threads, backend)
    S = np.array(ensemble_map(model, m, N, seed,
                              lambda st: float(np.sum(f(st.points) - ref) / math.sqrt(m)),
                              threads, backend))
    var = float(np.var(S, ddof=1))
    half = 3.0 * math.sqrt(2.0 / N) + slack
    window = [G * (1.0 - half) - 1e-12, G * (1.0 + half) + 1e-12]
    warnings = [note]
    _min_n_warning(warnings, "N", N, 500)
    _min_n_warning(warnings, "m", m, 2000)
    degenerate = G <= DEGENERATE_VARIANCE
    if degenerate:
        warnings.append("degenerate: G(f, f) = 0, so S_m(f) has a point-mass limit; KS skipped")
        ks = None
    else:
        ks = float(stats.kstest(S, "norm", args=(0.0, math.sqrt(G))).statistic)
    ks_limit = 1.63 / math.sqrt(N) + ks_slack
    return VerificationReport(
        "clt",
        {"f": _f_spec(f), "m": m, "N": N, "slack": slack, "ks_slack": ks_slack,
         "centering": centering, "grid": list(grid.resolution)},
        {"variance": var, "mean": float(np.mean(S)), "ks_distance": ks},
        {"G_ff": G, "J": J, "provenance": "midpoint quadrature, G(f,f) = J(f^2) - J(f)^2"},
        {"variance": _crit("variance", "within", window),
         "ks": _crit("ks_distance", "<", ks_limit, skip="G(f,f) = 0" if degenerate else None)},
        seed, warnings, statistics={"S_m": S})


# Poisson limit of shrinking-ball counts --------------------------------------

def _shrunken_ball(model, x, r, m):
    x = np.asarray(x, dtype=float)
    d = model.domain.d
    if x.shape != (d,) or not model.domain.contains(x):
        raise Refusal(f"x = {x.tolist()} is not a point of the domain")
    rho = r * m ** (-1.0 / d)
    if not model.domain.ball_inside(x, rho):
        raise Refusal(f"the ball B(x, r*m^(-1/d)) of radius {rho:g} leaves the domain; "
                      "the Poisson limit assumes an interior ball")
    return x, rho


def _continuity_warning(model, x, rho, warnings):
    fam = model.family
    lo = fam.cell_of(x - rho)
    hi = fam.cell_of(x + rho)
    if fam.n_cells > 1 and (lo[0] != hi[0] or fam.cell_of(x)[0] != lo[0]):
        warnings.append("the shrunken ball crosses an intensity cell boundary; "
                        "the limit assumes beta continuous at x")


def poisson_lambda(model, x, r) -> float:
    fam = model.family
    alpha = quad_alpha(fam, QuadratureGrid(model.domain, fam.resolution))
    d = model.domain.d
    return float(r ** d * ball_volume_coeff(d) * fam.beta_limit(np.asarray(x, float)) / alpha)


def _pooled_counts(counts, top=POISSON_BINS - 1):
    c = np.minimum(np.asarray(counts, dtype=np.int64), top)
    return np.bincount(c, minlength=top + 1)


@_timed
def run_poisson(model: CSAModel, x, r, m=5000, N=2000, seed=0, p_min=0.01, mean_sigmas=3.0,
                threads=None, backend=None) -> VerificationReport:
    """Chi-square GOF of shrinking-ball counts S_m(x, r) against Poisson(lambda)."""
    _require_valid(model)
    x, rho = _shrunken_ball(model, x, r, m)
    lam = poisson_lambda(model, x, r)
    warnings = []
    _min_n_warning(warnings, "N", N, 2000)
    _continuity_warning(model, x, rho, warnings)
    counts = np.array(ensemble_map(model, m, N, seed,
                                   lambda st: st.index.count_ball(x, rho, backend=backend),
                                   threads, backend), dtype=np.int64)
    obs = _pooled_counts(counts)
    pmf = stats.poisson.pmf(np.arange(POISSON_BINS - 1), lam)
    expected = N * np.append(pmf, 1.0 - pmf.sum())
    pval = float(stats.chisquare(obs, expected).pvalue)
    mean = float(counts.mean())
    return VerificationReport(
        "poisson",
        {"x": x.tolist(), "r": r, "m": m, "N": N, "p_min": p_min, "mean_sigmas": mean_sigmas,
         "bins": ["0", "1", "2", "3", ">=4"]},
        {"chi2_pvalue": pval, "observed_bins": obs.tolist(), "mean": mean,
         "mean_abs_deviation": abs(mean - lam)},
        {"lambda": lam, "expected_bins": expected.tolist(), "ball_radius": rho,
         "provenance": "lambda = r^d * b_d * beta(x) / alpha with alpha by exact cell sums"},
        {"gof": _crit("chi2_pvalue", ">", p_min),
         "mean": _crit("mean_abs_deviation", "<", mean_sigmas * math.sqrt(lam / N))},
        seed, warnings, statistics={"S_m": counts})


def ball_quadrature(x, rho, d, res=32):
    """Points and weights integrating over B(x, rho); weights sum to the exact ball volume."""
    h = 2.0 * rho / res
    axes = [x[i] - rho + (np.arange(res) + 0.5) * h for i in range(d)]
    pts = np.stack([g.reshape(-1) for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    inside = np.sum((pts - x) ** 2, axis=1) <= rho * rho
    pts = pts[inside]
    w = np.full(pts.shape[0], ball_volume_coeff(d) * rho ** d / pts.shape[0])
    return pts, w


def _tv_to_poisson(counts, mu):
    """TV between the empirical law of ``counts`` and Poisson(mu), with its MC standard error."""
    N = counts.size
    top = int(counts.max())
    q = np.bincount(counts, minlength=top + 1) / N
    p = stats.poisson.pmf(np.arange(top + 1), mu)
    tv = 0.5 * (np.abs(q - p).sum() + stats.poisson.sf(top, mu))
    se = 0.5 * float(np.sum(np.sqrt(q * (1.0 - q) / N)))
    return float(tv), se


@_timed
def run_poisson_tv_bound(model: CSAModel, x, r, m=500, N=500, seed=0, sigmas=3.0,
                         grid=None, ball_res=32, threads=None, backend=None) -> VerificationReport:
    """Empirical TV(S_m, Poisson(m p_m)) against m p_m^2 + E sum_k |p_{m,k} - p_m|."""
    if m > 500:
        raise Refusal(f"m = {m} exceeds 500; the per-step quadrature costs O(m * cells)")
    _require_valid(model)
    x, rho = _shrunken_ball(model, x, r, m)
    d = model.domain.d
    grid = grid or default_grid(model, {1: 1000, 2: 100, 3: 20}[d])
    warnings = []
    _min_n_warning(warnings, "N", N, 200)
    _continuity_warning(model, x, rho, warnings)
    fam = model.family
    bpts, bw = ball_quadrature(x, rho, d, ball_res)
    alpha = quad_alpha(fam, QuadratureGrid(model.domain, fam.resolution))
    if fam.n_cells == 1 or np.all(fam.cell_of(bpts) == fam.cell_of(x)[0]):
        p_m = float(fam.beta_limit(x) * ball_volume_coeff(d) * rho ** d / alpha)
    else:
        p_m = float(np.sum(fam.beta_limit(bpts) * bw) / alpha)
    queries = np.vstack([bpts, grid.centers])
    weights = np.zeros((queries.shape[0], 2))
    weights[: len(bw), 0] = bw
    weights[len(bw):, 1] = grid.cell_volume

    def stat(st):
        rows = prefix_integrals_at(model, st.points, queries, weights, backend)[:m]
        p_mk = rows[:, 0] / rows[:, 1]
        return float(np.sum(np.abs(p_mk - p_m))), st.index.count_ball(x, rho, backend=backend)

    out = ensemble_map(model, m, N, seed, stat, threads, backend)
    drift = np.array([o[0] for o in out])
    counts = np.array([o[1] for o in out], dtype=np.int64)
    tv, se_tv = _tv_to_poisson(counts, m * p_m)
    se_drift = float(np.std(drift, ddof=1) / math.sqrt(N)) if N > 1 else 0.0
    bound = m * p_m ** 2 + float(drift.mean())
    se = math.sqrt(se_tv ** 2 + se_drift ** 2)
    if fam.count_independent:
        warnings.append("binomial case: p_{m,k} = p_m exactly and the bound is m * p_m^2")
    return VerificationReport(
        "poisson_tv_bound",
        {"x": x.tolist(), "r": r, "m": m, "N": N, "sigmas": sigmas,
         "grid": list(grid.resolution), "ball_res": ball_res},
        {"tv": tv, "tv_se": se_tv, "drift_mean": float(drift.mean()), "drift_se": se_drift,
         "mean_count": float(counts.mean())},
        {"p_m": p_m, "m_pm_squared": m * p_m ** 2, "bound": bound, "combined_se": se,
         "provenance": "p_m from beta/alpha over the ball; drift from per-step quadrature"},
        {"tv_within_bound": _crit("tv", "<=", bound + sigmas * se)},
        seed, warnings, statistics={"S_m": counts, "drift_sum": drift})


# coverage ------------------------------------------------------------------------

def coverage_delta0(model: CSAModel):
    """(l, delta0): smallest integer l with L_max / l < R_min / 4 and p(l) < 1,
    where p(l) = l^(-d) * beta_min / beta_max and L_max is the longest side."""
    fam, dom = model.family, model.domain
    L, d = float(dom.sides.max()), dom.d
    ratio = fam.beta_min / fam.beta_max
    l = max(1, math.floor(4.0 * L / model.radius.r_min))
    while not (L / l < model.radius.r_min / 4.0 and l ** (-d) * ratio < 1.0):
        l += 1
    return l, l ** (-d) * ratio


def coverage_grid(model: CSAModel) -> QuadratureGrid:
    h = model.radius.r_min / 2.0
    return QuadratureGrid(model.domain, [max(1, math.ceil(s / h)) for s in model.domain.sides])


@_timed
def run_coverage(model: CSAModel, delta=None, m_list=(100, 1000, 10000), N=200, seed=0,
                 threads=None, backend=None) -> VerificationReport:
    """Fraction of replicates whose minimal centre coverage is <= m * delta, per m."""
    _require_valid(model)
    m_list = [int(m) for m in m_list]
    if not m_list or any(b <= a for a, b in zip(m_list, m_list[1:])):
        raise ValueError(f"m_list must be strictly increasing, got {m_list}")
    l, delta0 = coverage_delta0(model)
    if delta is None:
        delta = delta0 / 2.0
    if not 0 < delta < delta0:
        raise Refusal(f"delta = {delta:g} must lie in (0, delta0) with delta0 = {delta0:.6g} (l = {l})")
    grid = coverage_grid(model)
    radii = np.asarray(model.radius(grid.centers), dtype=float)

    def stat(st):
        return [int(st.index.count_ball(grid.centers, radii, limit=m, backend=backend).min())
                for m in m_list]

    mins = np.array(ensemble_map(model, m_list[-1], N, seed, stat, threads, backend))
    fail = (mins <= np.array(m_list) * delta).mean(axis=0)
    warnings = [f"inf over D approximated by the minimum over {grid.n_cells} cell centres "
                f"(cell side <= R_min/2)"]
    _min_n_warning(warnings, "N", N, 200)
    return VerificationReport(
        "coverage",
        {"delta": delta, "m_list": m_list, "N": N, "grid": list(grid.resolution)},
        {"failure_fraction": fail.tolist(), "median_min_count": np.median(mins, axis=0).tolist()},
        {"delta0": delta0, "l": l, "provenance": "p(l) = l^(-d) * beta_min / beta_max"},
        {"decay": _crit("failure_fraction", "nonincreasing_to_zero", None)},
        seed, warnings, statistics={f"min_count_m{m}": mins[:, i] for i, m in enumerate(m_list)})


# cumulants -----------------------------------------------------------------------

@_timed
def run_cumulants(model: CSAModel, f: TestFunction, eps=0.25, m=4000, N=1000, seed=0,
                  slack=0.05, sigmas=3.0, centering="calibration", grid=None, threads=None,
                  backend=None) -> VerificationReport:
    """Plug-in cumulants of the tail sum started at step ceil(m^eps)."""
    fam = model.family
    if not fam.exponential_rate:
        raise Refusal(f"cumulant decay needs an exponential rate phi(k) = exp(-gamma k); "
                      f"family '{fam.kind}' converges only polynomially")
    if not 0 < eps < 0.5:
        raise Refusal(f"eps must lie in (0, 1/2), got {eps}")
    _require_valid(model, need_rate=True, what="cumulant decay")
    grid = grid or default_grid(model)
    G = compute_G(f, f, fam, grid)
    J = compute_J(f, fam, grid)
    ref, note = _centering(model, f, m, N, seed, centering, J, threads, backend)
    k0 = math.ceil(m ** eps)
    scale = math.sqrt(m - m ** eps)
    S = np.array(ensemble_map(
        model, m, N, seed,
        lambda st: float(np.sum(f(st.points[k0 - 1:]) - ref[k0 - 1:]) / scale),
        threads, backend))
    k2, k3, k4 = (cumulant_estimate(S, n) for n in (2, 3, 4))
    se3 = math.sqrt(6.0 / N) * k2 ** 1.5
    se4 = math.sqrt(24.0 / N) * k2 ** 2
    warnings = [note]
    _min_n_warning(warnings, "N", N, 1000)
    return VerificationReport(
        "cumulants",
        {"f": _f_spec(f), "eps": eps, "m": m, "N": N, "slack": slack, "sigmas": sigmas,
         "start_index": k0, "centering": centering, "grid": list(grid.resolution)},
        {"K2": k2, "K3": k3, "K4": k4, "abs_K2_minus_G": abs(k2 - G),
         "abs_K3": abs(k3), "abs_K4": abs(k4), "K3_se": se3, "K4_se": se4},
        {"G_ff": G, "provenance": "plug-in central moments; SEs sqrt(6/N) m2^1.5, sqrt(24/N) m2^2"},
        {"K2": _crit("abs_K2_minus_G", "<", sigmas * math.sqrt(2.0 / N) * G + slack),
         "K3": _crit("abs_K3", "<", sigmas * se3 + slack),
         "K4": _crit("abs_K4", "<", sigmas * se4 + slack)},
        seed, warnings, statistics={"S_tilde": S})


# joint density oracle --------------------------------------------------------------

def _fine_grid(model, coarse: QuadratureGrid, m) -> QuadratureGrid:
    """Finest refinement of ``coarse`` that also refines the model fields and keeps
    the tuple table within the oracle size limit."""
    from .sampler import ORACLE_MAX_ENTRIES
    res = list(coarse.resolution)
    for i in range(model.domain.d):
        res[i] = math.lcm(res[i], model.family.resolution[i], model.radius.field.resolution[i])
    budget = int(ORACLE_MAX_ENTRIES ** (1.0 / m) + 1e-9)
    base = int(np.prod(res))
    if base > budget:
        raise Refusal(f"no grid refining {coarse.resolution} and the model fields fits the "
                      f"oracle limit for m = {m}")
    factor = int((budget / base) ** (1.0 / model.domain.d) + 1e-9)
    return QuadratureGrid(model.domain, [r * max(factor, 1) for r in res])


def expected_sampling_tv(table: np.ndarray, samples: int) -> float:
    """Mean TV between a multinomial sample and its own law (normal approximation)."""
    q = table.reshape(-1)
    return float(0.5 * np.sum(np.sqrt(2.0 * q * (1.0 - q) / (math.pi * samples))))


def exact_tuple_samples(model, grid, m, samples, seed) -> np.ndarray:
    """Cell indices of ``samples`` independent m-tuples drawn with ``next_point_exact``."""
    rng = make_rng(seed, 0)
    out = np.empty((samples, m), dtype=np.int64)
    for s in range(samples):
        st = ProcessState(model, seed, s, capacity=m)
        for k in range(m):
            next_point_exact(st, rng, grid)
        out[s] = grid.cell_of(st.points)
    return out


@_timed
def run_density_oracle(model: CSAModel, m=2, grid=None, samples=100_000, seed=0,
                       sampler="exact", slack=0.005, tol=None, threads=None,
                       backend=None) -> VerificationReport:
    """TV between sampled cell-tuple frequencies and the exact tuple-mass table.

    ``sampler="exact"`` draws from the discretised model on ``grid`` itself.
    ``sampler="ar"`` runs the continuous acceptance-rejection sampler and
    compares on the bins of ``grid`` against a finer-grid oracle.
    """
    if not 1 <= m <= 3:
        raise Refusal(f"the oracle check supports m in 1..3, got {m}")
    if sampler not in ("exact", "ar"):
        raise ValueError(f"sampler must be 'exact' or 'ar', got {sampler!r}")
    _require_valid(model)
    grid = grid or QuadratureGrid(model.domain, [10] + [1] * (model.domain.d - 1))
    G = grid.n_cells
    if G ** m > 10**6:
        raise Refusal(f"tuple table would have {G ** m} entries (limit 1000000)")
    warnings = []
    _min_n_warning(warnings, "samples", samples, 100_000)
    if sampler == "exact":
        table = oracle_mass_table(model, grid, m)
        cells = exact_tuple_samples(model, grid, m, samples, seed)
        fine_res = list(grid.resolution)
    else:
        fine = _fine_grid(model, grid, m)
        table = coarsen_mass(oracle_mass_table(model, fine, m), fine, grid)
        fine_res = list(fine.resolution)
        cells = np.array(ensemble_map(model, m, samples, seed,
                                      lambda st: grid.cell_of(st.points), threads, backend))
        warnings.append("continuous sampler against the discretised oracle: "
                        "TV includes the discretisation gap")
    flat = np.ravel_multi_index(tuple(cells.T), (G,) * m)
    freq = np.bincount(flat, minlength=G ** m) / samples
    tv = float(0.5 * np.abs(freq - table.reshape(-1)).sum())
    K = G ** m
    limit = tol if tol is not None else 4.0 * math.sqrt(K / (2.0 * samples)) + slack
    return VerificationReport(
        f"density_oracle_{sampler}",
        {"m": m, "grid": list(grid.resolution), "oracle_grid": fine_res, "samples": samples,
         "sampler": sampler, "slack": slack, "tol": tol},
        {"tv": tv},
        {"tuples": K, "expected_sampling_tv": expected_sampling_tv(table, samples),
         "provenance": "exact tuple masses of the discretised model (centre-evaluated counts)"},
        {"tv": _crit("tv", "<", limit)},
        seed, warnings, statistics={"tuple_index": flat})


# binomial-case uniformity ------------------------------------------------------------

@_timed
def run_uniform_gof(model: CSAModel, m=1000, N=100, seed=0, bins=None, p_min=0.01,
                    threads=None, backend=None) -> VerificationReport:
    """Chi-square GOF of pooled points against beta/alpha; only for count-free families."""
    fam = model.family
    if not fam.count_independent:
        raise Refusal("the i.i.d. goodness-of-fit check applies only when beta_n does not depend on n")
    _require_valid(model)
    d = model.domain.d
    bins = bins or {1: 10, 2: 10, 3: 5}[d]
    res = [math.lcm(bins, fam.resolution[i]) for i in range(d)]
    grid = QuadratureGrid(model.domain, res)
    probs = fam.beta_limit(grid.centers) * grid.cell_volume
    probs = probs / probs.sum()
    cells = np.concatenate(ensemble_map(model, m, N, seed, lambda st: grid.cell_of(st.points),
                                        threads, backend))
    obs = np.bincount(cells, minlength=grid.n_cells)
    pval = float(stats.chisquare(obs, probs * cells.size).pvalue)
    warnings = []
    _min_n_warning(warnings, "samples", m * N, 100_000)
    return VerificationReport(
        "uniform_gof",
        {"m": m, "N": N, "samples": int(m * N), "grid": res, "p_min": p_min},
        {"chi2_pvalue": pval},
        {"cells": grid.n_cells, "provenance": "cell masses of beta/alpha"},
        {"gof": _crit("chi2_pvalue", ">", p_min)},
        seed, warnings)
