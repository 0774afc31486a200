"""Run configuration: JSON schema, validation and round-trip serialisation.

Schema (all keys at the top level)::

    domain        {"d": 2} for the unit box, or {"lower": [...], "upper": [...]}
    radius        {"kind": "constant", "r": 0.1}
                  {"kind": "grid", "resolution": [...], "values": [...]}   (C order)
                  {"kind": "grid", "file": "radius.json"}  (same keys, path relative to the config)
    intensity     {"kind": "constant", "beta": 1.0}
                  {"kind": "limit_plus_exp", "beta_limit": F, "a": F, "gamma": g}
                  {"kind": "limit_plus_poly", "beta_limit": F, "a": F, "q": q}
                  {"kind": "finite_perturbation", "beta_limit": F, "overrides": [F, ...]}
                  where F is a number or {"resolution": [...], "values": [...]}
    grid          {"resolution": [...]}  quadrature grid (optional; must refine the fields)
    m, replicates, base_seed
    test_functions {"name": {"kind": "indicator_box", "lower": [...], "upper": [...]}, ...}
    verify        per-check parameter overrides, see ``VERIFY_DEFAULTS``
    output_dir    where artifacts are written
"""

from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass, field

from .errors import ConfigError
from .geometry import BoxDomain, Field, RadiusField
from .intensity import IntensityFamily, validate_family
from .measure import QuadratureGrid, TestFunction
from .sampler import CSAModel

SEED_MAX = (1 << 64) - 1

VERIFY_DEFAULTS = {
    "f": None,  # name from test_functions or an inline spec; None = indicator of the lower half along axis 1
    "lln": {"m_list": [100, 1000, 10000], "N": 200, "tol": 0.02},
    "clt": {"m": 2000, "N": 500, "slack": 0.05, "ks_slack": 0.02, "centering": "calibration"},
    "poisson": {"x": None, "r": 0.5, "m": 5000, "N": 2000, "p_min": 0.01, "mean_sigmas": 3.0},
    "tv_bound": {"x": None, "r": 0.5, "m": 500, "N": 500, "sigmas": 3.0},
    "coverage": {"delta": None, "m_list": [100, 1000, 10000], "N": 200},
    "cumulants": {"eps": 0.25, "m": 4000, "N": 1000, "slack": 0.05, "sigmas": 3.0,
                  "centering": "calibration"},
    "oracle": {"m": 2, "resolution": None, "samples": 100000, "slack": 0.005,
               "tol_exact": None, "tol_ar": 0.02},
    "uniform": {"m": 1000, "N": 100, "p_min": 0.01},
}

TOP_KEYS = ("domain", "radius", "intensity", "grid", "m", "replicates", "base_seed",
            "test_functions", "verify", "output_dir")

# sections whose replicate count follows --replicates
REPLICATE_KEYS = {"lln": "N", "clt": "N", "poisson": "N", "tv_bound": "N", "coverage": "N",
                  "cumulants": "N", "uniform": "N"}


@dataclass
class RunConfig:
    model: CSAModel
    m: int
    replicates: int
    base_seed: int
    grid_resolution: tuple | None = None
    test_functions: dict = field(default_factory=dict)
    verify: dict = field(default_factory=lambda: copy.deepcopy(VERIFY_DEFAULTS))
    output_dir: str = "out"
    warnings: list = field(default_factory=list)

    @property
    def domain(self) -> BoxDomain:
        return self.model.domain

    def quadrature_grid(self):
        return QuadratureGrid(self.domain, self.grid_resolution) if self.grid_resolution else None

    def test_function(self) -> TestFunction:
        f = self.verify.get("f")
        if f is None:
            lo, hi = list(self.domain.lower), list(self.domain.upper)
            hi[0] = 0.5 * (lo[0] + hi[0])
            return TestFunction.indicator_box(lo, hi)
        if isinstance(f, str):
            return self.test_functions[f]
        return TestFunction.from_spec(f)

    def center(self):
        return [0.5 * (a + b) for a, b in zip(self.domain.lower, self.domain.upper)]

    def section(self, name) -> dict:
        return dict(self.verify[name])

    def with_overrides(self, seed=None, replicates=None, output_dir=None) -> "RunConfig":
        cfg = copy.deepcopy(self)
        if seed is not None:
            if not 0 <= int(seed) <= SEED_MAX:
                raise ConfigError("seed must be an unsigned 64-bit integer", ["base_seed: out of range"])
            cfg.base_seed = int(seed)
        if replicates is not None:
            if int(replicates) < 1:
                raise ConfigError("replicates must be positive", ["replicates: must be >= 1"])
            cfg.replicates = int(replicates)
            for sec, key in REPLICATE_KEYS.items():
                cfg.verify[sec][key] = int(replicates)
        if output_dir is not None:
            cfg.output_dir = str(output_dir)
        return cfg

    def to_dict(self) -> dict:
        out = {
            "domain": self.domain.to_dict(),
            "radius": self.model.radius.to_spec(),
            "intensity": self.model.family.to_spec(),
        }
        if self.grid_resolution:
            out["grid"] = {"resolution": list(self.grid_resolution)}
        out.update({
            "m": self.m, "replicates": self.replicates, "base_seed": self.base_seed,
            "test_functions": {k: f.to_spec() for k, f in self.test_functions.items()},
            "verify": copy.deepcopy(self.verify),
            "output_dir": self.output_dir,
        })
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.to_dict() == other.to_dict()


def _int(v, name, problems, lo=None):
    if isinstance(v, bool) or not isinstance(v, int):
        if isinstance(v, float) and v.is_integer():
            v = int(v)
        else:
            problems.append(f"{name}: expected an integer, got {v!r}")
            return None
    if lo is not None and v < lo:
        problems.append(f"{name}: must be >= {lo}, got {v}")
        return None
    return v


def _domain(spec, problems):
    if not isinstance(spec, dict):
        problems.append("domain: expected an object")
        return None
    try:
        if "lower" in spec or "upper" in spec:
            return BoxDomain(tuple(spec["lower"]), tuple(spec["upper"]))
        d = _int(spec.get("d"), "domain.d", problems, 1)
        return None if d is None else BoxDomain.unit(d)
    except (KeyError, TypeError, ValueError) as e:
        problems.append(f"domain: {e}")
        return None


def _radius(spec, domain, base_dir, problems):
    if not isinstance(spec, dict):
        problems.append("radius: expected an object")
        return None
    try:
        kind = spec.get("kind")
        if kind == "constant":
            return RadiusField.constant(domain, float(spec["r"]))
        if kind == "grid":
            if "file" in spec:
                path = os.path.join(base_dir or ".", spec["file"])
                with open(path) as fh:
                    spec = json.load(fh)
            return RadiusField(Field.from_spec(domain, {"resolution": spec["resolution"],
                                                        "values": spec["values"]}))
        problems.append(f"radius.kind: expected 'constant' or 'grid', got {kind!r}")
    except (KeyError, TypeError, ValueError, OSError) as e:
        problems.append(f"radius: {e}")
    return None


def _intensity(spec, domain, problems, warnings):
    if not isinstance(spec, dict):
        problems.append("intensity: expected an object")
        return None
    try:
        fam = IntensityFamily.from_spec(domain, spec)
    except KeyError as e:
        problems.append(f"intensity: missing field {e}")
        return None
    except (TypeError, ValueError) as e:
        problems.append(f"intensity: {e}")
        return None
    for v in validate_family(fam):
        (warnings if v.hypothesis == "rate" else problems).append(f"intensity: {v}")
    return fam


def _verify(spec, domain, tfs, problems):
    out = copy.deepcopy(VERIFY_DEFAULTS)
    if spec is None:
        return out
    if not isinstance(spec, dict):
        problems.append("verify: expected an object")
        return out
    for sec, val in spec.items():
        if sec not in out:
            problems.append(f"verify.{sec}: unknown section")
        elif sec == "f":
            if isinstance(val, str):
                if val not in tfs:
                    problems.append(f"verify.f: unknown test function {val!r}")
            elif val is not None:
                try:
                    TestFunction.from_spec(val)
                except (KeyError, TypeError, ValueError) as e:
                    problems.append(f"verify.f: {e}")
            out["f"] = val
        elif not isinstance(val, dict):
            problems.append(f"verify.{sec}: expected an object")
        else:
            for k, v in val.items():
                if k not in out[sec]:
                    problems.append(f"verify.{sec}.{k}: unknown parameter")
                else:
                    out[sec][k] = v
    for sec in ("poisson", "tv_bound"):
        x = out[sec]["x"]
        if x is not None and (not isinstance(x, list) or len(x) != domain.d):
            problems.append(f"verify.{sec}.x: expected a list of {domain.d} coordinates")
        r = out[sec]["r"]
        if not (isinstance(r, (int, float)) and r > 0):
            problems.append(f"verify.{sec}.r: must be positive")
    for sec in ("lln", "coverage"):
        ml = out[sec]["m_list"]
        if (not isinstance(ml, list) or not ml or any(not isinstance(v, int) or v < 1 for v in ml)
                or any(b <= a for a, b in zip(ml, ml[1:]))):
            problems.append(f"verify.{sec}.m_list: must be a strictly increasing list of positive integers")
    for sec, key in REPLICATE_KEYS.items():
        _int(out[sec][key], f"verify.{sec}.{key}", problems, 1)
    eps = out["cumulants"]["eps"]
    if not (isinstance(eps, (int, float)) and 0 < eps < 0.5):
        problems.append("verify.cumulants.eps: must lie in (0, 1/2)")
    for sec in ("clt", "cumulants"):
        if out[sec]["centering"] not in ("calibration", "limit"):
            problems.append(f"verify.{sec}.centering: expected 'calibration' or 'limit'")
    return out


def parse_config(text: str, base_dir: str | None = None) -> RunConfig:
    """Parse and validate a JSON run configuration.

    Raises :class:`ConfigError` listing every violation found.  Violations of
    the rate condition only are kept as ``warnings`` (they matter for the
    Gaussian and cumulant checks, which refuse such families themselves).
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        msg = f"JSON syntax error at line {e.lineno}, column {e.colno}: {e.msg}"
        raise ConfigError(msg, [msg]) from None
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object", ["top level: expected an object"])

    problems, warnings = [], []
    for k in raw:
        if k not in TOP_KEYS:
            problems.append(f"{k}: unknown field")
    domain = _domain(raw.get("domain"), problems) if "domain" in raw else None
    if "domain" not in raw:
        problems.append("domain: required")
    radius = family = None
    if domain is not None:
        if "radius" in raw:
            radius = _radius(raw["radius"], domain, base_dir, problems)
        else:
            problems.append("radius: required")
        if "intensity" in raw:
            family = _intensity(raw["intensity"], domain, problems, warnings)
        else:
            problems.append("intensity: required")

    m = _int(raw.get("m", 100), "m", problems, 0)
    replicates = _int(raw.get("replicates", 1), "replicates", problems, 1)
    seed = raw.get("base_seed")
    if seed is None:
        problems.append("base_seed: seed required for reproducibility")
    else:
        seed = _int(seed, "base_seed", problems, 0)
        if seed is not None and seed > SEED_MAX:
            problems.append("base_seed: must fit in 64 bits")

    tfs = {}
    for name, spec in (raw.get("test_functions") or {}).items():
        try:
            tfs[name] = TestFunction.from_spec(spec)
        except (KeyError, TypeError, ValueError) as e:
            problems.append(f"test_functions.{name}: {e}")
    verify = _verify(raw.get("verify"), domain or BoxDomain.unit(1), tfs, problems)

    grid_res = None
    if raw.get("grid") is not None:
        try:
            grid_res = tuple(int(v) for v in raw["grid"]["resolution"])
            if domain is not None:
                grid = QuadratureGrid(domain, grid_res)
                if family is not None and not grid.refines(family.resolution):
                    problems.append(f"grid: {grid_res} does not refine the intensity grid {family.resolution}")
                if radius is not None and not grid.refines(radius.field.resolution):
                    problems.append(f"grid: {grid_res} does not refine the radius grid "
                                    f"{radius.field.resolution}")
        except (KeyError, TypeError, ValueError) as e:
            problems.append(f"grid: {e}")

    out_dir = raw.get("output_dir", "out")
    if not isinstance(out_dir, str) or not out_dir:
        problems.append("output_dir: expected a non-empty path")

    if problems:
        raise ConfigError(f"{len(problems)} configuration problem(s): " + "; ".join(problems), problems)
    model = CSAModel(domain, radius, family)
    return RunConfig(model, m, replicates, seed, grid_res, tfs, verify, out_dir, warnings)


def load_config(path) -> RunConfig:
    with open(path) as fh:
        text = fh.read()
    return parse_config(text, base_dir=os.path.dirname(os.path.abspath(path)))

