import numpy as np
import pytest

from csasim import BoxDomain, CSAModel, IntensityFamily, RadiusField
from csasim.kernels import numba_available

BACKENDS = ["numpy"] + (["numba"] if numba_available() else [])


def make_model(d=1, kind="constant", r=0.25, **kw):
    dom = kw.pop("domain", None) or BoxDomain.unit(d)
    if kind == "constant":
        fam = IntensityFamily.constant(dom, kw.get("beta", 1.0))
    elif kind == "exp":
        fam = IntensityFamily.limit_plus_exp(dom, kw.get("beta_limit", 1.0), kw.get("a", 1.0),
                                             kw.get("gamma", 1.0))
    elif kind == "poly":
        fam = IntensityFamily.limit_plus_poly(dom, kw.get("beta_limit", 1.0), kw.get("a", 1.0),
                                              kw.get("q", 0.75))
    else:
        fam = IntensityFamily.finite_perturbation(dom, kw.get("beta_limit", 1.0),
                                                  kw.get("overrides", [3.0, 2.0]))
    return CSAModel(dom, RadiusField.constant(dom, r), fam)


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance summary: tests/test_acceptance.py records one line per criterion here
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
