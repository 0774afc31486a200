import json
import os

import pytest

from csasim.cli import main
from csasim.config import load_config, parse_config
from csasim.errors import ConfigError
from csasim.export import read_points_csv

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIGS = os.path.join(ROOT, "configs")

MINIMAL = {"domain": {"d": 1}, "radius": {"kind": "constant", "r": 0.25},
           "intensity": {"kind": "constant", "beta": 1.0}, "m": 100, "base_seed": 1}


def write(tmp_path, cfg, name="c.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def test_minimal_config():
    cfg = parse_config(json.dumps(MINIMAL))
    assert cfg.m == 100 and cfg.model.domain.d == 1 and cfg.warnings == []


def test_missing_seed():
    bad = dict(MINIMAL)
    del bad["base_seed"]
    with pytest.raises(ConfigError) as e:
        parse_config(json.dumps(bad))
    assert any("seed required for reproducibility" in v for v in e.value.violations)


def test_zero_beta_min_violation():
    bad = dict(MINIMAL, intensity={"kind": "limit_plus_exp", "beta_limit": 1.0, "a": -1.0, "gamma": 1.0})
    with pytest.raises(ConfigError) as e:
        parse_config(json.dumps(bad))
    assert any("bounded below by a positive constant" in v for v in e.value.violations)


def test_all_violations_reported():
    bad = {"domain": {"d": 2}, "radius": {"kind": "constant", "r": -1},
           "intensity": {"kind": "constant", "beta": 1}, "m": -3, "bogus": 1,
           "verify": {"cumulants": {"eps": 0.9}}}
    with pytest.raises(ConfigError) as e:
        parse_config(json.dumps(bad))
    text = " | ".join(e.value.violations)
    for needle in ("radius", "m:", "bogus", "seed required", "eps"):
        assert needle in text
    assert len(e.value.violations) >= 5


def test_syntax_error_position():
    with pytest.raises(ConfigError, match="line 2, column"):
        parse_config('{"domain": {"d": 1},\n  "m": }')


def test_rate_violation_is_warning():
    cfg = parse_config(json.dumps(dict(MINIMAL, intensity={"kind": "limit_plus_poly", "beta_limit": 1,
                                                           "a": 1, "q": 0.4})))
    assert any("q = 0.4" in w for w in cfg.warnings)


def test_round_trip():
    for name in sorted(os.listdir(CONFIGS)):
        cfg = load_config(os.path.join(CONFIGS, name))
        again = parse_config(cfg.to_json())
        assert again == cfg
        assert again.to_json() == cfg.to_json()


def test_radius_grid_file(tmp_path):
    (tmp_path / "r.json").write_text(json.dumps({"resolution": [2], "values": [0.1, 0.2]}))
    path = write(tmp_path, dict(MINIMAL, radius={"kind": "grid", "file": "r.json"}))
    cfg = load_config(path)
    assert cfg.model.radius.r_min == 0.1
    assert parse_config(cfg.to_json()) == cfg


def test_grid_must_refine_fields():
    bad = dict(MINIMAL, intensity={"kind": "constant", "beta": {"resolution": [3], "values": [1, 2, 3]}},
               grid={"resolution": [10]})
    with pytest.raises(ConfigError, match="does not refine"):
        parse_config(json.dumps(bad))


def test_simulate_writes_csv(tmp_path, capsys):
    path = write(tmp_path, dict(MINIMAL, replicates=3))
    out = tmp_path / "out"
    assert main(["simulate", "--config", path, "--out", str(out)]) == 0
    data = read_points_csv(str(out / "points.csv"))
    assert sorted(data) == [0, 1, 2] and all(p.shape == (100, 1) for p, _ in data.values())
    header = (out / "points.csv").read_text().splitlines()[0]
    assert header == "replicate,k,x1,attempts"


def test_simulate_seed_override_and_determinism(tmp_path):
    path = write(tmp_path, dict(MINIMAL, intensity={"kind": "limit_plus_exp", "beta_limit": 1,
                                                    "a": 1, "gamma": 1}))
    for sub, seed in (("a", "5"), ("b", "5"), ("c", "6")):
        assert main(["simulate", "--config", path, "--out", str(tmp_path / sub), "--seed", seed,
                     "--threads", "2"]) == 0
    a, b, c = ((tmp_path / s / "points.csv").read_bytes() for s in "abc")
    assert a == b and a != c


def test_simulate_points_round_trip_exactly(tmp_path):
    from csasim.sampler import simulate
    path = write(tmp_path, dict(MINIMAL, replicates=1))
    main(["simulate", "--config", path, "--out", str(tmp_path / "o")])
    pts, att = read_points_csv(str(tmp_path / "o" / "points.csv"))[0]
    st = simulate(load_config(path).model, 100, 1, 0)
    assert (pts == st.points).all() and (att == st.attempt_counts).all()


def test_verify_report_byte_identical(tmp_path):
    cfg = dict(MINIMAL, verify={"lln": {"m_list": [10, 100], "N": 20, "tol": 0.2}})
    path = write(tmp_path, cfg)
    for sub in ("a", "b"):
        assert main(["verify-lln", "--config", path, "--out", str(tmp_path / sub)]) == 0
    a, b = ((tmp_path / s / "lln.json").read_bytes() for s in "ab")
    assert a == b
    meta = json.loads((tmp_path / "a" / "lln.meta.json").read_text())
    assert "runtime_ms" in meta and "runtime_ms" not in json.loads(a)
    stats_lines = (tmp_path / "a" / "lln.stats.csv").read_text().splitlines()
    assert stats_lines[0] == "replicate,statistic,value" and len(stats_lines) == 41


def test_failing_verdict_exit_code(tmp_path):
    cfg = dict(MINIMAL, verify={"lln": {"m_list": [10, 100], "N": 20, "tol": 0.0}})
    assert main(["verify-lln", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 1


def test_cumulants_poly_refused(tmp_path, capsys):
    rc = main(["verify-cumulants", "--config", os.path.join(CONFIGS, "poly_2d_graded.json"),
               "--out", str(tmp_path)])
    assert rc == 2
    assert "exponential rate" in capsys.readouterr().err


def test_config_error_exit_code(tmp_path, capsys):
    bad = dict(MINIMAL)
    del bad["base_seed"]
    assert main(["simulate", "--config", write(tmp_path, bad)]) == 2
    assert "seed required" in capsys.readouterr().err


def test_emit_report_refuses_empty(tmp_path):
    from csasim.errors import Refusal
    from csasim.export import emit_report
    from csasim.verify import VerificationReport
    rep = VerificationReport("empty", {}, {}, {}, {}, 0)
    with pytest.raises(Refusal):
        emit_report(rep, str(tmp_path / "e.json"))


def test_report_with_warnings_keeps_array(tmp_path):
    from csasim.export import emit_report
    from csasim.verify import VerificationReport
    rep = VerificationReport("w", {}, {"x": 1.0}, {}, {"c": {"observed": "x", "op": "<", "value": 2}},
                             0, ["something to note"])
    emit_report(rep, str(tmp_path / "w.json"))
    body = json.loads((tmp_path / "w.json").read_text())
    assert body["warnings"] == ["something to note"] and body["verdict"]["overall"] == "PASS"


def test_replicates_override(tmp_path):
    cfg = load_config(os.path.join(CONFIGS, "exp_1d.json")).with_overrides(replicates=7)
    assert cfg.replicates == 7 and cfg.verify["clt"]["N"] == 7
