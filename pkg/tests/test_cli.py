import csv
import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st

from khessian.cli import main
from khessian.config import ConfigError, load_config
from khessian.reporting import OUT_ENV, format_float, resolve_out_dir, to_json

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _write(tmp_path, text, name="run.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _report(out):
    return json.loads((Path(out) / "report.json").read_text())


# -- exit codes

@pytest.mark.parametrize("name", ["symfunc", "cone", "cone_sample", "fieldop", "measure_atom",
                                  "measure_weak", "estimate_cases", "estimate_holder",
                                  "dirichlet_manufactured", "dirichlet_measure"])
def test_shipped_configs_succeed(name, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["--config", str(CONFIGS / f"{name}.yaml"), "--out", str(out)]) == 0
    rep = _report(out)
    assert rep["status"] == {"exit_code": 0, "failures": []}
    assert "report written to" in capsys.readouterr().out


def test_verdict_failure_exits_two(tmp_path, capsys):
    cfg = _write(tmp_path, "command: cone\nparams:\n  k: 2\n  lams:\n    - [1, 1, 1]\n  expect: [out]\n")
    out = tmp_path / "out"
    assert main(["--config", cfg, "--out", str(out)]) == 2
    assert "verdict failure: tuple 0: expected out, got in" in capsys.readouterr().err
    rep = _report(out)
    assert rep["status"]["exit_code"] == 2
    assert rep["payload"]["tuples"][0]["margin"] == 3.0


def test_shipped_bad_config_is_line_anchored(tmp_path, capsys):
    cfg = CONFIGS / "bad_order.yaml"
    assert main(["--config", str(cfg), "--out", str(tmp_path / "out")]) == 1
    err = capsys.readouterr().err
    assert f"{cfg}:5: params.k:" in err
    assert not (tmp_path / "out").exists()


@pytest.mark.parametrize("text,line,fragment", [
    ("command: cone\nparams:\n  k: 2\n  lams: [[1, 1, 1]]\n  colour: red\n", 5, "params.colour: unknown key"),
    ("command: cone\nparams:\n  k: two\n  lams: [[1, 1, 1]]\n", 3, "params.k: expected an integer"),
    ("command: cone\nparams:\n  k: [2\n", 4, "invalid YAML"),
    ("command: plot\n", 1, "command"),
    ("command: cone\nseed: -3\nparams:\n  k: 2\n  lams: [[1, 1, 1]]\n", 2, "seed"),
])
def test_config_errors_name_the_line(tmp_path, capsys, text, line, fragment):
    cfg = _write(tmp_path, text)
    assert main(["--config", cfg, "--out", str(tmp_path / "out")]) == 1
    err = capsys.readouterr().err
    assert f"{cfg}:{line}: " in err and fragment in err


def test_usage_errors(tmp_path, capsys):
    cfg = _write(tmp_path, "command: cone\nparams:\n  k: 2\n  lams: [[1, 1, 1]]\n")
    assert main([]) == 1
    assert main(["--config", cfg, "--jobs", "0"]) == 1
    assert main(["--config", cfg, "--seed", "-1"]) == 1
    assert main(["--config", str(tmp_path / "missing.yaml")]) == 1
    assert main(["symfunc", "--config", cfg]) == 1
    assert "file says 'cone' but 'symfunc'" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        main(["--bogus"])
    assert exc.value.code == 1


def test_list_prints_the_catalog(capsys):
    assert main(["--list"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "8 acceptance criteria"
    ids = [ln.split(":")[0] for ln in lines[1:] if not ln.startswith(" ")]
    assert ids == ["algebra", "cones", "operators", "atoms", "weak_continuity",
                   "estimates", "pl_convexity", "dirichlet"]


# -- outputs

def test_out_directory_precedence(tmp_path, monkeypatch):
    monkeypatch.delenv(OUT_ENV, raising=False)
    assert resolve_out_dir(None, None) == Path("results")
    assert resolve_out_dir(None, "cfg") == Path("cfg")
    monkeypatch.setenv(OUT_ENV, "env")
    assert resolve_out_dir(None, "cfg") == Path("env")
    assert resolve_out_dir("flag", "cfg") == Path("flag")


def test_environment_directory_used_by_main(tmp_path, monkeypatch):
    env_dir = tmp_path / "from_env"
    monkeypatch.setenv(OUT_ENV, str(env_dir))
    cfg = _write(tmp_path, f"command: cone\nout: {tmp_path / 'from_cfg'}\nparams:\n"
                           "  k: 2\n  lams: [[1, 1, 1]]\n")
    assert main(["--config", cfg]) == 0
    assert (env_dir / "report.json").exists() and not (tmp_path / "from_cfg").exists()


def test_report_metadata_and_csv_hash(tmp_path):
    cfg = _write(tmp_path, "command: cone\nparams:\n  k: 2\n  lams: [[1, 1, 1], [-2, 1, 1]]\n")
    out = tmp_path / "out"
    assert main(["--config", cfg, "--out", str(out), "--seed", "5"]) == 0
    meta = _report(out)["metadata"]
    assert meta["seed"] == 5 and meta["command"] == "cone"
    assert len(meta["config_sha256"]) == 64
    assert set(meta["versions"]) >= {"khessian", "numpy", "scipy"}
    with open(out / "cone.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2 and all(r["config_sha256"] == meta["config_sha256"] for r in rows)


def _payload(out):
    return _report(out)["payload"]


def test_parallel_estimates_match_sequential(tmp_path):
    cfg = str(CONFIGS / "estimate_cases.yaml")
    assert main(["--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["--config", cfg, "--out", str(tmp_path / "b"), "--jobs", "3"]) == 0
    assert _payload(tmp_path / "a") == _payload(tmp_path / "b")


def test_parallel_suite_subset_matches_sequential(tmp_path, capsys):
    cfg = _write(tmp_path, "command: suite\nparams:\n  only: [algebra, cones]\n")
    assert main(["--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["--config", cfg, "--out", str(tmp_path / "b"), "--jobs", "2"]) == 0
    assert _payload(tmp_path / "a") == _payload(tmp_path / "b")
    assert "2/2 criteria pass" in capsys.readouterr().out
    bad = _write(tmp_path, "command: suite\nparams:\n  only: [algebra, plots]\n", "bad.yaml")
    assert main(["--config", bad, "--out", str(tmp_path / "c")]) == 1


def test_seeded_sampling_is_reproducible(tmp_path):
    cfg = str(CONFIGS / "cone_sample.yaml")
    for d in ("a", "b"):
        assert main(["--config", cfg, "--out", str(tmp_path / d)]) == 0
    assert _payload(tmp_path / "a") == _payload(tmp_path / "b")


# -- config loader and serialization

def test_load_config_defaults_and_seed_override(tmp_path):
    cfg = _write(tmp_path, "command: symfunc\nparams:\n  lams: [[1, 2]]\n")
    run = load_config(cfg)
    assert run.seed == 0 and run.out is None and run.command == "symfunc"
    assert load_config(cfg, seed=9).seed == 9
    with pytest.raises(ConfigError, match="empty"):
        load_config(_write(tmp_path, "", "empty.yaml"))


# 2^-70 = 8.47032947254300339068...e-22 exactly
@pytest.mark.parametrize("x,s", [(1.0, "1.0"), (0.1, "0.10000000000000001"), (-0.25, "-0.25"),
                                 (2.0 ** -70, "8.4703294725430034e-22"), (3.0e20, "3e+20"),
                                 (float("inf"), "inf")])
def test_format_float(x, s):
    assert format_float(x) == s


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_json_floats_round_trip_exactly(x):
    assert json.loads(to_json({"x": x}))["x"] == x


def test_json_nonfinite_and_numpy_values():
    doc = json.loads(to_json({"a": np.array([1.5, np.nan]), "b": np.int64(3), "c": (np.True_, None)}))
    assert doc == {"a": [1.5, None], "b": 3, "c": [True, None]}
