import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ablab.cli import main, run
from ablab.config import ExperimentConfig, GridSpec, LambdaSpec, MCSpec, OperatorSpec
from ablab.errors import ConfigInvalid, StageError
from ablab.seeding import derive_seed


def small(tmp_path, **kw):
    base = dict(
        lambda_spec=LambdaSpec(None, (-1, 4, 1), ("1/5", "3/10")),
        grid=GridSpec(-1.0, 1.0, 5),
        mc=MCSpec(steps=20_000, samples=4, sites=300, ell=20, op_n_max=48, window_step=0.02),
        operator=OperatorSpec(n_max=32, M=None, K_list=(2, 4, 8)),
        outdir=str(tmp_path),
    )
    base.update(kw)
    return ExperimentConfig(**base)


def test_config_round_trip():
    c = ExperimentConfig()
    assert ExperimentConfig.from_json(c.to_json()) == c
    c2 = c.replace(lambda_spec=LambdaSpec(0.5), seed=2**63)
    assert ExperimentConfig.from_dict(json.loads(c2.to_json())) == c2


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 0.99), st.floats(0.01, 0.49), st.integers(0, 2**64 - 1), st.integers(1, 8))
def test_config_round_trip_property(lam, tau, seed, threads):
    c = ExperimentConfig(lambda_spec=LambdaSpec(lam), tau=tau, seed=seed, threads=threads)
    assert ExperimentConfig.from_json(c.to_json()) == c


def test_config_field_errors():
    with pytest.raises(ConfigInvalid) as ei:
        ExperimentConfig.from_dict({"tau": 0.7, "delta": -1.0, "grid": {"count": "x"}, "bogus": 1})
    f = ei.value.fields
    assert set(f) >= {"tau", "grid.count", "bogus"}
    with pytest.raises(ConfigInvalid) as ei:
        ExperimentConfig.from_dict({"grid": {"lo": -1.95, "hi": 1.0, "count": 3}})
    assert "grid" in ei.value.fields
    with pytest.raises(ConfigInvalid):
        ExperimentConfig.from_json("[1, 2]")
    with pytest.raises(ConfigInvalid):
        ExperimentConfig.from_dict({"lambda_spec": {"min_poly": [-1, 0, 1], "interval": ["1/2", "3/2"]}})


def test_seed_derivation_is_stable():
    a = derive_seed(7, 3, "ids")
    assert a == derive_seed(7, 3, "ids")
    assert a != derive_seed(7, 4, "ids") and a != derive_seed(7, 3, "lyapunov") and a != derive_seed(8, 3, "ids")


def test_check_lambda(tmp_path):
    rep = run("check-lambda", small(tmp_path))
    doc = json.loads((tmp_path / "check_lambda.json").read_text())
    assert doc["all_ok"] and rep.metrics["all_ok"]
    assert all(doc["hypothesis"][k] for k in ("degree_ok", "height_ok", "conjugate_ok", "brenner_ok"))
    assert (tmp_path / "run_check_lambda.json").exists()


def test_free_cert(tmp_path):
    rep = run("free-cert", small(tmp_path).replace(lambda_spec=LambdaSpec(0.5)))
    assert rep.metrics["status"] == "collision_found"


def test_spectrum_free_case(tmp_path):
    cfg = small(tmp_path, lambda_spec=LambdaSpec(0.0), grid=GridSpec(-1.8, 1.8, 21),
                mc=MCSpec(steps=10**6, samples=4, sites=300, ell=20, op_n_max=48, window_step=0.02))
    run("spectrum", cfg)
    lines = (tmp_path / "spectrum.csv").read_bytes().split(b"\n")
    assert lines[0] == b"E,L_mc,L_mc_se,L_op,L_op_resid,N,N_se,alpha0"
    assert lines[-1] == b"" and b"\r" not in b"".join(lines)
    rows = [l.split(b",") for l in lines[1:-1]]
    assert len(rows) == 21
    assert all(abs(float(r[1])) <= 5e-3 for r in rows)


def test_spectrum_is_byte_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run("spectrum", small(a))
    run("spectrum", small(b))
    assert (a / "spectrum.csv").read_bytes() == (b / "spectrum.csv").read_bytes()
    run("spectrum", small(b, seed=1))
    assert (a / "spectrum.csv").read_bytes() != (b / "spectrum.csv").read_bytes()


def test_gap_and_cache_hit(tmp_path, caplog, monkeypatch):
    monkeypatch.delenv("ABLAB_CACHE_DIR", raising=False)
    cfg = small(tmp_path)
    r1 = run("gap", cfg)
    with caplog.at_level("INFO", logger="ablab.cache"):
        r2 = run("gap", cfg)
    assert r1.metrics["cache_hits"] == 0 and r2.metrics["cache_hits"] == 1
    assert "cache hit" in caplog.text
    assert (tmp_path / "gap.csv").read_text().startswith("K,norm,half_norm,sensitivity,iterations\n")


def test_other_stages_and_report(tmp_path):
    cfg = small(tmp_path).replace(
        measure=ExperimentConfig().measure.__class__(n_max=64, n_samples=20_000, compare_n=8),
        smoothing=ExperimentConfig().smoothing.__class__(ks=(3,), m_max=20, ell=10, deviation_ell=40,
                                                         n_max=64, derivative_n_max=48),
        bernoulli=ExperimentConfig().bernoulli.__class__(n_max=64))
    for sub in ("bernoulli", "measure", "smoothing"):
        run(sub, cfg)
    rep = run("report", cfg)
    doc = json.loads((tmp_path / "report.json").read_text())
    assert {"bernoulli.json", "measure.json", "smoothing.json"} <= set(doc["artifacts"])
    assert rep.metrics["n_artifacts"] >= 3


def test_report_on_empty_dir(tmp_path):
    with pytest.raises(ConfigInvalid, match="no artifacts found"):
        run("report", small(tmp_path / "empty"))


def test_stage_error_carries_name(tmp_path):
    # E outside (-2, 2) is rejected when the operator is built
    cfg = small(tmp_path).replace(operator=OperatorSpec(n_max=8, M=None, K_list=(2,), E=2.5))
    with pytest.raises(StageError) as ei:
        run("gap", cfg)
    assert ei.value.stage in ("build", "gap")


def test_main_exit_codes(tmp_path, capsys):
    assert main(["check-lambda", "--outdir", str(tmp_path)]) == 0
    assert json.loads(capsys.readouterr().out)["all_ok"] is True
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"tau": 0.6}))
    assert main(["check-lambda", "--config", str(bad), "--outdir", str(tmp_path)]) == 2
    assert main(["report", "--outdir", str(tmp_path / "nothing")]) == 2
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"operator": {"E": 2.5, "n_max": 8, "M": None, "K_list": [2]}}))
    assert main(["gap", "--config", str(cfg), "--outdir", str(tmp_path)]) == 3
    assert main(["check-lambda", "--config", str(tmp_path / "missing.json")]) == 2


def test_module_entry_point(tmp_path):
    import subprocess
    import sys
    out = subprocess.run([sys.executable, "-m", "ablab", "check-lambda", "--outdir", str(tmp_path)],
                         capture_output=True, text=True, check=False)
    assert out.returncode == 0, out.stderr
    assert (tmp_path / "check_lambda.json").exists()
