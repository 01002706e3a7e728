import json
from pathlib import Path

import numpy as np
import pytest

from metriplectic import cli

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def run(args, out_dir):
    return cli.main(args + ["--out-dir", str(out_dir)])


def read_json(path):
    return json.loads(Path(path).read_text())


def write_doc(tmp_path, name, doc):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def bad_casimir_doc():
    return {
        "dimension": 3,
        "poisson": [["0", "-x3", "x2"], ["x3", "0", "-x1"], ["-x2", "x1", "0"]],
        "hamiltonian": "x1^2/6 + x2^2/4 + x3^2/2",
        "casimirs": ["x1"],
        "phi": "s1",
    }


def diverging_doc():
    # planar system with dx1/dt = 1 + x1^2: finite-time blowup
    return {
        "dimension": 2,
        "poisson": [["0", "1 + x1^2"], ["-1 - x1^2", "0"]],
        "hamiltonian": "x2",
    }


# ---------------------------------------------------------------------------
# verify

def test_verify_builtin_passes(tmp_path):
    assert run(["verify", "--system", "rigid-body"], tmp_path) == 0
    report = read_json(tmp_path / "verify_report.json")
    assert report["pass"] is True
    assert report["m1_max"] <= 1e-10
    assert report["m2_max"] <= 1e-10
    assert report["m3_max_positive"] <= 1e-10
    assert report["seed"] == 42
    manifest = read_json(tmp_path / "run_manifest.json")
    assert manifest["command"] == "verify"
    assert manifest["seed"] == 42


def test_verify_bad_casimir_config_fails(tmp_path):
    path = write_doc(tmp_path, "bad.json", bad_casimir_doc())
    assert run(["verify", "--config", str(path)], tmp_path) == 1
    report = read_json(tmp_path / "verify_report.json")
    assert report["pass"] is False
    assert report["m1_max"] >= 1.0
    assert report["failed_conditions"] == ["m1"]
    worst = report["worst_points"]["m1"]
    assert len(worst) == 3  # the point where the residual peaked


def test_verify_unknown_system(tmp_path):
    assert run(["verify", "--system", "nosuch"], tmp_path) == 2


def test_verify_with_params(tmp_path):
    assert run(["verify", "--params", "I1=5,I2=3,I3=2,M0=2"], tmp_path) == 0


def test_verify_bad_params(tmp_path):
    assert run(["verify", "--params", "I1=1,I2=2,I3=3"], tmp_path) == 2
    assert run(["verify", "--params", "bogus=1"], tmp_path) == 2


# ---------------------------------------------------------------------------
# equilibrium

def test_equilibrium_stable_point(tmp_path):
    assert run(["equilibrium", "--point", "1,0,0"], tmp_path) == 0
    report = read_json(tmp_path / "equilibrium_report.json")
    assert report["is_conservative_equilibrium"] is True
    assert report["is_metriplectic_equilibrium"] is True
    assert report["dependence"]["dependent"] is True
    assert report["lyapunov"]["positive_definite"] is True
    assert report["lyapunov"]["eigenvalues"] == pytest.approx([1 / 6, 2 / 3, 2.0], abs=1e-6)


def test_equilibrium_generic_point(tmp_path):
    assert run(["equilibrium", "--point", "1,1,1"], tmp_path) == 0
    report = read_json(tmp_path / "equilibrium_report.json")
    assert report["is_conservative_equilibrium"] is False
    assert report["field_norms"]["conservative"] == pytest.approx(2 / 3, rel=1e-12)


def test_equilibrium_origin(tmp_path):
    assert run(["equilibrium", "--point", "0,0,0"], tmp_path) == 0
    report = read_json(tmp_path / "equilibrium_report.json")
    assert report["is_conservative_equilibrium"] is True
    assert report["lyapunov"]["grad_norm"] == 0.0
    assert report["lyapunov"]["positive_definite"] is False


def test_equilibrium_dimension_mismatch(tmp_path):
    assert run(["equilibrium", "--point", "1,0"], tmp_path) == 2


# ---------------------------------------------------------------------------
# simulate

def test_simulate_conservative_drift(tmp_path):
    code = run(
        ["simulate", "--field", "conservative", "--x0", "1,1,1", "--t1", "10", "--h", "1e-3"],
        tmp_path,
    )
    assert code == 0
    summary = read_json(tmp_path / "simulate_summary.json")
    assert summary["energy_drift_max"] <= 1e-8
    assert summary["status"] == "completed"
    csv = (tmp_path / "trajectory.csv").read_text()
    header = csv.splitlines()[0]
    assert header == "t,x1,x2,x3,H,phiC,entropy_production,dependence_defect"
    assert len(csv.splitlines()) == 10001 + 1


def test_simulate_deterministic_output(tmp_path):
    a_dir = tmp_path / "a"
    b_dir = tmp_path / "b"
    args = ["simulate", "--x0", "1.01,0.05,-0.03", "--t1", "2", "--h", "1e-3"]
    assert run(list(args), a_dir) == 0
    assert run(list(args), b_dir) == 0
    assert (a_dir / "trajectory.csv").read_bytes() == (b_dir / "trajectory.csv").read_bytes()


def test_simulate_analyze(tmp_path):
    code = run(
        ["simulate", "--x0", "1.01,0.05,-0.03", "--t1", "50", "--h", "1e-3", "--analyze"],
        tmp_path,
    )
    assert code == 0
    summary = read_json(tmp_path / "simulate_summary.json")
    assert summary["entropy_increase_count"] == 0
    assert summary["lasalle"]["monotone_violations"] == 0


def test_simulate_dimension_mismatch(tmp_path):
    assert run(["simulate", "--x0", "1,1", "--t1", "1"], tmp_path) == 2


def test_simulate_divergence_flushes_partial(tmp_path):
    path = write_doc(tmp_path, "divergent.json", diverging_doc())
    code = run(
        ["simulate", "--config", str(path), "--x0", "0,0", "--t1", "2", "--h", "1e-3"],
        tmp_path,
    )
    assert code == 3
    summary = read_json(tmp_path / "simulate_summary.json")
    assert summary["status"] == "diverged"
    lines = (tmp_path / "trajectory.csv").read_text().splitlines()
    assert len(lines) > 100  # partial trajectory flushed
    assert lines[0].startswith("t,x1,x2,")


def test_simulate_escape_guard(tmp_path):
    code = run(
        [
            "simulate", "--field", "conservative", "--x0", "1,1,1", "--t1", "50",
            "--h", "1e-2", "--guard-center", "1,1,1", "--guard-radius", "0.5",
        ],
        tmp_path,
    )
    assert code == 3
    summary = read_json(tmp_path / "simulate_summary.json")
    assert summary["status"] == "escaped"


def test_simulate_stride(tmp_path):
    code = run(
        ["simulate", "--x0", "1,1,1", "--t1", "1", "--h", "1e-3", "--stride", "100"],
        tmp_path,
    )
    assert code == 0
    lines = (tmp_path / "trajectory.csv").read_text().splitlines()
    assert len(lines) == 1 + 11  # header + samples at 0,100,...,1000


def test_simulate_adaptive(tmp_path):
    code = run(
        ["simulate", "--field", "conservative", "--x0", "1,1,1", "--t1", "2", "--adaptive",
         "--h", "1e-2", "--abs-tol", "1e-10", "--rel-tol", "1e-10"],
        tmp_path,
    )
    assert code == 0
    summary = read_json(tmp_path / "simulate_summary.json")
    assert summary["status"] == "completed"


def test_simulate_config_analyze_needs_xe(tmp_path):
    path = write_doc(tmp_path, "ok.json", json.loads((CONFIG_DIR / "rigid_body.json").read_text()))
    code = run(
        ["simulate", "--config", str(path), "--x0", "1.01,0.05,-0.03", "--t1", "1", "--analyze"],
        tmp_path,
    )
    assert code == 2
    code = run(
        ["simulate", "--config", str(path), "--x0", "1.01,0.05,-0.03", "--t1", "1",
         "--analyze", "--x-e", "1,0,0"],
        tmp_path,
    )
    assert code == 0


# ---------------------------------------------------------------------------
# CSV format details

def test_csv_17_significant_digits_round_trip(tmp_path):
    run(["simulate", "--x0", "1.01,0.05,-0.03", "--t1", "0.01", "--h", "1e-2"], tmp_path)
    lines = (tmp_path / "trajectory.csv").read_text().splitlines()
    assert lines[1].split(",")[1] == f"{1.01:.17g}"
    for line in lines[1:]:
        for cell in line.split(","):
            value = float(cell)  # every cell reparses to the exact double
            assert np.isfinite(value)
            assert f"{value:.17g}" == cell


def test_usage_error_exit_code():
    assert cli.main(["simulate"]) == 2  # missing required --x0/--t1
    assert cli.main([]) == 2
