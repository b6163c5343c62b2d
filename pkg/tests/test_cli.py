import csv
import io
import json
import subprocess
import sys
from pathlib import Path

import pytest

from hsa import cli

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def _config(tmp_path, name="figure1_strongly_convex", **changes):
    cfg = json.loads((CONFIGS / f"{name}.json").read_text())
    for dotted, value in changes.items():
        section, key = dotted.split("__")
        cfg[section][key] = value
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def _rows(text):
    body = [line for line in text.splitlines() if not line.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(body))))


def test_bound_figure1(capsys):
    code, out, _ = _run(["bound", CONFIGS / "figure1_strongly_convex.json"], capsys)
    rec = json.loads(out)
    assert code == 0
    assert rec["epsilon"] < 1.0 and rec["epsilon"] <= rec["baselines"]["composition"]
    assert set(rec) >= {"epsilon", "alpha", "schedule", "baselines", "diagnostics", "manifest"}
    assert rec["manifest"]["subcommand"] == "bound"
    assert rec["dp"]["delta"] == 1e-5


def test_bound_lambda_zero_is_bad_input(tmp_path, capsys):
    path = _config(tmp_path, "figure1_nonconvex", assumptions__holder_lambda=0.0)
    code, _, err = _run(["bound", path], capsys)
    assert code == 2 and "holder_lambda out of (0,1]" in err


def test_bound_zero_horizon(tmp_path, capsys):
    code, out, _ = _run(["bound", _config(tmp_path, sgd__T=0)], capsys)
    assert code == 0 and json.loads(out)["epsilon"] == 0.0


@pytest.mark.parametrize("content, needle", [
    ("{not json", "not valid JSON"),
    ('{"assumptions": {}, "sgd": {}}', "required"),
])
def test_bad_config_files(tmp_path, capsys, content, needle):
    path = tmp_path / "bad.json"
    path.write_text(content)
    code, _, err = _run(["bound", path], capsys)
    assert code == 2 and needle in err


def test_missing_config(capsys):
    assert _run(["bound", "/nonexistent.json"], capsys)[0] == 2


def test_numerical_failure_exit_code(capsys, monkeypatch):
    from hsa import mechanisms

    def boom(*a, **k):
        raise mechanisms.NumericalError("forced", 1.0)

    monkeypatch.setattr(cli.optimizer, "compute_bound", boom)
    code, _, err = _run(["bound", CONFIGS / "figure1_convex.json"], capsys)
    assert code == 3 and "numerical failure" in err


def test_bound_multiple_alphas_and_csv(capsys):
    code, out, _ = _run(["bound", CONFIGS / "figure1_convex.json", "--alpha", "2,4,8",
                         "--delta", "1e-6"], capsys)
    rec = json.loads(out)
    assert code == 0 and len(rec["rdp_curve"]) == 3 and rec["dp"]["delta"] == 1e-6
    code, out, _ = _run(["bound", CONFIGS / "figure1_convex.json", "--format", "csv",
                         "--alpha", "2,4"], capsys)
    assert [r["axis_value"] for r in _rows(out)] == ["2", "4"]


def test_sweep_convex_T(capsys):
    code, out, _ = _run(["sweep", CONFIGS / "figure1_convex.json", "--values", "1,10,100,1000"],
                        capsys)
    assert code == 0
    header = [l for l in out.splitlines() if not l.startswith("#")][0]
    assert header == "axis_value,epsilon,composition,output_perturbation,tau,runtime_ms"
    rows = _rows(out)
    eps = [float(r["epsilon"]) for r in rows]
    assert len(rows) == 4 and all(a <= b for a, b in zip(eps, eps[1:]))
    assert eps[2] == eps[3]
    for r in rows:
        assert float(r["epsilon"]) <= min(float(r["composition"]),
                                          float(r["output_perturbation"])) + 1e-12
        assert r["runtime_ms"] == ""


def test_sweep_alpha_and_range(capsys):
    code, out, _ = _run(["sweep", CONFIGS / "figure1_strongly_convex.json", "--axis", "alpha",
                         "--values", "1.5,2,4,8"], capsys)
    eps = [float(r["epsilon"]) for r in _rows(out)]
    assert code == 0 and all(a <= b for a, b in zip(eps, eps[1:]))
    code, out, _ = _run(["sweep", CONFIGS / "figure1_convex.json", "--range", "1:5"], capsys)
    assert [r["axis_value"] for r in _rows(out)] == ["1", "2", "3", "4", "5"]


def test_sweep_errors(capsys):
    cfg = CONFIGS / "figure1_convex.json"
    assert _run(["sweep", cfg, "--values", ""], capsys)[0] == 2
    assert _run(["sweep", cfg], capsys)[0] == 2
    assert _run(["sweep", cfg, "--values", "1.5"], capsys)[0] == 2
    assert _run(["sweep", cfg, "--values", "1", "--range", "1:2"], capsys)[0] == 2


def test_sweep_json_and_timing(capsys, tmp_path):
    out_path = tmp_path / "s.json"
    code, _, _ = _run(["sweep", CONFIGS / "figure1_convex.json", "--values", "5",
                       "--format", "json", "--timing", "--output", out_path], capsys)
    rec = json.loads(out_path.read_text())
    assert code == 0 and rec["rows"][0]["runtime_ms"] > 0
    assert rec["manifest"]["output"] == str(out_path)


def _strip_timestamp(text):
    return "\n".join(l for l in text.splitlines() if not l.startswith("# timestamp"))


def test_sweep_byte_identical(tmp_path, capsys):
    path = tmp_path / "sweep.csv"
    outs = []
    for _ in range(2):
        argv = ["sweep", CONFIGS / "cyclic.json", "--values", "2,4,6", "--seed", "5",
                "--output", path]
        assert _run(argv, capsys)[0] == 0
        outs.append(_strip_timestamp(path.read_text()))
    assert outs[0] == outs[1]


def test_verify_default_and_negative_control(tmp_path, capsys):
    code, out, _ = _run(["verify", "--seed", "42"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["passed"] and not rep["failed"]
    kinds = {c["check"] for c in rep["checks"]}
    assert kinds == {"density", "coupling"}
    code, out, err = _run(["verify", "--seed", "42", "--scale-bound", "0.5"], capsys)
    assert code == 1 and "control_linear_tight" in err
    assert "control_linear_tight" in json.loads(out)["failed"]


def test_verify_bad_inputs(capsys):
    assert _run(["verify", "--trials", "0"], capsys)[0] == 2
    assert _run(["verify", "--scale-bound", "0"], capsys)[0] == 2


def test_verify_with_config_section(tmp_path, capsys):
    cfg = json.loads((CONFIGS / "figure1_convex.json").read_text())
    cfg["verify"] = {"num_toys": 2, "T_max": 4, "grid": 1024, "trials": 50}
    path = tmp_path / "v.json"
    path.write_text(json.dumps(cfg))
    code, out, _ = _run(["verify", path], capsys)
    rep = json.loads(out)
    assert code == 0 and len(rep["checks"]) == 2 * 2 + 2


def test_estimate_holder(capsys):
    code, out, _ = _run(["estimate-holder", "signed_cuberoot_grad"], capsys)
    assert code == 0 and "L_hat = 1.587" in out
    code, out, _ = _run(["estimate-holder", "linear", "--lambda", "1", "--slope", "3",
                         "--format", "json"], capsys)
    rec = json.loads(out)
    assert rec["estimate"] == pytest.approx(3.0) and rec["analytic"] == 3.0
    code, out, _ = _run(["estimate-holder", "abs_cuberoot_grad", "--format", "json"], capsys)
    rec = json.loads(out)
    assert rec["analytic"] == 1.0 and rec["estimate"] <= 1.0
    assert _run(["estimate-holder", "no_such_function"], capsys)[0] == 2
    assert _run(["estimate-holder", "linear", "--lambda", "0"], capsys)[0] == 2


def test_trace_command(capsys):
    code, out, _ = _run(["trace", CONFIGS / "cyclic.json", "--encounters", "1,3,4"], capsys)
    lines = [l for l in out.splitlines() if not l.startswith("#")]
    assert code == 0 and lines[0] == "t,D_t" and len(lines) == 1 + 7
    assert lines[3] == "2,0.2"
    code, _, _ = _run(["trace", CONFIGS / "cyclic.json", "--encounters", "0,1"], capsys)
    assert code == 2


def test_usage_errors(capsys):
    assert _run(["frobnicate"], capsys)[0] == 2
    assert _run([], capsys)[0] == 2


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "hsa", "--version"], capture_output=True,
                         text=True, check=True)
    assert out.stdout.startswith("hsa ")
