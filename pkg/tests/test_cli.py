import json
import math

import pytest

from cmsrepp.cli import main
from cmsrepp.measure_scaling import pareto_constant


def _run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr()


def test_classify_lines(capsys):
    code, out = _run(capsys, "classify", "--model", "hoc_fixed", "--point", "fixed_0")
    assert code == 0 and out.out.startswith("periodic q=1, theta=0.700, predicted CFPP")
    code, out = _run(capsys, "classify", "--model", "hoc", "--point", "x_up")
    assert code == 0 and out.out.startswith("finitely recurrent, predicted delay pareto")
    code, out = _run(capsys, "classify", "--model", "hoc", "--point", "heights_1_2")
    assert out.out.startswith("infinitely recurrent, predicted FPP")


def test_classify_unknown_point(capsys):
    code, out = _run(capsys, "classify", "--model", "hoc", "--point", "nowhere")
    assert code == 2 and "error" in out.err


def test_pressure_values(capsys):
    code, out = _run(capsys, "pressure", "--model", "bernoulli", "--n-max", "30")
    assert code == 0
    assert abs(float(out.out.split()[2])) <= 1e-6
    code, out = _run(capsys, "pressure", "--model", "bernoulli", "--potential", "zero")
    assert float(out.out.split()[2]) == pytest.approx(math.log(2), abs=1e-6)


def test_realize_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"kind": "pareto", "parameters": {"alpha": 0.5, "lam": 2 * pareto_constant(0.5)}}))
    code, out = _run(capsys, "realize", "--target", str(bad), "--levels", "2")
    assert code == 3 and "G_alpha" in out.err
    good = tmp_path / "good.json"
    good.write_text(json.dumps({"kind": "pareto", "parameters": {"alpha": 0.5, "lam": 0.5 * pareto_constant(0.5)}}))
    code, out = _run(capsys, "realize", "--target", str(good), "--levels", "3", "--out", str(tmp_path / "r"))
    assert code == 0
    assert (tmp_path / "r" / "realizer_plan.json").exists() and (tmp_path / "r" / "model.json").exists()


def test_validate_outputs_are_deterministic(tmp_path, capsys):
    args = ["validate", "--model", "hoc_fixed", "--point", "fixed_0", "--n", "6", "--replicas", "2000",
            "--seed", "5"]
    code_a, _ = _run(capsys, *args, "--out", str(tmp_path / "a"))
    code_b, _ = _run(capsys, *args, "--out", str(tmp_path / "b"))
    assert code_a == code_b == 0
    for name in ("report.json", "curves.csv", "sample.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert json.loads((tmp_path / "a" / "timing.json").read_text())["seconds"] >= 0


def test_validate_needs_seed(capsys):
    code, out = _run(capsys, "validate", "--model", "hoc", "--point", "x_up")
    assert code == 2 and "seed" in out.err


def test_validate_fail_exit(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    # a tolerance nobody can meet forces the failing verdict path
    cfg.write_text(json.dumps({"model": "hoc", "point": "heights_1_2", "n": [4], "replicas": 300, "seed": 1,
                               "self_test": False, "tolerances": {"ks": 1e-9}}))
    code, out = _run(capsys, "validate", "--config", str(cfg))
    assert code == 1 and "verdict: FAIL" in out.out
