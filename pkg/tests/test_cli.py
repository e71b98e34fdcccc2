import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import PROBLEMS
from daecert.cli import EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_INPUT, EXIT_NOT_CONVERGED, EXIT_PASS, exit_code, main

AFFINE = str(PROBLEMS / "affine_algebraic.json")
LQ = str(PROBLEMS / "lq.json")


def write_cert(path, p=1.0, radius=None):
    t = np.linspace(0, 1, 51)
    d = {"mesh": t.tolist(), "x": [[v] for v in t], "u": [[1.0]] * 51, "p": [[p]] * 51, "lambda0": 1}
    if radius is not None:
        d["radius"] = radius
    path.write_text(json.dumps(d))
    return str(path)


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


class TestExitCodes:
    def test_pure_function_of_report(self):
        assert exit_code({"overall": "pass"}) == EXIT_PASS
        assert exit_code({"overall": "fail"}) == EXIT_FAIL
        assert exit_code({"outcome": "refuted"}) == EXIT_FAIL
        assert exit_code({"overall": "inconclusive"}) == EXIT_INCONCLUSIVE
        assert exit_code({"kind": "not-converged"}) == EXIT_NOT_CONVERGED

    def test_check_cq(self, capsys):
        code, out, _ = run(["check-cq", AFFINE], capsys)
        assert code == EXIT_PASS
        rep = json.loads(out)
        assert rep["outcome"] == "established" and rep["points"][0]["via"] == "Linear CQ"
        code, _, _ = run(["check-cq", str(PROBLEMS / "sedae_y2.json")], capsys)
        assert code == EXIT_FAIL
        code, _, _ = run(["check-cq", str(PROBLEMS / "dimension_cap.json")], capsys)
        assert code == EXIT_INCONCLUSIVE

    def test_verify(self, tmp_path, capsys):
        assert run(["verify", LQ, write_cert(tmp_path / "a.json")], capsys)[0] == EXIT_PASS
        code, out, _ = run(["verify", LQ, write_cert(tmp_path / "b.json", p=-1.0)], capsys)
        assert code == EXIT_FAIL
        assert json.loads(out)["conditions"][4]["details"]["witness"]["margin"] > 1
        assert run(["verify", LQ, write_cert(tmp_path / "c.json", radius=1e-13)], capsys)[0] == EXIT_INCONCLUSIVE

    def test_lambda0_both(self, tmp_path, capsys):
        code, out, _ = run(["verify", LQ, write_cert(tmp_path / "a.json"), "--lambda0", "both"], capsys)
        rep = json.loads(out)
        assert code == EXIT_PASS and rep["kind"] == "verify-both"
        assert [r["lambda0"] for r in rep["reports"]] == [0, 1]

    def test_solve_then_verify(self, tmp_path, capsys):
        out = tmp_path / "lq.report.json"
        code, _, _ = run(["solve", LQ, "--mesh-n", "20", "--out", str(out)], capsys)
        assert code == EXIT_PASS
        cert = tmp_path / "lq.report.certificate.json"
        assert cert.exists()
        assert run(["verify", LQ, str(cert)], capsys)[0] == EXIT_PASS

    def test_not_converged(self, tmp_path, capsys):
        prob = tmp_path / "far.json"
        prob.write_text(json.dumps({"variables": {"x": 1, "u": 1}, "dynamics": ["u"],
                                    "control_set": "box([-1], [1])", "endpoint_set": "point([0, 5])"}))
        code, out, _ = run(["solve", str(prob), "--mesh-n", "10"], capsys)
        assert code == EXIT_NOT_CONVERGED
        assert json.loads(out)["kind"] == "not-converged"

    @pytest.mark.parametrize("argv", [
        [],
        ["bogus"],
        ["check-cq", "missing.json"],
        ["check-cq", AFFINE, "--point", "[0, 0]"],
        ["check-cq", AFFINE, "--point", "[0, 0, 1]"],
        ["solve", LQ, "--mesh-n", "1"],
        ["verify", LQ, "--tol-euler", "-1"],
        ["report"],
    ])
    def test_input_errors(self, argv, capsys):
        assert run(argv, capsys)[0] == EXIT_INPUT

    def test_certificate_dimension_mismatch(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"mesh": [0, 0.5, 1], "x": [[0, 0]] * 3, "u": [[0]] * 3, "p": [[0, 0]] * 3}))
        code, _, err = run(["verify", LQ, str(path)], capsys)
        assert code == EXIT_INPUT and "n_x" in err


class TestReports:
    def test_byte_identical(self, tmp_path, capsys):
        cert = write_cert(tmp_path / "c.json", p=-1.0)
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        run(["verify", LQ, cert, "--seed", "4", "--out", str(a)], capsys)
        run(["verify", LQ, cert, "--seed", "4", "--out", str(b)], capsys)
        assert a.read_bytes() == b.read_bytes()
        report = json.loads(a.read_text())
        assert report["tolerances"]["weierstrass"] == 1e-6

    def test_table(self, tmp_path, capsys):
        good, bad, cq = tmp_path / "good.json", tmp_path / "bad.json", tmp_path / "cq.json"
        run(["verify", LQ, write_cert(tmp_path / "g.json"), "--out", str(good)], capsys)
        run(["verify", LQ, write_cert(tmp_path / "b.json", p=-1.0), "--out", str(bad)], capsys)
        run(["check-cq", AFFINE, "--out", str(cq)], capsys)
        code, out, _ = run(["report", str(good), str(bad), str(cq)], capsys)
        assert code == EXIT_FAIL
        lines = out.splitlines()
        assert lines[0].split() == ["report", "condition", "status", "worst", "location"]
        assert "FAIL" in lines[2]  # worst rows first
        assert any("N/A" in line for line in lines)

    def test_module_entry_point(self, tmp_path):
        out = subprocess.run([sys.executable, "-m", "daecert", "check-cq", AFFINE],
                             capture_output=True, text=True)
        assert out.returncode == 0
        assert json.loads(out.stdout)["kind"] == "check-cq"
