import json
import math

import pytest

from focklattice.cli import main


def run(tmp_path, job, cmd, extra=None, name="job.json"):
    path = tmp_path / name
    path.write_text(json.dumps(job))
    out = tmp_path / "out.json"
    argv = [cmd, "--input", str(path), "--output", str(out)]
    if extra:
        argv = argv[:1] + extra + argv[1:]
    rc = main(argv)
    report = json.loads(out.read_text()) if out.exists() else None
    return rc, report


BASE = {
    "weight": {"kind": "classical"},
    "lattice": {"kind": "square", "R": 10},
    "multiplier": {"kind": "builtin_sigma"},
}


class TestTraceCheck:
    def test_gaussian_job(self, tmp_path):
        job = dict(BASE, values={"kind": "gaussian_trace", "w": [0.3, 0.1]}, p=2)
        rc, rep = run(tmp_path, job, "trace-check")
        assert rc == 0
        assert rep["results"]["branch"]["case"] == "p=2"
        assert rep["results"]["branch"]["conditions"] == ["a", "b"]
        conds = {r["condition"] for r in rep["results"]["reports"]}
        assert conds == {"a", "b"}
        assert all(len(r["trajectory"]) > 0 for r in rep["results"]["reports"])

    def test_zero_job_bounded(self, tmp_path):
        job = dict(BASE, values={"kind": "zero"}, p="inf")
        rc, rep = run(tmp_path, job, "trace-check")
        assert rc == 0
        assert rep["results"]["overall"] == "bounded"

    def test_value_list_and_p1(self, tmp_path):
        items = [{"index": 0, "re": 1.0, "im": 0.0},
                 {"index": 3, "re": 0.0, "im": -2.0}]
        job = dict(BASE, values={"kind": "list", "items": items}, p=1)
        rc, rep = run(tmp_path, job, "trace-check")
        assert rc == 0
        assert rep["results"]["branch"]["conditions"] == ["a", "b", "c"]

    def test_schema_error_exit_code(self, tmp_path):
        job = dict(BASE, values={"kind": "gaussian_trace", "w": [0.0, 0.0]},
                   p=0.5)
        rc, _ = run(tmp_path, job, "trace-check")
        assert rc == 2

    def test_bad_lattice_kind(self, tmp_path):
        job = dict(BASE, lattice={"kind": "hexagonal"}, values={"kind": "zero"})
        rc, _ = run(tmp_path, job, "trace-check")
        assert rc == 2

    def test_determinism(self, tmp_path):
        job = dict(BASE, values={"kind": "gaussian_trace", "w": [0.2, 0.0]}, p=2)
        p1 = tmp_path / "a.json"
        p2 = tmp_path / "b.json"
        (tmp_path / "job.json").write_text(json.dumps(job))
        assert main(["trace-check", "--input", str(tmp_path / "job.json"),
                     "--output", str(p1)]) == 0
        assert main(["trace-check", "--input", str(tmp_path / "job.json"),
                     "--output", str(p2)]) == 0
        a, b = json.loads(p1.read_text()), json.loads(p2.read_text())
        a.pop("timing_s"), b.pop("timing_s")
        assert a == b


class TestOtherCommands:
    def test_lattice_info(self, tmp_path):
        rc, rep = run(tmp_path, dict(BASE), "lattice-info")
        assert rc == 0
        res = rep["results"]
        assert res["delta_sep"] == pytest.approx(4.4429, abs=1e-3)
        assert res["upper_density"] == pytest.approx(1 / (2 * math.pi), rel=0.1)

    def test_sigma_eval_grid(self, tmp_path):
        path = tmp_path / "job.json"
        path.write_text(json.dumps(dict(BASE, grid={"half_width": 1.0, "n": 8})))
        grid = tmp_path / "g.csv"
        rc = main(["sigma-eval", "--input", str(path), "--grid", str(grid),
                   "--output", str(tmp_path / "o.json")])
        assert rc == 0
        lines = grid.read_text().strip().splitlines()
        assert lines[0] == "x,y,weighted_mag"
        assert len(lines) == 65

    def test_reconstruct_residual(self, tmp_path):
        path = tmp_path / "job.json"
        job = dict(BASE, values={"kind": "gaussian_trace", "w": [0.2, -0.1]},
                   p=2, grid={"half_width": 2.0, "n": 8}, verify_points=20)
        path.write_text(json.dumps(job))
        out = tmp_path / "r.json"
        rc = main(["reconstruct", "--input", str(path),
                   "--grid", str(tmp_path / "rg.csv"), "--output", str(out)])
        assert rc == 0
        rep = json.loads(out.read_text())
        assert rep["results"]["max_weighted_residual"] <= 1e-3

    def test_ap_probe_classical(self, tmp_path):
        job = {"weight": {"kind": "classical"}, "p": 1.5}
        rc, rep = run(tmp_path, job, "ap-probe")
        assert rc == 0
        assert rep["results"]["is_ap"] is True

    def test_ap_probe_power_failure(self, tmp_path):
        job = {"weight": {"kind": "power", "gamma": 5.0, "rho_origin": 2.0},
               "p": 4.0 / 3.0}
        rc, rep = run(tmp_path, job, "ap-probe")
        assert rc == 0
        assert rep["results"]["is_ap"] is False
        assert rep["results"]["fitted_exponent"] == pytest.approx(0.25, abs=0.05)

    def test_op_norm(self, tmp_path):
        job = {"weight": {"kind": "classical"}, "op": "B", "p": 2,
               "sizes": [200, 400]}
        rc, rep = run(tmp_path, job, "op-norm")
        assert rc == 0
        assert rep["results"]["growth_ratio"] < 1.05

    def test_explicit_lattice_user_table(self, tmp_path):
        pts = [[0, 0], [1.5, 0], [-1.5, 0], [0, 1.5], [0, -1.5],
               [1.5, 1.5], [-1.5, 1.5], [1.5, -1.5], [-1.5, -1.5]]
        table = [{"index": k, "re": 1.0 + 0.1 * k, "im": 0.2} for k in range(9)]
        job = {
            "weight": {"kind": "classical"},
            "lattice": {"kind": "explicit", "points": pts},
            "multiplier": {"kind": "user_table", "g_prime": table,
                           "weighted": True},
            "values": {"kind": "zero"},
            "p": 2,
        }
        rc, rep = run(tmp_path, job, "trace-check")
        assert rc == 0
        assert rep["results"]["overall"] == "bounded"

    def test_acceptance_subset(self, tmp_path):
        out = tmp_path / "acc.json"
        rc = main(["acceptance", "--criteria", "5", "--output", str(out)])
        assert rc == 0
        rep = json.loads(out.read_text())
        assert rep["all_passed"] is True
