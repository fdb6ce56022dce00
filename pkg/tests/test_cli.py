import csv
import io
import json
import math
import os
import subprocess
import sys

import pytest

from orthosteklov.cli import EXIT_CHECKS, EXIT_INPUT, EXIT_NUMERICAL, EXIT_OK, SWEEP_HEADER, main


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def square_file(tmp_path):
    return write(tmp_path, "square.yaml", "version: 1\nkind: box\nhalf_widths: [1, 1]\n")


class TestDescribe:
    def test_w_inf(self, tmp_path):
        shp = write(tmp_path, "w.yaml", "version: 1\nkind: lp_ball\nN: 2\np: inf\nradius: 1\n")
        out = str(tmp_path / "d.csv")
        assert main(["describe", "--shape", shp, "--p-list", "2,inf", "--out", out]) == EXIT_OK
        rows = read_csv(out)
        assert [r["p"] for r in rows] == ["2", "inf"]
        for r in rows:
            assert float(r["volume"]) == 4.0
            assert float(r["diam1"]) == 4.0
            assert float(r["sigma_infty"]) == 0.5

    def test_w1_json(self, tmp_path):
        shp = write(tmp_path, "w.yaml", "version: 1\nkind: lp_ball\nN: 2\np: 1\nradius: 1\n")
        out = str(tmp_path / "d.json")
        assert main(["describe", "--shape", shp, "--out", out]) == EXIT_OK
        doc = json.loads(open(out).read())
        row = doc["rows"][0]
        assert row["volume"] == pytest.approx(2.0, rel=1e-15)
        assert row["sigma_infty"] == 1.0

    def test_random_byte_repeatable(self, tmp_path):
        shp = write(tmp_path, "r.yaml", "version: 1\nkind: random\nseed: 7\n")
        a, b = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
        main(["describe", "--shape", shp, "--p-list", "1.5,2,3,inf", "--out", a])
        main(["describe", "--shape", shp, "--p-list", "1.5,2,3,inf", "--out", b])
        assert open(a, "rb").read() == open(b, "rb").read()

    def test_17_digits(self, tmp_path, capsys):
        shp = write(tmp_path, "h.yaml", "version: 1\nkind: regular_polygon\nsides: 7\n")
        main(["describe", "--shape", shp, "--p-list", "3"])
        row = capsys.readouterr().out.splitlines()[1].split(",")
        assert all(len(c.replace("-", "").replace(".", "").split("e")[0].lstrip("0")) <= 17 for c in row)
        assert float(row[1]) == float(format(float(row[1]), ".17g"))


class TestExitCodes:
    def test_bad_shape_is_input_error(self, tmp_path, capsys):
        shp = write(tmp_path, "bad.yaml", "version: 1\nkind: polygon\nvertices: [[0, 0], [1, 0], [1]]\n")
        assert main(["describe", "--shape", shp]) == EXIT_INPUT
        assert "vertices[2]" in capsys.readouterr().err

    def test_malformed_yaml(self, tmp_path, capsys):
        shp = write(tmp_path, "bad.yaml", "version: 1\nkind: polygon\n  bad: [\nx: 1\n")
        assert main(["describe", "--shape", shp]) == EXIT_INPUT
        assert "line 3" in capsys.readouterr().err

    def test_argparse_error(self):
        assert main(["describe"]) == EXIT_INPUT
        assert main(["solve", "--shape", "x", "--p", "2", "--h", "-1"]) == EXIT_INPUT

    def test_solve_rejects_inf(self, square_file, capsys):
        assert main(["solve", "--shape", square_file, "--p", "inf"]) == EXIT_INPUT
        assert "describe" in capsys.readouterr().err

    def test_solve_rejects_3d(self, tmp_path):
        shp = write(tmp_path, "b.yaml", "version: 1\nkind: box\nhalf_widths: [1, 1, 1]\n")
        assert main(["solve", "--shape", shp, "--p", "2"]) == EXIT_INPUT

    def test_solve_not_converged_is_numerical(self, square_file, capsys):
        assert main(["solve", "--shape", square_file, "--p", "3", "--h", "0.25", "--max-iter", "2"]) == EXIT_NUMERICAL
        assert "did not converge" in capsys.readouterr().err

    def test_zero_tolerance_campaign_exit_1(self, tmp_path, capsys):
        # W_1 at radius 0.1 is an equality case whose slack rounds to -2.2e-16
        cfg = write(tmp_path, "c.yaml", "version: 1\nchecks: [isodiametric]\nbodies:\n"
                    "  - id: w1_small\n    shape: {kind: lp_ball, N: 2, p: 1, radius: 0.1}\n")
        assert main(["campaign", cfg, "--out", str(tmp_path / "a")]) == EXIT_OK
        assert main(["campaign", cfg, "--tol-geometry", "0", "--out", str(tmp_path / "b")]) == EXIT_CHECKS
        assert "FAIL w1_small isodiametric" in capsys.readouterr().err

    def test_unconverged_fem_campaign_exit_3(self, tmp_path):
        cfg = write(tmp_path, "c.yaml", "version: 1\nmode: fem\nchecks: [step]\nstep_r: [1]\n"
                    "fem: {p_list: [3], max_iter: 1}\nbodies:\n  - random: {seed_start: 0, count: 1}\n")
        assert main(["campaign", cfg, "--out", str(tmp_path / "a")]) == EXIT_NUMERICAL

    def test_bad_config_is_input_error(self, tmp_path, capsys):
        cfg = write(tmp_path, "c.yaml", "version: 1\nbodies:\n  - id: broken\n"
                    "    shape: {kind: polygon, vertices: [[0, 0], [1, 0], [2, 0]]}\n")
        assert main(["campaign", cfg]) == EXIT_INPUT
        assert "bodies[0].shape" in capsys.readouterr().err


class TestSolveAndSweep:
    def test_solve_square_p2(self, square_file, tmp_path, capsys):
        out, fld = str(tmp_path / "s.json"), str(tmp_path / "f.csv")
        assert main(["solve", "--shape", square_file, "--p", "2", "--h", "0.1", "--out", out,
                     "--field-csv", fld]) == EXIT_OK
        doc = json.loads(open(out).read())
        ref = doc["result"]["sigma_p_pow_p"]
        assert ref == pytest.approx(0.68842, rel=1e-4)
        assert doc["lipschitz"]["holds"] is True
        assert len(read_csv(fld)) == doc["result"]["nodes"]
        assert f"sigma_p^p      {format(ref, '.17g')}" in capsys.readouterr().out

    def test_sweep_columns(self, square_file, tmp_path):
        out = str(tmp_path / "w.csv")
        assert main(["sweep", "--shape", square_file, "--p-list", "2,4,8", "--h", "0.2", "--out", out]) == EXIT_OK
        rows = read_csv(out)
        assert tuple(rows[0].keys()) == SWEEP_HEADER
        assert all(float(r["target_sigma_infty"]) == 0.5 for r in rows)
        assert all(r["status"] == "ok" for r in rows)
        sig = [float(r["sigma_p"]) for r in rows]
        assert sig == sorted(sig, reverse=True)
        for r in rows:
            assert float(r["sigma_p"]) <= float(r["coord_upper_bound"]) + 1e-8
            assert float(r["sigma_p"]) <= float(r["distance_candidate_bound"]) + 1e-8
        assert rows[0]["fit_sigma_infty"] != ""

    def test_sweep_single_p(self, square_file, tmp_path):
        out = str(tmp_path / "w.csv")
        assert main(["sweep", "--shape", square_file, "--p-list", "2", "--h", "0.25", "--out", out]) == EXIT_OK
        (row,) = read_csv(out)
        assert row["fit_sigma_infty"] == "" and row["fit_residual"] == ""

    def test_sweep_must_start_at_2(self, square_file):
        assert main(["sweep", "--shape", square_file, "--p-list", "4,8", "--h", "0.25"]) == EXIT_INPUT


class TestCampaignCommand:
    def test_shipped_default_exits_0(self, tmp_path):
        out = tmp_path / "o"
        assert main(["campaign", "--out", str(out)]) == EXIT_OK
        doc = json.loads((out / "report.json").read_text())
        assert doc["summary"]["failures"] == [] and doc["summary"]["fem_solves"] == 0
        assert doc["summary"]["bodies"] == 207

    def test_rerun_byte_identical(self, tmp_path):
        cfg = write(tmp_path, "c.yaml", "version: 1\nbodies:\n  - random: {seed_start: 3, count: 5}\n")
        main(["campaign", cfg, "--out", str(tmp_path / "a")])
        main(["campaign", cfg, "--out", str(tmp_path / "b")])
        for name in ("report.json", "slacks.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_timestamp_outside_hash(self, tmp_path):
        cfg = write(tmp_path, "c.yaml", "version: 1\nbodies:\n  - random: {seed_start: 3, count: 2}\n")
        main(["campaign", cfg, "--out", str(tmp_path / "a")])
        main(["campaign", cfg, "--out", str(tmp_path / "b"), "--timestamp"])
        a = json.loads((tmp_path / "a" / "report.json").read_text())
        b = json.loads((tmp_path / "b" / "report.json").read_text())
        assert "timestamp" in b and "timestamp" not in a
        assert a["content_sha256"] == b["content_sha256"]

    def test_seed_offset(self, tmp_path):
        cfg = write(tmp_path, "c.yaml", "version: 1\nbodies:\n  - random: {seed_start: 0, count: 2}\n")
        main(["campaign", cfg, "--seed", "100", "--out", str(tmp_path / "a")])
        doc = json.loads((tmp_path / "a" / "report.json").read_text())
        assert [b["body_id"] for b in doc["bodies"]] == ["random_100", "random_101"]

    def test_geometry_only_flag_counter(self, tmp_path):
        from orthosteklov.cli import default_campaign_path
        out = tmp_path / "o"
        assert main(["campaign", str(default_campaign_path("fem_campaign.yaml")), "--geometry-only",
                     "--out", str(out)]) == EXIT_OK
        doc = json.loads((out / "report.json").read_text())
        assert doc["summary"]["fem_solves"] == 0 and doc["summary"]["skipped"] > 0

    def test_no_partial_files_left(self, tmp_path):
        cfg = write(tmp_path, "c.yaml", "version: 1\nbodies:\n  - random: {seed_start: 0, count: 1}\n")
        main(["campaign", cfg, "--out", str(tmp_path / "a")])
        assert sorted(os.listdir(tmp_path / "a")) == ["report.json", "slacks.csv"]


def test_atomic_write_keeps_old_file_on_error(tmp_path, monkeypatch):
    from orthosteklov import io as oio
    target = tmp_path / "f.txt"
    oio.atomic_write(target, "old")

    def boom(src, dst):
        raise OSError("disk full")
    monkeypatch.setattr(os, "replace", boom)
    with pytest.raises(OSError):
        oio.atomic_write(target, "new")
    assert target.read_text() == "old"
    assert os.listdir(tmp_path) == ["f.txt"]


def test_module_entry_point(square_file):
    r = subprocess.run([sys.executable, "-m", "orthosteklov", "describe", "--shape", square_file, "--p-list", "inf"],
                       capture_output=True, text=True)
    assert r.returncode == 0
    assert r.stdout.splitlines()[0].startswith("p,volume")
