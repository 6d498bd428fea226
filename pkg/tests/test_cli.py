import json
import hashlib

import numpy as np
import pytest

from idmakit import cli


def run_cli(tmp_path, name, cfg, sub, seed=0, workers=1, outname="out"):
    cfg_path = tmp_path / f"{name}.json"
    cfg_path.write_text(json.dumps(cfg))
    out = tmp_path / outname
    rc = cli.main([sub, "--config", str(cfg_path), "--out", str(out), "--seed", str(seed), "--workers", str(workers)])
    return rc, out


TOY_PROFILE = {"d_c": 3, "lambda": {"2": 0.5231, "3": 0.3187, "12": 0.1582}}


class TestExitCurve:
    def test_fig3_style_outputs(self, tmp_path):
        cfg = {
            "n_users": 32,
            "gamma_smu_db": 40.0,
            "grid_points": 51,
            "components": [{"kind": "mud"}, {"kind": "rep", "d_r": 9}, {"kind": "rep", "d_r": 12}],
        }
        rc, out = run_cli(tmp_path, "exit", cfg, "exit-curve")
        assert rc == 0
        assert (out / "exit_mud.csv").exists()
        assert (out / "exit_rep_dr9.csv").exists()
        assert (out / "exit_rep_dr12.csv").exists()
        assert json.loads((out / "manifest.json").read_text())["subcommand"] == "exit-curve"

    def test_empty_grid_rejected(self, tmp_path):
        cfg = {"n_users": 4, "gamma_smu_db": 10.0, "grid_points": 1, "components": [{"kind": "mud"}]}
        rc, _ = run_cli(tmp_path, "bad", cfg, "exit-curve")
        assert rc == 2

    def test_single_user_flat_curve(self, tmp_path):
        cfg = {"n_users": 1, "sigma2_linear": 0.5, "grid_points": 21, "components": [{"kind": "mud"}]}
        rc, out = run_cli(tmp_path, "su", cfg, "exit-curve")
        assert rc == 0
        rows = (out / "exit_mud.csv").read_text().splitlines()[1:]
        vals = [float(r.split(",")[1]) for r in rows]
        assert max(vals) - min(vals) < 1e-9


class TestOptimize:
    def test_fixed_point_design(self, tmp_path):
        cfg = {"n_users": 32, "gamma_smu_db": 0.0, "d_r": 4, "c_max": 8}
        rc, out = run_cli(tmp_path, "opt", cfg, "optimize")
        assert rc == 0
        report = (out / "design_report.csv").read_text().splitlines()
        assert report[0] == "d_r,d_c,rate_ldpc,rate_total,sigma2,lp_status"
        assert "optimal" in report[1]
        assert (out / "design_dr4.txt").exists()

    def test_infeasible_reported_not_fatal(self, tmp_path):
        cfg = {"n_users": 32, "sigma2_linear": 50.0, "d_r": 1, "c_max": 3, "r_max": 1}
        rc, out = run_cli(tmp_path, "inf", cfg, "optimize")
        assert rc == 0
        assert "infeasible" in (out / "design_report.csv").read_text()


class TestThreshold:
    def test_single_point_row(self, tmp_path):
        cfg = {"profile": {"d_c": 6, "lambda": {"3": 1.0}}, "points": [[1, 1]], "tol_db": 0.05}
        rc, out = run_cli(tmp_path, "thr", cfg, "threshold")
        assert rc == 0
        lines = (out / "gap_surface.csv").read_text().splitlines()
        assert lines[0] == "n_users,d_r,gamma_rur,threshold_ebn0_db,gap_db"
        assert len(lines) == 2


class TestSimulate:
    def test_zero_frame_budget(self, tmp_path):
        cfg = {
            "profile": TOY_PROFILE,
            "length": 600,
            "n_candidates": 1,
            "n_users": 2,
            "d_r": 2,
            "ebn0_db": [3.0],
            "max_frames": 0,
            "min_bit_errors": 1,
        }
        rc, out = run_cli(tmp_path, "simz", cfg, "simulate")
        assert rc == 0
        lines = (out / "ber.csv").read_text().splitlines()
        assert len(lines) == 2 and ",0,0,0,0," in lines[1]

    def test_small_run_and_manifest(self, tmp_path):
        cfg = {
            "profile": TOY_PROFILE,
            "length": 600,
            "n_candidates": 1,
            "n_users": 2,
            "d_r": 2,
            "ebn0_db": [6.0],
            "max_frames": 2,
            "min_bit_errors": 10**9,
            "outer_iters": 40,
        }
        rc, out = run_cli(tmp_path, "sim", cfg, "simulate", seed=5)
        assert rc == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 5
        body = (out / "ber.csv").read_text()
        assert body.splitlines()[1].split(",")[1] == "2"

    def test_uncoded_mode(self, tmp_path):
        cfg = {
            "uncoded": True,
            "info_block_len": 400,
            "n_users": 8,
            "d_r": 4,
            "gamma_smu_db": [40.0],
            "max_frames": 1,
            "min_bit_errors": 1,
            "outer_iters": 15,
        }
        rc, out = run_cli(tmp_path, "unc", cfg, "simulate")
        assert rc == 0
        assert (out / "ber.csv").exists()


class TestConstruct:
    def test_alist_and_report(self, tmp_path):
        cfg = {"profile": TOY_PROFILE, "length": 400, "n_candidates": 3}
        rc, out = run_cli(tmp_path, "con", cfg, "construct")
        assert rc == 0
        report = (out / "girth_report.csv").read_text().splitlines()
        assert len(report) == 4
        assert sum(int(r.split(",")[-1]) for r in report[1:]) == 1
        assert (out / "matrix.alist").exists()

    def test_seed_repeat_identical_alist(self, tmp_path):
        cfg = {"profile": TOY_PROFILE, "length": 400, "n_candidates": 2}
        _, out1 = run_cli(tmp_path, "c1", cfg, "construct", seed=9, outname="o1")
        _, out2 = run_cli(tmp_path, "c2", cfg, "construct", seed=9, outname="o2")
        h1 = hashlib.sha256((out1 / "matrix.alist").read_bytes()).hexdigest()
        h2 = hashlib.sha256((out2 / "matrix.alist").read_bytes()).hexdigest()
        assert h1 == h2

    def test_toy_regular_alist_hand_checkable(self, tmp_path):
        cfg = {"profile": {"d_c": 6, "lambda": {"3": 1.0}}, "length": 12, "n_candidates": 1}
        rc, out = run_cli(tmp_path, "toy", cfg, "construct")
        assert rc == 0
        lines = (out / "matrix.alist").read_text().splitlines()
        assert lines[0] == "12 6"
        assert lines[1] == "3 6"


class TestValidation:
    def test_missing_config_file(self, tmp_path):
        rc = cli.main(["optimize", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")])
        assert rc == 2

    def test_missing_required_key(self, tmp_path):
        rc, _ = run_cli(tmp_path, "mk", {"gamma_smu_db": 0.0}, "optimize")
        assert rc == 2

    def test_ambiguous_noise_spec(self, tmp_path):
        cfg = {"n_users": 4, "gamma_smu_db": 0.0, "sigma2_linear": 1.0, "components": [{"kind": "mud"}]}
        rc, _ = run_cli(tmp_path, "amb", cfg, "exit-curve")
        assert rc == 2
