"""Config loading, CLI verbs, exit codes, and pipeline outputs."""

import os

import numpy as np
import pytest

from lumitomo import pipeline
from lumitomo.cli import main
from lumitomo.config import (DEFAULTS, build_apertures, derive_seed,
                             load_config, parse_config_text)
from lumitomo.errors import ConfigError, SolverFailureError
from lumitomo.ltfio import read_field


SMALL = [
    "grid.cells=48,48",
    "cones.count=3",
    "cones.half_angle_deg=35.0",
    "run.spot_checks=1",
]


def small_args(verb, outdir, *extra):
    args = [verb, "-o", str(outdir)]
    for item in SMALL + list(extra):
        args += ["--set", item]
    return args


class TestConfig:
    def test_defaults_resolve(self):
        cfg = load_config()
        assert cfg == DEFAULTS

    def test_file_and_overrides_win_in_order(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("# comment\nmedium.mu_a = 0.07\nrun.seed = 9\n")
        cfg = load_config(str(p), ["run.seed=10"])
        assert cfg["medium.mu_a"] == "0.07"
        assert cfg["run.seed"] == "10"

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            load_config(None, ["medium.mu_b=1.0"])

    def test_malformed_line(self):
        with pytest.raises(ConfigError):
            parse_config_text("medium.mu_a 0.05")

    def test_build_apertures_fan(self):
        aps = build_apertures(dict(DEFAULTS, **{"cones.count": "4"}), 2)
        assert len(aps) == 4
        assert aps[0].axis == pytest.approx((1.0, 0.0))
        assert aps[1].axis == pytest.approx((0.0, 1.0), abs=1e-15)

    def test_derive_seed_stable_and_distinct(self):
        a = derive_seed(12345, "noise.cone0")
        assert a == derive_seed(12345, "noise.cone0")
        assert a != derive_seed(12345, "noise.cone1")
        assert a != derive_seed(12346, "noise.cone0")


class TestExitCodes:
    def test_unknown_key_is_config_error(self, tmp_path, capsys):
        assert main(["run-xmlt", "-o", str(tmp_path),
                     "--set", "bogus.key=1"]) == 2
        assert "config error" in capsys.readouterr().err

    def test_bad_value_is_config_error(self, tmp_path, capsys):
        assert main(small_args("run-xmlt", tmp_path,
                               "medium.mu_a=not-a-number")) == 2

    def test_uncovered_cone_set_is_stability_error(self, tmp_path, capsys):
        rc = main(["run-xmlt", "-o", str(tmp_path),
                   "--set", "grid.cells=32,32", "--set", "cones.count=1"])
        assert rc == 3
        assert "stability" in capsys.readouterr().err

    def test_solver_failure_maps_to_4(self, tmp_path, monkeypatch, capsys):
        def boom(cfg):
            raise SolverFailureError("did not converge", residual=1.0,
                                     iterations=5)
        monkeypatch.setattr(pipeline, "run_xmlt", boom)
        assert main(["run-xmlt", "-o", str(tmp_path)]) == 4
        assert "solver failure" in capsys.readouterr().err

    def test_reconstruct_without_scan_is_config_error(self, tmp_path):
        assert main(small_args("reconstruct", tmp_path)) == 2


class TestVerbs:
    def test_phantom_writes_truth(self, tmp_path):
        assert main(small_args("phantom", tmp_path)) == 0
        truth = read_field(tmp_path / "truth.ltf")
        assert truth.grid.cells == (48, 48)
        assert truth.values.max() == pytest.approx(10.0)
        assert (tmp_path / "truth.pgm").exists()
        assert (tmp_path / "truth_slice.csv").exists()
        assert (tmp_path / "report.txt").exists()

    def test_weight_writes_positive_weight(self, tmp_path):
        assert main(small_args("weight", tmp_path)) == 0
        v = read_field(tmp_path / "weight.ltf")
        assert np.all(v.values > 0)
        assert v.values.max() <= 1.0 + 1e-12

    def test_check_stability_prints_margin(self, tmp_path, capsys):
        assert main(small_args("check-stability", tmp_path)) == 0
        out = capsys.readouterr().out
        assert "stability.margin" in out
        assert "stability.invisible_count = 0" in out

    def test_scan_then_reconstruct(self, tmp_path):
        assert main(small_args("scan", tmp_path)) == 0
        assert (tmp_path / "scan_manifest.txt").exists()
        assert (tmp_path / "scan_cone00.ltf").exists()
        assert main(small_args("reconstruct", tmp_path,
                               "recon.method=both")) == 0
        rec = read_field(tmp_path / "recon_multiplier.ltf")
        truth = read_field(tmp_path / "truth.ltf")
        # same-grid inversion: coarse but clearly correlated with the truth
        corr = np.corrcoef(rec.values.ravel(), truth.values.ravel())[0, 1]
        assert corr > 0.7
        assert (tmp_path / "recon_lsqr.ltf").exists()
        assert (tmp_path / "lsqr_history.csv").exists()

    def test_run_xmlt_end_to_end(self, tmp_path, capsys):
        rc = main(small_args("run-xmlt", tmp_path, "recon.method=multiplier"))
        assert rc == 0
        out = capsys.readouterr().out
        assert "error.multiplier.absolute" in out
        report = (tmp_path / "report.txt").read_text()
        assert "spot_check.max_relative_mismatch" in report
        assert "config.grid.cells = 48,48" in report
        err = float([ln for ln in report.splitlines()
                     if ln.startswith("error.multiplier.absolute")][0]
                    .split("=")[1])
        assert err < 0.5

    def test_run_xlct_end_to_end(self, tmp_path, capsys):
        rc = main(small_args("run-xlct", tmp_path, "xray.n_angles=60",
                             "xray.n_offsets=97", "recon.filter=ramp",
                             "recon.cutoff=1.0"))
        assert rc == 0
        assert "error.fbp.absolute" in capsys.readouterr().out
        assert (tmp_path / "sinogram.ltf").exists()
        assert (tmp_path / "recon_fbp.ltf").exists()

    def test_noise_changes_scan_deterministically(self, tmp_path):
        d1 = tmp_path / "a"
        d2 = tmp_path / "b"
        d3 = tmp_path / "c"
        for d in (d1, d2):
            assert main(small_args("scan", d, "noise.kind=poisson",
                                   "noise.photons=1e4")) == 0
        assert main(small_args("scan", d3, "noise.kind=poisson",
                               "noise.photons=1e4", "run.seed=999")) == 0
        a = read_field(d1 / "scan_cone00.ltf").values
        b = read_field(d2 / "scan_cone00.ltf").values
        c = read_field(d3 / "scan_cone00.ltf").values
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)
