import numpy as np
import pytest

from arrayimg.config import ScenarioConfig, load_config, parse_length
from arrayimg.errors import ConfigurationError
from arrayimg.experiments import (NoiseSpec, add_noise, build_scene,
                                  coherence_report, monte_carlo_stability,
                                  run_scenario, run_trial, write_report_csv)

SMALL_INI = """
[wave]
wavelength = 1.0

[array]
n = 80
pitch = 1.0

[window]
center_range = 80
rows = 11
cols = 11
spacing = 2.0

[scatterers]
cells = 2,2; 8,8
magnitudes = 1.5, 0.9
phases = random

[solver]
max_iterations = 20000
tolerance = 1e-8

[experiment]
scenario_id = small
seed = 3
methods = smv, hybrid, music, km
noise_percent = 0.0
illuminations = central
"""


@pytest.fixture
def small_cfg(tmp_path):
    path = tmp_path / "small.ini"
    path.write_text(SMALL_INI)
    return load_config(path)


class TestAddNoise:
    def test_zero_percent(self):
        data = np.ones((4, 4), dtype=complex)
        noisy, norm = add_noise(data, NoiseSpec(0.0, seed=1))
        assert norm == 0.0
        assert np.array_equal(noisy, data)

    def test_exact_norm(self):
        rng = np.random.default_rng(0)
        data = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
        noisy, norm = add_noise(data, NoiseSpec(0.5, seed=2))
        e = noisy - data
        assert np.linalg.norm(e) == pytest.approx(0.5 * np.linalg.norm(data),
                                                  rel=1e-12)
        assert norm == pytest.approx(np.linalg.norm(e), rel=1e-12)

    def test_deterministic(self):
        data = np.ones((3, 5), dtype=complex)
        n1, _ = add_noise(data, NoiseSpec(0.3, seed=7))
        n2, _ = add_noise(data, NoiseSpec(0.3, seed=7))
        assert np.array_equal(n1, n2)

    def test_negative_percent_rejected(self):
        with pytest.raises(ConfigurationError):
            NoiseSpec(-0.1)


class TestConfig:
    def test_parse_length_units(self):
        assert parse_length("25", None) == 25.0
        assert parse_length("3lambda", None) == 3.0
        assert parse_length("25l", 20.0) == 500.0
        with pytest.raises(ConfigurationError):
            parse_length("25l", None)

    def test_small_ini(self, small_cfg):
        cfg = small_cfg
        assert cfg.n == 80 and cfg.rows == 11 and cfg.spacing == 2.0
        assert cfg.cells == [(2, 2), (8, 8)]
        assert cfg.magnitudes == [1.5, 0.9]
        assert cfg.methods == ["smv", "hybrid", "music", "km"]
        assert cfg.raw_text.strip().startswith("[wave]")

    def test_aperture_in_correlation_lengths(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text("""
[medium]
kind = random-phase
correlation_length = 20
sigma = 0.001

[array]
n = 501
aperture = 25l

[experiment]
scenario_id = x
""")
        cfg = load_config(path)
        assert cfg.pitch == pytest.approx(1.0)

    def test_random_phase_requires_correlation_length(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[medium]\nkind = random-phase\nsigma = 0.01\n")
        with pytest.raises(ConfigurationError):
            load_config(path)

    def test_unknown_method_rejected(self, tmp_path):
        path = tmp_path / "bad2.ini"
        path.write_text("[experiment]\nmethods = smv, sorcery\n")
        with pytest.raises(ConfigurationError):
            load_config(path)

    def test_delta_factor_floor(self, tmp_path):
        path = tmp_path / "bad3.ini"
        path.write_text("[solver]\ndelta_factor = 0.5\n")
        with pytest.raises(ConfigurationError):
            load_config(path)

    def test_hybrid_delta_defaults(self):
        cfg = ScenarioConfig()
        assert cfg.resolved_hybrid_delta_fraction() == 0.0  # noiseless
        cfg.noise_percent = 0.5
        assert cfg.resolved_hybrid_delta_fraction() == 0.02
        cfg.medium_kind = "random-phase"
        assert cfg.resolved_hybrid_delta_fraction() == 0.1
        cfg.hybrid_delta_fraction = 0.07
        assert cfg.resolved_hybrid_delta_fraction() == 0.07


class TestScene:
    def test_deterministic_build(self, small_cfg):
        s1 = build_scene(small_cfg, seed=5)
        s2 = build_scene(small_cfg, seed=5)
        assert np.array_equal(s1.response.matrix, s2.response.matrix)
        assert np.array_equal(s1.rho.values, s2.rho.values)
        s3 = build_scene(small_cfg, seed=6)
        assert not np.array_equal(s1.rho.values, s3.rho.values)  # random phases

    def test_noise_injected_at_requested_level(self, small_cfg):
        small_cfg.noise_percent = 0.25
        scene = build_scene(small_cfg, seed=5)
        ratio = np.linalg.norm(scene.noise_matrix) / np.linalg.norm(scene.response.matrix)
        assert ratio == pytest.approx(0.25, rel=1e-12)


class TestRunTrial:
    def test_successful_methods(self, small_cfg):
        scene = build_scene(small_cfg, seed=3)
        for method in ("smv", "hybrid", "music"):
            report, result = run_trial(scene, method, seed=3)
            assert report.support_exact, (method, report)
            assert report.precision == 1.0 and report.recall == 1.0
            assert report.error == ""
        report, _ = run_trial(scene, "km", seed=3)
        assert report.error == ""  # KM runs; exactness not required

    def test_module_error_recorded(self, small_cfg):
        small_cfg.known_rank = 9999
        scene = build_scene(small_cfg, seed=3)
        report, result = run_trial(scene, "music", seed=3)
        assert not report.support_exact
        assert "ConfigurationError" in report.error
        assert result is None

    def test_reflectivity_error_metric(self, small_cfg):
        scene = build_scene(small_cfg, seed=3)
        report, _ = run_trial(scene, "smv", seed=3)
        assert report.reflectivity_error < 1e-4
        report_km, _ = run_trial(scene, "km", seed=3)
        assert np.isnan(report_km.reflectivity_error)


class TestRunScenario:
    def test_artifacts_written(self, small_cfg, tmp_path):
        out = tmp_path / "runs"
        reports = run_scenario(small_cfg, seed=3, out_dir=out)
        assert len(reports) == 4
        run_dir = out / "small" / "3"
        for name in ("config.ini", "report.csv", "timings.csv", "response.csv",
                     "smv_support.csv", "smv_image.csv", "music_image.csv"):
            assert (run_dir / name).exists(), name

    def test_report_csv_deterministic(self, small_cfg, tmp_path):
        out1 = tmp_path / "a"
        out2 = tmp_path / "b"
        run_scenario(small_cfg, seed=3, out_dir=out1)
        run_scenario(small_cfg, seed=3, out_dir=out2)
        r1 = (out1 / "small" / "3" / "report.csv").read_bytes()
        r2 = (out2 / "small" / "3" / "report.csv").read_bytes()
        assert r1 == r2
        s1 = (out1 / "small" / "3" / "smv_support.csv").read_bytes()
        s2 = (out2 / "small" / "3" / "smv_support.csv").read_bytes()
        assert s1 == s2

    def test_empty_scatterers_no_crash(self, small_cfg, tmp_path):
        small_cfg.cells = []
        small_cfg.magnitudes = []
        reports = run_scenario(small_cfg, seed=3, out_dir=tmp_path / "r")
        assert all(r.error == "" for r in reports if r.method in ("smv", "km"))
        smv = [r for r in reports if r.method == "smv"][0]
        assert smv.precision == 1.0 and smv.recall == 1.0  # empty == empty


class TestMonteCarloStability:
    def test_sigma_zero_reduces_to_homogeneous(self, tmp_path):
        path = tmp_path / "mc.ini"
        path.write_text("""
[array]
n = 80
pitch = 1.0

[window]
center_range = 80
rows = 11
cols = 11
spacing = 2.0

[scatterers]
cells = 2,2; 8,8
magnitudes = 1.5, 0.9
phases = random

[medium]
kind = random-phase
correlation_length = 20
sigma = 0.0

[experiment]
scenario_id = mc
methods = hybrid, music
forward = born
realizations = 10
known_rank = 2
""")
        cfg = load_config(path)
        rows = monte_carlo_stability(cfg, out_dir=tmp_path)
        by_method = {r["method"]: r for r in rows}
        assert by_method["hybrid"]["success_rate"] == 1.0
        assert by_method["music"]["success_rate"] == 1.0
        table = (tmp_path / "mc_stability.csv").read_text().splitlines()
        assert table[0].startswith("aperture,method,success_rate")
        assert len(table) == 3

    def test_minimum_realizations(self, small_cfg):
        with pytest.raises(ConfigurationError):
            monte_carlo_stability(small_cfg, realizations=5)


class TestCoherenceReport:
    def test_duplicate_column_pathology(self, tmp_path):
        # grid points mirrored across the array line are equidistant from
        # every transducer, so their sensing columns are identical
        path = tmp_path / "dup.ini"
        path.write_text("""
[array]
n = 20
pitch = 1.0

[window]
center_range = 0
rows = 3
cols = 1
spacing = 4.0

[scatterers]
cells = 0,0; 2,0
magnitudes = 1.0, 1.0
phases = 0.0, 0.0

[experiment]
scenario_id = dup
forward = born
delta_grid = 0.0, 0.1
""")
        cfg = load_config(path)
        report = coherence_report(cfg, out_dir=tmp_path)
        assert report["grid_coherence"] == pytest.approx(1.0, abs=1e-12)
        assert report["margin"] < 0
        assert not report["certified"]
        certs = (tmp_path / "dup_certificates.csv").read_text()
        assert "not-certified" in certs
        assert (tmp_path / "dup_coherence.csv").exists()

    def test_desk_scale_margin_positive(self, small_cfg, tmp_path):
        report = coherence_report(small_cfg, out_dir=tmp_path)
        assert report["m"] == 2
        assert report["support_coherence"] < report["grid_coherence"]
        assert report["margin"] > 0
        assert report["certified"]

    def test_report_rows_written(self, small_cfg):
        small_cfg.delta_grid = [0.0, 1e-6]
        report = coherence_report(small_cfg)
        assert len(report["bounds"]) == 2
        assert report["bounds"][0][1] == pytest.approx(0.0)


class TestReportCsv:
    def test_nan_error_written_blank(self, tmp_path):
        from arrayimg.experiments import TrialReport
        rep = TrialReport(method="km", scenario_id="s", seed=1,
                          support_exact=False, precision=0.5, recall=0.5,
                          reflectivity_error=float("nan"), wall_time=0.1)
        path = tmp_path / "r.csv"
        write_report_csv(path, [rep])
        line = path.read_text().splitlines()[1]
        assert line == "km,s,1,0,0.5,0.5,,"
