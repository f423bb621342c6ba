import csv
import json
import math

import jsonschema
import numpy as np
import pytest

from fpinv import bench
from fpinv.bench import (
    CSV_HEADER,
    ConfigError,
    ExperimentConfig,
    REPORT_JSON_SCHEMA,
    anisotropic_config,
    clustered_config,
    default_config,
    emit,
    load_config,
    metric_l2,
    metric_psnr,
    run_consistency_experiment,
    run_iteration_sweep,
    run_reconstruction_benchmark,
)
from fpinv.denoiser import GaussianMixtureModel


@pytest.fixture(scope="module")
def small_recon_report():
    cfg = default_config(num_trials=3, guidance_sweep=(1.0, 4.0))
    return cfg, run_reconstruction_benchmark(cfg)


class TestMetrics:
    def test_l2_trivial_cases(self):
        assert metric_l2(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 0.0
        assert metric_l2(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(
            math.sqrt(2.0)
        )

    def test_l2_matches_elementwise_oracle(self, rng):
        for _ in range(25):
            a, b = rng.standard_normal(7), rng.standard_normal(7)
            oracle = math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))
            assert metric_l2(a, b) == pytest.approx(oracle, rel=1e-12)

    def test_l2_rejects_mismatch(self):
        with pytest.raises(ValueError):
            metric_l2(np.zeros(2), np.zeros(3))

    def test_psnr_exact_match_sentinel(self):
        assert metric_psnr(np.ones(4), np.ones(4), peak=1.0) == math.inf

    def test_psnr_zero_db_when_mse_equals_peak_squared(self):
        a = np.zeros(8)
        b = np.full(8, 3.0)
        assert metric_psnr(a, b, peak=3.0) == pytest.approx(0.0, abs=1e-12)

    def test_psnr_matches_hand_formula(self, rng):
        a, b = rng.standard_normal(16), rng.standard_normal(16)
        mse = float(np.mean((a - b) ** 2))
        peak = 2.5
        assert metric_psnr(a, b, peak) == pytest.approx(
            10.0 * math.log10(peak**2 / mse), rel=1e-12
        )

    def test_psnr_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            metric_psnr(np.zeros(2), np.zeros(3), 1.0)
        with pytest.raises(ValueError):
            metric_psnr(np.zeros(2), np.zeros(2), 0.0)


class TestConfig:
    def test_json_round_trip(self, tmp_path):
        cfg = anisotropic_config(num_trials=5)
        path = tmp_path / "config.json"
        path.write_text(json.dumps(cfg.to_dict()))
        loaded = load_config(path)
        assert loaded == cfg
        assert loaded.config_hash() == cfg.config_hash()

    def test_hash_changes_with_seed(self):
        assert default_config().config_hash() != default_config(rng_seed=1).config_hash()

    def test_bad_config_raises_config_error(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(path)
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"mixture": {"dimension": 2, "components": []}})

    def test_codec_dimension_must_match_mixture(self):
        mix = GaussianMixtureModel(
            dimension=3,
            weights=np.array([1.0]),
            means=np.zeros((1, 3)),
            variances=np.ones((1, 3)),
        )
        with pytest.raises(ConfigError):
            default_config(mixture=mix)


class TestReconstructionBenchmark:
    def test_row_count_structure(self, small_recon_report):
        cfg, report = small_recon_report
        metrics_per_method = 6
        expected = cfg.num_trials * len(cfg.guidance_sweep) * 2 * metrics_per_method
        assert len(report.rows) == expected
        assert not report.failures

    def test_fpi_beats_ddim_on_seed_recovery(self):
        cfg = clustered_config(num_trials=4, guidance_sweep=(4.0,))
        report = run_reconstruction_benchmark(cfg)
        fpi = np.median(report.values("seed_l2", method="fpi"))
        ddim = np.median(report.values("seed_l2", method="ddim"))
        assert fpi < ddim

    def test_guidance_zero_single_component_near_exact(self):
        mix = GaussianMixtureModel(
            dimension=4,
            weights=np.array([1.0]),
            means=np.zeros((1, 4)),
            variances=np.ones((1, 4)),
        )
        cfg = default_config(mixture=mix, guidance_sweep=(0.0,), num_trials=5)
        report = run_reconstruction_benchmark(cfg)
        for method in ("ddim", "fpi"):
            assert max(report.values("recon_l2", method=method)) < 1e-2

    def test_nfe_accounting(self, small_recon_report):
        cfg, report = small_recon_report
        steps = cfg.schedule.num_sampling_steps
        for value in report.values("nfe", method="ddim"):
            assert value == steps
        for value in report.values("nfe", method="fpi"):
            assert steps <= value <= steps * cfg.fixed_point.max_iterations


class TestIterationSweep:
    def test_single_iteration_row_matches_ddim_row(self):
        cfg = default_config(num_trials=3, guidance_sweep=(4.0,),
                             sweep_max_iterations=(1, 2, 3))
        report = run_iteration_sweep(cfg)
        one = report.values("recon_l2[max_iter=1]", method="fpi")
        ddim = report.values("recon_l2", method="ddim")
        assert one == ddim

    def test_quality_improves_then_saturates(self):
        cfg = default_config(num_trials=4, guidance_sweep=(4.0,))
        report = run_iteration_sweep(cfg)
        medians = [
            float(np.median(report.values(f"recon_l2[max_iter={k}]", method="fpi")))
            for k in cfg.sweep_max_iterations
        ]
        assert medians[0] > medians[2]
        for later in medians[3:]:
            assert later <= medians[2] * 1.05

    def test_residual_curves_recorded(self):
        cfg = default_config(num_trials=2, guidance_sweep=(4.0,))
        report = run_iteration_sweep(cfg)
        curves = report.curves["iteration_sweep"]
        assert curves
        sample = next(iter(curves.values()))
        assert {"timestep", "residuals", "converged"} == set(sample[0])


class TestConsistencyExperiment:
    def test_lossless_codec_collapses_distances(self):
        cfg = default_config(
            codec=bench.CodecSpec(quant_step=0.0, target_error_fraction=None),
            guidance_sweep=(4.0,),
            num_trials=4,
        )
        report = run_consistency_experiment(cfg)
        assert max(report.values("encode_l2")) < 1e-12
        assert max(report.values("raw_recon_l2", method="fpi")) < 1e-4
        assert max(report.values("adjust_l2")) < 5e-3

    def test_ordering_on_anisotropic_scenario(self):
        cfg = anisotropic_config(guidance_sweep=(4.0,), num_trials=20)
        report = run_consistency_experiment(cfg)
        enc = np.mean(report.values("encode_l2"))
        raw = np.mean(report.values("raw_recon_l2", method="ddim"))
        adj = np.mean(report.values("adjust_l2"))
        assert adj < enc < raw

    def test_deterministic_given_seed(self):
        cfg = anisotropic_config(guidance_sweep=(4.0,), num_trials=3)
        a = run_consistency_experiment(cfg)
        b = run_consistency_experiment(cfg)
        assert [(r.metric, r.value) for r in a.rows] == [(r.metric, r.value) for r in b.rows]


@pytest.fixture(scope="module")
def clustered_interp():
    cfg = clustered_config(num_trials=8, guidance_sweep=(4.0,))
    return cfg, bench.run_interpolation_experiment(cfg)


class TestInterpolationExperiment:

    def test_path_endpoints_reproduce_method_reconstruction(self, clustered_interp):
        _, report = clustered_interp
        fpi = report.values("endpoint_recon_l2", method="fpi")
        ddim = report.values("endpoint_recon_l2", method="ddim")
        assert max(fpi) < 1e-3
        assert np.median(ddim) > np.median(fpi)

    def test_centroid_density_in_typical_set_range(self, clustered_interp):
        """Sampling oracle: data-sample log densities bracket the centroid
        scores."""
        cfg, report = clustered_interp
        model, _ = bench._build_stack(cfg)
        rng = np.random.default_rng(0)
        sample_scores = []
        for _ in range(2000):
            k = int(rng.integers(3))
            z = cfg.mixture.means[k] + rng.standard_normal(4) * np.sqrt(
                cfg.mixture.variances[k]
            )
            sample_scores.append(model.log_marginal_density(z, 0, bench.UNCONDITIONAL))
        lo, hi = np.quantile(sample_scores, [0.001, 0.999])
        for value in report.values("centroid_logdensity", method="fpi"):
            assert math.isfinite(value)
            assert lo <= value <= hi


class TestEmit:
    def test_csv_round_trips_losslessly(self, small_recon_report, tmp_path):
        _, report = small_recon_report
        (path,) = emit(report, tmp_path, formats=("csv",))
        with path.open() as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader))
            assert header == CSV_HEADER
            parsed = [
                (row[0], row[1], float(row[2]), row[3], float(row[4]), int(row[5]))
                for row in reader
            ]
        original = sorted(
            (r.scenario, r.method, r.guidance, r.metric, r.value, r.trial)
            for r in report.rows
        )
        assert sorted(parsed) == original

    def test_json_validates_against_schema(self, small_recon_report, tmp_path):
        _, report = small_recon_report
        report.curves["iteration_sweep"] = {}
        paths = emit(report, tmp_path, formats=("json",))
        payload = json.loads(paths[0].read_text())
        jsonschema.validate(payload, REPORT_JSON_SCHEMA)
        assert payload["config_hash"] == report.config_hash

    def test_infinite_values_serialize_as_strings(self, tmp_path):
        cfg = default_config(num_trials=1, guidance_sweep=(1.0,))
        report = bench.ExperimentReport(config_hash=cfg.config_hash(), config=cfg.to_dict())
        report.add("fpi", 1.0, "psnr_db", math.inf, trial=0)
        (path,) = emit(report, tmp_path, formats=("json",))
        payload = json.loads(path.read_text())
        assert payload["rows"][0]["value"] == "inf"
        jsonschema.validate(payload, REPORT_JSON_SCHEMA)

    def test_plots_only_when_requested(self, tmp_path):
        cfg = default_config(num_trials=2, guidance_sweep=(4.0,),
                             sweep_max_iterations=(1, 2, 3))
        report = run_iteration_sweep(cfg)
        no_plots = emit(report, tmp_path / "plain", plots=False)
        assert all(p.suffix != ".svg" for p in no_plots)
        with_plots = emit(report, tmp_path / "plotted", plots=True)
        assert any(p.suffix == ".svg" for p in with_plots)

    def test_rows_sorted_before_writing(self, tmp_path):
        cfg = default_config(num_trials=1, guidance_sweep=(1.0,))
        report = bench.ExperimentReport(config_hash=cfg.config_hash(), config=cfg.to_dict())
        report.add("fpi", 1.0, "b_metric", 1.0, trial=1)
        report.add("fpi", 1.0, "a_metric", 1.0, trial=0)
        report.add("ddim", 1.0, "a_metric", 1.0, trial=0)
        (path,) = emit(report, tmp_path, formats=("csv",))
        rows = path.read_text().strip().splitlines()[1:]
        methods_then_metrics = [tuple(r.split(",")[1:4:2]) for r in rows]
        assert methods_then_metrics == sorted(methods_then_metrics)
