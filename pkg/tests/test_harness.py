import json
import math

import numpy as np
import pytest

from laplace_deconv import harness
from laplace_deconv.harness import (
    ConfigError,
    ExperimentSpec,
    MseTable,
    format_float,
    load_spec,
    normalized_mse,
    relative_error,
    run_design_experiment,
    run_mse_grid,
    run_regression_experiment,
    spec_from_dict,
    truth_coefficients,
    write_csv,
    write_plot_data,
)
from laplace_deconv.laguerre import LaguerreSeries
from laplace_deconv.model import ExplicitKernel, binomial_series


class TestMetric:
    def test_examples(self):
        truth = LaguerreSeries.from_coeffs([0.3, -0.4, 0.0])
        assert normalized_mse(truth, truth) == 0
        assert normalized_mse(LaguerreSeries.from_coeffs([0.0]), truth) == pytest.approx(1.0)
        # orthogonal error of unit relative size
        shifted = LaguerreSeries.from_coeffs([0.3, -0.4, 0.5])
        assert normalized_mse(shifted, truth) == pytest.approx(1.0)

    def test_relative_error_is_root(self):
        truth = LaguerreSeries.from_coeffs([1.0, 1.0])
        est = LaguerreSeries.from_coeffs([1.0, 0.0])
        assert relative_error(est, truth) == pytest.approx(math.sqrt(0.5))

    def test_zero_truth(self):
        with pytest.raises(ValueError):
            normalized_mse(LaguerreSeries.from_coeffs([1.0]), LaguerreSeries.from_coeffs([0.0]))


class TestTruth:
    def test_f1_coefficients(self):
        from scipy import integrate

        from laplace_deconv.laguerre import eval_function

        c = truth_coefficients("f1", 100).coeffs
        f1 = lambda t: (t * t - t) * math.exp(-t)
        ref = [integrate.quad(lambda t: f1(t) * eval_function(l, t), 0, np.inf, limit=200)[0] for l in range(6)]
        np.testing.assert_allclose(c[:6], ref, atol=1e-9)
        assert c @ c == pytest.approx(0.25, abs=1e-10)

    def test_f1_closed_form_head(self):
        # <f1, phi_0> = int (t^2 - t) e^{-3t/2} dt = 2/(3/2)^3 - 1/(3/2)^2
        assert truth_coefficients("f1", 10).coeffs[0] == pytest.approx(2 / 1.5**3 - 1 / 1.5**2, abs=1e-12)

    def test_f3_series(self):
        np.testing.assert_array_equal(truth_coefficients("f3", 20).coeffs, binomial_series(-0.5, 20))

    def test_custom(self):
        assert truth_coefficients([1.0, 2.0], 3).coeffs.tolist() == [1.0, 2.0, 0.0, 0.0]

    def test_unknown(self):
        with pytest.raises(ConfigError):
            truth_coefficients("f9", 3)


class TestSpec:
    def test_validation(self):
        with pytest.raises(ConfigError):
            ExperimentSpec(reps=0)
        with pytest.raises(ConfigError):
            ExperimentSpec(noise=())
        with pytest.raises(ConfigError):
            ExperimentSpec(estimators=("III",))

    def test_config_per_variant(self):
        spec = ExperimentSpec(constants={"tau_sig_I": 0.6, "tau_sig_II": 0.9, "kappa": 0.2})
        assert spec.config("I").tau_sig == 0.6 and spec.config("II").tau_sig == 0.9
        assert spec.config("II").kappa == 0.2 and spec.config("I").L_max == 50

    def test_from_dict_grid(self):
        spec = spec_from_dict({"noise": {"epsilon": [0.0, 0.1], "delta": [0.0, 0.2]}, "kernel": {"g_dot": [1, -1]}})
        assert spec.noise == ((0.0, 0.0), (0.1, 0.0), (0.0, 0.2), (0.1, 0.2))
        np.testing.assert_array_equal(spec.kernel.g_coeffs, [1.0, 0.0])

    def test_from_dict_decomposition(self):
        spec = spec_from_dict({"kernel": {"decomposition": {"C": 1.0, "mu": 1.0, "nu": 2.0, "w_roots": [[2.0, 1.0], [2.0, -1.0]]}}})
        assert spec.kernel.w_roots == (2 + 1j, 2 - 1j)

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            spec_from_dict({"repz": 3})

    def test_bad_noise(self):
        with pytest.raises(ConfigError):
            spec_from_dict({"noise": {"epsilon": [0.1]}})

    def test_load_missing(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="nothere.toml"):
            load_spec(tmp_path / "nothere.toml")

    def test_load_malformed(self, tmp_path):
        p = tmp_path / "bad.toml"
        p.write_text("name = [unclosed\n")
        with pytest.raises(ConfigError, match="bad.toml"):
            load_spec(p)

    @pytest.mark.parametrize("name", ["table3", "table4", "figure4", "figure4_coarse"])
    def test_shipped_configs(self, name):
        from pathlib import Path

        spec = load_spec(Path(__file__).parents[1] / "configs" / f"{name}.toml")
        assert spec.name == name


def small_grid(**kw):
    base = dict(target="f1", noise=((0.0, 0.0), (1e-2, 1e-2), (3e-2, 0.0)), reps=20, seed=5)
    base.update(kw)
    return ExperimentSpec(**base)


class TestMseGrid:
    def test_noiseless_cell(self):
        table = run_mse_grid(small_grid(noise=((0.0, 0.0),), reps=2))
        for r in table.rows:
            assert r.mse <= 1e-3 and r.stderr == 0.0

    def test_rows_and_lookup(self):
        table = run_mse_grid(small_grid())
        assert len(table.rows) == 6
        r = table.lookup(1e-2, 1e-2, "II")
        assert r.reps == 20 and r.mse >= 0 and r.stderr >= 0
        # Jensen: mean of roots <= root of mean
        assert 0 <= r.rel_err <= math.sqrt(r.mse) + 1e-12
        with pytest.raises(KeyError):
            table.lookup(0.5, 0.5, "I")

    def test_deterministic(self):
        a = run_mse_grid(small_grid()).records()
        b = run_mse_grid(small_grid()).records()
        assert a == b

    def test_parallel_matches_serial(self):
        assert run_mse_grid(small_grid(), threads=2).records() == run_mse_grid(small_grid(), threads=1).records()

    def test_seed_matters(self):
        assert run_mse_grid(small_grid(seed=1)).records() != run_mse_grid(small_grid(seed=2)).records()

    def test_failure_names_cell(self, monkeypatch):
        def boom(*a, **k):
            raise ArithmeticError("kaput")

        monkeypatch.setattr(harness, "estimate", boom)
        with pytest.raises(RuntimeError, match=r"cell 0 .*rep 0: kaput"):
            run_mse_grid(small_grid(noise=((0.0, 0.0), (0.1, 0.1))), threads=1)

    def test_decomposed_kernel(self):
        spec = small_grid(kernel=harness.DecomposedKernel(1.0, (), 1.0, 1.0), noise=((0.0, 0.0),), reps=1)
        assert run_mse_grid(spec).rows[0].mse <= 1e-3


class TestDesign:
    def spec(self, **kw):
        base = dict(
            target="f2", noise=((1e-2, 1e-2),), reps=10, seed=3,
            design={"kind": "equispaced", "n": [200, 750], "horizon": 100.0},
        )
        base.update(kw)
        return ExperimentSpec(**base)

    def test_levels(self):
        rows = run_design_experiment(self.spec())
        by = {(r.n, r.estimator): r for r in rows}
        assert by[200, "I"].L == by[200, "I"].N == 4
        assert by[200, "II"].L == 21 and by[200, "II"].N == 11
        assert by[750, "II"].N == 21
        assert all(r.omega_max_level >= r.L for r in rows)

    def test_examples_returned(self):
        rows, ex = run_design_experiment(self.spec(reps=2), return_examples=True)
        assert set(ex) == {"I_L", "I_N", "II_L", "II_N"}

    def test_wrong_kind(self):
        with pytest.raises(ConfigError):
            run_design_experiment(self.spec(design={"kind": "ideal-sequence"}))

    def test_deterministic(self):
        assert run_design_experiment(self.spec(reps=3)) == run_design_experiment(self.spec(reps=3))


class TestRegression:
    def spec(self, **kw):
        base = dict(
            target="f3", noise=((5e-2, 5e-2),), reps=10, seed=1,
            design={"kind": "cumulative-step", "step": 0.1, "n": 100, "jitter_sd": 0.1},
        )
        base.update(kw)
        return ExperimentSpec(**base)

    def test_curves(self):
        res = run_regression_experiment(self.spec(reps=2))
        assert set(res.curves) == {"truth", "samples", "estimate_I", "estimate_II"}
        assert len(res.rows) == 2

    def test_noiseless_dense_design(self):
        spec = self.spec(noise=((0.0, 0.0),), reps=2, design={"kind": "cumulative-step", "step": 0.01, "n": 8000, "jitter_sd": 0.001})
        for r in run_regression_experiment(spec).rows:
            assert r.mse <= 1e-2

    def test_function_target(self):
        spec = self.spec(target="f1", noise=((0.0, 0.0),), reps=1, design={"kind": "cumulative-step", "step": 0.05, "n": 800, "jitter_sd": 0.001})
        for r in run_regression_experiment(spec).rows:
            assert r.mse <= 1e-2

    def test_missing_keys(self):
        with pytest.raises(ConfigError):
            run_regression_experiment(self.spec(design={"kind": "cumulative-step", "n": 10}))


class TestOutput:
    def test_format(self):
        assert format_float(0.1) == "0.1" and format_float(np.float64(1e-3)) == "0.001"
        assert format_float(np.int64(7)) == "7" and format_float("II") == "II"
        x = 0.1 + 0.2
        assert float(format_float(x)) == x

    def test_csv_header_and_bytes(self, tmp_path):
        table = run_mse_grid(small_grid(reps=3))
        p1 = write_csv(tmp_path / "a" / "t.csv", MseTable.COLUMNS, table.records())
        p2 = write_csv(tmp_path / "b" / "t.csv", MseTable.COLUMNS, run_mse_grid(small_grid(reps=3)).records())
        assert p1.read_bytes() == p2.read_bytes()
        assert p1.read_text().splitlines()[0] == "epsilon,delta,estimator,mse,stderr,reps,rel_err,rel_err_stderr"

    def test_plot_data(self, tmp_path):
        t = np.linspace(0, 1, 5)
        m = write_plot_data(tmp_path, "fig", {"truth": (t, t**2), "est": (t, t)})
        man = json.loads(m.read_text())
        assert [c["name"] for c in man["curves"]] == ["est", "truth"]
        lines = (tmp_path / "fig_truth.csv").read_text().splitlines()
        assert lines[0] == "t,value" and len(lines) == 6
