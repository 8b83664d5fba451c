import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import gamma as gamma_fn

from laplace_deconv.laguerre import LaguerreBasis, eval_function, laguerre_functions, project
from laplace_deconv.model import (
    DecomposedKernel,
    DesignGrid,
    ExplicitKernel,
    NoiseLevels,
    Observations,
    SingularDesignError,
    binomial_series,
    build_galerkin,
    design_matrix,
    design_noise,
    dot_g,
    estimate_dip,
    forward,
    kernel_from_decomposition,
    kernel_g_dot,
    omega,
    synthesize_regression,
    synthesize_sequence,
)
from laplace_deconv.toeplitz import invert_series


def padded(head, n=51):
    c = np.zeros(n)
    c[: len(head)] = head
    return c


class TestTypes:
    def test_design_validation(self):
        with pytest.raises(ValueError):
            DesignGrid([2.0, 1.0], 3.0)
        with pytest.raises(ValueError):
            DesignGrid([0.0, 4.0], 3.0)
        with pytest.raises(ValueError):
            DesignGrid([-1.0, 1.0], 3.0)

    def test_equispaced(self):
        d = DesignGrid.equispaced(4, 100.0)
        assert d.times.tolist() == [0.0, 25.0, 50.0, 75.0]
        assert DesignGrid.equispaced(4, 100.0, include_zero=False).times.tolist() == [25.0, 50.0, 75.0, 100.0]

    def test_cumulative_step(self):
        d = DesignGrid.cumulative_step(0.1, 0.1, 50, np.random.default_rng(0))
        gaps = np.diff(np.r_[0.0, d.times])
        assert d.n == 50 and np.all(gaps >= 0.1) and d.horizon == d.times[-1]

    def test_noise_levels(self):
        d = DesignGrid.equispaced(200, 100.0)
        nl = NoiseLevels.from_regression(0.01, 0.02, d)
        assert nl.epsilon == 0.01 * math.sqrt(100 / 200) and nl.delta == 0.02 and nl.sigma == 0.01
        with pytest.raises(ValueError):
            NoiseLevels(-1.0, 0.0)

    def test_observation_lengths(self):
        with pytest.raises(ValueError):
            Observations([1.0, 2.0], [1.0], NoiseLevels())
        assert Observations([1.0, 2.0], [1.0, 0.0], NoiseLevels()).max_level == 1

    def test_decomposed_validation(self):
        with pytest.raises(ValueError):
            DecomposedKernel(0.0, (), 1.0, 1.0)
        with pytest.raises(ValueError):
            DecomposedKernel(1.0, (0.5,), 1.0, 1.0)


class TestDotG:
    def test_phi0(self):
        assert dot_g([1, 0, 0, 0]).tolist() == [1, -1, 0, 0]

    def test_zero(self):
        assert dot_g(np.zeros(4)).tolist() == [0, 0, 0, 0]

    def test_telescoping(self):
        assert dot_g([1, 1, 1]).tolist() == [1, 0, 0]

    def test_empty(self):
        with pytest.raises(ValueError):
            dot_g([])


class TestGalerkin:
    def test_placement(self):
        np.testing.assert_array_equal(build_galerkin([1, -1], 1).dense(), [[1, 0], [-1, 1]])

    def test_identity(self):
        np.testing.assert_array_equal(build_galerkin(np.eye(1, 6)[0], 5).dense(), np.eye(6))

    def test_too_short(self):
        with pytest.raises(ValueError):
            build_galerkin([1.0], 2)

    @pytest.mark.parametrize("gc,fc", [([1.0], [1.0]), ([0.3, -0.2, 0.5, 0.1, -0.4], [0.7, 0.1, -0.3, 0.2, 0.6])])
    def test_continuous_convolution(self, gc, fc):
        # project the numeric convolution and compare with K f
        L = 8
        basis = LaguerreBasis(0.5, L)
        g = lambda t: sum(c * eval_function(k, t) for k, c in enumerate(gc))
        f = lambda t: sum(c * eval_function(k, t) for k, c in enumerate(fc))

        def q(ts):
            out = []
            for t in np.atleast_1d(ts):
                v, _ = integrate.quad(lambda x: g(t - x) * f(x), 0, t, epsabs=1e-13, limit=200) if t > 0 else (0.0, 0)
                out.append(v)
            return np.array(out)

        from laplace_deconv.laguerre import QuadratureSpec

        qc = project(q, L, basis, QuadratureSpec(panels=64, order=12, tol=1e-8, graded_levels=2)).coeffs
        K = build_galerkin(dot_g(padded(gc, L + 1)), L)
        np.testing.assert_allclose(K @ padded(fc, L + 1), qc, atol=1e-6)


class TestForward:
    def test_binomial_example(self):
        L = 30
        q = forward(binomial_series(-0.5, L), padded([1, -1], L + 1))
        np.testing.assert_allclose(q, binomial_series(-1.5, L), atol=1e-14)

    def test_zero(self):
        assert np.all(forward(np.zeros(5), np.ones(5)) == 0)

    def test_dense(self, rng):
        f, g = rng.standard_normal(7), rng.standard_normal(7)
        M = np.array([[g[i - j] if i >= j else 0 for j in range(7)] for i in range(7)])
        np.testing.assert_allclose(forward(f, g), M @ f, atol=1e-12)

    def test_mismatch(self):
        with pytest.raises(ValueError):
            forward([1.0, 2.0], [1.0])


class TestDesign:
    def test_single_origin(self):
        Phi = design_matrix(DesignGrid([0.0], 1.0), 6)
        np.testing.assert_allclose(Phi[:, 0], np.ones(7))

    def test_level_zero(self):
        d = DesignGrid([0.0, 1.0, 3.0], 3.0)
        np.testing.assert_allclose(design_matrix(d, 0)[0], np.exp(-d.times / 2))

    def test_spot_entries(self):
        d = DesignGrid([0.5, 2.0, 7.5], 10.0)
        Phi = design_matrix(d, 5, LaguerreBasis(0.8))
        for k, i in [(0, 0), (3, 1), (5, 2)]:
            assert Phi[k, i] == pytest.approx(eval_function(k, d.times[i], LaguerreBasis(0.8)), abs=1e-14)

    def test_dense_design_near_identity(self):
        res = omega(DesignGrid.equispaced(2000, 100.0), 5)
        assert np.all(np.abs(res.op_norms - 1.0) < 0.1)

    def test_single_point_is_singular(self):
        with pytest.raises(SingularDesignError) as exc:
            omega(DesignGrid([1.0], 2.0), 2)
        assert exc.value.level == 1

    def test_spd(self):
        res = omega(DesignGrid.equispaced(300, 100.0), 12)
        for W in res.matrices:
            np.testing.assert_array_equal(W, W.T)
            assert np.linalg.eigvalsh(W)[0] > 0

    def test_dense_designs_bounded(self):
        # needs a horizon long enough for phi_10 to have decayed, not just n / T >= 20
        for n, T in [(2000, 100.0), (1000, 50.0), (1500, 75.0), (4000, 100.0)]:
            res = omega(DesignGrid.equispaced(n, T), 10)
            assert np.all(res.op_norms <= 1.2)

    def test_singular_level_reported(self):
        d = DesignGrid.equispaced(200, 100.0)
        with pytest.raises(SingularDesignError) as exc:
            omega(d, 80)
        assert 0 < exc.value.level <= 80

    def test_design_noise_covariance(self):
        d = DesignGrid.equispaced(120, 60.0)
        L = 4
        W = omega(d, L).matrices[L]
        rng = np.random.default_rng(3)
        draws = np.array([design_noise(d, L, rng.standard_normal(d.n)) for _ in range(20_000)])
        np.testing.assert_allclose(np.cov(draws.T), W, atol=0.05 * np.abs(W).max())

    def test_design_noise_length(self):
        with pytest.raises(ValueError):
            design_noise(DesignGrid.equispaced(10, 5.0), 2, np.zeros(9))


class TestSynthesizeSequence:
    def test_noiseless(self, rng):
        f, g = rng.standard_normal(6), rng.standard_normal(6)
        obs = synthesize_sequence(f, g, NoiseLevels(0.0, 0.0), seed=1)
        np.testing.assert_array_equal(obs.y_coeffs, forward(f, g))
        np.testing.assert_array_equal(obs.g_dot_noisy, g)

    def test_unit_variance(self):
        g = padded([1, -1], 4)
        ys = np.array([synthesize_sequence(np.zeros(4), g, NoiseLevels(1.0, 0.0), seed=s).y_coeffs for s in range(10_000)])
        assert abs(ys.var() - 1.0) < 0.05

    def test_seeded(self, rng):
        f, g = rng.standard_normal(5), rng.standard_normal(5)
        a = synthesize_sequence(f, g, NoiseLevels(0.1, 0.1), seed=42)
        b = synthesize_sequence(f, g, NoiseLevels(0.1, 0.1), seed=42)
        np.testing.assert_array_equal(a.y_coeffs, b.y_coeffs)
        np.testing.assert_array_equal(a.g_dot_noisy, b.g_dot_noisy)

    def test_omega_covariance(self):
        W = np.array([[2.0, 0.5], [0.5, 1.0]])
        ys = np.array([synthesize_sequence(np.zeros(2), [1.0, 0.0], NoiseLevels(1.0, 0.0), W, seed=s).y_coeffs for s in range(20_000)])
        np.testing.assert_allclose(np.cov(ys.T), W, atol=0.06)

    def test_omega_shape(self):
        with pytest.raises(ValueError):
            synthesize_sequence(np.zeros(3), np.ones(3), NoiseLevels(1.0, 0.0), np.eye(2), seed=0)

    @settings(max_examples=1000)
    @given(f=st.lists(st.floats(-10, 10), min_size=1, max_size=12), seed=st.integers(0, 2**32))
    def test_noiseless_bit_exact(self, f, seed):
        f = np.array(f)
        g = np.ones_like(f)
        a = synthesize_sequence(f, g, NoiseLevels(0.0, 0.0), seed=seed)
        b = synthesize_sequence(f, g, NoiseLevels(0.0, 0.0), seed=seed + 1)
        assert a.y_coeffs.tobytes() == b.y_coeffs.tobytes()


class TestSynthesizeRegression:
    def test_closed_form(self):
        d = DesignGrid([2.0], 2.0)
        phi0 = lambda t: eval_function(0, t)
        y = synthesize_regression(phi0, phi0, d, 0.0)
        assert y[0] == pytest.approx(2 * math.exp(-1), rel=1e-10)
        assert y[0] == pytest.approx(0.735759, abs=1e-6)
        assert y[0] == pytest.approx(eval_function(0, 2.0) - eval_function(1, 2.0), rel=1e-10)

    def test_pure_noise(self):
        d = DesignGrid.equispaced(50, 10.0)
        y = synthesize_regression(lambda s: 0.0, lambda s: 1.0, d, 0.3, seed=5)
        np.testing.assert_allclose(y, 0.3 * np.random.default_rng(5).standard_normal(50))


class TestKernels:
    def test_binomial_examples(self):
        assert np.all(binomial_series(1, 10) == 1)
        np.testing.assert_allclose(binomial_series(2, 10), np.arange(1, 12))
        with pytest.raises(ValueError):
            binomial_series(1, -1)

    def test_binomial_asymptotics(self):
        nu, l = 0.5, 1000
        c = binomial_series(nu, l)[-1]
        assert c * gamma_fn(nu) * l ** (1 - nu) == pytest.approx(1.0, rel=0.02)

    def test_decomposition_examples(self):
        np.testing.assert_allclose(kernel_from_decomposition(DecomposedKernel(1, (), 1, 1), 4), [1, -1, 0, 0, 0])
        np.testing.assert_allclose(kernel_from_decomposition(DecomposedKernel(2, (), 1, 0), 3), [2, 0, 0, 0])
        np.testing.assert_allclose(kernel_from_decomposition(DecomposedKernel(1, (), 1, 2), 4), [1, -2, 1, 0, 0], atol=1e-15)

    def test_decomposition_with_roots(self):
        # w(z) = (z - 2)(z + 3) = z^2 + z - 6; mu = 2, nu = 1
        got = kernel_from_decomposition(DecomposedKernel(1.0, (2.0, -3.0), 2.0, 1.0), 5)
        ref = np.convolve([-6, 1, 1], [2, -1])
        np.testing.assert_allclose(got, np.r_[ref, 0, 0], atol=1e-13)

    def test_conjugate_roots(self):
        got = kernel_from_decomposition(DecomposedKernel(1.0, (2 + 1j, 2 - 1j), 1.0, 0.0), 3)
        np.testing.assert_allclose(got, [5, -4, 1, 0], atol=1e-13)
        with pytest.raises(ValueError):
            kernel_from_decomposition(DecomposedKernel(1.0, (2 + 1j,), 1.0, 0.0), 3)

    def test_kernel_g_dot(self):
        np.testing.assert_array_equal(kernel_g_dot(ExplicitKernel(np.array([1.0])), 3), [1, -1, 0, 0])
        np.testing.assert_allclose(kernel_g_dot(DecomposedKernel(1, (), 1, 1), 3), [1, -1, 0, 0])

    def test_cumulative_inverse_energy(self):
        gamma = invert_series(dot_g(padded([1.0], 40)))
        e = np.cumsum(gamma**2)
        assert np.all(np.diff(e) >= 0)
        l = np.arange(40)
        np.testing.assert_array_equal(np.cumsum(e), (l + 1) * (l + 2) / 2)


class TestDip:
    def test_one_minus_z(self):
        assert abs(estimate_dip(padded([1, -1])).nu - 1) < 0.1

    def test_identity(self):
        assert abs(estimate_dip(padded([1])).nu) < 0.1

    def test_second_order(self):
        assert abs(estimate_dip(padded([1, -2, 1])).nu - 2) < 0.15

    def test_hs_fit_reported(self):
        est = estimate_dip(padded([1, -1]))
        assert abs(est.nu_hs - 1) < 0.1 and est.Q > 0 and est.Q_hs > 0

    def test_needs_three_levels(self):
        with pytest.raises(ValueError):
            estimate_dip(padded([1, -1], 6), levels=[4, 5])

    def test_singular(self):
        with pytest.raises(ZeroDivisionError):
            estimate_dip(padded([0, 1]))
