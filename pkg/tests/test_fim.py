import numpy as np
import pytest

from genident.errors import DomainError
from genident.fim import (
    FIMatrix,
    add_noise,
    central_difference_jacobian,
    effective_dimension,
    fim,
    model_map,
    sensitivities,
    spectrum,
)
from genident.generator import IndependentParams, LimitFlags, ObservationGrid

NOM = IndependentParams.nominal()
IDENTIFIABLE = ("dx2", "dx3", "dx4", "xdpp", "dTd", "dTq")


class TestModelMap:
    def test_output_length(self):
        assert model_map(NOM).shape == (606,)

    def test_determinism(self):
        y1 = model_map(NOM)
        y2 = model_map(NOM)
        np.testing.assert_array_equal(y1, y2)

    def test_sloppy_damping_barely_moves_output(self):
        y0 = model_map(NOM)
        bumped = IndependentParams(**{**NOM.__dict__, "D": NOM.D * 1.1})
        y1 = model_map(bumped)
        rms = np.sqrt(np.mean((y1 - y0) ** 2))
        assert rms < 1e-3


class TestJacobian:
    def test_constant_output_gives_zero_column(self):
        def f(x):
            x = np.atleast_2d(x)
            out = np.column_stack([x[:, 0] ** 2, np.ones(x.shape[0])])
            return out

        J = central_difference_jacobian(f, np.array([0.3, 0.7]), 1e-5)
        np.testing.assert_allclose(J[:, 1], 0.0, atol=1e-9)
        np.testing.assert_allclose(J[1, :], 0.0, atol=1e-9)

    def test_richardson_ratio_near_four(self):
        # smooth nonlinear map with analytic jacobian
        def f(x):
            x = np.atleast_2d(x)
            return np.column_stack([np.exp(np.sin(x[:, 0])), np.cos(x[:, 0] * x[:, 1])])

        x0 = np.array([0.4, 1.1])
        exact = np.array([
            [np.cos(x0[0]) * np.exp(np.sin(x0[0])), 0.0],
            [-np.sin(x0[0] * x0[1]) * x0[1], -np.sin(x0[0] * x0[1]) * x0[0]],
        ])
        e1 = np.abs(central_difference_jacobian(f, x0, 2e-2) - exact).max()
        e2 = np.abs(central_difference_jacobian(f, x0, 1e-2) - exact).max()
        assert e1 / e2 == pytest.approx(4.0, rel=0.25)

    def test_damping_column_has_smallest_norm(self):
        S = sensitivities(NOM)
        norms = np.linalg.norm(S.entries, axis=0)
        d_idx = S.param_names.index("D")
        assert np.argmin(norms) == d_idx

    def test_step_must_be_positive(self):
        with pytest.raises(DomainError):
            sensitivities(NOM, step=0.0)


class TestFim:
    def test_zero_jacobian(self):
        I = fim(np.zeros((10, 3)))
        np.testing.assert_array_equal(I.entries, np.zeros((3, 3)))

    def test_rank_deficiency_shows_in_spectrum(self):
        rng = np.random.default_rng(5)
        J = rng.standard_normal((30, 2)) @ rng.standard_normal((2, 5))  # rank 2
        lam = spectrum(fim(J)).eigenvalues
        assert np.sum(lam < 1e-12 * lam[0]) == 3

    def test_symmetry_required(self):
        with pytest.raises(DomainError):
            FIMatrix(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_nominal_span_at_least_ten_decades(self, nominal_spectrum):
        lam = nominal_spectrum.eigenvalues
        assert np.log10(lam[0] / lam[-1]) >= 10.0

    def test_psd_at_random_points_near_nominal(self):
        rng = np.random.default_rng(17)
        for _ in range(3):
            p = IndependentParams.from_array(
                NOM.to_array() * (1 + 0.1 * rng.uniform(-1, 1, 11)))
            S = sensitivities(p)
            I = fim(S)
            lam = np.linalg.eigvalsh(I.entries)
            assert np.abs(I.entries - I.entries.T).max() <= 1e-12 * np.abs(I.entries).max()
            assert lam.min() >= -1e-10 * lam.max()


class TestSpectrum:
    def test_identity_matrix(self):
        sp = spectrum(FIMatrix(np.eye(4)), list("abcd"))
        np.testing.assert_allclose(sp.eigenvalues, 1.0)
        np.testing.assert_allclose(sorted(sp.participation.max(axis=1)), 1.0)
        np.testing.assert_allclose(sp.participation.sum(axis=0), 1.0, atol=1e-10)

    def test_participation_columns_sum_to_one(self, nominal_spectrum):
        np.testing.assert_allclose(nominal_spectrum.participation.sum(axis=0), 1.0,
                                   atol=1e-10)

    def test_sloppiest_mode_is_damping(self, nominal_spectrum):
        d = nominal_spectrum.param_names.index("D")
        assert nominal_spectrum.participation[d, -1] > 0.9

    def test_second_sloppiest_is_inertia(self, nominal_spectrum):
        h = nominal_spectrum.param_names.index("H")
        assert nominal_spectrum.participation[h, -2] > 0.5

    def test_identifiable_axes_live_in_top_six_modes(self, nominal_spectrum):
        proj = nominal_spectrum.identifiable_projection(6)
        for name in IDENTIFIABLE:
            assert proj[name] > 0.8, f"{name}: {proj[name]:.3f}"

    def test_scaling_observations_scales_eigenvalues(self):
        rng = np.random.default_rng(2)
        J = rng.standard_normal((40, 6))
        s1 = spectrum(fim(J))
        s2 = spectrum(fim(3.0 * J))
        np.testing.assert_allclose(s2.eigenvalues, 9.0 * s1.eigenvalues, rtol=1e-12)
        np.testing.assert_allclose(s2.participation, s1.participation, atol=1e-12)

    def test_directional_derivative_matches_jacobian(self):
        from genident.fim import SENSITIVITY_RTOL, generator_map
        S = sensitivities(NOM)
        rng = np.random.default_rng(23)
        u = rng.standard_normal(11)
        u /= np.linalg.norm(u)
        f = generator_map()
        h = 1e-4
        lt = np.log(NOM.to_array())
        Y = f(np.vstack([lt + h * u, lt - h * u]))
        dd = (Y[0] - Y[1]) / (2 * h)
        Ju = S.entries @ u
        assert np.linalg.norm(dd - Ju) / np.linalg.norm(Ju) < 1e-4


class TestEffectiveDimension:
    def test_cutoff_above_top_eigenvalue(self, nominal_spectrum):
        assert effective_dimension(nominal_spectrum,
                                   nominal_spectrum.eigenvalues[0] * 2) == 0

    def test_counts_strictly_above_cutoff(self):
        sp = spectrum(FIMatrix(np.diag([1.0, 0.5, 1e-4])))
        assert effective_dimension(sp, 1e-2) == 2

    def test_cutoff_must_be_positive(self, nominal_spectrum):
        with pytest.raises(DomainError):
            effective_dimension(nominal_spectrum, 0.0)

    def test_reduced_model_keeps_six_identifiable_directions(self):
        from genident.generator import LimitFlags
        S = sensitivities(NOM, LimitFlags.all())
        sp = spectrum(fim(S), S.param_names)
        assert effective_dimension(sp, 1e-2) == 6


class TestNoise:
    def test_zero_sigma_is_identity(self):
        y = np.arange(5.0)
        out = add_noise(y, 0.0, seed=1)
        np.testing.assert_array_equal(out.values, y)

    def test_seed_determinism(self):
        y = np.zeros(100)
        a = add_noise(y, 0.5, seed=42)
        b = add_noise(y, 0.5, seed=42)
        np.testing.assert_array_equal(a.values, b.values)

    def test_sample_mean_is_statistically_zero(self):
        n = 100000
        out = add_noise(np.zeros(n), 1.0, seed=9)
        assert abs(out.values.mean()) < 3.0 / np.sqrt(n)

    def test_negative_sigma_rejected(self):
        with pytest.raises(DomainError):
            add_noise(np.zeros(3), -1.0)
