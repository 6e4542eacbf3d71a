import math
import unittest

import numpy as np

from squeeze_lab.exceptions import DomainError, PreconditionError
from squeeze_lab.physics.model import OperatingPoint, ThermalEnvironment
from squeeze_lab.physics.spectra import (
    Method,
    Regime,
    angle_envelope,
    best_angle,
    closed_form_agreement,
    closed_form_comb,
    closed_form_diss,
    closed_form_disp,
    default_omega_grid,
    depth_db,
    equal_magnitude_condition,
    exact_spectrum,
    mech_susceptibility,
    optimal_analytic,
    optimal_numeric,
    output_transfer,
    quadrature_covariance,
    regime_of,
    spectrum_map,
    squeezing_bandwidth,
)

TWO_PI = 2.0 * math.pi
KAPPA_S = TWO_PI * 1.5e6
OMEGA_M = TWO_PI * 136e3
GAMMA_M = TWO_PI * 0.23
VACUUM = ThermalEnvironment()


def dispersive_point() -> OperatingPoint:
    return OperatingPoint.from_enhanced(KAPPA_S, OMEGA_M, GAMMA_M, TWO_PI * 75e3, 0.0)


def dissipative_point() -> OperatingPoint:
    return OperatingPoint.from_enhanced(KAPPA_S, OMEGA_M, GAMMA_M, 0.0, TWO_PI * 150e3)


def combined_point() -> OperatingPoint:
    return OperatingPoint.from_enhanced(KAPPA_S, OMEGA_M, GAMMA_M, TWO_PI * 75e3, TWO_PI * 15e3)


class TestBasics(unittest.TestCase):
    """Tests for depth, susceptibility and angle helpers"""

    def test_depth_db(self):
        self.assertEqual(depth_db(0.5), 0.0)
        self.assertAlmostEqual(depth_db(0.25), 10.0 * math.log10(2.0))
        self.assertTrue(math.isnan(depth_db(0.0)))
        depths = depth_db([0.05, 0.5, -1.0])
        self.assertAlmostEqual(depths[0], 10.0)
        self.assertTrue(np.isnan(depths[2]))

    def test_susceptibility_on_resonance(self):
        chi = mech_susceptibility([OMEGA_M], OMEGA_M, GAMMA_M).chi[0]
        self.assertAlmostEqual(chi.real, 0.0)
        self.assertAlmostEqual(chi.imag * GAMMA_M, 1.0, places=12)
        with self.assertRaises(DomainError):
            mech_susceptibility([OMEGA_M], OMEGA_M, 0.0)

    def test_best_angle(self):
        sigma = np.array([[1.0, 0.0], [0.0, 0.25]])
        theta, value = best_angle(sigma)
        self.assertAlmostEqual(theta, math.pi / 2)
        self.assertAlmostEqual(value, 0.25)

    def test_best_angle_respects_range(self):
        sigma = np.array([[1.0, 0.0], [0.0, 0.25]])
        theta, value = best_angle(sigma, (0.0, math.pi / 4))
        self.assertAlmostEqual(theta, math.pi / 4)
        self.assertAlmostEqual(value, 0.625)

    def test_angle_envelope_matches_dense_scan(self):
        rng = np.random.default_rng(7)
        a = rng.uniform(0.1, 2.0, 50)
        c = rng.uniform(0.1, 2.0, 50)
        b = rng.uniform(-1.0, 1.0, 50) * np.sqrt(a * c)
        sigma = np.stack((np.stack((a, b), -1), np.stack((b, c), -1)), -2)
        theta = np.linspace(0.0, math.pi, 20001)
        scanned = np.min(
            np.cos(theta)[:, None] ** 2 * a
            + 2.0 * np.cos(theta)[:, None] * np.sin(theta)[:, None] * b
            + np.sin(theta)[:, None] ** 2 * c,
            axis=0,
        )
        thetas, S = angle_envelope(sigma)
        np.testing.assert_allclose(S, np.linalg.eigvalsh(sigma)[:, 0], rtol=1e-10, atol=1e-14)
        self.assertTrue(np.all(S <= scanned + 1e-12))
        np.testing.assert_allclose(S, scanned, rtol=0.0, atol=1e-7)
        self.assertTrue(np.all((thetas >= 0.0) & (thetas <= math.pi)))

    def test_angle_envelope_clipped_range(self):
        sigma = np.array([[[1.0, 0.0], [0.0, 0.25]], [[0.25, 0.0], [0.0, 1.0]]])
        thetas, S = angle_envelope(sigma, (math.pi / 3, math.pi / 2))
        np.testing.assert_allclose(thetas, [math.pi / 2, math.pi / 3])
        np.testing.assert_allclose(S, [0.25, 0.25 * 0.25 + 0.75])

    def test_regime_of(self):
        self.assertEqual(regime_of(dispersive_point()), Regime.DISP)
        self.assertEqual(regime_of(dissipative_point()), Regime.DISS)
        self.assertEqual(regime_of(combined_point()), Regime.COMB)

    def test_default_grid_centered(self):
        grid = default_omega_grid(OMEGA_M, points_per_side=50)
        self.assertEqual(grid.size, 101)
        self.assertEqual(grid[50], OMEGA_M)
        self.assertTrue(np.all(np.diff(grid) > 0))


class TestExactSpectrum(unittest.TestCase):
    """Tests for the exact linear-response spectrum"""

    def test_shot_noise_without_coupling(self):
        for delta in (0.0, TWO_PI * 20e3):
            op = OperatingPoint.from_enhanced(KAPPA_S, OMEGA_M, GAMMA_M, 0.0, 0.0, delta)
            theta, omega = np.meshgrid(np.linspace(0.0, math.pi, 7), OMEGA_M + TWO_PI * np.linspace(-500, 500, 11))
            S = exact_spectrum(op, VACUUM, theta, omega)
            np.testing.assert_allclose(S, 0.5, atol=1e-12)

    def test_transfer_shape(self):
        transfer = output_transfer(combined_point(), [OMEGA_M, OMEGA_M + 1.0])
        self.assertEqual(transfer.T.shape, (2, 2, 3))
        self.assertEqual(transfer.for_quadrature(0.3).shape, (2, 3))

    def test_covariance_symmetric(self):
        sigma = quadrature_covariance(combined_point(), VACUUM, OMEGA_M + TWO_PI * np.array([-10.0, 5.0, 30.0]))
        np.testing.assert_allclose(sigma[:, 0, 1], sigma[:, 1, 0])

    def test_scalar_input_returns_float(self):
        self.assertIsInstance(exact_spectrum(dispersive_point(), VACUUM, 0.1, OMEGA_M), float)

    def test_thermal_noise_raises_spectrum(self):
        op = dispersive_point()
        cold = exact_spectrum(op, VACUUM, math.pi / 2, OMEGA_M)
        hot = exact_spectrum(op, ThermalEnvironment(n_th=1000.0), math.pi / 2, OMEGA_M)
        self.assertGreater(hot, cold)

    def test_spectrum_periodic_in_theta(self):
        op = combined_point()
        theta, omega = np.meshgrid(np.linspace(0.0, math.pi, 13), OMEGA_M + TWO_PI * np.linspace(-100, 100, 41))
        np.testing.assert_allclose(
            exact_spectrum(op, VACUUM, theta + math.pi, omega), exact_spectrum(op, VACUUM, theta, omega), rtol=1e-9
        )

    def test_uncertainty_product(self):
        op = combined_point()
        theta, omega = np.meshgrid(np.linspace(0.0, math.pi, 37), OMEGA_M + TWO_PI * np.linspace(-500, 500, 201))
        product = exact_spectrum(op, VACUUM, theta, omega) * exact_spectrum(op, VACUUM, theta + math.pi / 2, omega)
        self.assertGreaterEqual(float(np.min(product)), 0.25 * (1.0 - 1e-6))

    def test_fano_asymmetry_about_resonance(self):
        op = combined_point()
        offset = 5.0 * GAMMA_M
        below = exact_spectrum(op, VACUUM, math.pi / 4, OMEGA_M - offset)
        above = exact_spectrum(op, VACUUM, math.pi / 4, OMEGA_M + offset)
        self.assertGreater(abs(below - above) / max(below, above), 1e-4)


class TestClosedForms(unittest.TestCase):
    """Tests for the closed-form spectra"""

    def test_closed_forms_need_resonant_point(self):
        detuned = OperatingPoint.from_enhanced(KAPPA_S, OMEGA_M, GAMMA_M, TWO_PI * 75e3, 0.0, TWO_PI * 1e3)
        with self.assertRaises(PreconditionError):
            closed_form_disp(detuned, VACUUM, 0.1, OMEGA_M)

    def test_closed_forms_check_regime(self):
        with self.assertRaises(PreconditionError):
            closed_form_disp(combined_point(), VACUUM, 0.1, OMEGA_M)
        with self.assertRaises(PreconditionError):
            closed_form_diss(combined_point(), VACUUM, 0.1, OMEGA_M)

    def test_dissipative_anti_squeezed_on_resonance(self):
        op = dissipative_point()
        self.assertAlmostEqual(closed_form_diss(op, VACUUM, math.pi / 2, OMEGA_M), 0.5, places=12)
        for theta in np.radians([5.0, 30.0, 60.0, 85.0]):
            self.assertGreater(closed_form_diss(op, VACUUM, theta, OMEGA_M), 0.5)

    def test_combined_reduces_to_dispersive(self):
        op = dispersive_point()
        theta, omega = np.meshgrid(np.linspace(0.0, math.pi, 13), OMEGA_M + TWO_PI * np.linspace(-100, 100, 21))
        np.testing.assert_allclose(
            closed_form_comb(op, VACUUM, theta, omega), closed_form_disp(op, VACUUM, theta, omega), rtol=1e-10
        )

    def test_combined_matches_dissipative_on_resonance(self):
        op = dissipative_point()
        env = ThermalEnvironment(n_th=10.0)
        for theta in np.radians([0.0, 20.0, 45.0, 90.0, 135.0]):
            self.assertAlmostEqual(
                closed_form_comb(op, env, theta, OMEGA_M) / closed_form_diss(op, env, theta, OMEGA_M), 1.0, places=9
            )

    def test_closed_forms_track_exact(self):
        """Unmasked deviation over ω_m ± 100 Hz, dips included"""
        bounds = ((dispersive_point(), 0.6), (dissipative_point(), 0.1), (combined_point(), 0.1))
        for op, bound in bounds:
            agreement = closed_form_agreement(op, VACUUM)
            self.assertLessEqual(agreement.grid_max_relative, bound, agreement.method)
            self.assertGreater(agreement.grid_max_relative, 0.0)

    def test_dispersive_closed_form_misses_dip_shape(self):
        agreement = closed_form_agreement(dispersive_point(), VACUUM)
        self.assertGreater(agreement.grid_max_relative, 0.1)
        self.assertGreater(agreement.grid_max_db, 0.4)

    def test_closed_optima_track_exact(self):
        for op in (dispersive_point(), dissipative_point()):
            agreement = closed_form_agreement(op, VACUUM)
            self.assertLessEqual(agreement.optimum_relative, 0.02, agreement.method)
        combined = closed_form_agreement(combined_point(), VACUUM)
        self.assertEqual(combined.method, Method.CLOSED_COMB.value)
        self.assertLessEqual(combined.optimum_relative, 0.5)
        record = combined.to_dict(OMEGA_M)
        self.assertAlmostEqual(record["span_Hz"], 100.0)
        self.assertIn("optimum_gap_dB", record)

    def test_agreement_rejects_exact_method(self):
        with self.assertRaises(DomainError):
            closed_form_agreement(dispersive_point(), VACUUM, Method.EXACT)


class TestOptima(unittest.TestCase):
    """Tests for optimal squeezing"""

    def test_dispersive_analytic_optimum(self):
        optimum = optimal_analytic(dispersive_point(), VACUUM, Regime.DISP)
        self.assertAlmostEqual(optimum.S_opt / 6.13e-5, 1.0, delta=0.01)
        self.assertAlmostEqual(optimum.depth_db, 39.11, delta=0.02)
        self.assertAlmostEqual((optimum.omega_opt - OMEGA_M) / TWO_PI, 20.8, delta=0.1)

    def test_dissipative_analytic_optimum(self):
        optimum = optimal_analytic(dissipative_point(), VACUUM, "diss")
        self.assertAlmostEqual(optimum.S_opt / 7.351e-3, 1.0, delta=0.002)
        self.assertAlmostEqual(optimum.depth_db, 18.33, delta=0.02)
        self.assertAlmostEqual((optimum.omega_opt - OMEGA_M) / TWO_PI, -1.9, delta=0.05)

    def test_analytic_optimum_checks_regime(self):
        with self.assertRaises(PreconditionError):
            optimal_analytic(combined_point(), VACUUM, Regime.DISP)

    def test_numeric_optimum_matches_analytic(self):
        for op, regime in ((dispersive_point(), Regime.DISP), (dissipative_point(), Regime.DISS)):
            numeric = optimal_numeric(op, VACUUM, Method.EXACT)
            analytic = optimal_analytic(op, VACUUM, regime)
            self.assertAlmostEqual(numeric.depth_db, analytic.depth_db, delta=0.5)
            # the closed forms dip equally on both sides of ω_m
            self.assertAlmostEqual(
                abs(numeric.omega_opt - OMEGA_M) / TWO_PI, abs(analytic.omega_opt - OMEGA_M) / TWO_PI, delta=0.5
            )

    def test_numeric_closed_optimum_is_analytic(self):
        for op, method, regime in (
            (dispersive_point(), Method.CLOSED_DISP, Regime.DISP),
            (dissipative_point(), Method.CLOSED_DISS, Regime.DISS),
        ):
            numeric = optimal_numeric(op, VACUUM, method)
            analytic = optimal_analytic(op, VACUUM, regime)
            self.assertAlmostEqual(numeric.depth_db, analytic.depth_db, delta=0.05)
            self.assertAlmostEqual(
                abs(numeric.omega_opt - OMEGA_M) / TWO_PI, abs(analytic.omega_opt - OMEGA_M) / TWO_PI, delta=0.1
            )

    def test_dispersive_optimum_matches_dense_envelope(self):
        op = dispersive_point()
        grid = OMEGA_M + TWO_PI * np.linspace(-100, 100, 40001)
        _, envelope = angle_envelope(quadrature_covariance(op, VACUUM, grid))
        optimum = optimal_numeric(op, VACUUM, Method.EXACT)
        self.assertLessEqual(optimum.S_opt, float(np.min(envelope)) * (1.0 + 1e-9))
        self.assertAlmostEqual(optimum.depth_db, 39.08, delta=0.05)
        self.assertAlmostEqual((optimum.omega_opt - OMEGA_M) / TWO_PI, -20.69, delta=0.1)

    def test_dissipative_optimum_below_resonance(self):
        op = dissipative_point()
        lower = optimal_numeric(op, VACUUM, Method.EXACT, omega_range=(OMEGA_M - TWO_PI * 100.0, OMEGA_M))
        offset = (lower.omega_opt - OMEGA_M) / TWO_PI
        self.assertTrue(-10.0 < offset < 0.0, offset)
        self.assertAlmostEqual(lower.depth_db, 18.3, delta=2.0)
        full = optimal_numeric(op, VACUUM, Method.EXACT)
        self.assertLessEqual(full.S_opt, lower.S_opt * (1.0 + 1e-9))

    def test_squeezing_deepens_with_power(self):
        depths = []
        for power in (0.01, 0.04, 0.16):
            g = TWO_PI * 75e3 * math.sqrt(power / 0.04)
            op = OperatingPoint.from_enhanced(KAPPA_S, OMEGA_M, GAMMA_M, g, 0.0)
            depths.append(optimal_numeric(op, VACUUM, Method.EXACT).depth_db)
        self.assertEqual(depths, sorted(depths))
        self.assertGreater(depths[-1] - depths[0], 6.0)

    def test_thermal_regression_values(self):
        cases = ((0.04, 1000.0, 9.61), (0.28, 1000.0, 17.64), (0.28, 1.5e5, 1.40))
        for power, n_th, expected in cases:
            g = TWO_PI * 75e3 * math.sqrt(power / 0.04)
            op = OperatingPoint.from_enhanced(KAPPA_S, OMEGA_M, GAMMA_M, g, 0.0)
            optimum = optimal_analytic(op, ThermalEnvironment(n_th=n_th), Regime.DISP)
            self.assertAlmostEqual(optimum.depth_db, expected, delta=0.05)

    def test_numeric_optimum_never_above_grid(self):
        op = combined_point()
        grid = OMEGA_M + TWO_PI * np.linspace(-50, 50, 101)
        optimum = optimal_numeric(op, VACUUM, omega_grid=grid)
        sampled = exact_spectrum(op, VACUUM, *np.meshgrid(np.linspace(0.0, math.pi, 361), grid))
        self.assertLessEqual(optimum.S_opt, float(np.min(sampled)) * (1.0 + 1e-12))

    def test_numeric_optimum_rejects_bad_ranges(self):
        with self.assertRaises(DomainError):
            optimal_numeric(dispersive_point(), VACUUM, theta_range=(1.0, 1.0))
        with self.assertRaises(DomainError):
            optimal_numeric(dispersive_point(), VACUUM, omega_range=(OMEGA_M, OMEGA_M - 1.0))

    def test_combined_analytic_optimum(self):
        optimum = optimal_analytic(combined_point(), VACUUM, Regime.COMB)
        self.assertTrue(optimum.approximate)
        self.assertIsNotNone(optimum.printed_theta)
        self.assertLess(optimum.S_opt, 0.5)
        self.assertGreater(optimum.depth_db, 0.0)

    def test_thermal_occupancy_degrades_squeezing(self):
        depths = [
            optimal_analytic(dispersive_point(), ThermalEnvironment(n_th=n), Regime.DISP).depth_db
            for n in (0.0, 10.0, 1e3, 1e5)
        ]
        self.assertEqual(depths, sorted(depths, reverse=True))

    def test_equal_magnitude_ratio(self):
        report = equal_magnitude_condition(dispersive_point(), VACUUM)
        self.assertLess(report.derived_residual, 1e-10)
        self.assertGreater(report.stated_residual, 1e-3)
        self.assertEqual(report.equal_at, "2")
        self.assertEqual(report.to_dict()["equal_at"], "2")


class TestMaps(unittest.TestCase):
    """Tests for spectrum maps and bandwidth"""

    def setUp(self):
        self.op = dispersive_point()
        self.omega = OMEGA_M + TWO_PI * np.linspace(-100, 100, 41)
        self.theta = np.radians(np.linspace(0.0, 180.0, 19))

    def test_map_shape_and_frame(self):
        result = spectrum_map(self.op, VACUUM, Method.EXACT, self.omega, self.theta)
        self.assertEqual(result.S.shape, (19, 41))
        self.assertEqual(result.depth_db.shape, (19, 41))
        frame = result.to_frame()
        self.assertEqual(len(frame), 19 * 41)
        self.assertEqual(
            list(frame.columns), ["omega_Hz_offset_from_mech_resonance", "theta_deg", "S", "depth_dB"]
        )
        self.assertAlmostEqual(float(frame["omega_Hz_offset_from_mech_resonance"].iloc[0]), -100.0)

    def test_map_matches_pointwise_spectrum(self):
        result = spectrum_map(self.op, VACUUM, Method.CLOSED_DISP, self.omega, self.theta)
        np.testing.assert_allclose(result.S[3], closed_form_disp(self.op, VACUUM, self.theta[3], self.omega))

    def test_map_rejects_empty_grid(self):
        with self.assertRaises(DomainError):
            spectrum_map(self.op, VACUUM, Method.EXACT, [], self.theta)

    def test_bandwidth(self):
        theta = np.array([0.0, optimal_analytic(self.op, VACUUM, Regime.DISP).theta_opt])
        omega = OMEGA_M + TWO_PI * np.linspace(-100, 100, 2001)
        result = spectrum_map(self.op, VACUUM, Method.CLOSED_DISP, omega, theta)
        widths = squeezing_bandwidth(result, 3.0)
        self.assertEqual(widths[0], 0.0)
        self.assertGreater(widths[1], 0.0)


if __name__ == "__main__":
    unittest.main()
