import math
import unittest

from pydantic import ValidationError

from squeeze_lab.exceptions import DomainError, PreconditionError, UnphysicalOperatingPointError
from squeeze_lab.physics.model import (
    HBAR,
    CalibrationReference,
    DriveMode,
    DriveSpec,
    OperatingPoint,
    PhysicalParams,
    ThermalEnvironment,
    calibrate_bare_couplings,
    drive_amplitude,
    laser_frequency,
    occupancy_temperature,
    power_sweep,
    solve_steady_state,
    solve_steady_state_explicit,
    solve_steady_state_fixed_frequency,
    solve_steady_state_resonant,
    thermal_occupancy,
)

TWO_PI = 2.0 * math.pi
KAPPA_S = TWO_PI * 1.5e6
OMEGA_M = TWO_PI * 136e3
GAMMA_M = TWO_PI * 0.23


def reference_point() -> CalibrationReference:
    return CalibrationReference(
        power=0.040,
        G_omega=TWO_PI * 75e3,
        G_kappa=TWO_PI * 15e3,
        kappa_s=KAPPA_S,
        omega_m=OMEGA_M,
    )


def reference_params(drive: DriveSpec = None) -> PhysicalParams:
    calibration = calibrate_bare_couplings(reference_point())
    return PhysicalParams(
        kappa=calibration.kappa,
        omega_m=OMEGA_M,
        gamma_m=GAMMA_M,
        g_omega=calibration.g_omega,
        g_kappa=calibration.g_kappa,
        drive=drive or DriveSpec(power=0.040),
    )


class TestUnits(unittest.TestCase):
    """Tests for drive and thermal conversions"""

    def test_laser_frequency(self):
        self.assertAlmostEqual(laser_frequency(1064e-9) / (TWO_PI * 2.8176e14), 1.0, places=4)
        with self.assertRaises(DomainError):
            laser_frequency(0.0)

    def test_drive_amplitude(self):
        omega_l = laser_frequency()
        self.assertAlmostEqual(drive_amplitude(0.04, omega_l), math.sqrt(0.04 / (HBAR * omega_l)))
        self.assertEqual(drive_amplitude(0.0, omega_l), 0.0)
        with self.assertRaises(DomainError):
            drive_amplitude(-1.0, omega_l)

    def test_thermal_occupancy_at_one_kelvin(self):
        """1 K at 136 kHz is about 1.53e5 phonons"""
        n = thermal_occupancy(1.0, OMEGA_M)
        self.assertAlmostEqual(n / 1.53e5, 1.0, delta=0.01)
        self.assertEqual(thermal_occupancy(0.0, OMEGA_M), 0.0)

    def test_occupancy_temperature(self):
        """1000 phonons at 136 kHz is about 6.53 mK"""
        self.assertAlmostEqual(occupancy_temperature(1000.0, OMEGA_M) * 1e3, 6.53, delta=0.02)
        for temperature in (1e-3, 0.1, 4.0, 300.0):
            n = thermal_occupancy(temperature, OMEGA_M)
            self.assertAlmostEqual(occupancy_temperature(n, OMEGA_M) / temperature, 1.0, places=9)
        with self.assertRaises(DomainError):
            occupancy_temperature(-1.0, OMEGA_M)

    def test_thermal_environment_consistency(self):
        env = ThermalEnvironment.from_temperature(0.5, OMEGA_M)
        self.assertAlmostEqual(env.n_th, thermal_occupancy(0.5, OMEGA_M))
        self.assertAlmostEqual(env.brownian_strength(GAMMA_M), GAMMA_M * (2.0 * env.n_th + 1.0))
        with self.assertRaises(ValidationError):
            ThermalEnvironment(n_th=10.0, temperature=1.0, omega_m=OMEGA_M)
        with self.assertRaises(ValidationError):
            ThermalEnvironment(n_th=-1.0)

    def test_thermal_environment_tolerance(self):
        n = thermal_occupancy(0.5, OMEGA_M)
        ThermalEnvironment(n_th=n * (1.0 + 1e-13), temperature=0.5, omega_m=OMEGA_M)
        with self.assertRaises(ValidationError):
            ThermalEnvironment(n_th=n * (1.0 + 1e-10), temperature=0.5, omega_m=OMEGA_M)


class TestParameters(unittest.TestCase):
    """Tests for parameter validation"""

    def test_explicit_drive_needs_detuning(self):
        with self.assertRaises(ValidationError):
            DriveSpec(power=0.01, mode=DriveMode.EXPLICIT_DETUNING)
        spec = DriveSpec(power=0.01, mode=DriveMode.EXPLICIT_DETUNING, detuning=TWO_PI * 1e3)
        self.assertEqual(spec.detuning, TWO_PI * 1e3)

    def test_both_couplings_negative_rejected(self):
        with self.assertRaises(ValidationError):
            PhysicalParams(kappa=KAPPA_S, omega_m=OMEGA_M, gamma_m=GAMMA_M, g_omega=-1.0, g_kappa=-1.0)
        params = PhysicalParams(kappa=KAPPA_S, omega_m=OMEGA_M, gamma_m=GAMMA_M, g_omega=1.0, g_kappa=-1.0)
        self.assertEqual(params.g_kappa, -1.0)

    def test_rates_must_be_positive(self):
        with self.assertRaises(ValidationError):
            PhysicalParams(kappa=0.0, omega_m=OMEGA_M, gamma_m=GAMMA_M)


class TestCalibration(unittest.TestCase):
    """Tests for bare coupling calibration"""

    def test_resonant_solve_reproduces_reference(self):
        op = solve_steady_state_resonant(reference_params())
        self.assertAlmostEqual(op.kappa_s / KAPPA_S, 1.0, places=9)
        self.assertAlmostEqual(abs(op.G_omega) / (TWO_PI * 75e3), 1.0, places=9)
        self.assertAlmostEqual(abs(op.G_kappa) / (TWO_PI * 15e3), 1.0, places=9)
        self.assertEqual(op.Delta_s, 0.0)
        self.assertLess(op.residual, 1e-10)

    def test_bare_decay_exceeds_effective_decay(self):
        calibration = calibrate_bare_couplings(reference_point())
        # κ − κ_s = g_κ Q_s = G_ω G_κ/(2ω_m) on resonance
        expected = TWO_PI * 75e3 * TWO_PI * 15e3 / (2.0 * OMEGA_M)
        self.assertAlmostEqual((calibration.kappa - KAPPA_S) / expected, 1.0, places=9)

    def test_invalid_reference(self):
        reference = CalibrationReference(power=0.0, G_omega=1.0, G_kappa=1.0, kappa_s=KAPPA_S, omega_m=OMEGA_M)
        with self.assertRaises(DomainError):
            calibrate_bare_couplings(reference)

    def test_detuned_reference_round_trip(self):
        delta = TWO_PI * 20e3
        reference = CalibrationReference(
            power=0.040,
            G_omega=TWO_PI * 75e3,
            G_kappa=TWO_PI * 15e3,
            kappa_s=KAPPA_S,
            omega_m=OMEGA_M,
            Delta_s=delta,
        )
        calibration = calibrate_bare_couplings(reference)
        params = PhysicalParams(
            kappa=calibration.kappa,
            omega_m=OMEGA_M,
            gamma_m=GAMMA_M,
            g_omega=calibration.g_omega,
            g_kappa=calibration.g_kappa,
            drive=DriveSpec(power=0.040, mode=DriveMode.EXPLICIT_DETUNING, detuning=delta),
        )
        op = solve_steady_state_explicit(params)
        self.assertAlmostEqual(op.kappa_s / KAPPA_S, 1.0, delta=1e-8)
        self.assertAlmostEqual(abs(op.G_omega) / (TWO_PI * 75e3), 1.0, delta=1e-8)
        self.assertAlmostEqual(abs(op.G_kappa) / (TWO_PI * 15e3), 1.0, delta=1e-8)

    def test_low_power_decay_close_to_bare(self):
        params = reference_params(DriveSpec(power=1e-3))
        op = solve_steady_state_resonant(params)
        self.assertLess(abs(op.kappa_s - params.kappa) / params.kappa, 1e-3)
        self.assertLess(op.kappa_s, params.kappa)


class TestSteadyState(unittest.TestCase):
    """Tests for the steady-state solvers"""

    def test_resonant_without_dissipative_coupling(self):
        params = reference_params().with_couplings(reference_params().g_omega, 0.0)
        op = solve_steady_state_resonant(params)
        self.assertEqual(op.kappa_s, params.kappa)
        self.assertAlmostEqual(op.Q_s / (params.g_omega / OMEGA_M * abs(op.a_s) ** 2), 1.0, places=12)

    def test_resonant_unphysical_at_high_power(self):
        params = reference_params().with_power(100.0)
        with self.assertRaises(UnphysicalOperatingPointError) as context:
            solve_steady_state_resonant(params)
        self.assertEqual(context.exception.exit_code, 3)
        self.assertIn("discriminant", context.exception.diagnostics)

    def test_solver_checks_drive_mode(self):
        with self.assertRaises(PreconditionError):
            solve_steady_state_resonant(reference_params(DriveSpec(power=0.04, mode=DriveMode.FIXED_FREQUENCY)))
        with self.assertRaises(PreconditionError):
            solve_steady_state_fixed_frequency(reference_params())

    def test_fixed_frequency_zero_power(self):
        params = reference_params(DriveSpec(power=0.0, mode=DriveMode.FIXED_FREQUENCY, laser_offset=TWO_PI * 5e3))
        op = solve_steady_state_fixed_frequency(params)
        self.assertEqual(op.kappa_s, params.kappa)
        self.assertEqual(op.Delta_s, TWO_PI * 5e3)
        self.assertEqual(op.Q_s, 0.0)

    def test_fixed_frequency_detuning_at_reference_power(self):
        """A laser parked on the bare resonance ends up about 20.7 kHz red of the shifted cavity"""
        params = reference_params(DriveSpec(power=0.04, mode=DriveMode.FIXED_FREQUENCY))
        op = solve_steady_state(params)
        self.assertEqual(op.mode, DriveMode.FIXED_FREQUENCY)
        self.assertLess(op.Delta_s, 0.0)
        self.assertAlmostEqual(-op.Delta_s / TWO_PI / 1e3, 20.7, delta=0.3)
        self.assertAlmostEqual(op.kappa_s, params.kappa - params.g_kappa * op.Q_s, delta=1e-9 * params.kappa)
        self.assertAlmostEqual(op.Delta_s, -params.g_omega * op.Q_s, delta=1e-9 * params.kappa)

    def test_explicit_detuning(self):
        delta = TWO_PI * -50e3
        params = reference_params(DriveSpec(power=0.04, mode=DriveMode.EXPLICIT_DETUNING, detuning=delta))
        op = solve_steady_state_explicit(params)
        self.assertEqual(op.Delta_s, delta)
        self.assertLess(op.residual, 1e-10)
        self.assertAlmostEqual(op.kappa_s, params.kappa - params.g_kappa * op.Q_s, delta=1e-9 * params.kappa)

    def test_power_sweep_fixed_frequency_branch(self):
        params = reference_params(DriveSpec(mode=DriveMode.FIXED_FREQUENCY))
        powers = [0.0, 0.01, 0.02, 0.04, 0.08]
        sweep = power_sweep(params, powers)
        self.assertEqual([point.power for point in sweep], powers)
        self.assertTrue(all(point.operating_point is not None for point in sweep))
        shifts = [-point.operating_point.Delta_s for point in sweep]
        self.assertEqual(shifts, sorted(shifts))

    def test_power_sweep_flags_unphysical_rows(self):
        sweep = power_sweep(reference_params(), [0.04, 100.0])
        self.assertIsNotNone(sweep[0].operating_point)
        self.assertIsNone(sweep[1].operating_point)
        self.assertIn("no real root", sweep[1].error)


class TestOperatingPoint(unittest.TestCase):
    """Tests for OperatingPoint construction"""

    def test_from_enhanced_magnitudes(self):
        op = OperatingPoint.from_enhanced(KAPPA_S, OMEGA_M, GAMMA_M, TWO_PI * 75e3, TWO_PI * 15e3, TWO_PI * 2e3)
        self.assertAlmostEqual(abs(op.a_s), 1.0)
        self.assertAlmostEqual(abs(op.G_omega) / (TWO_PI * 75e3), 1.0, places=12)
        self.assertAlmostEqual(abs(op.G_kappa) / (TWO_PI * 15e3), 1.0, places=12)
        self.assertEqual(op.mode, DriveMode.EXPLICIT_DETUNING)

    def test_with_couplings_keeps_cavity(self):
        op = OperatingPoint.from_enhanced(KAPPA_S, OMEGA_M, GAMMA_M, TWO_PI * 75e3, TWO_PI * 15e3)
        diss = op.with_couplings(0.0, TWO_PI * 15e3)
        self.assertEqual(diss.kappa_s, op.kappa_s)
        self.assertEqual(diss.G_omega, 0)
        self.assertAlmostEqual(abs(diss.G_kappa), TWO_PI * 15e3)

    def test_non_positive_decay_rejected(self):
        with self.assertRaises(UnphysicalOperatingPointError):
            OperatingPoint.from_enhanced(0.0, OMEGA_M, GAMMA_M, 1.0, 1.0)

    def test_to_dict_is_plain(self):
        data = OperatingPoint.from_enhanced(KAPPA_S, OMEGA_M, GAMMA_M, 1.0, 2.0).to_dict()
        self.assertEqual(data["mode"], "resonant")
        self.assertEqual(len(data["G_omega"]), 2)


if __name__ == "__main__":
    unittest.main()
