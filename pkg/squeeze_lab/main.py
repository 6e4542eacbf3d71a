import logging
import math
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import pandas as pd
from jinja2 import Template

from squeeze_lab import __version__
from squeeze_lab.config import OUTPUT_DIR, RunConfig
from squeeze_lab.exceptions import NumericalSingularityError, SqueezeLabError
from squeeze_lab.physics.model import (
    CalibrationReference,
    DriveMode,
    DriveSpec,
    OperatingPoint,
    ThermalEnvironment,
    calibrate_bare_couplings,
    power_sweep,
)
from squeeze_lab.physics.spectra import (
    CLOSED_METHODS,
    Method,
    Regime,
    closed_form_agreement,
    equal_magnitude_condition,
    exact_spectrum,
    optimal_analytic,
    optimal_numeric,
    regime_of,
    spectrum_map,
    squeezing_bandwidth,
)
from squeeze_lab.physics.stability import critical_power, oracle_suite, stability_map
from squeeze_lab.utils.contours import extract_contours
from squeeze_lab.utils.helpers import atomic_write_text, save_csv_table, save_json_file

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi

THERMAL_REPORT = Template(
    """squeeze-lab {{ version }} thermal scan (config {{ config_hash[:12] }})
{% for block in blocks %}
P = {{ "%.4g"|format(block.power) }} W
  {{ "%-12s"|format("n_th") }}{% for regime in regimes %}{{ "%12s"|format(regime) }}{% endfor %}{{ "%12s"|format("exact") }}
{% for row in block.rows %}  {{ "%-12.4g"|format(row.n_th) }}{% for regime in regimes %}{{ "%12.2f"|format(row[regime]) }}{% endfor %}{{ "%12.2f"|format(row.exact) }}
{% endfor %}{% endfor %}
Depths in dB below shot noise; regime columns are the closed-form optima.
"""
)

SELFTEST_REPORT = Template(
    """squeeze-lab {{ version }} selftest
{% for check in checks %}[{{ "PASS" if check.passed else "FAIL" }}] {{ check.name }}: {{ check.detail }}
{% endfor %}{{ passed }}/{{ checks|length }} checks passed
"""
)


def output_metadata(config: RunConfig, command: str) -> Dict[str, Any]:
    return {
        "code_version": __version__,
        "config_hash": config.config_hash(),
        "command": command,
        "seed": config.run.seed,
    }


def resolve_method(config: RunConfig, op: OperatingPoint) -> Method:
    """Exact solver, or the closed form matching the coupling regime"""
    if config.run.method == "exact":
        return Method.EXACT
    return CLOSED_METHODS[regime_of(op)]


def _output_path(config: RunConfig, out_dir: Path, command: str, suffix: str) -> Path:
    prefix = config.output.prefix or command.replace("-", "_")
    return Path(out_dir) / f"{prefix}{suffix}"


def _write_table(config: RunConfig, out_dir: Path, command: str, frame: pd.DataFrame, data: Dict) -> Path:
    """Write the main result as CSV or JSON depending on output.format"""
    metadata = output_metadata(config, command)
    if config.output.format == "json":
        return save_json_file(data, _output_path(config, out_dir, command, ".json"), metadata)
    return save_csv_table(frame, _output_path(config, out_dir, command, ".csv"), metadata)


def cmd_steady_state(config: RunConfig, out_dir: Path) -> Dict[str, Any]:
    """Operating point versus drive power; unphysical points are flagged per row"""
    params = config.physical_params()
    powers = config.power_grid()
    logger.info(f"Steady state for {len(powers)} powers ({params.drive.mode.value} drive)")
    sweep = power_sweep(params, powers)

    rows = []
    for point in sweep:
        op = point.operating_point
        if op is None:
            rows.append(
                {
                    "P_W": point.power,
                    "Delta_Hz": math.nan,
                    "kappa_s_Hz": math.nan,
                    "Q_s": math.nan,
                    "abs_a_s": math.nan,
                    "G_omega_Hz": math.nan,
                    "G_kappa_Hz": math.nan,
                    "alternate_roots": 0,
                    "status": point.error,
                }
            )
            continue
        rows.append(
            {
                "P_W": point.power,
                "Delta_Hz": op.Delta_s / TWO_PI,
                "kappa_s_Hz": op.kappa_s / TWO_PI,
                "Q_s": op.Q_s,
                "abs_a_s": abs(op.a_s),
                "G_omega_Hz": abs(op.G_omega) / TWO_PI,
                "G_kappa_Hz": abs(op.G_kappa) / TWO_PI,
                "alternate_roots": len(op.alternate_roots),
                "status": "ok",
            }
        )
    frame = pd.DataFrame(rows)
    path = _write_table(config, out_dir, "steady-state", frame, {"rows": rows})
    failed = sum(1 for point in sweep if point.operating_point is None)
    if failed:
        logger.warning(f"{failed} of {len(sweep)} powers have no physical operating point")
    return {"paths": [path], "frame": frame, "sweep": sweep}


def cmd_spectrum(config: RunConfig, out_dir: Path) -> Dict[str, Any]:
    """Optimum of one operating point and the spectrum cut at the optimal angle"""
    op = config.operating_point()
    env = config.thermal_environment()
    method = resolve_method(config, op)
    optimum = optimal_numeric(op, env, method)
    logger.info(
        f"{method.value} optimum: {optimum.depth_db:.3f} dB at theta={math.degrees(optimum.theta_opt):.4f} deg, "
        f"offset={(optimum.omega_opt - op.omega_m) / TWO_PI:.4f} Hz"
    )
    summary = {"operating_point": op.to_dict(), "n_th": env.n_th, "numeric": optimum.to_dict(op.omega_m)}
    if op.Delta_s == 0:
        analytic = optimal_analytic(op, env, regime_of(op))
        summary["analytic"] = analytic.to_dict(op.omega_m)
        logger.info(f"Closed-form {analytic.method} optimum: {analytic.depth_db:.3f} dB")

    cut = spectrum_map(op, env, method, config.omega_grid(op.omega_m), [optimum.theta_opt])
    paths = [
        _write_table(config, out_dir, "spectrum", cut.to_frame(), cut.to_dict()),
        save_json_file(summary, _output_path(config, out_dir, "spectrum", "_optimum.json"), output_metadata(config, "spectrum")),
    ]
    return {"paths": paths, "optimum": optimum, "summary": summary, "result": cut}


def cmd_spectrum_map(config: RunConfig, out_dir: Path) -> Dict[str, Any]:
    """Density map over (θ, ω) with depth contours at the configured levels"""
    op = config.operating_point()
    env = config.thermal_environment()
    method = resolve_method(config, op)
    result = spectrum_map(op, env, method, config.omega_grid(op.omega_m), config.theta_grid(), config.run.workers)
    logger.info(f"Spectrum map {result.S.shape}: max depth {np.nanmax(result.depth_db):.3f} dB")

    contours = []
    if result.theta_grid.size > 1 and result.omega_grid.size > 1:
        for level in config.run.contour_levels_db:
            contour = extract_contours(result.depth_db, result.omega_offset_hz, np.degrees(result.theta_grid), level)
            logger.info(f"{level} dB contour: {len(contour.polylines)} polylines")
            contours.append(contour)

    bandwidth = squeezing_bandwidth(result, config.run.contour_levels_db[0]) / TWO_PI if config.run.contour_levels_db else None
    metadata = output_metadata(config, "spectrum-map")
    paths = [
        _write_table(config, out_dir, "spectrum-map", result.to_frame(), result.to_dict()),
        save_json_file(
            {
                "axes": {"x": "omega_Hz_offset_from_mech_resonance", "y": "theta_deg"},
                "contours": [contour.to_dict() for contour in contours],
                "bandwidth_Hz": bandwidth,
            },
            _output_path(config, out_dir, "spectrum-map", "_contours.json"),
            metadata,
        ),
    ]
    return {"paths": paths, "result": result, "contours": contours, "bandwidth_Hz": bandwidth}


def _regime_points(op: OperatingPoint) -> Dict[str, OperatingPoint]:
    """The combined point and its single-coupling counterparts at the same κ_s"""
    G_omega, G_kappa = abs(op.G_omega), abs(op.G_kappa)
    return {
        Regime.DISS.value: op.with_couplings(0.0, G_kappa),
        Regime.DISP.value: op.with_couplings(G_omega, 0.0),
        Regime.COMB.value: op,
    }


def cmd_thermal_scan(config: RunConfig, out_dir: Path) -> Dict[str, Any]:
    """Optimal depth versus thermal occupancy for every regime and scan power"""
    occupancies = config.occupancy_grid()
    if config.operating.enabled:
        points = [(math.nan, config.operating_point())]
    else:
        params = config.physical_params()
        resonant = DriveSpec(mode=DriveMode.RESONANT_LOCKED)
        points = [
            (power, sweep.operating_point)
            for power, sweep in zip(
                config.thermal.scan_powers_w,
                power_sweep(params.with_drive(resonant), config.thermal.scan_powers_w),
            )
            if sweep.operating_point is not None
        ]

    rows: List[Dict[str, Any]] = []
    blocks = []
    for power, op in points:
        variants = _regime_points(op)
        block_rows = []
        for n_th in occupancies:
            env = ThermalEnvironment.from_occupancy(float(n_th), op.omega_m)
            entry = {"n_th": float(n_th)}
            for regime, variant in variants.items():
                analytic = optimal_analytic(variant, env, regime)
                exact = optimal_numeric(variant, env, Method.EXACT) if regime == Regime.COMB.value else None
                rows.append(
                    {
                        "P_W": power,
                        "n_th": float(n_th),
                        "T_K": env.temperature,
                        "regime": regime,
                        "depth_dB": analytic.depth_db,
                        "exact_depth_dB": exact.depth_db if exact is not None else math.nan,
                    }
                )
                entry[regime] = analytic.depth_db
                if exact is not None:
                    entry["exact"] = exact.depth_db
            block_rows.append(entry)
        blocks.append({"power": power, "rows": block_rows})
        logger.info(f"Thermal scan at P={power:.4g} W done ({len(occupancies)} occupancies)")

    frame = pd.DataFrame(rows)
    report = THERMAL_REPORT.render(
        version=__version__,
        config_hash=config.config_hash(),
        blocks=blocks,
        regimes=[r.value for r in Regime],
    )
    report_path = _output_path(config, out_dir, "thermal-scan", "_report.txt")
    atomic_write_text(report, report_path)
    path = _write_table(config, out_dir, "thermal-scan", frame, {"rows": rows})
    return {"paths": [path, report_path], "frame": frame, "report": report}


def cmd_stability_map(config: RunConfig, out_dir: Path) -> Dict[str, Any]:
    """
    Stability over (P, Δ_s) plus the critical power of the configured drive.

    Fails after writing its outputs when any non-marginal cell has RH and eigenvalue
    verdicts that disagree.
    """
    params = config.physical_params()
    run = config.run
    result = stability_map(params, config.power_grid(), config.delta_grid(), run.marginal_tolerance, run.workers)
    delta = TWO_PI * run.critical_delta_hz if run.critical_delta_hz is not None else None
    onset = critical_power(
        params,
        delta=delta,
        power_cap=run.power_cap_w,
        scan_points=run.scan_points,
        marginal_tolerance=run.marginal_tolerance,
    )
    metadata = output_metadata(config, "stability-map")
    paths = [
        _write_table(config, out_dir, "stability-map", result.to_frame(), result.to_dict()),
        save_json_file(
            {
                "critical_power": onset.to_dict(),
                "n_regions": result.n_regions,
                "mismatches": result.mismatches,
                "boundaries": result.boundaries.to_dict() if result.boundaries is not None else None,
            },
            _output_path(config, out_dir, "stability-map", "_summary.json"),
            metadata,
        ),
    ]
    if result.mismatches:
        raise NumericalSingularityError(
            f"Routh-Hurwitz and eigenvalue verdicts disagree on {result.mismatches} grid cells"
        )
    return {"paths": paths, "map": result, "critical_power": onset}


def cmd_critical_power(config: RunConfig, out_dir: Path) -> Dict[str, Any]:
    params = config.physical_params()
    run = config.run
    delta = TWO_PI * run.critical_delta_hz if run.critical_delta_hz is not None else None
    onset = critical_power(
        params,
        delta=delta,
        power_cap=run.power_cap_w,
        scan_points=run.scan_points,
        marginal_tolerance=run.marginal_tolerance,
    )
    data = onset.to_dict()
    frame = pd.DataFrame(
        [
            {
                "P_crit_W": onset.p_crit if onset.p_crit is not None else math.nan,
                "stable_to_cap": onset.stable_to_cap,
                "power_cap_W": onset.power_cap,
                "bracket_lo_W": onset.bracket[0],
                "bracket_hi_W": onset.bracket[1],
                "Delta_s_Hz": data["Delta_s_Hz"] if data["Delta_s_Hz"] is not None else math.nan,
                "G_omega_Hz": data["G_omega_Hz"] if data["G_omega_Hz"] is not None else math.nan,
                "G_kappa_Hz": data["G_kappa_Hz"] if data["G_kappa_Hz"] is not None else math.nan,
            }
        ]
    )
    path = _write_table(config, out_dir, "critical-power", frame, data)
    return {"paths": [path], "critical_power": onset}


def cmd_calibrate(config: RunConfig, out_dir: Path) -> Dict[str, Any]:
    """Bare couplings from the reference point and the enhanced couplings they give versus power"""
    cal = config.calibration
    reference = CalibrationReference(
        power=cal.power_w,
        G_omega=TWO_PI * cal.G_omega_hz,
        G_kappa=TWO_PI * cal.G_kappa_hz,
        kappa_s=TWO_PI * cal.kappa_s_hz,
        omega_m=config.omega_m,
        omega_l=config.omega_l,
        Delta_s=TWO_PI * cal.Delta_s_hz,
    )
    calibration = calibrate_bare_couplings(reference)
    logger.info(
        f"g_omega={calibration.g_omega / TWO_PI:.6g} Hz, g_kappa={calibration.g_kappa / TWO_PI:.6g} Hz, "
        f"kappa={calibration.kappa / TWO_PI:.6g} Hz"
    )
    params = config.with_overrides(calibration={"enabled": True}).physical_params()
    sweep = power_sweep(params.with_drive(DriveSpec(mode=DriveMode.RESONANT_LOCKED)), config.power_grid())
    rows = [
        {
            "P_W": point.power,
            "kappa_s_Hz": point.operating_point.kappa_s / TWO_PI if point.operating_point else math.nan,
            "G_omega_Hz": abs(point.operating_point.G_omega) / TWO_PI if point.operating_point else math.nan,
            "G_kappa_Hz": abs(point.operating_point.G_kappa) / TWO_PI if point.operating_point else math.nan,
        }
        for point in sweep
    ]
    data = {
        "g_omega_Hz": calibration.g_omega / TWO_PI,
        "g_kappa_Hz": calibration.g_kappa / TWO_PI,
        "kappa_Hz": calibration.kappa / TWO_PI,
        "reference": {
            "power_W": cal.power_w,
            "G_omega_Hz": cal.G_omega_hz,
            "G_kappa_Hz": cal.G_kappa_hz,
            "kappa_s_Hz": cal.kappa_s_hz,
            "Delta_s_Hz": cal.Delta_s_hz,
        },
        "rows": rows,
    }
    path = _write_table(config, out_dir, "calibrate", pd.DataFrame(rows), data)
    return {"paths": [path], "calibration": calibration, "rows": rows}


def _check(name: str, passed: bool, detail: str) -> Dict[str, Any]:
    return {"name": name, "passed": bool(passed), "detail": detail}


# (grid, optimum) bounds on |S_exact − S_closed|/S_exact; the grid spans ω_m ± 2π×100 Hz
CLOSED_FORM_BOUNDS = {
    Regime.DISP: (0.6, 0.02),
    Regime.DISS: (0.1, 0.02),
    Regime.COMB: (0.1, 0.5),
}


def cmd_selftest(config: RunConfig, out_dir: Path) -> Dict[str, Any]:
    """Oracle suites: closed forms against the exact solver and RH against eigenvalues"""
    kappa_s = TWO_PI * 1.5e6
    omega_m = TWO_PI * 136e3
    gamma_m = TWO_PI * 0.23
    vacuum = ThermalEnvironment()
    checks = []

    bare = OperatingPoint.from_enhanced(kappa_s, omega_m, gamma_m, 0.0, 0.0, TWO_PI * 10e3)
    theta = np.radians(np.linspace(0.0, 180.0, 13))
    omega = omega_m + TWO_PI * np.linspace(-1e3, 1e3, 41)
    T, W = np.meshgrid(theta, omega)
    floor_error = float(np.max(np.abs(exact_spectrum(bare, vacuum, T, W) - 0.5)))
    checks.append(_check("shot-noise floor", floor_error < 1e-12, f"max |S - 1/2| = {floor_error:.2e}"))

    disp = OperatingPoint.from_enhanced(kappa_s, omega_m, gamma_m, TWO_PI * 75e3, 0.0)
    disp_numeric = optimal_numeric(disp, vacuum, Method.EXACT)
    disp_analytic = optimal_analytic(disp, vacuum, Regime.DISP)
    numeric_offset = (disp_numeric.omega_opt - omega_m) / TWO_PI
    analytic_offset = (disp_analytic.omega_opt - omega_m) / TWO_PI
    checks.append(
        _check(
            "dispersive optimum",
            abs(disp_numeric.depth_db - 39.1) <= 1.0
            and abs(disp_numeric.depth_db - disp_analytic.depth_db) <= 0.5
            and abs(abs(numeric_offset) - abs(analytic_offset)) <= 0.5,
            f"exact {disp_numeric.depth_db:.2f} dB at {numeric_offset:.2f} Hz, "
            f"closed form {disp_analytic.depth_db:.2f} dB at |offset| {abs(analytic_offset):.2f} Hz",
        )
    )

    diss = OperatingPoint.from_enhanced(kappa_s, omega_m, gamma_m, 0.0, TWO_PI * 150e3)
    diss_lower = optimal_numeric(diss, vacuum, Method.EXACT, omega_range=(omega_m - TWO_PI * 100.0, omega_m))
    offset = (diss_lower.omega_opt - omega_m) / TWO_PI
    checks.append(
        _check(
            "dissipative optimum",
            abs(diss_lower.depth_db - 18.3) <= 2.0 and -10.0 < offset < 0.0,
            f"exact {diss_lower.depth_db:.2f} dB at {offset:.3f} Hz from omega_m (lower half-band)",
        )
    )

    comb = OperatingPoint.from_enhanced(kappa_s, omega_m, gamma_m, TWO_PI * 75e3, TWO_PI * 15e3)
    agreements = {}
    for regime, op in ((Regime.DISP, disp), (Regime.DISS, diss), (Regime.COMB, comb)):
        grid_bound, optimum_bound = CLOSED_FORM_BOUNDS[regime]
        agreement = closed_form_agreement(op, vacuum)
        agreements[regime.value] = agreement.to_dict(omega_m)
        checks.append(
            _check(
                f"{regime.value} closed form vs exact",
                agreement.grid_max_relative <= grid_bound,
                f"max relative deviation {agreement.grid_max_relative:.3f} over omega_m +/- 100 Hz (bound {grid_bound})",
            )
        )
        checks.append(
            _check(
                f"{regime.value} optimum closed form vs exact",
                agreement.optimum_relative <= optimum_bound,
                f"closed {agreement.closed_optimum.depth_db:.2f} dB, exact {agreement.exact_optimum.depth_db:.2f} dB, "
                f"relative {agreement.optimum_relative:.4f} (bound {optimum_bound})",
            )
        )

    equal = equal_magnitude_condition(disp, vacuum)
    checks.append(
        _check(
            "equal-magnitude ratio",
            equal.derived_residual < 1e-10,
            f"optima equal at ratio 2 (residual {equal.derived_residual:.1e}); ratio sqrt2 residual {equal.stated_residual:.3f}",
        )
    )

    oracle = oracle_suite(config.run.random_draws, config.run.seed, config.run.marginal_tolerance)
    checks.append(
        _check(
            "Routh-Hurwitz vs eigenvalues",
            oracle.passed,
            f"{oracle.mismatches} mismatches in {oracle.draws - oracle.marginal} non-marginal draws, "
            f"coefficient error {oracle.max_coefficient_error:.1e}, root error {oracle.max_margin_error:.1e}",
        )
    )

    passed = sum(1 for check in checks if check["passed"])
    report = SELFTEST_REPORT.render(version=__version__, checks=checks, passed=passed)
    print(report)
    path = save_json_file(
        {"checks": checks, "closed_forms": agreements, "oracle": oracle.to_dict()},
        _output_path(config, out_dir, "selftest", ".json"),
        output_metadata(config, "selftest"),
    )
    if passed != len(checks):
        raise SqueezeLabError(f"{len(checks) - passed} of {len(checks)} checks failed")
    return {"paths": [path], "checks": checks, "report": report}


COMMAND_PIPELINES: Dict[str, Callable[[RunConfig, Path], Dict[str, Any]]] = {
    "steady-state": cmd_steady_state,
    "spectrum": cmd_spectrum,
    "spectrum-map": cmd_spectrum_map,
    "thermal-scan": cmd_thermal_scan,
    "stability-map": cmd_stability_map,
    "critical-power": cmd_critical_power,
    "calibrate": cmd_calibrate,
    "selftest": cmd_selftest,
}


def run_command(command: str, config: RunConfig, out_dir: Optional[Path] = None) -> int:
    """
    Run one command pipeline and map failures to exit codes.

    Returns:
        0 on success, otherwise the exit code of the raised error
    """
    out_dir = Path(out_dir or config.output.directory or OUTPUT_DIR)
    logger.info(f"Starting {command} (config {config.config_hash()[:12]}, output {out_dir})")
    try:
        result = COMMAND_PIPELINES[command](config, out_dir)
    except SqueezeLabError as e:
        logger.error(f"{command} failed: {e}")
        logger.debug("Traceback", exc_info=True)
        return e.exit_code
    except Exception as e:
        logger.error(f"Unexpected error in {command}: {e}", exc_info=True)
        return SqueezeLabError.exit_code
    for path in result.get("paths", []):
        logger.info(f"Wrote {path}")
    logger.info(f"{command} completed successfully")
    return 0
