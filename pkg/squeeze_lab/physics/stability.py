"""
Linear stability of the optomechanical operating point

Drift matrix of the fluctuation dynamics, Routh-Hurwitz coefficients and the two Hurwitz
determinants, an eigenvalue cross-check, and stability maps over drive power and detuning.
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum
from multiprocessing import Pool
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import ndimage

from squeeze_lab.exceptions import DomainError, PreconditionError, UnphysicalOperatingPointError
from squeeze_lab.physics.model import (
    DriveMode,
    DriveSpec,
    OperatingPoint,
    PhysicalParams,
    solve_steady_state,
    solve_steady_state_explicit,
    solve_steady_state_fixed_frequency,
)
from squeeze_lab.utils.contours import ContourSet, extract_contours

logger = logging.getLogger(__name__)

DEFAULT_MARGINAL_TOLERANCE = 1e-9

STABLE = "stable"
UNSTABLE = "unstable"
MARGINAL = "marginal"
UNPHYSICAL = "unphysical"


class DriftConvention(str, Enum):
    """
    Which dissipative drive entry the drift matrix carries.

    PRINTED uses g_κℰ_l/√(2κ_s); its characteristic polynomial is the closed-form h₁..h₄.
    LANGEVIN uses g_κℰ_l/√κ_s, which equals G_κ/2 at Δ_s = 0 and matches the
    quantum Langevin equations the spectra are solved from.
    """

    PRINTED = "printed"
    LANGEVIN = "langevin"


@dataclass(frozen=True)
class DriftMatrix:
    """4×4 real drift matrix acting on (X, Y, Q₁, P₁)"""

    M: np.ndarray
    convention: DriftConvention

    @property
    def trace(self) -> float:
        return float(np.trace(self.M))

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.M)

    def margin(self) -> float:
        return float(np.max(self.eigenvalues().real))


def dissipative_drive_entry(op: OperatingPoint, convention: DriftConvention = DriftConvention.PRINTED) -> float:
    if convention == DriftConvention.PRINTED:
        return op.drive_coupling_kappa / math.sqrt(2.0 * op.kappa_s)
    return op.drive_coupling_kappa / math.sqrt(op.kappa_s)


def build_drift_matrix(op: OperatingPoint, convention: DriftConvention = DriftConvention.PRINTED) -> DriftMatrix:
    """
    Drift matrix of d(X, Y, Q₁, P₁)/dt at the given operating point.

    Args:
        op: Operating point
        convention: Dissipative drive entry to use

    Returns:
        DriftMatrix with entries in rad/s
    """
    G_omega = complex(op.G_omega)
    G_kappa = complex(op.G_kappa)
    s = dissipative_drive_entry(op, convention)
    kappa, delta = op.kappa_s, op.Delta_s
    M = np.array(
        [
            [-kappa, delta, G_kappa.real - G_omega.imag - s, 0.0],
            [-delta, -kappa, G_kappa.imag + G_omega.real, 0.0],
            [0.0, 0.0, 0.0, op.omega_m],
            [G_omega.real, G_omega.imag + s, -op.omega_m, -op.gamma_m],
        ],
        dtype=float,
    )
    return DriftMatrix(M=M, convention=convention)


def routh_coefficients(op: OperatingPoint) -> Tuple[np.ndarray, np.ndarray]:
    """
    Closed-form Routh-Hurwitz coefficients h₁..h₄ of the printed drift matrix.

    Returns:
        Tuple of (h, scale) where scale[i] is the sum of absolute values of the terms
        making up h[i], used for relative comparisons
    """
    kappa, delta = op.kappa_s, op.Delta_s
    omega_m, gamma = op.omega_m, op.gamma_m
    a = op.drive_coupling_kappa
    b = op.drive_coupling_omega
    r2 = delta**2 + kappa**2
    sqrt2 = math.sqrt(2.0)

    h1_terms = (2.0 * kappa, gamma)
    h2_terms = (2.0 * gamma * kappa, delta**2, kappa**2, omega_m**2)
    h3_terms = (
        gamma * r2,
        2.0 * kappa * omega_m**2,
        omega_m * sqrt2 * a**2 * delta / r2,
        -omega_m * 4.0 * a * b * kappa / r2,
    )
    h4_terms = (
        omega_m**2 * r2,
        -delta * a**2 * omega_m / (2.0 * kappa),
        2.0 * sqrt2 * omega_m / r2 * (a * kappa + delta * b) * (a * delta - sqrt2 * b * kappa),
    )
    groups = (h1_terms, h2_terms, h3_terms, h4_terms)
    h = np.array([math.fsum(terms) for terms in groups])
    scale = np.array([math.fsum(abs(t) for t in terms) for terms in groups])
    return h, scale


def hurwitz_determinants(h: Sequence[float]) -> np.ndarray:
    """Second and third Hurwitz determinants h₁h₂ − h₃ and h₁h₂h₃ − h₁²h₄ − h₃²"""
    h1, h2, h3, h4 = h
    return np.array([h1 * h2 - h3, h1 * h2 * h3 - h1**2 * h4 - h3**2])


def characteristic_coefficients(drift: DriftMatrix) -> np.ndarray:
    """(h₁, h₂, h₃, h₄) of det(λI − M) expanded numerically"""
    return np.real(np.poly(drift.M))[1:]


def quartic_eigenvalues(h: Sequence[float]) -> np.ndarray:
    """Roots of λ⁴ + h₁λ³ + h₂λ² + h₃λ + h₄"""
    return np.roots(np.concatenate(([1.0], np.asarray(h, dtype=float))))


@dataclass(frozen=True)
class StabilityReport:
    h: np.ndarray
    hurwitz_dets: np.ndarray
    eigenvalues: np.ndarray
    rh_stable: bool
    eig_stable: bool
    margin: float
    langevin_margin: float
    tolerance: float
    verdict: str

    @property
    def consistent(self) -> bool:
        """RH and eigenvalue verdicts agree, or the point is marginal"""
        return self.verdict == MARGINAL or self.rh_stable == self.eig_stable

    def to_dict(self) -> Dict:
        return {
            "verdict": self.verdict,
            "rh_stable": self.rh_stable,
            "eig_stable": self.eig_stable,
            "margin": self.margin,
            "langevin_margin": self.langevin_margin,
            "tolerance": self.tolerance,
            "h": self.h.tolist(),
            "hurwitz_dets": self.hurwitz_dets.tolist(),
            "eigenvalues": [[ev.real, ev.imag] for ev in self.eigenvalues],
        }


def routh_hurwitz(op: OperatingPoint, marginal_tolerance: float = DEFAULT_MARGINAL_TOLERANCE) -> StabilityReport:
    """
    Routh-Hurwitz verdict from the closed-form coefficients, cross-checked by eigenvalues.

    A point whose largest eigenvalue real part lies within marginal_tolerance·κ_s of zero
    is reported as marginal; both booleans are still filled in.
    """
    h, _ = routh_coefficients(op)
    dets = hurwitz_determinants(h)
    rh_stable = bool(np.all(h > 0) and np.all(dets > 0))

    drift = build_drift_matrix(op, DriftConvention.PRINTED)
    eigenvalues = drift.eigenvalues()
    margin = float(np.max(eigenvalues.real))
    eig_stable = margin < 0
    langevin_margin = build_drift_matrix(op, DriftConvention.LANGEVIN).margin()

    tolerance = marginal_tolerance * op.kappa_s
    if abs(margin) < tolerance:
        verdict = MARGINAL
    else:
        verdict = STABLE if rh_stable else UNSTABLE
        if rh_stable != eig_stable:
            logger.warning(
                f"Routh-Hurwitz and eigenvalue verdicts disagree (margin={margin:.6g} rad/s, dets={dets.tolist()})"
            )
    return StabilityReport(
        h=h,
        hurwitz_dets=dets,
        eigenvalues=eigenvalues,
        rh_stable=rh_stable,
        eig_stable=eig_stable,
        margin=margin,
        langevin_margin=langevin_margin,
        tolerance=tolerance,
        verdict=verdict,
    )


@dataclass
class StabilityMap:
    """Per-cell stability summary on a power × detuning grid (rows are powers)"""

    powers: np.ndarray
    deltas: np.ndarray
    margin: np.ndarray
    langevin_margin: np.ndarray
    rh_stable: np.ndarray
    eig_stable: np.ndarray
    verdict: np.ndarray
    regions: Optional[np.ndarray] = None
    n_regions: int = 0
    boundaries: Optional[ContourSet] = None

    @property
    def mismatches(self) -> int:
        """Non-marginal physical cells where the RH and eigenvalue verdicts differ"""
        checked = (self.verdict == STABLE) | (self.verdict == UNSTABLE)
        return int(np.count_nonzero(checked & (self.rh_stable != self.eig_stable)))

    @property
    def unstable(self) -> np.ndarray:
        return self.verdict == UNSTABLE

    def to_frame(self) -> pd.DataFrame:
        P, D = np.meshgrid(self.powers, self.deltas, indexing="ij")
        return pd.DataFrame(
            {
                "P_W": P.ravel(),
                "Delta_Hz": D.ravel() / (2.0 * math.pi),
                "margin": self.margin.ravel(),
                "langevin_margin": self.langevin_margin.ravel(),
                "verdict": self.verdict.ravel(),
                "region": self.regions.ravel(),
            }
        )

    def to_dict(self) -> Dict:
        return {
            "P_W": self.powers.tolist(),
            "Delta_Hz": (self.deltas / (2.0 * math.pi)).tolist(),
            "margin": self.margin.tolist(),
            "langevin_margin": self.langevin_margin.tolist(),
            "verdict": self.verdict.tolist(),
            "regions": self.regions.tolist(),
            "n_regions": self.n_regions,
            "mismatches": self.mismatches,
            "boundaries": self.boundaries.to_dict() if self.boundaries is not None else None,
        }


def _map_row(args: Tuple[PhysicalParams, float, Sequence[float], float]) -> List[Tuple[float, float, bool, bool, str]]:
    params, power, deltas, marginal_tolerance = args
    row = []
    for delta in deltas:
        drive = DriveSpec(power=power, mode=DriveMode.EXPLICIT_DETUNING, detuning=float(delta))
        try:
            op = solve_steady_state_explicit(params.with_drive(drive))
            report = routh_hurwitz(op, marginal_tolerance)
            row.append((report.margin, report.langevin_margin, report.rh_stable, report.eig_stable, report.verdict))
        except UnphysicalOperatingPointError as error:
            logger.debug(f"Unphysical cell P={power:.4g} W, Delta={delta:.4g} rad/s: {error}")
            row.append((float("nan"), float("nan"), False, False, UNPHYSICAL))
    return row


def stability_map(
    params: PhysicalParams,
    powers: Sequence[float],
    deltas: Sequence[float],
    marginal_tolerance: float = DEFAULT_MARGINAL_TOLERANCE,
    workers: int = 1,
) -> StabilityMap:
    """
    Stability verdicts over a grid of drive powers (W) and effective detunings Δ_s (rad/s).

    Each cell is an explicit-detuning steady state. Connected unstable cells are labelled
    as regions and the zero-margin boundary is traced as polylines in (Δ_s, P).
    """
    powers = np.asarray(powers, dtype=float)
    deltas = np.asarray(deltas, dtype=float)
    if powers.size == 0 or deltas.size == 0:
        raise DomainError("stability map needs non-empty power and detuning grids")
    if not (np.all(np.isfinite(powers)) and np.all(np.isfinite(deltas))):
        raise DomainError("stability map grids must be finite")

    tasks = [(params, float(p), deltas.tolist(), marginal_tolerance) for p in powers]
    if workers > 1:
        with Pool(processes=workers) as pool:
            rows = pool.map(_map_row, tasks)
    else:
        rows = [_map_row(task) for task in tasks]

    shape = (powers.size, deltas.size)
    margin = np.array([[cell[0] for cell in row] for row in rows]).reshape(shape)
    langevin = np.array([[cell[1] for cell in row] for row in rows]).reshape(shape)
    rh = np.array([[cell[2] for cell in row] for row in rows], dtype=bool).reshape(shape)
    eig = np.array([[cell[3] for cell in row] for row in rows], dtype=bool).reshape(shape)
    verdict = np.array([[cell[4] for cell in row] for row in rows], dtype=object).reshape(shape)

    regions, n_regions = ndimage.label(verdict == UNSTABLE)
    boundaries = None
    if powers.size > 1 and deltas.size > 1:
        boundaries = extract_contours(margin, deltas, powers, 0.0)

    result = StabilityMap(
        powers=powers,
        deltas=deltas,
        margin=margin,
        langevin_margin=langevin,
        rh_stable=rh,
        eig_stable=eig,
        verdict=verdict,
        regions=regions,
        n_regions=int(n_regions),
        boundaries=boundaries,
    )
    if result.mismatches:
        logger.warning(f"Stability map has {result.mismatches} RH/eigenvalue mismatches")
    logger.info(f"Stability map: {int(np.count_nonzero(result.unstable))} unstable cells in {n_regions} regions")
    return result


@dataclass(frozen=True)
class CriticalPowerResult:
    """Smallest instability onset below the search cap, or stable_to_cap"""

    p_crit: Optional[float]
    stable_to_cap: bool
    power_cap: float
    bracket: Tuple[float, float]
    operating_point: Optional[OperatingPoint] = None
    report: Optional[StabilityReport] = None

    def to_dict(self) -> Dict:
        op = self.operating_point
        return {
            "P_crit_W": self.p_crit,
            "stable_to_cap": self.stable_to_cap,
            "power_cap_W": self.power_cap,
            "bracket_W": list(self.bracket),
            "Delta_s_Hz": op.Delta_s / (2.0 * math.pi) if op is not None else None,
            "G_omega_Hz": abs(op.G_omega) / (2.0 * math.pi) if op is not None else None,
            "G_kappa_Hz": abs(op.G_kappa) / (2.0 * math.pi) if op is not None else None,
            "report": self.report.to_dict() if self.report is not None else None,
        }


def _verdict_at(
    params: PhysicalParams,
    power: float,
    marginal_tolerance: float,
    guess: Optional[float] = None,
) -> Tuple[OperatingPoint, StabilityReport]:
    stepped = params.with_power(power)
    if stepped.drive.mode == DriveMode.FIXED_FREQUENCY and guess is not None:
        op = solve_steady_state_fixed_frequency(stepped, initial_guess=guess)
    else:
        op = solve_steady_state(stepped)
    return op, routh_hurwitz(op, marginal_tolerance)


def critical_power(
    params: PhysicalParams,
    delta: Optional[float] = None,
    power_cap: float = 2.0,
    scan_points: int = 200,
    rel_width: float = 1e-6,
    marginal_tolerance: float = DEFAULT_MARGINAL_TOLERANCE,
) -> CriticalPowerResult:
    """
    Lowest drive power at which the operating point turns unstable.

    With `delta` the detuning is held at that Δ_s (rad/s); otherwise the drive spec of
    `params` decides how Δ_s moves with power. A coarse upward scan finds the first
    unstable sample, then bisection narrows the onset to relative width rel_width.

    Args:
        params: System parameters
        delta: Fixed effective detuning, or None to follow the drive mode
        power_cap: Upper end of the search (W)
        scan_points: Samples of the coarse scan
        rel_width: Relative bracket width at which bisection stops

    Returns:
        CriticalPowerResult; stable_to_cap is set when no instability is found
    """
    if power_cap <= 0 or scan_points < 2:
        raise DomainError("critical power search needs a positive cap and at least two scan points")
    if delta is not None:
        params = params.with_drive(DriveSpec(power=0.0, mode=DriveMode.EXPLICIT_DETUNING, detuning=delta))

    _, report0 = _verdict_at(params, 0.0, marginal_tolerance)
    if report0.verdict == UNSTABLE:
        raise PreconditionError("system is already unstable at zero drive power")

    fixed = params.drive.mode == DriveMode.FIXED_FREQUENCY
    lo, lo_Q = 0.0, 0.0
    hi = None
    for power in np.linspace(0.0, power_cap, scan_points)[1:]:
        op, report = _verdict_at(params, float(power), marginal_tolerance, lo_Q if fixed else None)
        if report.verdict == UNSTABLE:
            hi = float(power)
            break
        lo, lo_Q = float(power), op.Q_s

    if hi is None:
        logger.info(f"Stable up to the search cap of {power_cap:.4g} W")
        return CriticalPowerResult(p_crit=None, stable_to_cap=True, power_cap=power_cap, bracket=(lo, power_cap))

    onset_op, onset_report = None, None
    while (hi - lo) > rel_width * hi:
        mid = 0.5 * (lo + hi)
        op, report = _verdict_at(params, mid, marginal_tolerance, lo_Q if fixed else None)
        if report.verdict == UNSTABLE:
            hi, onset_op, onset_report = mid, op, report
        else:
            lo, lo_Q = mid, op.Q_s
    if onset_op is None:
        onset_op, onset_report = _verdict_at(params, hi, marginal_tolerance, lo_Q if fixed else None)
    logger.info(f"Critical power {hi:.6g} W (Delta_s={onset_op.Delta_s / (2.0 * math.pi):.6g} Hz)")
    return CriticalPowerResult(
        p_crit=hi,
        stable_to_cap=False,
        power_cap=power_cap,
        bracket=(lo, hi),
        operating_point=onset_op,
        report=onset_report,
    )


def random_operating_point(rng: np.random.Generator) -> OperatingPoint:
    """
    Operating point drawn log-uniformly over a physically sane range.

    κ_s spans 10⁵..10⁸ rad/s, ω_m 10⁻²..0.5 κ_s, γ_m 10⁻⁵..10⁻² ω_m, both enhanced
    couplings 10⁻³..1 κ_s and Δ_s uniform in ±2κ_s.
    """
    kappa_s = 10.0 ** rng.uniform(5.0, 8.0)
    omega_m = kappa_s * 10.0 ** rng.uniform(-2.0, math.log10(0.5))
    gamma_m = omega_m * 10.0 ** rng.uniform(-5.0, -2.0)
    G_omega = kappa_s * 10.0 ** rng.uniform(-3.0, 0.0)
    G_kappa = kappa_s * 10.0 ** rng.uniform(-3.0, 0.0)
    Delta_s = kappa_s * rng.uniform(-2.0, 2.0)
    return OperatingPoint.from_enhanced(kappa_s, omega_m, gamma_m, G_omega, G_kappa, Delta_s)


@dataclass(frozen=True)
class OracleSummary:
    draws: int
    marginal: int
    unstable: int
    mismatches: int
    max_coefficient_error: float
    max_margin_error: float

    @property
    def passed(self) -> bool:
        return self.mismatches == 0 and self.max_coefficient_error < 1e-8 and self.max_margin_error < 1e-6

    def to_dict(self) -> Dict:
        return {
            "draws": self.draws,
            "marginal": self.marginal,
            "unstable": self.unstable,
            "mismatches": self.mismatches,
            "max_coefficient_error": self.max_coefficient_error,
            "max_margin_error": self.max_margin_error,
            "passed": self.passed,
        }


def oracle_suite(
    n: int = 10_000,
    seed: int = 0,
    marginal_tolerance: float = DEFAULT_MARGINAL_TOLERANCE,
) -> OracleSummary:
    """
    Compare RH verdicts with eigenvalue verdicts on random draws.

    Also checks the closed-form h's against the numerically expanded characteristic
    polynomial (relative to the magnitude of their terms) and the eigenvalue margin
    against the roots of the quartic (relative to κ_s).
    """
    rng = np.random.default_rng(seed)
    marginal = unstable = mismatches = 0
    max_coeff = max_margin = 0.0
    for _ in range(n):
        op = random_operating_point(rng)
        report = routh_hurwitz(op, marginal_tolerance)
        if report.verdict == MARGINAL:
            marginal += 1
        elif not report.consistent:
            mismatches += 1
        if report.verdict == UNSTABLE:
            unstable += 1

        h, scale = routh_coefficients(op)
        numeric = characteristic_coefficients(build_drift_matrix(op, DriftConvention.PRINTED))
        max_coeff = max(max_coeff, float(np.max(np.abs(numeric - h) / scale)))
        roots = quartic_eigenvalues(h)
        max_margin = max(max_margin, abs(float(np.max(roots.real)) - report.margin) / op.kappa_s)

    summary = OracleSummary(n, marginal, unstable, mismatches, max_coeff, max_margin)
    logger.info(f"Stability oracle over {n} draws: {summary.to_dict()}")
    return summary
