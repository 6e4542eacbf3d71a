"""
Classical operating point of an optomechanical cavity with dispersive and dissipative coupling

All rates and frequencies are angular (rad/s). Conversion from the Hz values used in
config files happens in squeeze_lab.config.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import constants, optimize
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt

from squeeze_lab.exceptions import (
    ConvergenceError,
    DomainError,
    PreconditionError,
    UnphysicalOperatingPointError,
)

logger = logging.getLogger(__name__)

# CODATA 2018 exact values
HBAR = constants.hbar
K_B = constants.k
C_LIGHT = constants.c

TWO_PI = 2.0 * math.pi
DEFAULT_WAVELENGTH = 1064e-9

FIXED_POINT_TOLERANCE = 1e-12
FIXED_POINT_MAX_ITER = 500
FIXED_POINT_DAMPING = (0.5, 0.25, 0.125, 0.0625)
CONTINUATION_STEPS = 16


def laser_frequency(wavelength: float = DEFAULT_WAVELENGTH) -> float:
    """Angular frequency (rad/s) of a laser with the given vacuum wavelength (m)"""
    if wavelength <= 0:
        raise DomainError(f"wavelength must be positive, got {wavelength}")
    return TWO_PI * C_LIGHT / wavelength


class DriveMode(str, Enum):
    RESONANT_LOCKED = "resonant"
    FIXED_FREQUENCY = "fixed"
    EXPLICIT_DETUNING = "explicit"


class DriveSpec(BaseModel):
    """
    How the cavity is driven.

    `detuning` is the prescribed Δ_s (rad/s) for EXPLICIT_DETUNING. `laser_offset` is
    ω_c − ω_l (rad/s) for FIXED_FREQUENCY; zero puts the laser on the bare cavity resonance.
    """

    model_config = ConfigDict(frozen=True)

    power: float = Field(0.0, ge=0, description="Laser power (W)")
    mode: DriveMode = DriveMode.RESONANT_LOCKED
    detuning: Optional[float] = Field(None, description="Δ_s for explicit detuning (rad/s)")
    laser_offset: float = Field(0.0, description="ω_c − ω_l for a fixed-frequency laser (rad/s)")

    @model_validator(mode="after")
    def _check_detuning(self) -> "DriveSpec":
        if self.mode == DriveMode.EXPLICIT_DETUNING:
            if self.detuning is None or not math.isfinite(self.detuning):
                raise ValueError("explicit detuning needs a finite Δ_s")
        if not math.isfinite(self.laser_offset):
            raise ValueError("laser_offset must be finite")
        return self


class PhysicalParams(BaseModel):
    """Bare system constants plus the drive specification"""

    model_config = ConfigDict(frozen=True)

    kappa: float = Field(..., gt=0, description="Bare cavity amplitude decay rate (rad/s)")
    omega_m: float = Field(..., gt=0, description="Mechanical frequency (rad/s)")
    gamma_m: float = Field(..., gt=0, description="Mechanical damping rate (rad/s)")
    g_omega: float = Field(0.0, description="Bare dispersive coupling (rad/s per unit Q)")
    g_kappa: float = Field(0.0, description="Bare dissipative coupling (rad/s per unit Q)")
    omega_l: float = Field(default_factory=laser_frequency, gt=0, description="Laser frequency (rad/s)")
    drive: DriveSpec = Field(default_factory=DriveSpec)

    @model_validator(mode="after")
    def _check_regime(self) -> "PhysicalParams":
        if self.g_omega < 0 and self.g_kappa < 0:
            raise ValueError("g_omega and g_kappa cannot both be negative")
        if not (self.gamma_m < self.omega_m < self.kappa):
            logger.warning(
                "Parameters leave the unresolved-sideband regime "
                f"(gamma_m={self.gamma_m:.4g}, omega_m={self.omega_m:.4g}, kappa={self.kappa:.4g} rad/s)"
            )
        return self

    @property
    def drive_amplitude(self) -> float:
        return drive_amplitude(self.drive.power, self.omega_l)

    def with_power(self, power: float) -> "PhysicalParams":
        return self.model_copy(update={"drive": self.drive.model_copy(update={"power": power})})

    def with_drive(self, drive: DriveSpec) -> "PhysicalParams":
        return self.model_copy(update={"drive": drive})

    def with_couplings(self, g_omega: float, g_kappa: float) -> "PhysicalParams":
        return self.model_copy(update={"g_omega": g_omega, "g_kappa": g_kappa})


@dataclass(frozen=True)
class OperatingPoint:
    """
    Linearization point of the optomechanical system.

    G_omega and G_kappa are √2·a_s·g, complex whenever Δ_s ≠ 0. The mechanical constants
    travel with the point so spectra and drift matrices need nothing else.
    """

    a_s: complex
    Q_s: float
    Delta_s: float
    kappa_s: float
    G_omega: complex
    G_kappa: complex
    E_l: float
    omega_m: float
    gamma_m: float
    g_omega: float = 0.0
    g_kappa: float = 0.0
    mode: DriveMode = DriveMode.RESONANT_LOCKED
    residual: float = 0.0
    alternate_roots: Tuple[float, ...] = field(default_factory=tuple)

    @property
    def photon_amplitude(self) -> float:
        return abs(self.a_s)

    @property
    def drive_coupling_omega(self) -> float:
        """g_ω·ℰ_l (rad/s · √(photons/s))"""
        return self.g_omega * self.E_l

    @property
    def drive_coupling_kappa(self) -> float:
        """g_κ·ℰ_l (rad/s · √(photons/s))"""
        return self.g_kappa * self.E_l

    @classmethod
    def from_enhanced(
        cls,
        kappa_s: float,
        omega_m: float,
        gamma_m: float,
        G_omega: float,
        G_kappa: float,
        Delta_s: float = 0.0,
    ) -> "OperatingPoint":
        """
        Build a point directly from enhanced coupling magnitudes.

        The intracavity amplitude is normalised to |a_s| = 1 with the phase of
        1/(κ_s + iΔ_s); bare couplings and ℰ_l are chosen so that the
        steady-state relation and G = √2·a_s·g holds exactly.

        Args:
            kappa_s: Effective decay rate (rad/s)
            omega_m: Mechanical frequency (rad/s)
            gamma_m: Mechanical damping (rad/s)
            G_omega: Enhanced dispersive coupling magnitude (rad/s)
            G_kappa: Enhanced dissipative coupling magnitude (rad/s)
            Delta_s: Effective detuning (rad/s)

        Returns:
            OperatingPoint with Q_s consistent with the chosen normalisation
        """
        if kappa_s <= 0:
            raise UnphysicalOperatingPointError("kappa_s must be positive", {"kappa_s": kappa_s})
        norm = math.hypot(kappa_s, Delta_s)
        a_s = complex(kappa_s, -Delta_s) / norm
        g_omega = G_omega / math.sqrt(2.0)
        g_kappa = G_kappa / math.sqrt(2.0)
        E_l = norm / math.sqrt(2.0 * kappa_s)
        Q_s = (g_omega / omega_m - Delta_s * g_kappa / (kappa_s * omega_m)) * abs(a_s) ** 2
        return cls(
            a_s=a_s,
            Q_s=Q_s,
            Delta_s=float(Delta_s),
            kappa_s=float(kappa_s),
            G_omega=math.sqrt(2.0) * a_s * g_omega,
            G_kappa=math.sqrt(2.0) * a_s * g_kappa,
            E_l=E_l,
            omega_m=float(omega_m),
            gamma_m=float(gamma_m),
            g_omega=g_omega,
            g_kappa=g_kappa,
            mode=DriveMode.EXPLICIT_DETUNING if Delta_s else DriveMode.RESONANT_LOCKED,
        )

    def to_dict(self) -> dict:
        """Plain-float summary for JSON metadata (rates in rad/s)"""
        return {
            "mode": self.mode.value,
            "a_s": [self.a_s.real, self.a_s.imag],
            "Q_s": self.Q_s,
            "Delta_s": self.Delta_s,
            "kappa_s": self.kappa_s,
            "G_omega": [self.G_omega.real, self.G_omega.imag],
            "G_kappa": [self.G_kappa.real, self.G_kappa.imag],
            "E_l": self.E_l,
            "omega_m": self.omega_m,
            "gamma_m": self.gamma_m,
            "g_omega": self.g_omega,
            "g_kappa": self.g_kappa,
            "residual": self.residual,
            "alternate_roots": list(self.alternate_roots),
        }

    def with_couplings(self, G_omega: float, G_kappa: float) -> "OperatingPoint":
        """Same cavity and mechanics, different enhanced coupling magnitudes"""
        return OperatingPoint.from_enhanced(
            self.kappa_s, self.omega_m, self.gamma_m, G_omega, G_kappa, self.Delta_s
        )


class ThermalEnvironment(BaseModel):
    """Mechanical bath: mean phonon occupancy and, optionally, the matching temperature"""

    model_config = ConfigDict(frozen=True)

    n_th: float = Field(0.0, ge=0)
    temperature: Optional[float] = Field(None, ge=0, description="Bath temperature (K)")
    omega_m: Optional[float] = Field(None, gt=0, description="Mechanical frequency used for T <-> n_th (rad/s)")

    @model_validator(mode="after")
    def _check_bose_einstein(self) -> "ThermalEnvironment":
        if self.temperature is not None and self.omega_m is not None:
            expected = thermal_occupancy(self.temperature, self.omega_m)
            scale = max(abs(expected), abs(self.n_th))
            if scale > 0 and abs(expected - self.n_th) > 1e-12 * scale:
                raise ValueError(
                    f"n_th={self.n_th} does not match T={self.temperature} K (expected {expected})"
                )
        return self

    @classmethod
    def from_temperature(cls, temperature: float, omega_m: float) -> "ThermalEnvironment":
        return cls(n_th=thermal_occupancy(temperature, omega_m), temperature=temperature, omega_m=omega_m)

    @classmethod
    def from_occupancy(cls, n_th: float, omega_m: Optional[float] = None) -> "ThermalEnvironment":
        temperature = occupancy_temperature(n_th, omega_m) if omega_m is not None else None
        return cls(n_th=n_th, temperature=temperature, omega_m=omega_m)

    def brownian_strength(self, gamma_m: float) -> float:
        """Symmetrised PSD of the Brownian force, γ_m(2n̄_th + 1)"""
        return gamma_m * (2.0 * self.n_th + 1.0)


@dataclass(frozen=True)
class CalibrationReference:
    """A published (power, enhanced couplings) pair; rates in rad/s, power in W"""

    power: float
    G_omega: float
    G_kappa: float
    kappa_s: float
    omega_m: float
    omega_l: float = field(default_factory=laser_frequency)
    Delta_s: float = 0.0


@dataclass(frozen=True)
class CouplingCalibration:
    """Bare couplings and bare decay rate reproducing a CalibrationReference"""

    g_omega: float
    g_kappa: float
    kappa: float
    reference: CalibrationReference


@dataclass(frozen=True)
class SweepPoint:
    power: float
    operating_point: Optional[OperatingPoint]
    error: Optional[str] = None


def drive_amplitude(power: float, omega_l: float) -> float:
    """
    Drive amplitude ℰ_l = √(P/ħω_l).

    Args:
        power: Laser power (W)
        omega_l: Laser angular frequency (rad/s)

    Returns:
        ℰ_l in √(photons/s)
    """
    if not omega_l > 0:
        raise DomainError(f"omega_l must be positive, got {omega_l}")
    if power < 0:
        raise DomainError(f"power must be non-negative, got {power}")
    return math.sqrt(power / (HBAR * omega_l))


def thermal_occupancy(temperature: float, omega_m: float) -> float:
    """Bose-Einstein occupancy 1/(exp(ħω_m/k_B T) − 1); T = 0 gives 0"""
    if temperature < 0:
        raise DomainError(f"temperature must be non-negative, got {temperature}")
    if omega_m <= 0:
        raise DomainError(f"omega_m must be positive, got {omega_m}")
    if temperature == 0:
        return 0.0
    x = HBAR * omega_m / (K_B * temperature)
    return math.exp(-x) / -math.expm1(-x)


def occupancy_temperature(n_th: float, omega_m: float) -> float:
    """Temperature (K) whose Bose-Einstein occupancy at omega_m is n_th"""
    if n_th < 0:
        raise DomainError(f"n_th must be non-negative, got {n_th}")
    if omega_m <= 0:
        raise DomainError(f"omega_m must be positive, got {omega_m}")
    if n_th == 0:
        return 0.0
    return HBAR * omega_m / (K_B * math.log1p(1.0 / n_th))


def _displacement(params: PhysicalParams, E_l: float, kappa_s: float, Delta_s: float) -> float:
    """Q_s = (g_ω/ω_m − Δ_s g_κ/(κ_s ω_m))|a_s|² at given κ_s and Δ_s"""
    amp2 = 2.0 * kappa_s * E_l**2 / (kappa_s**2 + Delta_s**2)
    return (params.g_omega / params.omega_m - Delta_s * params.g_kappa / (kappa_s * params.omega_m)) * amp2


def _build_operating_point(
    params: PhysicalParams,
    E_l: float,
    kappa_s: float,
    Delta_s: float,
    alternate_roots: Sequence[float] = (),
) -> OperatingPoint:
    if not kappa_s > 0:
        raise UnphysicalOperatingPointError("effective decay rate is not positive", {"kappa_s": kappa_s})
    a_s = math.sqrt(2.0 * kappa_s) * E_l / complex(kappa_s, Delta_s)
    if Delta_s == 0:
        a_s = complex(a_s.real, 0.0)
    Q_s = _displacement(params, E_l, kappa_s, Delta_s)

    drive_term = math.sqrt(2.0 * kappa_s) * E_l
    amplitude_residual = abs(a_s * complex(kappa_s, Delta_s) - drive_term) / max(drive_term, 1e-300)
    decay_residual = abs(kappa_s - (params.kappa - params.g_kappa * Q_s)) / params.kappa
    residual = max(amplitude_residual, decay_residual)
    if residual > 1e-10:
        logger.warning(f"Steady-state residual {residual:.3e} exceeds 1e-10")

    return OperatingPoint(
        a_s=a_s,
        Q_s=Q_s,
        Delta_s=float(Delta_s),
        kappa_s=float(kappa_s),
        G_omega=math.sqrt(2.0) * a_s * params.g_omega,
        G_kappa=math.sqrt(2.0) * a_s * params.g_kappa,
        E_l=E_l,
        omega_m=params.omega_m,
        gamma_m=params.gamma_m,
        g_omega=params.g_omega,
        g_kappa=params.g_kappa,
        mode=params.drive.mode,
        residual=residual,
        alternate_roots=tuple(alternate_roots),
    )


def solve_steady_state_resonant(params: PhysicalParams) -> OperatingPoint:
    """
    Steady state with the laser retuned onto the effective resonance (Δ_s = 0).

    κ_s is the root of κ_s² − κκ_s + 2ℰ_l²g_ωg_κ/ω_m = 0 closest to κ.
    """
    if params.drive.mode != DriveMode.RESONANT_LOCKED:
        raise PreconditionError(f"resonant solver called with drive mode {params.drive.mode.value}")
    E_l = params.drive_amplitude
    c = 2.0 * E_l**2 * params.g_omega * params.g_kappa / params.omega_m
    if c == 0:
        kappa_s = params.kappa
    else:
        disc = params.kappa**2 - 4.0 * c
        if disc < 0:
            raise UnphysicalOperatingPointError(
                "effective decay quadratic has no real root",
                {"discriminant": disc, "power": params.drive.power},
            )
        kappa_s = 0.5 * (params.kappa + math.sqrt(disc))
    return _build_operating_point(params, E_l, kappa_s, 0.0)


def _damped_fixed_point(update: Callable[[float], float], x0: float, damping: float) -> float:
    """Iterate x <- (1 − λ)x + λ·update(x) until |Δx|/max(1, |x|) < FIXED_POINT_TOLERANCE"""
    x = x0
    step = float("nan")
    for _ in range(FIXED_POINT_MAX_ITER):
        target = update(x)
        x_new = (1.0 - damping) * x + damping * target
        if not math.isfinite(x_new):
            raise ConvergenceError("fixed-point iterate is not finite", {"damping": damping, "last": x})
        step = abs(x_new - x) / max(1.0, abs(x_new))
        x = x_new
        if step < FIXED_POINT_TOLERANCE:
            return x
    raise ConvergenceError(
        "fixed-point iteration did not converge",
        {"damping": damping, "last_step": step, "iterations": FIXED_POINT_MAX_ITER},
    )


def _fixed_point_with_retries(update: Callable[[float], float], x0: float) -> float:
    """Damped iteration retried with smaller damping on each failed attempt"""
    for attempt in Retrying(
        stop=stop_after_attempt(len(FIXED_POINT_DAMPING)),
        retry=retry_if_exception_type(ConvergenceError),
        reraise=True,
    ):
        with attempt:
            damping = FIXED_POINT_DAMPING[attempt.retry_state.attempt_number - 1]
            if attempt.retry_state.attempt_number > 1:
                logger.debug(f"Retrying fixed-point iteration with damping {damping}")
            return _damped_fixed_point(update, x0, damping)
    raise ConvergenceError("fixed-point retries exhausted")


def _bracketed_root(
    residual: Callable[[float], float],
    x0: float,
    lower_limit: float = -math.inf,
    upper_limit: float = math.inf,
) -> float:
    """Expand a bracket around x0 until the residual changes sign, then brentq"""
    f0 = residual(x0)
    if f0 == 0:
        return x0
    width = 1e-3 * max(1.0, abs(x0))
    for _ in range(200):
        lo = max(x0 - width, lower_limit)
        hi = min(x0 + width, upper_limit)
        f_lo, f_hi = residual(lo), residual(hi)
        if f_lo * f0 <= 0:
            return optimize.brentq(residual, lo, x0, xtol=1e-14 * max(1.0, abs(x0)), maxiter=500)
        if f_hi * f0 <= 0:
            return optimize.brentq(residual, x0, hi, xtol=1e-14 * max(1.0, abs(x0)), maxiter=500)
        width *= 2.0
    raise ConvergenceError("no sign change found around the initial guess", {"guess": x0, "residual": f0})


def _fixed_frequency_terms(params: PhysicalParams, E_l: float, Q: float) -> Tuple[float, float, float]:
    kappa_s = params.kappa - params.g_kappa * Q
    Delta_s = params.drive.laser_offset - params.g_omega * Q
    if not kappa_s > 0:
        raise UnphysicalOperatingPointError(
            "effective decay rate is not positive", {"Q_s": Q, "kappa_s": kappa_s}
        )
    return _displacement(params, E_l, kappa_s, Delta_s), kappa_s, Delta_s


def _q_upper_limit(params: PhysicalParams) -> float:
    # κ_s = κ − g_κ Q_s must stay positive
    if params.g_kappa > 0:
        return params.kappa / params.g_kappa * (1.0 - 1e-12)
    return math.inf


def _q_lower_limit(params: PhysicalParams) -> float:
    if params.g_kappa < 0:
        return params.kappa / params.g_kappa * (1.0 - 1e-12)
    return -math.inf


def _solve_fixed_frequency_at(params: PhysicalParams, E_l: float, Q_guess: float) -> float:
    def update(Q: float) -> float:
        return _fixed_frequency_terms(params, E_l, Q)[0]

    def residual(Q: float) -> float:
        return Q - update(Q)

    try:
        return _fixed_point_with_retries(update, Q_guess)
    except UnphysicalOperatingPointError as error:
        logger.debug(f"Fixed-point iteration failed ({error}); falling back to bracketed root search")
    try:
        return _bracketed_root(residual, Q_guess, _q_lower_limit(params), _q_upper_limit(params))
    except (UnphysicalOperatingPointError, ValueError) as error:
        diagnostics = {"power": params.drive.power, "guess": Q_guess}
        try:
            diagnostics["last_residual"] = residual(Q_guess)
        except UnphysicalOperatingPointError:
            diagnostics["last_residual"] = float("nan")
        raise UnphysicalOperatingPointError(
            f"fixed-frequency steady state not found: {error}", diagnostics
        ) from error


def _scan_alternate_roots(params: PhysicalParams, E_l: float, Q_found: float, samples: int = 400) -> List[float]:
    """Other sign changes of Q − F(Q) on a range around the followed root"""
    q0 = _fixed_frequency_terms(params, E_l, 0.0)[0]
    span = 4.0 * max(abs(q0), abs(Q_found), 1.0)
    lo = max(-span, _q_lower_limit(params))
    hi = min(span, _q_upper_limit(params))
    grid = np.linspace(lo, hi, samples)
    values = []
    for Q in grid:
        try:
            values.append(Q - _fixed_frequency_terms(params, E_l, Q)[0])
        except UnphysicalOperatingPointError:
            values.append(float("nan"))
    values = np.asarray(values)
    roots = []
    for i in range(samples - 1):
        a, b = values[i], values[i + 1]
        if np.isfinite(a) and np.isfinite(b) and a * b < 0:
            midpoint = 0.5 * (grid[i] + grid[i + 1])
            if abs(midpoint - Q_found) > 2.0 * (grid[1] - grid[0]):
                roots.append(float(midpoint))
    return roots


def solve_steady_state_fixed_frequency(
    params: PhysicalParams,
    initial_guess: Optional[float] = None,
    continuation_steps: int = CONTINUATION_STEPS,
) -> OperatingPoint:
    """
    Self-consistent steady state for a laser at a fixed frequency.

    Δ_s = δ_L − g_ω Q_s and κ_s = κ − g_κ Q_s, with δ_L = ω_c − ω_l from the drive spec.
    Without an initial guess the branch connected to Q_s = 0 at P = 0 is followed by
    power continuation.

    Args:
        params: System parameters with a FIXED_FREQUENCY drive
        initial_guess: Q_s to start from (skips continuation)
        continuation_steps: Number of power steps from 0 to the target power

    Returns:
        OperatingPoint on the followed branch; other roots go to alternate_roots
    """
    if params.drive.mode != DriveMode.FIXED_FREQUENCY:
        raise PreconditionError(f"fixed-frequency solver called with drive mode {params.drive.mode.value}")
    power = params.drive.power
    if power == 0:
        return _build_operating_point(params, 0.0, params.kappa, params.drive.laser_offset)

    if initial_guess is None:
        Q = 0.0
        for k in range(1, continuation_steps + 1):
            step_power = power * (k / continuation_steps) ** 2
            Q = _solve_fixed_frequency_at(params, drive_amplitude(step_power, params.omega_l), Q)
    else:
        Q = _solve_fixed_frequency_at(params, params.drive_amplitude, initial_guess)

    E_l = params.drive_amplitude
    _, kappa_s, Delta_s = _fixed_frequency_terms(params, E_l, Q)
    alternates = _scan_alternate_roots(params, E_l, Q)
    if alternates:
        logger.info(f"Fixed-frequency steady state at P={power:.4g} W has other roots near Q_s={alternates}")
    point = _build_operating_point(params, E_l, kappa_s, Delta_s, alternates)
    q_residual = abs(Q - point.Q_s) / max(1.0, abs(Q))
    if q_residual > 1e-10:
        raise UnphysicalOperatingPointError(
            "fixed-frequency root does not satisfy the steady-state relations", {"last_residual": q_residual}
        )
    return point


def solve_steady_state_explicit(params: PhysicalParams) -> OperatingPoint:
    """Steady state at a prescribed Δ_s, solving κ_s = κ − g_κ Q_s(κ_s) self-consistently"""
    if params.drive.mode != DriveMode.EXPLICIT_DETUNING:
        raise PreconditionError(f"explicit-detuning solver called with drive mode {params.drive.mode.value}")
    E_l = params.drive_amplitude
    Delta_s = params.drive.detuning
    if params.g_kappa == 0 or E_l == 0:
        return _build_operating_point(params, E_l, params.kappa, Delta_s)

    def update(kappa_s: float) -> float:
        if not kappa_s > 0:
            raise UnphysicalOperatingPointError("effective decay rate is not positive", {"kappa_s": kappa_s})
        return params.kappa - params.g_kappa * _displacement(params, E_l, kappa_s, Delta_s)

    def residual(kappa_s: float) -> float:
        return kappa_s - update(kappa_s)

    try:
        kappa_s = _fixed_point_with_retries(update, params.kappa)
    except UnphysicalOperatingPointError as error:
        logger.debug(f"Decay-rate iteration failed ({error}); falling back to bracketed root search")
        try:
            kappa_s = _bracketed_root(residual, params.kappa, lower_limit=params.kappa * 1e-12)
        except (UnphysicalOperatingPointError, ValueError) as fallback_error:
            raise UnphysicalOperatingPointError(
                f"explicit-detuning steady state not found: {fallback_error}",
                {"power": params.drive.power, "Delta_s": Delta_s},
            ) from fallback_error
    return _build_operating_point(params, E_l, kappa_s, Delta_s)


def solve_steady_state(params: PhysicalParams) -> OperatingPoint:
    """Dispatch on the drive mode"""
    solvers = {
        DriveMode.RESONANT_LOCKED: solve_steady_state_resonant,
        DriveMode.FIXED_FREQUENCY: solve_steady_state_fixed_frequency,
        DriveMode.EXPLICIT_DETUNING: solve_steady_state_explicit,
    }
    return solvers[params.drive.mode](params)


def power_sweep(params: PhysicalParams, powers: Sequence[float]) -> List[SweepPoint]:
    """
    Operating points along a power sweep.

    Fixed-frequency sweeps are solved by continuation: each point starts from the
    previous displacement, so the branch connected to P = 0 is followed.
    Unphysical points are reported per row instead of aborting the sweep.
    """
    results: List[SweepPoint] = []
    previous_Q: Optional[float] = None
    previous_power = 0.0
    for power in powers:
        stepped = params.with_power(float(power))
        try:
            if stepped.drive.mode == DriveMode.FIXED_FREQUENCY and previous_Q is not None and power >= previous_power:
                point = solve_steady_state_fixed_frequency(stepped, initial_guess=previous_Q)
            else:
                point = solve_steady_state(stepped)
            previous_Q = point.Q_s
            previous_power = float(power)
            results.append(SweepPoint(float(power), point))
        except UnphysicalOperatingPointError as error:
            logger.warning(f"Unphysical operating point at P={power:.4g} W: {error}")
            previous_Q = None
            results.append(SweepPoint(float(power), None, str(error)))
    return results


def calibrate_bare_couplings(reference: CalibrationReference) -> CouplingCalibration:
    """
    Invert G = √2·a_s·g at a published reference point.

    Enhanced couplings are taken as magnitudes, so g = |G|·|κ_s + iΔ_s|/(2√κ_s·ℰ_l).
    The bare κ returned makes the reference κ_s the physical root at the reference power.
    """
    if not reference.power > 0:
        raise DomainError("calibration needs a positive reference power")
    if not reference.kappa_s > 0:
        raise DomainError("calibration needs a positive reference kappa_s")
    E_l = drive_amplitude(reference.power, reference.omega_l)
    norm = math.hypot(reference.kappa_s, reference.Delta_s)
    scale = norm / (2.0 * math.sqrt(reference.kappa_s) * E_l)
    g_omega = reference.G_omega * scale
    g_kappa = reference.G_kappa * scale

    amp2 = 2.0 * reference.kappa_s * E_l**2 / norm**2
    Q_s = (g_omega / reference.omega_m - reference.Delta_s * g_kappa / (reference.kappa_s * reference.omega_m)) * amp2
    kappa = reference.kappa_s + g_kappa * Q_s
    logger.debug(f"Calibrated g_omega={g_omega:.6g}, g_kappa={g_kappa:.6g} rad/s, kappa={kappa:.6g} rad/s")
    return CouplingCalibration(g_omega=g_omega, g_kappa=g_kappa, kappa=kappa, reference=reference)
