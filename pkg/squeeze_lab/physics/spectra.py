"""
Output quadrature noise spectra of the optomechanical cavity

Every method reduces to the symmetrised 2×2 output covariance Σ(ω) of (X_out, Y_out);
the quadrature spectrum is S_θ(ω) = (cosθ, sinθ)·Σ(ω)·(cosθ, sinθ)ᵀ with vacuum level 1/2.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from multiprocessing import Pool
from typing import Dict, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import optimize

from squeeze_lab.exceptions import DomainError, NumericalSingularityError, PreconditionError
from squeeze_lab.physics.model import OperatingPoint, ThermalEnvironment
from squeeze_lab.physics.stability import DriftConvention, build_drift_matrix

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
VACUUM_LEVEL = 0.5
REFINE_TOLERANCE = 1e-9
REFINE_MAX_ITER = 50


class Method(str, Enum):
    EXACT = "exact"
    CLOSED_DISS = "closed_diss"
    CLOSED_DISP = "closed_disp"
    CLOSED_COMB = "closed_comb"


class Regime(str, Enum):
    DISS = "diss"
    DISP = "disp"
    COMB = "comb"


CLOSED_METHODS = {
    Regime.DISS: Method.CLOSED_DISS,
    Regime.DISP: Method.CLOSED_DISP,
    Regime.COMB: Method.CLOSED_COMB,
}


def regime_of(op: OperatingPoint) -> Regime:
    """Coupling regime of an operating point"""
    if op.G_omega == 0:
        return Regime.DISS
    if op.G_kappa == 0:
        return Regime.DISP
    return Regime.COMB


def depth_db(S):
    """Squeezing depth −10·log₁₀(2S); positive below shot noise, NaN for S ≤ 0"""
    S = np.asarray(S, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        depth = -10.0 * np.log10(2.0 * S)
    depth = np.where(S > 0, depth, np.nan)
    return float(depth) if depth.ndim == 0 else depth


@dataclass(frozen=True)
class Susceptibility:
    omega: np.ndarray
    chi: np.ndarray


def mech_susceptibility(omega, omega_m: float, gamma_m: float) -> Susceptibility:
    """
    Mechanical susceptibility χ(ω) = ω_m/(ω_m² − ω² − iωγ_m).

    ω_m² − ω² is evaluated as (ω_m − ω)(ω_m + ω) so the resonance stays accurate.
    """
    if not omega_m > 0:
        raise DomainError(f"omega_m must be positive, got {omega_m}")
    if not gamma_m > 0:
        raise DomainError(f"gamma_m must be positive, got {gamma_m}")
    omega = np.asarray(omega, dtype=float)
    chi = omega_m / ((omega_m - omega) * (omega_m + omega) - 1j * omega * gamma_m)
    return Susceptibility(omega=omega, chi=chi)


@dataclass(frozen=True)
class TransferSet:
    """
    Transfer coefficients from the noise inputs (X_in, Y_in, ξ) to (X_out, Y_out).

    T has shape (N, 2, 3): rows X_out and Y_out, columns X_in, Y_in and ξ.
    """

    omega: np.ndarray
    T: np.ndarray

    def for_quadrature(self, theta: float) -> np.ndarray:
        """(N, 3) coefficients T_Xin, T_Yin, T_ξ for Z_θ = X cosθ + Y sinθ"""
        return math.cos(theta) * self.T[:, 0, :] + math.sin(theta) * self.T[:, 1, :]


def output_transfer(op: OperatingPoint, omega) -> TransferSet:
    """
    Solve (−iωI − M)·v(ω) = F·n(ω) for every ω and apply the input-output relations.

    M is the drift matrix in the Langevin convention. The noise vector n = (X_in, Y_in, ξ)
    drives the cavity rows with √(2κ_s) and the P₁ row with (Im G_κ, −Re G_κ)/√(2κ_s) and 1.
    """
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    M = build_drift_matrix(op, DriftConvention.LANGEVIN).M
    root = math.sqrt(2.0 * op.kappa_s)
    G_kappa = complex(op.G_kappa)

    F = np.zeros((4, 3), dtype=complex)
    F[0, 0] = root
    F[1, 1] = root
    F[3] = (G_kappa.imag / root, -G_kappa.real / root, 1.0)

    system = -1j * omega[:, None, None] * np.eye(4) - M[None, :, :]
    try:
        v = np.linalg.solve(system, np.broadcast_to(F, (omega.size, 4, 3)))
    except np.linalg.LinAlgError as error:
        raise NumericalSingularityError(f"frequency-domain system is singular: {error}") from error
    if not np.all(np.isfinite(v)):
        raise NumericalSingularityError("frequency-domain solve produced non-finite values")

    output = np.array(
        [
            [root, 0.0, -G_kappa.real / root, 0.0],
            [0.0, root, -G_kappa.imag / root, 0.0],
        ],
        dtype=complex,
    )
    direct = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    T = np.einsum("ij,njk->nik", output, v) - direct[None, :, :]
    return TransferSet(omega=omega, T=T)


def noise_weights(op: OperatingPoint, env: ThermalEnvironment) -> np.ndarray:
    """Symmetrised PSDs of X_in, Y_in and ξ"""
    return np.array([VACUUM_LEVEL, VACUUM_LEVEL, env.brownian_strength(op.gamma_m)])


def _require_resonant(op: OperatingPoint, method: Method) -> None:
    if abs(op.Delta_s) > 1e-12 * op.kappa_s:
        raise PreconditionError(f"{method.value} needs Delta_s = 0, got {op.Delta_s:.6g} rad/s")


def _closed_covariance(op: OperatingPoint, env: ThermalEnvironment, omega: np.ndarray, method: Method) -> np.ndarray:
    _require_resonant(op, method)
    G_omega = complex(op.G_omega).real
    G_kappa = complex(op.G_kappa).real
    kappa, omega_m = op.kappa_s, op.omega_m
    brownian = env.brownian_strength(op.gamma_m)
    chi = mech_susceptibility(omega, omega_m, op.gamma_m).chi
    sigma = np.empty((omega.size, 2, 2))

    if method == Method.CLOSED_DISS:
        if G_omega != 0:
            raise PreconditionError("closed_diss needs G_omega = 0")
        k = G_kappa**2 * omega_m**2 / (4.0 * kappa**3)
        gamma_diss = k + brownian
        sigma[:, 0, 0] = VACUUM_LEVEL + 2.0 * k * np.abs(chi) ** 2 * gamma_diss
        sigma[:, 0, 1] = -k * chi.real
        sigma[:, 1, 1] = VACUUM_LEVEL
    elif method == Method.CLOSED_DISP:
        if G_kappa != 0:
            raise PreconditionError("closed_disp needs G_kappa = 0")
        k = G_omega**2 / kappa
        gamma_disp = k + brownian
        sigma[:, 0, 0] = VACUUM_LEVEL
        sigma[:, 0, 1] = k * chi.real
        sigma[:, 1, 1] = VACUUM_LEVEL + 2.0 * k * np.abs(chi) ** 2 * gamma_disp
    else:
        gamma_w, gamma_k, gamma_p = combined_rates(op, env, omega)
        inverse_chi = 1.0 / chi
        R = inverse_chi - G_omega * G_kappa / kappa
        D = inverse_chi - G_omega * G_kappa / (kappa - 1j * omega)
        denominator = 2.0 * np.abs(D) ** 2
        sigma[:, 0, 0] = (np.abs(R) ** 2 + gamma_k) / denominator
        sigma[:, 0, 1] = gamma_p * R.real / denominator
        sigma[:, 1, 1] = (np.abs(R) ** 2 + gamma_w) / denominator
    sigma[:, 1, 0] = sigma[:, 0, 1]
    return sigma


def combined_rates(op: OperatingPoint, env: ThermalEnvironment, omega) -> Tuple:
    """Γ_ω, Γ_κ(ω) and Γ′(ω) of the combined-coupling spectrum"""
    G_omega = complex(op.G_omega).real
    G_kappa = complex(op.G_kappa).real
    kappa = op.kappa_s
    brownian = env.brownian_strength(op.gamma_m)
    omega = np.asarray(omega, dtype=float)
    gamma_w = 4.0 * G_omega**4 / kappa**2 + 4.0 * G_omega**2 / kappa * brownian
    gamma_k = G_kappa**4 * omega**4 / (4.0 * kappa**6) + G_kappa**2 * omega**2 / kappa**3 * brownian
    gamma_p = 2.0 * G_omega**2 / kappa - G_kappa**2 * omega**2 / (2.0 * kappa**3)
    return gamma_w, gamma_k, gamma_p


def quadrature_covariance(
    op: OperatingPoint,
    env: ThermalEnvironment,
    omega,
    method: Method = Method.EXACT,
) -> np.ndarray:
    """
    Symmetrised output covariance Σ(ω), shape (N, 2, 2).

    Args:
        op: Operating point
        env: Thermal environment
        omega: Angular frequencies (rad/s)
        method: Exact solve or one of the closed forms

    Returns:
        Real symmetric matrices Σ[n] = Re[T·diag(w)·T^H] for the exact method
    """
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if method == Method.EXACT:
        transfer = output_transfer(op, omega)
        weights = noise_weights(op, env)
        return np.einsum("nik,k,njk->nij", transfer.T, weights, transfer.T.conj()).real
    return _closed_covariance(op, env, omega, method)


def spectrum_from_covariance(sigma: np.ndarray, theta) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return c**2 * sigma[..., 0, 0] + 2.0 * c * s * sigma[..., 0, 1] + s**2 * sigma[..., 1, 1]


def _evaluate(method: Method, op: OperatingPoint, env: ThermalEnvironment, theta, omega):
    theta_b, omega_b = np.broadcast_arrays(np.asarray(theta, dtype=float), np.asarray(omega, dtype=float))
    sigma = quadrature_covariance(op, env, omega_b.ravel(), method)
    S = spectrum_from_covariance(sigma, theta_b.ravel()).reshape(theta_b.shape)
    return float(S) if S.ndim == 0 else S


def exact_spectrum(op: OperatingPoint, env: ThermalEnvironment, theta, omega):
    """S_θ(ω) from the full linearized Langevin system, valid at any Δ_s"""
    return _evaluate(Method.EXACT, op, env, theta, omega)


def closed_form_diss(op: OperatingPoint, env: ThermalEnvironment, theta, omega):
    """S = 1/2 + (G_κ²ω_m²/4κ_s³)(2|χ|²Γ_diss cos²θ − Reχ sin2θ); needs Δ_s = 0, G_ω = 0"""
    return _evaluate(Method.CLOSED_DISS, op, env, theta, omega)


def closed_form_disp(op: OperatingPoint, env: ThermalEnvironment, theta, omega):
    """S = 1/2 + (G_ω²/κ_s)(2|χ|²Γ_disp sin²θ + Reχ sin2θ); needs Δ_s = 0, G_κ = 0"""
    return _evaluate(Method.CLOSED_DISP, op, env, theta, omega)


def closed_form_comb(op: OperatingPoint, env: ThermalEnvironment, theta, omega):
    """Combined-coupling approximant with Γ_ω, Γ_κ, Γ′ and D = 1/χ − G_ωG_κ/(κ_s − iω)"""
    return _evaluate(Method.CLOSED_COMB, op, env, theta, omega)


SPECTRUM_FUNCTIONS = {
    Method.EXACT: exact_spectrum,
    Method.CLOSED_DISS: closed_form_diss,
    Method.CLOSED_DISP: closed_form_disp,
    Method.CLOSED_COMB: closed_form_comb,
}


@dataclass
class SpectrumResult:
    """S on a θ × ω grid (rows are angles) with the depth layer stored alongside"""

    omega_grid: np.ndarray
    theta_grid: np.ndarray
    S: np.ndarray
    method: Method
    operating_point: OperatingPoint
    n_th: float
    depth_db: np.ndarray = field(init=False)

    def __post_init__(self):
        self.depth_db = depth_db(self.S)

    @property
    def omega_offset_hz(self) -> np.ndarray:
        return (self.omega_grid - self.operating_point.omega_m) / TWO_PI

    def to_frame(self) -> pd.DataFrame:
        theta, offset = np.meshgrid(np.degrees(self.theta_grid), self.omega_offset_hz, indexing="ij")
        return pd.DataFrame(
            {
                "omega_Hz_offset_from_mech_resonance": offset.ravel(),
                "theta_deg": theta.ravel(),
                "S": self.S.ravel(),
                "depth_dB": self.depth_db.ravel(),
            }
        )

    def to_dict(self) -> Dict:
        return {
            "omega_Hz_offset_from_mech_resonance": self.omega_offset_hz.tolist(),
            "theta_deg": np.degrees(self.theta_grid).tolist(),
            "S": self.S.tolist(),
            "depth_dB": self.depth_db.tolist(),
            "metadata": {
                "method": self.method.value,
                "n_th": self.n_th,
                "operating_point": self.operating_point.to_dict(),
            },
        }


@dataclass(frozen=True)
class OptimalSqueezing:
    theta_opt: float
    omega_opt: float
    S_opt: float
    depth_db: float
    method: str
    approximate: bool = False
    printed_theta: Optional[float] = None

    def to_dict(self, omega_m: Optional[float] = None) -> Dict:
        data = {
            "method": self.method,
            "theta_opt_deg": math.degrees(self.theta_opt),
            "omega_opt": self.omega_opt,
            "S_opt": self.S_opt,
            "depth_dB": self.depth_db,
            "approximate": self.approximate,
        }
        if omega_m is not None:
            data["omega_opt_Hz_offset"] = (self.omega_opt - omega_m) / TWO_PI
        if self.printed_theta is not None:
            data["printed_theta_deg"] = math.degrees(self.printed_theta)
        return data


def default_omega_grid(
    omega_m: float,
    min_offset: float = TWO_PI * 0.01,
    max_offset: float = TWO_PI * 1e4,
    points_per_side: int = 1000,
) -> np.ndarray:
    """Grid symmetric about ω_m, logarithmically densified toward the resonance"""
    if not (0 < min_offset < max_offset):
        raise DomainError("default grid needs 0 < min_offset < max_offset")
    offsets = np.logspace(math.log10(min_offset), math.log10(max_offset), points_per_side)
    return np.concatenate((omega_m - offsets[::-1], [omega_m], omega_m + offsets))


def angle_envelope(sigma: np.ndarray, theta_range: Tuple[float, float] = (0.0, math.pi)) -> Tuple[np.ndarray, np.ndarray]:
    """
    Best angle in theta_range and the minimum of S_θ for a stack of 2×2 covariances.

    S_θ = mean + amp·cos(2θ − φ) has its free minimum mean − amp (the smallest eigenvalue)
    at θ = (φ + π)/2 mod π; when that angle falls outside the range the endpoints win.
    """
    sigma = np.asarray(sigma, dtype=float)
    lo, hi = theta_range
    half_diff = 0.5 * (sigma[..., 0, 0] - sigma[..., 1, 1])
    mean = 0.5 * (sigma[..., 0, 0] + sigma[..., 1, 1])
    amp = np.hypot(half_diff, sigma[..., 0, 1])
    free = lo + np.mod(0.5 * (np.arctan2(sigma[..., 0, 1], half_diff) + math.pi) - lo, math.pi)
    candidates = np.stack(np.broadcast_arrays(free, lo, hi))
    values = np.stack(
        (
            np.where(free <= hi, mean - amp, np.inf),
            spectrum_from_covariance(sigma, lo),
            spectrum_from_covariance(sigma, hi),
        )
    )
    index = np.argmin(values, axis=0)[None]
    return np.take_along_axis(candidates, index, axis=0)[0], np.take_along_axis(values, index, axis=0)[0]


def best_angle(sigma: np.ndarray, theta_range: Tuple[float, float] = (0.0, math.pi)) -> Tuple[float, float]:
    """Angle in theta_range minimising S_θ for one 2×2 covariance, and the minimum"""
    theta, S = angle_envelope(np.asarray(sigma, dtype=float)[None], theta_range)
    return float(theta[0]), float(S[0])


def optimal_numeric(
    op: OperatingPoint,
    env: ThermalEnvironment,
    method: Method = Method.EXACT,
    theta_range: Tuple[float, float] = (0.0, math.pi),
    omega_range: Optional[Tuple[float, float]] = None,
    omega_grid: Optional[np.ndarray] = None,
) -> OptimalSqueezing:
    """
    Optimum of S over (θ, ω).

    At every ω the best angle is analytic (angle_envelope), so the search runs on the
    θ-optimised spectrum alone: a scan of the ω grid, then a bounded scalar minimisation
    between the grid neighbours of the best sample. The bracket grows by one grid step
    while the minimiser sits on one of its edges. The result is never worse than the
    best grid sample.

    Args:
        op: Operating point
        env: Thermal environment
        method: Spectrum method
        theta_range: (lo, hi) quadrature angles in radians
        omega_range: (lo, hi) in rad/s; defaults to ω_m ± 2π×10 kHz
        omega_grid: Explicit coarse grid; overrides omega_range

    Returns:
        OptimalSqueezing
    """
    if not theta_range[1] > theta_range[0]:
        raise DomainError(f"empty theta range {theta_range}")
    if omega_grid is None:
        grid = default_omega_grid(op.omega_m)
        if omega_range is not None:
            lo, hi = omega_range
            if not hi > lo:
                raise DomainError(f"empty omega range {omega_range}")
            grid = grid[(grid >= lo) & (grid <= hi)]
            grid = np.unique(np.concatenate(([lo, hi], grid, np.linspace(lo, hi, 201))))
    else:
        grid = np.unique(np.asarray(omega_grid, dtype=float))
    if grid.size < 2:
        raise DomainError("omega grid needs at least two points")

    thetas, envelope_S = angle_envelope(quadrature_covariance(op, env, grid, method), theta_range)
    j = int(np.argmin(envelope_S))
    theta, omega, S = float(thetas[j]), float(grid[j]), float(envelope_S[j])

    def envelope(w: float) -> float:
        return best_angle(quadrature_covariance(op, env, [w], method)[0], theta_range)[1]

    left, right = max(j - 1, 0), min(j + 1, grid.size - 1)
    for _ in range(REFINE_MAX_ITER):
        lo, hi = float(grid[left]), float(grid[right])
        found = optimize.minimize_scalar(
            envelope, bounds=(lo, hi), method="bounded", options={"xatol": REFINE_TOLERANCE * abs(omega)}
        )
        w = float(found.x)
        theta_w, S_w = best_angle(quadrature_covariance(op, env, [w], method)[0], theta_range)
        if S_w < S:
            theta, omega, S = theta_w, w, S_w
        edge = 1e-3 * (hi - lo)
        grow_left = left > 0 and w - lo < edge
        grow_right = right < grid.size - 1 and hi - w < edge
        if not (grow_left or grow_right):
            break
        left -= int(grow_left)
        right += int(grow_right)
    return OptimalSqueezing(theta_opt=theta, omega_opt=omega, S_opt=S, depth_db=depth_db(S), method=method.value)


def optimal_analytic(op: OperatingPoint, env: ThermalEnvironment, regime: Regime) -> OptimalSqueezing:
    """
    Closed-form optimum for one coupling regime.

    The combined regime returns the rough optimum magnitude; its angle and frequency
    come from minimising the combined approximant, and the angle from
    tan2θ = (Γ_ω − Γ_κ)/(2Γ′) at ω = ω_m is reported as printed_theta.
    """
    regime = Regime(regime)
    gamma, n = op.gamma_m, env.n_th
    kappa, omega_m = op.kappa_s, op.omega_m
    thermal = gamma * (n + 1.0)
    brownian = env.brownian_strength(gamma)

    if regime == Regime.DISS:
        _require_resonant(op, Method.CLOSED_DISS)
        if op.G_omega != 0:
            raise PreconditionError("dissipative optimum needs G_omega = 0")
        k = abs(op.G_kappa) ** 2 * omega_m**2 / (4.0 * kappa**3)
        S = thermal / (k + 2.0 * thermal)
        theta = math.atan2(math.sqrt(2.0 * k), math.sqrt(gamma))
        omega = omega_m - math.sqrt((k + brownian) * gamma / 2.0 + gamma**2 / 4.0)
        return OptimalSqueezing(theta, omega, S, depth_db(S), regime.value)

    if regime == Regime.DISP:
        _require_resonant(op, Method.CLOSED_DISP)
        if op.G_kappa != 0:
            raise PreconditionError("dispersive optimum needs G_kappa = 0")
        k = abs(op.G_omega) ** 2 / kappa
        S = thermal / (k + 2.0 * thermal)
        theta = math.atan2(math.sqrt(gamma), math.sqrt(2.0 * k))
        omega = omega_m + math.sqrt((k + brownian) * gamma / 2.0 + gamma**2 / 4.0)
        return OptimalSqueezing(theta, omega, S, depth_db(S), regime.value)

    _require_resonant(op, Method.CLOSED_COMB)
    gamma_w, gamma_k, gamma_p = (float(v) for v in combined_rates(op, env, omega_m))
    root = math.sqrt(gamma_w * gamma_k + gamma_p**2 * gamma**2)
    denominator = gamma_w + gamma_k + 2.0 * root
    S = VACUUM_LEVEL - 0.5 * gamma_p**2 / denominator if denominator > 0 else VACUUM_LEVEL
    printed_theta = 0.5 * math.atan2(gamma_w - gamma_k, 2.0 * gamma_p) % math.pi
    located = optimal_numeric(op, env, Method.CLOSED_COMB)
    return OptimalSqueezing(
        theta_opt=located.theta_opt,
        omega_opt=located.omega_opt,
        S_opt=S,
        depth_db=depth_db(S),
        method=regime.value,
        approximate=True,
        printed_theta=printed_theta,
    )


@dataclass(frozen=True)
class ClosedFormAgreement:
    """How far a closed form strays from the exact spectrum on a window around ω_m"""

    method: str
    span: float
    grid_max_relative: float
    grid_max_db: float
    exact_optimum: OptimalSqueezing
    closed_optimum: OptimalSqueezing

    @property
    def optimum_relative(self) -> float:
        return abs(self.closed_optimum.S_opt - self.exact_optimum.S_opt) / self.exact_optimum.S_opt

    @property
    def optimum_gap_db(self) -> float:
        return self.closed_optimum.depth_db - self.exact_optimum.depth_db

    def to_dict(self, omega_m: Optional[float] = None) -> Dict:
        return {
            "method": self.method,
            "span_Hz": self.span / TWO_PI,
            "grid_max_relative": self.grid_max_relative,
            "grid_max_dB": self.grid_max_db,
            "optimum_relative": self.optimum_relative,
            "optimum_gap_dB": self.optimum_gap_db,
            "exact_optimum": self.exact_optimum.to_dict(omega_m),
            "closed_optimum": self.closed_optimum.to_dict(omega_m),
        }


def closed_form_agreement(
    op: OperatingPoint,
    env: ThermalEnvironment,
    method: Optional[Method] = None,
    span: float = TWO_PI * 100.0,
    omega_points: int = 401,
    theta_points: int = 37,
) -> ClosedFormAgreement:
    """
    Compare a closed form with the exact solver over ω_m ± span and θ ∈ [0, π].

    Every grid point counts, the squeezed dip included. The optima of both are compared
    as well, each at its own (θ, ω).
    """
    method = Method(method) if method is not None else CLOSED_METHODS[regime_of(op)]
    if method == Method.EXACT:
        raise DomainError("closed_form_agreement needs a closed-form method")
    omega = op.omega_m + np.linspace(-span, span, omega_points)
    theta = np.linspace(0.0, math.pi, theta_points)
    exact = spectrum_from_covariance(quadrature_covariance(op, env, omega, Method.EXACT)[None], theta[:, None])
    closed = spectrum_from_covariance(quadrature_covariance(op, env, omega, method)[None], theta[:, None])
    relative = np.abs(exact - closed) / exact
    gap_db = np.abs(depth_db(exact) - depth_db(closed))
    agreement = ClosedFormAgreement(
        method=method.value,
        span=span,
        grid_max_relative=float(np.max(relative)),
        grid_max_db=float(np.nanmax(gap_db)),
        exact_optimum=optimal_numeric(op, env, Method.EXACT),
        closed_optimum=optimal_numeric(op, env, method),
    )
    logger.debug(
        f"{method.value} vs exact: grid {agreement.grid_max_relative:.3e}, optimum {agreement.optimum_relative:.3e}"
    )
    return agreement


def _covariance_chunk(args) -> np.ndarray:
    op, env, method, omega = args
    return quadrature_covariance(op, env, omega, method)


def spectrum_map(
    op: OperatingPoint,
    env: ThermalEnvironment,
    method: Method,
    omega_grid,
    theta_grid,
    workers: int = 1,
) -> SpectrumResult:
    """
    S on the full θ × ω grid.

    Σ(ω) is computed once per frequency, split in ordered chunks over a process pool
    when workers > 1, and the angles are applied afterwards.
    """
    method = Method(method)
    omega_grid = np.asarray(omega_grid, dtype=float)
    theta_grid = np.asarray(theta_grid, dtype=float)
    if omega_grid.size == 0 or theta_grid.size == 0:
        raise DomainError("spectrum map needs non-empty grids")
    if not (np.all(np.isfinite(omega_grid)) and np.all(np.isfinite(theta_grid))):
        raise DomainError("spectrum map grids must be finite")

    if workers > 1 and omega_grid.size > workers:
        chunks = np.array_split(omega_grid, workers)
        with Pool(processes=workers) as pool:
            sigma = np.concatenate(pool.map(_covariance_chunk, [(op, env, method, chunk) for chunk in chunks]))
    else:
        sigma = quadrature_covariance(op, env, omega_grid, method)

    S = spectrum_from_covariance(sigma[None, :, :, :], theta_grid[:, None])
    if np.any(S <= 0):
        logger.warning(f"{method.value} spectrum is non-positive at {int(np.count_nonzero(S <= 0))} grid points")
    return SpectrumResult(
        omega_grid=omega_grid,
        theta_grid=theta_grid,
        S=S,
        method=method,
        operating_point=op,
        n_th=env.n_th,
    )


def squeezing_bandwidth(result: SpectrumResult, level_db: float = 3.0) -> np.ndarray:
    """
    Total ω-width (rad/s) per θ row where depth ≥ level_db.

    Crossings inside a grid interval are located by linear interpolation.
    """
    omega = result.omega_grid
    widths = np.zeros(result.theta_grid.size)
    for row, depth in enumerate(result.depth_db):
        depth = np.nan_to_num(depth, nan=-np.inf)
        total = 0.0
        for i in range(omega.size - 1):
            d0, d1 = depth[i], depth[i + 1]
            step = omega[i + 1] - omega[i]
            if d0 >= level_db and d1 >= level_db:
                total += step
            elif d0 >= level_db or d1 >= level_db:
                inside, outside = (d0, d1) if d0 >= level_db else (d1, d0)
                if np.isfinite(outside):
                    total += step * (inside - level_db) / (inside - outside)
        widths[row] = total
    return widths


@dataclass(frozen=True)
class EqualMagnitudeReport:
    """Where the dissipative and dispersive optima coincide"""

    G_omega: float
    derived_ratio: float
    stated_ratio: float
    current_ratio: float
    S_disp: float
    S_diss_at_derived: float
    S_diss_at_stated: float

    @property
    def derived_residual(self) -> float:
        return abs(self.S_diss_at_derived - self.S_disp) / self.S_disp

    @property
    def stated_residual(self) -> float:
        return abs(self.S_diss_at_stated - self.S_disp) / self.S_disp

    @property
    def equal_at(self) -> str:
        return "2" if self.derived_residual <= self.stated_residual else "sqrt2"

    def to_dict(self) -> Dict:
        return {
            "G_omega": self.G_omega,
            "derived_ratio": self.derived_ratio,
            "stated_ratio": self.stated_ratio,
            "current_ratio": self.current_ratio,
            "S_disp": self.S_disp,
            "S_diss_at_derived": self.S_diss_at_derived,
            "S_diss_at_stated": self.S_diss_at_stated,
            "derived_residual": self.derived_residual,
            "stated_residual": self.stated_residual,
            "equal_at": self.equal_at,
        }


def _optimum_depth_formula(k: float, thermal: float) -> float:
    return thermal / (k + 2.0 * thermal)


def equal_magnitude_condition(op: OperatingPoint, env: ThermalEnvironment) -> EqualMagnitudeReport:
    """
    Compare the dissipative and dispersive optima at G_κω_m = r·G_ωκ_s for r = 2 and r = √2.

    G_ω is taken from the operating point; G_κ is set by each ratio.
    """
    kappa, omega_m = op.kappa_s, op.omega_m
    thermal = op.gamma_m * (env.n_th + 1.0)
    G_omega = abs(op.G_omega)
    G_kappa = abs(op.G_kappa)

    def s_diss(G_k: float) -> float:
        return _optimum_depth_formula(G_k**2 * omega_m**2 / (4.0 * kappa**3), thermal)

    S_disp = _optimum_depth_formula(G_omega**2 / kappa, thermal)
    derived, stated = 2.0, math.sqrt(2.0)
    current = G_kappa * omega_m / (G_omega * kappa) if G_omega > 0 else math.inf
    return EqualMagnitudeReport(
        G_omega=G_omega,
        derived_ratio=derived,
        stated_ratio=stated,
        current_ratio=current,
        S_disp=S_disp,
        S_diss_at_derived=s_diss(derived * G_omega * kappa / omega_m),
        S_diss_at_stated=s_diss(stated * G_omega * kappa / omega_m),
    )
