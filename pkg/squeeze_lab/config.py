"""
Configuration file for the squeeze-lab project

Environment settings come from .env / the process environment; run settings come from
flat `section.key = value` files parsed into RunConfig.
"""
import json
import logging
import math
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, get_args

import numpy as np
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from squeeze_lab.exceptions import ConfigError
from squeeze_lab.physics.model import (
    CalibrationReference,
    DriveMode,
    DriveSpec,
    OperatingPoint,
    PhysicalParams,
    ThermalEnvironment,
    calibrate_bare_couplings,
    laser_frequency,
    solve_steady_state,
)
from squeeze_lab.physics.spectra import default_omega_grid
from squeeze_lab.utils.helpers import config_hash as hash_config

logger = logging.getLogger(__name__)

# Load environment variables
load_dotenv()

# Base directories
BASE_DIR = Path(__file__).resolve().parent
DATA_DIR = BASE_DIR / "data"
OUTPUT_DIR = Path(os.getenv("SQUEEZE_OUTPUT_DIR", "squeeze_output"))

# Logging settings
LOG_LEVEL = os.getenv("SQUEEZE_LOG_LEVEL", "INFO").upper()
LOG_FILE = os.getenv("SQUEEZE_LOG_FILE", "squeeze_lab.log")

# Worker processes for map computations
MAX_WORKERS = int(os.getenv("SQUEEZE_MAX_WORKERS", "1"))

# Reference device (frequencies in Hz)
DEFAULT_WAVELENGTH_NM = 1064.0
KAPPA_S_HZ = 1.5e6
OMEGA_M_HZ = 136e3
GAMMA_M_HZ = 0.23
REFERENCE_POWER_W = 0.040
REFERENCE_G_OMEGA_HZ = 75e3
REFERENCE_G_KAPPA_HZ = 15e3

TWO_PI = 2.0 * math.pi

Command = Literal[
    "steady-state",
    "spectrum",
    "spectrum-map",
    "thermal-scan",
    "stability-map",
    "critical-power",
    "calibrate",
    "selftest",
]
COMMANDS = get_args(Command)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ModelSection(_Section):
    """Bare device constants and the drive"""

    kappa_hz: Optional[float] = Field(None, gt=0, description="Bare decay rate; derived when calibrating")
    omega_m_hz: float = Field(OMEGA_M_HZ, gt=0)
    gamma_m_hz: float = Field(GAMMA_M_HZ, gt=0)
    g_omega_hz: Optional[float] = None
    g_kappa_hz: Optional[float] = None
    wavelength_nm: float = Field(DEFAULT_WAVELENGTH_NM, gt=0)
    drive_mode: DriveMode = DriveMode.RESONANT_LOCKED
    power_w: float = Field(REFERENCE_POWER_W, ge=0)
    detuning_hz: Optional[float] = None
    laser_offset_hz: float = 0.0


class CalibrationSection(_Section):
    """Published enhanced couplings at a reference power, used to derive the bare couplings"""

    enabled: bool = True
    power_w: float = Field(REFERENCE_POWER_W, gt=0)
    G_omega_hz: float = Field(REFERENCE_G_OMEGA_HZ, ge=0)
    G_kappa_hz: float = Field(REFERENCE_G_KAPPA_HZ, ge=0)
    kappa_s_hz: float = Field(KAPPA_S_HZ, gt=0)
    Delta_s_hz: float = 0.0


class OperatingSection(_Section):
    """Direct enhanced-coupling operating point; bypasses the steady-state solve when set"""

    G_omega_hz: Optional[float] = Field(None, ge=0)
    G_kappa_hz: Optional[float] = Field(None, ge=0)
    kappa_s_hz: float = Field(KAPPA_S_HZ, gt=0)
    Delta_s_hz: float = 0.0

    @property
    def enabled(self) -> bool:
        return self.G_omega_hz is not None or self.G_kappa_hz is not None


class ThermalSection(_Section):
    n_th: float = Field(0.0, ge=0)
    temperature_k: Optional[float] = Field(None, ge=0)
    scan_n_min: float = Field(1.0, gt=0)
    scan_n_max: float = Field(1e6, gt=0)
    scan_points: int = Field(13, ge=2)
    scan_powers_w: List[float] = Field(default_factory=lambda: [REFERENCE_POWER_W])

    @model_validator(mode="after")
    def _check_scan(self) -> "ThermalSection":
        if self.scan_n_max <= self.scan_n_min:
            raise ValueError("thermal.scan_n_max must exceed thermal.scan_n_min")
        return self


class GridSection(_Section):
    omega_spacing: Literal["log", "linear"] = "log"
    omega_log_min_hz: float = Field(0.01, gt=0)
    omega_log_max_hz: float = Field(1e4, gt=0)
    omega_points_per_side: int = Field(1000, ge=1)
    omega_start_hz: float = -100.0
    omega_stop_hz: float = 100.0
    omega_points: int = Field(401, ge=2)
    theta_start_deg: float = 0.0
    theta_stop_deg: float = 180.0
    theta_points: int = Field(181, ge=1)
    power_start_w: float = Field(0.0, ge=0)
    power_stop_w: float = Field(0.2, ge=0)
    power_points: int = Field(41, ge=1)
    power_list_w: Optional[List[float]] = None
    delta_start_hz: float = -300e3
    delta_stop_hz: float = 300e3
    delta_points: int = Field(61, ge=1)

    @model_validator(mode="after")
    def _check_ranges(self) -> "GridSection":
        if self.omega_log_max_hz <= self.omega_log_min_hz:
            raise ValueError("grid.omega_log_max_hz must exceed grid.omega_log_min_hz")
        if self.omega_stop_hz <= self.omega_start_hz:
            raise ValueError("grid.omega_stop_hz must exceed grid.omega_start_hz")
        if self.power_list_w is not None and any(p < 0 for p in self.power_list_w):
            raise ValueError("grid.power_list_w must be non-negative")
        return self


class RunSection(_Section):
    command: Optional[Command] = None
    method: Literal["exact", "closed"] = "exact"
    seed: int = 0
    random_draws: int = Field(10_000, ge=1)
    power_cap_w: float = Field(2.0, gt=0)
    scan_points: int = Field(200, ge=2)
    critical_delta_hz: Optional[float] = None
    marginal_tolerance: float = Field(1e-9, gt=0)
    contour_levels_db: List[float] = Field(default_factory=lambda: [3.0])
    workers: int = Field(MAX_WORKERS, ge=1)


class OutputSection(_Section):
    directory: Optional[str] = None
    format: Literal["csv", "json"] = "csv"
    prefix: Optional[str] = None


class RunConfig(BaseModel):
    """A complete, reproducible run description (Hz, degrees, W and K at this boundary)"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    model: ModelSection = Field(default_factory=ModelSection)
    calibration: CalibrationSection = Field(default_factory=CalibrationSection)
    operating: OperatingSection = Field(default_factory=OperatingSection)
    thermal: ThermalSection = Field(default_factory=ThermalSection)
    grid: GridSection = Field(default_factory=GridSection)
    run: RunSection = Field(default_factory=RunSection)
    output: OutputSection = Field(default_factory=OutputSection)

    def config_hash(self) -> str:
        return hash_config(self.model_dump(mode="json"))

    def with_overrides(self, **sections: Dict[str, Any]) -> "RunConfig":
        """Copy with some keys of some sections replaced, re-validated"""
        data = self.model_dump(mode="json")
        for section, values in sections.items():
            data.setdefault(section, {}).update(values)
        try:
            return RunConfig.model_validate(data)
        except ValidationError as e:
            raise ConfigError(f"invalid override: {e}") from e

    @property
    def omega_m(self) -> float:
        return TWO_PI * self.model.omega_m_hz

    @property
    def omega_l(self) -> float:
        return laser_frequency(self.model.wavelength_nm * 1e-9)

    def drive_spec(self) -> DriveSpec:
        model = self.model
        try:
            return DriveSpec(
                power=model.power_w,
                mode=model.drive_mode,
                detuning=TWO_PI * model.detuning_hz if model.detuning_hz is not None else None,
                laser_offset=TWO_PI * model.laser_offset_hz,
            )
        except ValidationError as e:
            raise ConfigError(f"invalid drive settings: {e}") from e

    def physical_params(self) -> PhysicalParams:
        """Bare constants in rad/s, calibrated from the reference couplings when enabled"""
        model = self.model
        if self.calibration.enabled:
            cal = self.calibration
            reference = CalibrationReference(
                power=cal.power_w,
                G_omega=TWO_PI * cal.G_omega_hz,
                G_kappa=TWO_PI * cal.G_kappa_hz,
                kappa_s=TWO_PI * cal.kappa_s_hz,
                omega_m=self.omega_m,
                omega_l=self.omega_l,
                Delta_s=TWO_PI * cal.Delta_s_hz,
            )
            calibration = calibrate_bare_couplings(reference)
            kappa, g_omega, g_kappa = calibration.kappa, calibration.g_omega, calibration.g_kappa
        else:
            if model.kappa_hz is None or model.g_omega_hz is None or model.g_kappa_hz is None:
                raise ConfigError("model.kappa_hz, model.g_omega_hz and model.g_kappa_hz are required without calibration")
            kappa = TWO_PI * model.kappa_hz
            g_omega = TWO_PI * model.g_omega_hz
            g_kappa = TWO_PI * model.g_kappa_hz
        try:
            return PhysicalParams(
                kappa=kappa,
                omega_m=self.omega_m,
                gamma_m=TWO_PI * model.gamma_m_hz,
                g_omega=g_omega,
                g_kappa=g_kappa,
                omega_l=self.omega_l,
                drive=self.drive_spec(),
            )
        except ValidationError as e:
            raise ConfigError(f"invalid physical parameters: {e}") from e

    def operating_point(self) -> OperatingPoint:
        """The operating point a single-point command works at"""
        operating = self.operating
        if operating.enabled:
            return OperatingPoint.from_enhanced(
                kappa_s=TWO_PI * operating.kappa_s_hz,
                omega_m=self.omega_m,
                gamma_m=TWO_PI * self.model.gamma_m_hz,
                G_omega=TWO_PI * (operating.G_omega_hz or 0.0),
                G_kappa=TWO_PI * (operating.G_kappa_hz or 0.0),
                Delta_s=TWO_PI * operating.Delta_s_hz,
            )
        return solve_steady_state(self.physical_params())

    def thermal_environment(self, n_th: Optional[float] = None) -> ThermalEnvironment:
        if n_th is not None:
            return ThermalEnvironment.from_occupancy(n_th, self.omega_m)
        if self.thermal.temperature_k is not None:
            return ThermalEnvironment.from_temperature(self.thermal.temperature_k, self.omega_m)
        return ThermalEnvironment.from_occupancy(self.thermal.n_th, self.omega_m)

    def omega_grid(self, omega_m: Optional[float] = None) -> np.ndarray:
        """Angular frequencies (rad/s) centred on omega_m"""
        center = self.omega_m if omega_m is None else omega_m
        grid = self.grid
        if grid.omega_spacing == "log":
            return default_omega_grid(
                center,
                min_offset=TWO_PI * grid.omega_log_min_hz,
                max_offset=TWO_PI * grid.omega_log_max_hz,
                points_per_side=grid.omega_points_per_side,
            )
        return center + TWO_PI * np.linspace(grid.omega_start_hz, grid.omega_stop_hz, grid.omega_points)

    def theta_grid(self) -> np.ndarray:
        grid = self.grid
        return np.radians(np.linspace(grid.theta_start_deg, grid.theta_stop_deg, grid.theta_points))

    def power_grid(self) -> np.ndarray:
        grid = self.grid
        if grid.power_list_w is not None:
            return np.asarray(grid.power_list_w, dtype=float)
        return np.linspace(grid.power_start_w, grid.power_stop_w, grid.power_points)

    def delta_grid(self) -> np.ndarray:
        grid = self.grid
        return TWO_PI * np.linspace(grid.delta_start_hz, grid.delta_stop_hz, grid.delta_points)

    def occupancy_grid(self) -> np.ndarray:
        thermal = self.thermal
        return np.logspace(math.log10(thermal.scan_n_min), math.log10(thermal.scan_n_max), thermal.scan_points)


def _parse_value(raw: str) -> Any:
    """JSON literal if it parses (numbers, lists, true/false/null), otherwise the bare string"""
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    """
    Parse flat `section.key = value` lines into a RunConfig.

    '#' starts a comment. Keys must be sectioned; unknown sections or keys are errors.
    """
    data: Dict[str, Dict[str, Any]] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{number}: expected 'section.key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key.count(".") != 1:
            raise ConfigError(f"{source}:{number}: key '{key}' must look like section.key")
        section, name = key.split(".")
        if name in data.setdefault(section, {}):
            raise ConfigError(f"{source}:{number}: duplicate key '{key}'")
        data[section][name] = _parse_value(raw)
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"{source}: {e}") from e


def parse_config_file(filepath) -> RunConfig:
    """
    Load a RunConfig from a file.

    Args:
        filepath (str or Path): Path to the config file

    Returns:
        RunConfig
    """
    filepath = Path(filepath)
    try:
        text = filepath.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {filepath}: {e}") from e
    logger.info(f"Loaded config from {filepath}")
    return parse_config_text(text, str(filepath))


def reference_device_params(drive: Optional[DriveSpec] = None) -> PhysicalParams:
    """Calibrated reference device, optionally with another drive"""
    params = RunConfig().physical_params()
    return params.with_drive(drive) if drive is not None else params
