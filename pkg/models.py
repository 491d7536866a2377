"""
Configuration models for a simulation run.

Every physical key carries its unit as a suffix; conversion to the angular
(rad/s) and SI values used by the solver happens in the to_* helpers.
"""
import math
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from coupling import PolarizationScheme
from relaxation import RelaxationConfig
from scan import Observable, ScanConfig
from solver import SolverTolerances

TWO_PI = 2 * math.pi
UT = 1e-6


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class CellConfig(StrictModel):
    """Vapour-cell relaxation parameters"""
    name: str = "cell2"
    gamma_p_khz: float = Field(0.107, ge=0)
    gamma_ghz: float = Field(0.51, gt=0)
    r: float = Field(0.6, ge=0, le=1)
    m1_within_manifold: bool = True

    def to_relaxation(self) -> RelaxationConfig:
        return RelaxationConfig(gamma_p=TWO_PI * self.gamma_p_khz * 1e3,
                                Gamma=TWO_PI * self.gamma_ghz * 1e9,
                                r=self.r,
                                include_within_manifold=self.m1_within_manifold)


class FieldConfig(StrictModel):
    b_ut: float = Field(22.7, ge=0)


class ExcitationConfig(StrictModel):
    scheme: Literal["sigma_plus", "sigma_minus", "lin_lin"] = "sigma_minus"
    theta_rad: float = 0.0
    tuned_level: Literal[3, 4] = 4
    intensity1_uw_per_mm2: float = Field(6.6, ge=0)
    intensity2_uw_per_mm2: float = Field(6.6, ge=0)
    total_intensity: bool = False
    delta_opt_offset_hz: float = 0.0

    def to_scheme(self) -> PolarizationScheme:
        if self.scheme == "sigma_plus":
            return PolarizationScheme.sigma_plus()
        if self.scheme == "sigma_minus":
            return PolarizationScheme.sigma_minus()
        return PolarizationScheme.lin_lin(self.theta_rad)


class ScanSection(StrictModel):
    delta_r_start_khz: float = -50.0
    delta_r_stop_khz: float = 50.0
    points: int = Field(601, ge=3)
    observable: Observable = Observable.EXCITED_POPULATION
    alpha: float = Field(1.0, gt=0)
    refine_levels: int = Field(3, ge=0)
    seed_predicted: bool = True
    label_tolerance_hz: float = Field(500.0, gt=0)
    peak_prominence: float = Field(0.01, gt=0, lt=1)

    @model_validator(mode="after")
    def check_range(self):
        if not self.delta_r_stop_khz > self.delta_r_start_khz:
            raise ValueError(f"empty Raman detuning range [{self.delta_r_start_khz}, "
                             f"{self.delta_r_stop_khz}] kHz")
        return self


class SeriesConfig(StrictModel):
    """One curve of a sweep; unset excitation keys inherit from the run"""
    name: str
    kind: Literal["intensity", "trap_population", "ratio"] = "intensity"
    scheme: Optional[Literal["sigma_plus", "sigma_minus", "lin_lin"]] = None
    theta_rad: Optional[float] = None
    tuned_level: Optional[Literal[3, 4]] = None
    targets: List[Tuple[int, int]] = Field(default_factory=lambda: [(0, 0)])
    trap_set: Optional[List[int]] = None

    @field_validator("targets")
    @classmethod
    def check_targets(cls, targets):
        if not targets:
            raise ValueError("at least one target resonance is required")
        for m_g, m_e in targets:
            if abs(m_g) > 3 or abs(m_e) > 4:
                raise ValueError(f"({m_g},{m_e}) is not an F=3 / F=4 sublevel pair")
        return targets

    @field_validator("trap_set")
    @classmethod
    def check_trap_set(cls, trap_set):
        if trap_set is not None and any(not 1 <= index <= 16 for index in trap_set):
            raise ValueError("trap sublevels must be ground indices 1..16")
        return trap_set


class SweepConfig(StrictModel):
    intensities_uw_per_mm2: List[float] = Field(default_factory=lambda: [0.5, 1.0, 2.0, 4.0, 6.6])
    normalize_at_uw_per_mm2: Optional[float] = None
    window_khz: Optional[float] = Field(None, gt=0)
    points: int = Field(201, ge=3)
    series: List[SeriesConfig] = Field(default_factory=lambda: [SeriesConfig(name="default")])

    @field_validator("intensities_uw_per_mm2")
    @classmethod
    def check_intensities(cls, intensities):
        if not intensities:
            raise ValueError("at least one intensity is required")
        if any(value < 0 for value in intensities):
            raise ValueError("intensities must be >= 0")
        return intensities


class LineshapeConfig(StrictModel):
    resonance: Tuple[int, int] = (-1, 1)
    points: int = Field(601, ge=3)


class FitConfig(StrictModel):
    reference_csv: Optional[str] = None
    r_start: float = Field(0.0, ge=0, le=1)
    r_stop: float = Field(1.0, ge=0, le=1)
    r_points: int = Field(11, ge=2)

    def r_grid(self) -> List[float]:
        step = (self.r_stop - self.r_start) / (self.r_points - 1)
        return [self.r_start + i * step for i in range(self.r_points)]


class ToleranceConfig(StrictModel):
    trace: float = Field(1e-10, gt=0)
    hermiticity: float = Field(1e-12, gt=0)
    population: float = Field(1e-10, gt=0)
    residual: float = Field(1e-9, gt=0)
    scale: float = Field(1.0, gt=0)

    def to_tolerances(self) -> SolverTolerances:
        return SolverTolerances(self.trace, self.hermiticity, self.population,
                                self.residual).scaled(self.scale)


class OutputConfig(StrictModel):
    dir: str = "results"


class RunConfig(StrictModel):
    """Fully resolved input of one CLI run"""
    cell: CellConfig = Field(default_factory=CellConfig)
    field: FieldConfig = Field(default_factory=FieldConfig)
    excitation: ExcitationConfig = Field(default_factory=ExcitationConfig)
    scan: ScanSection = Field(default_factory=ScanSection)
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    lineshape: LineshapeConfig = Field(default_factory=LineshapeConfig)
    fit: FitConfig = Field(default_factory=FitConfig)
    tolerances: ToleranceConfig = Field(default_factory=ToleranceConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)
    seed: int = 0
    workers: Optional[int] = Field(None, ge=1)
    constants_path: Optional[str] = None

    def to_scan_config(self, series: Optional[SeriesConfig] = None) -> ScanConfig:
        excitation = self.excitation
        if series is not None:
            overrides = {key: getattr(series, key) for key in ("scheme", "theta_rad", "tuned_level")
                         if getattr(series, key) is not None}
            excitation = excitation.model_copy(update=overrides)
        return ScanConfig(
            relaxation=self.cell.to_relaxation(),
            b_tesla=self.field.b_ut * UT,
            scheme=excitation.to_scheme(),
            tuned_level=excitation.tuned_level,
            intensity1=excitation.intensity1_uw_per_mm2,
            intensity2=excitation.intensity2_uw_per_mm2,
            delta_r_start=TWO_PI * self.scan.delta_r_start_khz * 1e3,
            delta_r_stop=TWO_PI * self.scan.delta_r_stop_khz * 1e3,
            points=self.scan.points,
            observable=self.scan.observable,
            delta_opt_offset=TWO_PI * excitation.delta_opt_offset_hz,
            total_intensity=excitation.total_intensity,
            alpha=self.scan.alpha,
            refine_levels=self.scan.refine_levels,
            seed_predicted=self.scan.seed_predicted,
            label_tolerance=TWO_PI * self.scan.label_tolerance_hz,
            peak_prominence=self.scan.peak_prominence,
            tolerances=self.tolerances.to_tolerances(),
            constants_path=self.constants_path,
        )
