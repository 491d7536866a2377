"""
Parameter sweeps over the steady-state solver

Raman-detuning spectra with peak extraction and labelling, intensity sweeps
of width and amplitude, trap-state population sweeps, amplitude ratio
tables and the fit of the uniform relaxation ratio r.
"""
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from itertools import repeat
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import curve_fit
from scipy.signal import find_peaks, peak_widths

from atomic_model import (AtomicConstants, ZeemanEnergies, detuning_vector, ground_index,
                          load_constants, raman_resonance, tuned_delta_opt, zeeman_energies)
from coupling import (CouplingMatrix, FieldAmplitudes, PolarizationScheme, build_bichromatic_coupling,
                      dark_ground_states)
from errors import ConfigError, FitError, InvalidLambdaSystem, ScanError, SolverError
from lineshape import LambdaSystem, peak_center_quadratic, width as lineshape_width
from observables import cpt_amplitude, excited_population, spectrum_baseline, transmittance
from relaxation import RelaxationConfig, build_branching_table, decay_vector
from solver import DensityMatrix, LiouvillianAssembler, SolverTolerances, assembler_for, steady_state

logger = logging.getLogger(__name__)

TWO_PI = 2 * math.pi
DEFAULT_LABEL_TOLERANCE = TWO_PI * 500.0
ISOLATION_FACTOR = 3.0
# width multiples around each predicted resonance added to the uniform grid
SEED_OFFSETS = (0.0, 0.5, 1.0, 2.0, 4.0, 8.0)


class Observable(str, Enum):
    EXCITED_POPULATION = "excited_population"
    TRANSMITTANCE = "transmittance"

    @property
    def orientation(self) -> float:
        """+1 when CPT resonances are maxima of the signal, -1 when they are dips"""
        return -1.0 if self is Observable.EXCITED_POPULATION else 1.0


@dataclass(frozen=True)
class ScanConfig:
    """
    Everything one spectrum depends on. Frequencies are angular (rad/s),
    intensities are per sideband in W/m^2 (equal to uW/mm^2), B in tesla.
    """
    relaxation: RelaxationConfig
    b_tesla: float
    scheme: PolarizationScheme
    tuned_level: int
    intensity1: float
    intensity2: float
    delta_r_start: float
    delta_r_stop: float
    points: int = 601
    observable: Observable = Observable.EXCITED_POPULATION
    delta_opt_offset: float = 0.0
    total_intensity: bool = False
    alpha: float = 1.0
    refine_levels: int = 3
    seed_predicted: bool = True
    label_tolerance: float = DEFAULT_LABEL_TOLERANCE
    peak_prominence: float = 0.01
    tolerances: SolverTolerances = field(default_factory=SolverTolerances)
    constants_path: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "observable", Observable(self.observable))
        if self.points < 3:
            raise ConfigError(f"A scan needs at least 3 points, got {self.points}", key="points")
        if not (np.isfinite(self.delta_r_start) and np.isfinite(self.delta_r_stop)):
            raise ConfigError("Raman detuning range must be finite", key="delta_r")
        if not self.delta_r_stop > self.delta_r_start:
            raise ConfigError(f"Empty Raman detuning range [{self.delta_r_start / TWO_PI:.3f}, "
                              f"{self.delta_r_stop / TWO_PI:.3f}] Hz", key="delta_r")
        if self.tuned_level not in (3, 4):
            raise ConfigError(f"Tuned level must be 3 or 4, got {self.tuned_level}", key="tuned_level")
        if self.b_tesla < 0:
            raise ConfigError(f"Magnetic field must be >= 0, got {self.b_tesla}", key="b")
        if self.intensity1 < 0 or self.intensity2 < 0:
            raise ConfigError("Intensities must be >= 0", key="intensity")
        if self.refine_levels < 0:
            raise ConfigError("refine_levels must be >= 0", key="refine_levels")

    @property
    def constants(self) -> AtomicConstants:
        return load_constants(self.constants_path)

    def fields(self) -> FieldAmplitudes:
        return FieldAmplitudes.from_intensities(self.intensity1, self.intensity2, self.total_intensity)

    def delta_opt(self) -> float:
        return tuned_delta_opt(self.constants, self.tuned_level, self.delta_opt_offset)

    def with_intensity(self, intensity: float) -> "ScanConfig":
        return replace(self, intensity1=intensity, intensity2=intensity)

    def with_range(self, start: float, stop: float, points: Optional[int] = None) -> "ScanConfig":
        return replace(self, delta_r_start=start, delta_r_stop=stop, points=points or self.points)


class ScanContext:
    """Per-process solver state for one ScanConfig; rebuilt inside every worker"""

    def __init__(self, config: ScanConfig, coupling: Optional[CouplingMatrix] = None):
        self.config = config
        self.constants = config.constants
        self.energies: ZeemanEnergies = zeeman_energies(self.constants, config.b_tesla)
        self.coupling = coupling or build_bichromatic_coupling(config.scheme, config.fields(), self.constants)
        self.branching = build_branching_table(self.constants, config.relaxation.include_within_manifold)
        self.decay = decay_vector(config.relaxation)
        self.assembler: LiouvillianAssembler = assembler_for(self.coupling, config.relaxation, self.branching)
        self.delta_opt = config.delta_opt()

    def detunings(self, delta_r: float) -> np.ndarray:
        return detuning_vector(self.energies, delta_r, self.delta_opt)

    def solve(self, delta_r: float) -> DensityMatrix:
        try:
            return steady_state(self.assembler.at(self.detunings(delta_r)), self.config.tolerances)
        except SolverError as e:
            logger.error(f"Steady-state solve failed: {str(e)}")
            raise ScanError(str(e), delta_r / TWO_PI)

    def observe(self, delta_r: float) -> float:
        state = self.solve(delta_r)
        if self.config.observable is Observable.TRANSMITTANCE:
            budget = transmittance(state, self.coupling, self.config.alpha, self.detunings(delta_r), self.decay)
            return budget.transmittance
        return excited_population(state)


def _evaluate_chunk(config: ScanConfig, delta_rs: np.ndarray) -> np.ndarray:
    context = ScanContext(config)
    return np.array([context.observe(d) for d in delta_rs], dtype=float)


def default_workers() -> int:
    return os.cpu_count() or 1


def evaluate_points(config: ScanConfig, delta_rs: Sequence[float], workers: int = 1) -> np.ndarray:
    """
    Observable at each Raman detuning, in input order. Every point is solved
    independently, so the result does not depend on `workers`.
    """
    delta_rs = np.asarray(delta_rs, dtype=float)
    if len(delta_rs) == 0:
        return np.zeros(0)
    if workers <= 1 or len(delta_rs) < 2 * workers:
        return _evaluate_chunk(config, delta_rs)
    chunks = np.array_split(delta_rs, workers)
    with ProcessPoolExecutor(max_workers=workers) as executor:
        results = list(executor.map(_evaluate_chunk, repeat(config), chunks))
    return np.concatenate(results)


# -- peaks -------------------------------------------------------------------

@dataclass(frozen=True)
class Peak:
    index: int
    center: float
    amplitude: float
    fwhm: Optional[float]
    overlapping: bool = False
    label: Optional[Tuple[int, int]] = None
    status: str = "unlabeled"
    candidates: Tuple[Tuple[int, int], ...] = ()

    def to_record(self) -> Dict:
        if self.label is not None:
            label = f"({self.label[0]},{self.label[1]})"
        else:
            label = self.status
        return {
            "label": label,
            "status": self.status,
            "candidates": [f"({m_g},{m_e})" for m_g, m_e in self.candidates],
            "center_hz": self.center / TWO_PI,
            "fwhm_hz": None if self.fwhm is None else self.fwhm / TWO_PI,
            "amplitude": self.amplitude,
            "overlapping": self.overlapping,
        }


@dataclass(frozen=True)
class SpectrumScan:
    """Sorted (Raman detuning [rad/s], value) samples and the resonances found in them"""
    detuning: np.ndarray
    values: np.ndarray
    peaks: Tuple[Peak, ...] = ()
    observable: Observable = Observable.EXCITED_POPULATION

    @classmethod
    def from_arrays(cls, detuning: Sequence[float], values: Sequence[float],
                    observable: Observable = Observable.EXCITED_POPULATION,
                    prominence: float = 0.01) -> "SpectrumScan":
        order = np.argsort(detuning, kind="stable")
        detuning = np.asarray(detuning, dtype=float)[order]
        values = np.asarray(values, dtype=float)[order]
        scan = cls(detuning, values, (), Observable(observable))
        return replace(scan, peaks=tuple(find_resonances(scan, prominence)))

    @property
    def baseline(self) -> float:
        return spectrum_baseline(self.values)

    def oriented(self) -> np.ndarray:
        return self.observable.orientation * (self.values - self.baseline)

    def peak(self, label: Tuple[int, int]) -> Optional[Peak]:
        for peak in self.peaks:
            if peak.label == tuple(label):
                return peak
        return None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"detuning_hz": self.detuning / TWO_PI, "value": self.values})


def _peak_indices(oriented: np.ndarray, prominence: float) -> np.ndarray:
    span = float(np.ptp(oriented)) if len(oriented) else 0.0
    if span <= 0:
        return np.zeros(0, dtype=int)
    indices, _ = find_peaks(oriented, prominence=prominence * span)
    return indices


def measure_fwhm(scan: SpectrumScan, peak: Peak) -> Optional[float]:
    """
    Full width at half height above the local baseline, with linear
    interpolation between samples. None when a neighbouring peak lies
    within 3 FWHM.
    """
    oriented = scan.oriented()
    widths = peak_widths(oriented, [peak.index], rel_height=0.5)
    positions = np.arange(len(scan.detuning))
    left = float(np.interp(widths[2][0], positions, scan.detuning))
    right = float(np.interp(widths[3][0], positions, scan.detuning))
    fwhm = right - left
    for other in scan.peaks:
        if other.index == peak.index:
            continue
        if abs(other.center - peak.center) < ISOLATION_FACTOR * fwhm or left < other.center < right:
            return None
    return fwhm


def find_resonances(scan: SpectrumScan, prominence: float = 0.01) -> List[Peak]:
    """Unlabelled peaks of a scan with centre, amplitude and (if isolated) FWHM"""
    oriented = scan.oriented()
    indices = _peak_indices(oriented, prominence)
    baseline = scan.baseline
    peaks = []
    for index in indices:
        center = peak_center_quadratic(scan.detuning, oriented, int(index))
        amplitude = cpt_amplitude(scan.detuning, scan.values, float(scan.detuning[index]), baseline)
        peaks.append(Peak(int(index), center, amplitude, None))

    provisional = replace(scan, peaks=tuple(peaks))
    measured = []
    for peak in peaks:
        fwhm = measure_fwhm(provisional, peak)
        if fwhm is None:
            logger.warning(f"Peak at {peak.center / TWO_PI:.1f} Hz overlaps a neighbour; width omitted")
        measured.append(replace(peak, fwhm=fwhm, overlapping=fwhm is None))
    return measured


def predicted_resonances(energies: ZeemanEnergies, coupling: Optional[CouplingMatrix] = None,
                         delta_m: Iterable[int] = (-2, 0, 2)) -> Dict[Tuple[int, int], float]:
    """
    Raman detunings of the (m_g, m_e) resonances with m_e - m_g in `delta_m`.
    With a coupling, only pairs sharing an excited sublevel are kept.
    """
    predicted = {}
    for m_g in range(-3, 4):
        for dm in delta_m:
            m_e = m_g + dm
            if abs(m_e) > 4:
                continue
            if coupling is not None:
                g, e = ground_index(3, m_g) - 1, ground_index(4, m_e) - 1
                shared = (np.abs(coupling.omega[g]) > 0) & (np.abs(coupling.omega[e]) > 0)
                if not np.any(shared):
                    continue
            predicted[(m_g, m_e)] = raman_resonance(energies, m_g, m_e)
    return predicted


def label_peaks(scan: SpectrumScan, B: float, constants: Optional[AtomicConstants] = None,
                coupling: Optional[CouplingMatrix] = None,
                tolerance: float = DEFAULT_LABEL_TOLERANCE) -> SpectrumScan:
    """
    Assign (m_g, m_e) labels by matching peak centres to the Breit-Rabi
    resonance positions. Several candidates give "ambiguous", none "unknown".
    """
    constants = constants or load_constants()
    predicted = predicted_resonances(zeeman_energies(constants, B), coupling)
    labelled = []
    for peak in scan.peaks:
        candidates = tuple(sorted(label for label, position in predicted.items()
                                  if abs(position - peak.center) <= tolerance))
        if len(candidates) == 1:
            labelled.append(replace(peak, label=candidates[0], status="matched", candidates=candidates))
        elif candidates:
            labelled.append(replace(peak, label=None, status="ambiguous", candidates=candidates))
        else:
            logger.warning(f"No resonance predicted near {peak.center / TWO_PI:.1f} Hz")
            labelled.append(replace(peak, label=None, status="unknown", candidates=()))
    return replace(scan, peaks=tuple(labelled))


# -- spectra -----------------------------------------------------------------

def _resonance_width(context: ScanContext, label: Tuple[int, int], delta_r: float) -> Optional[float]:
    try:
        system = LambdaSystem.build(label[0], label[1], context.coupling, context.config.relaxation.Gamma)
    except InvalidLambdaSystem:
        return None
    return lineshape_width(system, context.coupling, context.detunings(delta_r), context.decay)


def initial_grid(config: ScanConfig, context: Optional[ScanContext] = None) -> np.ndarray:
    """Uniform grid plus samples around each predicted resonance inside the range"""
    grid = np.linspace(config.delta_r_start, config.delta_r_stop, config.points)
    if not config.seed_predicted:
        return grid
    context = context or ScanContext(config)
    seeds = []
    for label, center in predicted_resonances(context.energies, context.coupling).items():
        if not config.delta_r_start <= center <= config.delta_r_stop:
            continue
        half_width = _resonance_width(context, label, center) or config.relaxation.gamma_p
        half_width = max(half_width, TWO_PI * 1.0)
        for multiple in SEED_OFFSETS:
            seeds.extend([center - multiple * half_width, center + multiple * half_width])
    seeds = [s for s in seeds if config.delta_r_start <= s <= config.delta_r_stop]
    return np.unique(np.concatenate([grid, np.asarray(seeds, dtype=float)]))


def refinement_points(detuning: np.ndarray, values: np.ndarray, config: ScanConfig) -> np.ndarray:
    """Midpoints of the intervals within two samples of each detected peak"""
    oriented = config.observable.orientation * (values - spectrum_baseline(values))
    midpoints = []
    for index in _peak_indices(oriented, config.peak_prominence):
        for j in range(max(index - 2, 0), min(index + 2, len(detuning) - 1)):
            midpoints.append(0.5 * (detuning[j] + detuning[j + 1]))
    return np.setdiff1d(np.unique(midpoints), detuning)


def run_scan(config: ScanConfig, workers: int = 1) -> SpectrumScan:
    """
    Steady-state spectrum over the configured Raman detuning range, with
    adaptive refinement around the detected resonances, labelled peaks,
    widths and amplitudes.
    """
    context = ScanContext(config)
    detuning = initial_grid(config, context)
    logger.info(f"Scanning {len(detuning)} points of {config.scheme.label}, F'={config.tuned_level}, "
                f"B={config.b_tesla * 1e6:.2f} uT with {workers} worker(s)")
    values = evaluate_points(config, detuning, workers)

    for level in range(config.refine_levels):
        extra = refinement_points(detuning, values, config)
        if len(extra) == 0:
            break
        extra_values = evaluate_points(config, extra, workers)
        detuning = np.concatenate([detuning, extra])
        values = np.concatenate([values, extra_values])
        order = np.argsort(detuning, kind="stable")
        detuning, values = detuning[order], values[order]
        logger.info(f"Refinement level {level + 1}: added {len(extra)} points")

    scan = SpectrumScan(detuning, values, (), config.observable)
    scan = replace(scan, peaks=tuple(find_resonances(scan, config.peak_prominence)))
    scan = label_peaks(scan, config.b_tesla, context.constants, context.coupling, config.label_tolerance)
    logger.info(f"Scan finished: {len(detuning)} points, {len(scan.peaks)} peaks")
    return scan


def focused_config(config: ScanConfig, target: Tuple[int, int], window: Optional[float] = None,
                   points: Optional[int] = None) -> ScanConfig:
    """Config whose range is centred on the predicted `target` resonance"""
    context = ScanContext(config)
    center = raman_resonance(context.energies, *target)
    if window is None:
        half_width = _resonance_width(context, target, center) or config.relaxation.gamma_p
        window = max(50.0 * half_width, TWO_PI * 2000.0)
    return config.with_range(center - window, center + window, points)


def lorentzian(x: np.ndarray, amplitude: float, center: float, fwhm: float) -> np.ndarray:
    """Lorentzian of peak height `amplitude` and full width `fwhm`"""
    half = 0.5 * fwhm
    return amplitude * half ** 2 / (np.square(x - center) + half ** 2)


@dataclass(frozen=True)
class Component:
    """One fitted Lorentzian; `members` are the resonances too close to tell apart under it"""
    members: Tuple[Tuple[int, int], ...]
    center: float
    amplitude: float
    fwhm: float


def cluster_centers(centers: Dict[Tuple[int, int], float],
                    spacing: float) -> List[Tuple[Tuple[Tuple[int, int], ...], float]]:
    """Group predicted centres lying within `spacing` of their neighbour: [(labels, mean centre)]"""
    ordered = sorted(centers.items(), key=lambda item: item[1])
    groups: List[List[Tuple[Tuple[int, int], float]]] = []
    for label, position in ordered:
        if groups and position - groups[-1][-1][1] <= spacing:
            groups[-1].append((label, position))
        else:
            groups.append([(label, position)])
    return [(tuple(sorted(label for label, _ in group)), float(np.mean([p for _, p in group])))
            for group in groups]


def decompose_overlap(scan: SpectrumScan, centers: Dict[Tuple[int, int], float], fwhm_guess: float,
                      tolerance: float = DEFAULT_LABEL_TOLERANCE) -> Dict[Tuple[int, int], Component]:
    """
    Split overlapping resonances by a least-squares fit to the oriented
    spectrum: one Lorentzian per group of predicted centres (centres closer
    than a quarter of `fwhm_guess` share one), a common FWHM and a constant
    offset. Centres move at most `tolerance` and heights stay >= 0.

    Returns:
        The component of every label in `centers`

    Raises:
        FitError: the fit did not converge
    """
    if not centers:
        raise FitError("No resonances to decompose")
    groups = cluster_centers(centers, 0.25 * fwhm_guess)
    oriented = scan.oriented()
    origin = float(np.mean([position for _, position in groups]))
    x_unit = max(float(fwhm_guess), TWO_PI * 1.0)
    y_unit = float(np.max(np.abs(oriented))) or 1.0
    x = (scan.detuning - origin) / x_unit
    y = oriented / y_unit
    slack = tolerance / x_unit

    def model(x, offset, fwhm, *heights_and_centers):
        total = np.full_like(x, offset)
        for height, center in zip(heights_and_centers[0::2], heights_and_centers[1::2]):
            total = total + lorentzian(x, height, center, fwhm)
        return total

    p0, lower, upper = [0.0, 1.0], [-np.inf, 1e-3], [np.inf, np.inf]
    for _, position in groups:
        center = (position - origin) / x_unit
        p0 += [max(float(np.interp(center, x, y)), 1e-6), center]
        lower += [0.0, center - slack]
        upper += [np.inf, center + slack]

    try:
        params, _ = curve_fit(model, x, y, p0=p0, bounds=(lower, upper), maxfev=20000)
    except (RuntimeError, ValueError) as e:
        logger.error(f"Lorentzian decomposition of {sorted(centers)} failed: {str(e)}")
        raise FitError(f"Lorentzian decomposition of {sorted(centers)} failed: {str(e)}")

    fwhm = float(params[1]) * x_unit
    components = {}
    for i, (members, _) in enumerate(groups):
        height, center = float(params[2 + 2 * i]), float(params[3 + 2 * i])
        component = Component(members, origin + center * x_unit, height * y_unit, fwhm)
        for label in members:
            components[label] = component
    logger.debug(f"Decomposed {len(centers)} resonances into {len(groups)} components, "
                 f"FWHM {fwhm / TWO_PI:.3f} Hz")
    return components


@dataclass(frozen=True)
class TargetMeasurement:
    """
    One resonance read off a focused scan. status is "matched" (its own
    labelled peak), "nearest" (an unassigned peak within the label
    tolerance), "decomposed" (a fitted component of an overlapping group) or
    "absent" (no peak; amplitude NaN). `source` identifies the measured
    signal, so targets sharing one are counted once.
    """
    amplitude: float
    fwhm: Optional[float]
    overlapping: bool
    status: str
    source: Optional[Tuple] = None


def measure_target(scan: SpectrumScan, context: ScanContext, target: Tuple[int, int],
                   half_width: float) -> TargetMeasurement:
    """Amplitude and FWHM of the `target` resonance in a scan labelled against `context`"""
    target = tuple(target)
    center = raman_resonance(context.energies, *target)
    tolerance = context.config.label_tolerance
    peak, status = scan.peak(target), "matched"
    if peak is None:
        # a peak labelled with another resonance never stands in for the target
        nearby = [p for p in scan.peaks if abs(p.center - center) <= tolerance
                  and p.label is None and (not p.candidates or target in p.candidates)]
        peak = min(nearby, key=lambda p: abs(p.center - center)) if nearby else None
        status = "nearest"
    if peak is None:
        logger.info(f"Resonance {target} absent from the scan")
        return TargetMeasurement(np.nan, None, False, "absent")
    undivided = TargetMeasurement(peak.amplitude, peak.fwhm, peak.overlapping, status, ("peak", peak.index))
    if not (peak.overlapping or peak.status == "ambiguous"):
        return undivided

    group = {label: position for label, position in predicted_resonances(context.energies, context.coupling).items()
             if scan.detuning[0] <= position <= scan.detuning[-1]}
    group[target] = center
    try:
        component = decompose_overlap(scan, group, 2.0 * half_width, tolerance)[target]
    except FitError:
        return undivided
    return TargetMeasurement(component.amplitude, component.fwhm, True, "decomposed",
                             ("component", component.members))


# -- sweeps ------------------------------------------------------------------

def intensity_sweep(config: ScanConfig, intensities: Sequence[float], target: Tuple[int, int] = (0, 0),
                    normalize_at: Optional[float] = None, window: Optional[float] = None,
                    points: Optional[int] = None, workers: int = 1) -> pd.DataFrame:
    """
    Width and amplitude of the `target` resonance against per-sideband
    intensity (W/m^2). Amplitudes are also given relative to the one at
    `normalize_at` (default: the last intensity).
    """
    rows = []
    for intensity in intensities:
        current = config.with_intensity(float(intensity))
        context = ScanContext(current)
        center = raman_resonance(context.energies, *target)
        half_width = _resonance_width(context, target, center)
        if half_width is None:
            half_width = current.relaxation.gamma_p
        if intensity == 0:
            measurement = TargetMeasurement(0.0, None, False, "unlit")
        else:
            focused = focused_config(current, target, window, points)
            scan = run_scan(focused, workers)
            measurement = measure_target(scan, context, target, half_width)
        fwhm = measurement.fwhm
        rows.append({
            "intensity_uw_mm2": float(intensity),
            "width_hz": np.nan if fwhm is None else fwhm / TWO_PI,
            "amplitude": measurement.amplitude,
            "delta_width_hz": half_width / TWO_PI,
            "overlapping": measurement.overlapping,
            "status": measurement.status,
        })
        logger.info(f"I={intensity:g} uW/mm^2: amplitude={measurement.amplitude:.6g}, "
                    f"width={rows[-1]['width_hz']:.6g} Hz ({measurement.status})")

    table = pd.DataFrame(rows)
    reference = normalize_at if normalize_at is not None else float(intensities[-1])
    anchor = table.iloc[int(np.argmin(np.abs(table["intensity_uw_mm2"].to_numpy() - reference)))]["amplitude"]
    table["amplitude_rel"] = table["amplitude"] / anchor if anchor else np.nan
    return table[["intensity_uw_mm2", "width_hz", "amplitude", "amplitude_rel", "delta_width_hz",
                  "overlapping", "status"]]


def trap_states(config: ScanConfig) -> FrozenSet[int]:
    """
    Trap sublevels of the tuned manifold. Circular schemes use the ground
    sublevels they leave dark (for sigma-: |4,-4> with F'=4; |3,-3>, |4,-4>,
    |4,-3> with F'=3). Linear schemes leave none dark, and their curves are
    taken over the same sublevels as sigma- for that manifold, so every
    scheme tuned to one manifold is compared on one set.
    """
    unit = FieldAmplitudes(1.0, 1.0)
    dark = dark_ground_states(build_bichromatic_coupling(config.scheme, unit, config.constants),
                              config.tuned_level)
    if dark:
        return dark
    reference = build_bichromatic_coupling(PolarizationScheme.sigma_minus(), unit, config.constants)
    dark = dark_ground_states(reference, config.tuned_level)
    logger.info(f"{config.scheme.label} leaves no ground sublevel dark; summing the sigma- trap set "
                f"{sorted(dark)} of F'={config.tuned_level}")
    return dark


def trap_population_sweep(config: ScanConfig, intensities: Sequence[float], target: Tuple[int, int] = (0, 0),
                          trap_set: Optional[Iterable[int]] = None) -> pd.DataFrame:
    """Summed population of the trap sublevels, solved on the `target` resonance"""
    trap = frozenset(trap_set) if trap_set else trap_states(config)
    indices = np.array(sorted(trap)) - 1
    rows = []
    for intensity in intensities:
        context = ScanContext(config.with_intensity(float(intensity)))
        center = raman_resonance(context.energies, *target)
        state = context.solve(center)
        rows.append({"intensity_uw_mm2": float(intensity),
                     "trap_population": float(np.sum(state.populations()[indices]))})
    logger.info(f"Trap-population sweep over {sorted(trap)} finished ({len(rows)} points)")
    return pd.DataFrame(rows)


def series_config(config: ScanConfig, targets: Sequence[Tuple[int, int]], window: Optional[float] = None,
                  points: Optional[int] = None) -> ScanConfig:
    """One config whose range covers the focused ranges of all `targets`"""
    ranges = [focused_config(config, target, window, points) for target in targets]
    start = min(r.delta_r_start for r in ranges)
    stop = max(r.delta_r_stop for r in ranges)
    return config.with_range(start, stop, points)


def amplitude_table(series: Sequence[Tuple[str, ScanConfig, Sequence[Tuple[int, int]]]],
                    window: Optional[float] = None, points: Optional[int] = None,
                    workers: int = 1) -> pd.DataFrame:
    """
    Amplitude of each series and its ratio to the first series. All targets of
    a series are read off one scan and summed; overlapping targets are split
    into Lorentzian components so shared signal is counted once, and absent
    targets add nothing. A series whose targets are all absent gets NaN.
    """
    rows = []
    for name, config, targets in series:
        targets = list(dict.fromkeys(tuple(target) for target in targets))
        context = ScanContext(config)
        scan = run_scan(series_config(config, targets, window, points), workers)
        total, statuses, seen = 0.0, [], set()
        for target in targets:
            center = raman_resonance(context.energies, *target)
            half_width = _resonance_width(context, target, center) or config.relaxation.gamma_p
            measurement = measure_target(scan, context, target, half_width)
            statuses.append(measurement.status)
            if measurement.status == "absent":
                continue
            if measurement.source in seen:
                continue
            seen.add(measurement.source)
            total += measurement.amplitude
        if all(status == "absent" for status in statuses):
            logger.warning(f"Series {name}: no target resonance present")
            total = np.nan
        rows.append({"series": name,
                     "targets": " + ".join(f"({m_g},{m_e})" for m_g, m_e in targets),
                     "amplitude": total,
                     "status": ",".join(statuses)})
    table = pd.DataFrame(rows)
    anchor = table["amplitude"].iloc[0]
    table["ratio"] = table["amplitude"] / anchor if anchor and np.isfinite(anchor) else np.nan
    return table


def peak_decomposition(config: ScanConfig, labels: Sequence[Tuple[int, int]]) -> pd.DataFrame:
    """
    Rabi-product sums per excited manifold and off-resonance ground
    populations rho_gg + rho_ee of each resonance.
    """
    context = ScanContext(config)
    populations = context.solve(config.delta_r_start).populations()
    rows = []
    for m_g, m_e in labels:
        g, e = ground_index(3, m_g), ground_index(4, m_e)
        rows.append({
            "label": f"({m_g},{m_e})",
            "rabi_product_f3": abs(context.coupling.rabi_product(g, e, 3)) ** 2,
            "rabi_product_f4": abs(context.coupling.rabi_product(g, e, 4)) ** 2,
            "population_sum": float(populations[g - 1] + populations[e - 1]),
        })
    table = pd.DataFrame(rows)
    tuned = f"rabi_product_f{config.tuned_level}"
    peak = table[tuned].max()
    table["rabi_product_rel"] = table[tuned] / peak if peak else 0.0
    return table


# -- relaxation-ratio fit ------------------------------------------------------

@dataclass(frozen=True)
class FitResult:
    best_r: float
    misfit: pd.DataFrame
    labels: Tuple[Tuple[int, int], ...]
    reference_pattern: np.ndarray


def _pattern(amplitudes: np.ndarray) -> np.ndarray:
    total = float(np.sum(amplitudes))
    return amplitudes / total if total else amplitudes


def fit_relaxation_ratio(reference: pd.DataFrame, config: ScanConfig, r_grid: Sequence[float],
                         workers: int = 1) -> FitResult:
    """
    Least-squares match of normalized peak-amplitude patterns against a
    reference spectrum (columns detuning_hz, value) over a grid of r.
    """
    scan = SpectrumScan.from_arrays(reference["detuning_hz"].to_numpy() * TWO_PI,
                                    reference["value"].to_numpy(), config.observable,
                                    config.peak_prominence)
    context = ScanContext(config)
    scan = label_peaks(scan, config.b_tesla, context.constants, context.coupling, config.label_tolerance)

    matched: Dict[Tuple[int, int], Peak] = {}
    for peak in scan.peaks:
        if peak.status == "matched" and peak.label not in matched:
            matched[peak.label] = peak
    if len(matched) < 3:
        raise FitError(f"Only {len(matched)} labelled peaks in the reference spectrum; at least 3 are needed")

    labels = tuple(sorted(matched))
    centers = np.array([scan.detuning[matched[label].index] for label in labels])
    count = max(1, int(round(len(scan.detuning) * 0.10 / 2)))
    edges = np.concatenate([scan.detuning[:count], scan.detuning[-count:]])
    reference_pattern = _pattern(np.array([matched[label].amplitude for label in labels]))

    rows = []
    for r in r_grid:
        trial = replace(config, relaxation=replace(config.relaxation, r=float(r)))
        values = evaluate_points(trial, np.concatenate([centers, edges]), workers)
        baseline = float(np.median(values[len(centers):]))
        pattern = _pattern(np.abs(values[:len(centers)] - baseline))
        misfit = float(np.sum((pattern - reference_pattern) ** 2))
        rows.append({"r": float(r), "misfit": misfit})
        logger.info(f"r={r:.3f}: misfit {misfit:.6e}")

    table = pd.DataFrame(rows)
    best = float(table.loc[table["misfit"].idxmin(), "r"])
    logger.info(f"Best relaxation ratio r={best:.3f} from {len(labels)} peaks")
    return FitResult(best, table, labels, reference_pattern)
