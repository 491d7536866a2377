"""
Command-line front end of the Cs D1 CPT simulator

Subcommands: spectrum, sweep, lineshape, fit-r, validate.
Exit codes: 0 ok, 2 configuration error, 3 numerical failure, 4 validation failure.
"""
import argparse
import logging
import math
import sys
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

import atomic_model
from config_loader import list_presets, load_config, resolved_document
from csv_export_utils import result_exporter
from errors import ConfigError, CptSimError, FitError, SolverError
from lineshape import LambdaSystem, analytic_spectrum, lineshape_params
from models import RunConfig
from relaxation import build_branching_table
from run_service import Run, RunService
from scan import (ScanContext, SpectrumScan, amplitude_table, default_workers, evaluate_points,
                  find_resonances, fit_relaxation_ratio, focused_config, intensity_sweep, peak_decomposition,
                  run_scan, trap_population_sweep)
from validation import run_validation

logger = logging.getLogger(__name__)

TWO_PI = 2 * math.pi

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_VALIDATION = 4


def _workers(config: RunConfig) -> int:
    return config.workers or default_workers()


def _label(pair) -> str:
    return f"({pair[0]},{pair[1]})"


def cmd_spectrum(config: RunConfig, run: Run) -> int:
    """Spectrum over the configured Raman range, its peaks and their decomposition"""
    scan_config = config.to_scan_config()
    scan = run_scan(scan_config, _workers(config))
    run.record(result_exporter.export_csv(scan.to_frame(), run.path("spectrum.csv"), "spectrum",
                                          run.manifest_hash))

    labels = [peak.label for peak in scan.peaks if peak.label is not None]
    document: Dict[str, Any] = {
        "observable": scan.observable.value,
        "scheme": scan_config.scheme.label,
        "tuned_level": scan_config.tuned_level,
        "peaks": [peak.to_record() for peak in scan.peaks],
    }
    run.record(result_exporter.export_json(document, run.path("peaks.json"), run.manifest_hash))
    if labels:
        decomposition = peak_decomposition(scan_config, labels)
        run.record(result_exporter.export_csv(decomposition, run.path("decomposition.csv"), "decomposition",
                                              run.manifest_hash))
    logger.info(f"Spectrum: {len(scan.peaks)} peaks, {len(labels)} labelled")
    return EXIT_OK


def cmd_sweep(config: RunConfig, run: Run) -> int:
    """Intensity, trap-population or amplitude-ratio sweeps, one curve per series"""
    sweep = config.sweep
    kinds = {series.kind for series in sweep.series}
    if len(kinds) != 1:
        raise ConfigError(f"All series of one sweep must share a kind, got {sorted(kinds)}", key="sweep.series")
    kind = kinds.pop()
    workers = _workers(config)
    window = TWO_PI * sweep.window_khz * 1e3 if sweep.window_khz else None

    if kind == "ratio":
        series = [(s.name, config.to_scan_config(s), [tuple(t) for t in s.targets]) for s in sweep.series]
        table = amplitude_table(series, window, sweep.points, workers)
        run.record(result_exporter.export_csv(table, run.path("ratio_table.csv"), "ratio_table",
                                              run.manifest_hash))
        run.record(result_exporter.export_json({"ratios": table.to_dict(orient="records")},
                                               run.path("ratio_table.json"), run.manifest_hash))
        return EXIT_OK

    frames: List[pd.DataFrame] = []
    for series in sweep.series:
        scan_config = config.to_scan_config(series)
        target = tuple(series.targets[0])
        logger.info(f"Sweep series {series.name}: {scan_config.scheme.label}, F'={scan_config.tuned_level}, "
                    f"target {_label(target)}")
        if kind == "intensity":
            frame = intensity_sweep(scan_config, sweep.intensities_uw_per_mm2, target,
                                    sweep.normalize_at_uw_per_mm2, window, sweep.points, workers)
        else:
            frame = trap_population_sweep(scan_config, sweep.intensities_uw_per_mm2, target, series.trap_set)
        frame.insert(0, "series", series.name)
        frames.append(frame)

    table = pd.concat(frames, ignore_index=True)
    schema = "intensity_sweep" if kind == "intensity" else "trap_sweep"
    run.record(result_exporter.export_csv(table, run.path("sweep.csv"), schema, run.manifest_hash))
    return EXIT_OK


def cmd_lineshape(config: RunConfig, run: Run) -> int:
    """Numeric spectrum of one resonance next to its closed-form lineshape"""
    target = tuple(config.lineshape.resonance)
    base = config.to_scan_config()
    scan_config = focused_config(base, target, points=config.lineshape.points)
    context = ScanContext(scan_config)
    system = LambdaSystem.build(target[0], target[1], context.coupling, scan_config.relaxation.Gamma)

    grid = np.linspace(scan_config.delta_r_start, scan_config.delta_r_stop, scan_config.points)
    numeric = evaluate_points(scan_config, grid, _workers(config))

    far = context.solve(scan_config.delta_r_start).populations()
    populations = (float(far[system.g - 1]), float(far[system.e - 1]))
    center = float(np.mean(grid))
    params = lineshape_params(system, context.coupling, context.detunings(center), context.decay,
                              populations, context.delta_opt, center, context.constants)
    analytic = analytic_spectrum(system, params, grid, context.coupling, context.detunings(0.0),
                                 populations, scan_config.alpha, scan_config.tuned_level)

    frame = pd.DataFrame({"detuning_hz": grid / TWO_PI, "numeric": numeric,
                          "analytic_re_rho_ge": analytic.re_rho_ge, "analytic_f2": analytic.f2})
    run.record(result_exporter.export_csv(frame, run.path("lineshape.csv"), "lineshape", run.manifest_hash))

    scan = SpectrumScan(grid, numeric, (), scan_config.observable)
    peaks = find_resonances(scan, scan_config.peak_prominence)
    nearest = min(peaks, key=lambda p: abs(p.center - center)) if peaks else None
    analytic_center = center + params.light_shift
    document = {
        "resonance": _label(target),
        "analytic": {
            "center_hz": analytic_center / TWO_PI,
            "delta_width_hz": params.width / TWO_PI,
            "fwhm_hz": 2 * params.width / TWO_PI,
            "light_shift_hz": params.light_shift / TWO_PI,
            "amplitude_C": {"re": params.amplitude.real, "im": params.amplitude.imag},
        },
        "numeric": None if nearest is None else nearest.to_record(),
        "populations": {"rho_gg": populations[0], "rho_ee": populations[1]},
    }
    run.record(result_exporter.export_json(document, run.path("lineshape.json"), run.manifest_hash))
    return EXIT_OK


def cmd_fit_r(config: RunConfig, run: Run) -> int:
    """Best uniform-relaxation share r for a reference spectrum"""
    if not config.fit.reference_csv:
        raise ConfigError("fit.reference_csv is required for fit-r", key="fit.reference_csv")
    reference = result_exporter.read_reference_spectrum(config.fit.reference_csv)
    result = fit_relaxation_ratio(reference, config.to_scan_config(), config.fit.r_grid(), _workers(config))
    run.record(result_exporter.export_csv(result.misfit, run.path("fit_r.csv"), "fit_r", run.manifest_hash))
    document = {
        "best_r": result.best_r,
        "labels": [_label(label) for label in result.labels],
        "reference_pattern": result.reference_pattern,
    }
    run.record(result_exporter.export_json(document, run.path("fit_r.json"), run.manifest_hash))
    return EXIT_OK


def cmd_validate(config: RunConfig, run: Run) -> int:
    report = run_validation(config.tolerances.scale, config.seed)
    run.record(result_exporter.export_json(report.to_document(), run.path("validation.json"), run.manifest_hash))
    for failure in report.failures():
        logger.error(f"Validation failure {failure.name}: residual {failure.residual:.3e} > {failure.bound:.3e} "
                     f"({failure.detail})")
    return EXIT_OK if report.passed else EXIT_VALIDATION


COMMANDS = {
    "spectrum": cmd_spectrum,
    "sweep": cmd_sweep,
    "lineshape": cmd_lineshape,
    "fit-r": cmd_fit_r,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cptsim",
        description="Steady-state CPT resonances of the Cs D1 line",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    parser.add_argument("--quiet", action="store_true", help="warnings and errors only")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, handler in COMMANDS.items():
        sub = subparsers.add_parser(name, help=handler.__doc__,
                                    formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        sub.add_argument("--config", help="YAML run configuration")
        sub.add_argument("--preset", help=f"bundled preset ({', '.join(list_presets()) or 'none'})")
        sub.add_argument("--out", help="output directory (overrides output.dir)")
        sub.add_argument("--workers", type=int, help="worker processes (default: available cores)")
        sub.add_argument("--seed", type=int, help="random seed of the oracle checks")
        sub.add_argument("--tolerance-scale", type=float, help="multiply every tolerance by this factor")
        sub.add_argument("--inject-cg-fault", type=float, help=argparse.SUPPRESS)
    return parser


def _cli_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    overrides: Dict[str, Any] = {}
    if args.out:
        overrides["output"] = {"dir": args.out}
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.tolerance_scale is not None:
        overrides["tolerances"] = {"scale": args.tolerance_scale}
    return overrides


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s", force=True)

    if args.inject_cg_fault is not None:
        atomic_model.inject_cg_fault(args.inject_cg_fault)
        build_branching_table.cache_clear()

    try:
        config = load_config(args.config, args.preset, overrides=_cli_overrides(args))
    except ConfigError as e:
        logger.error(f"Configuration error: {str(e)}")
        return EXIT_CONFIG

    try:
        with RunService.track(args.command, resolved_document(config), config.seed, config.output.dir) as run:
            return COMMANDS[args.command](config, run)
    except ConfigError as e:
        logger.error(f"Configuration error: {str(e)}")
        return EXIT_CONFIG
    except (SolverError, FitError) as e:
        logger.error(f"Numerical failure: {str(e)}")
        return EXIT_NUMERICAL
    except CptSimError as e:
        logger.error(f"Invalid input: {str(e)}")
        return EXIT_CONFIG
    finally:
        if args.inject_cg_fault is not None:
            atomic_model.reset_cg_table()
            build_branching_table.cache_clear()


if __name__ == "__main__":
    sys.exit(main())
