"""
Test script for configuration loading: presets, YAML files, environment
overrides and error positions
"""
import json
import math

import pytest

from config_loader import (deep_merge, env_overrides, list_presets, load_config, parse_yaml,
                           resolved_document)
from errors import ConfigError
from scan import Observable

TWO_PI = 2 * math.pi


def write_config(tmp_path, text, name="run.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_defaults_convert_to_angular_and_si_units():
    """Default run: Cell2 rates, 22.7 uT and a +-50 kHz window"""
    config = load_config(environ={})
    scan_config = config.to_scan_config()

    assert scan_config.relaxation.gamma_p == pytest.approx(TWO_PI * 107.0)
    assert scan_config.relaxation.Gamma == pytest.approx(TWO_PI * 0.51e9)
    assert scan_config.relaxation.r == 0.6
    assert scan_config.b_tesla == pytest.approx(22.7e-6)
    assert scan_config.delta_r_start == pytest.approx(-TWO_PI * 50e3)
    assert scan_config.delta_r_stop == pytest.approx(TWO_PI * 50e3)
    assert scan_config.observable is Observable.EXCITED_POPULATION
    assert scan_config.scheme.label == "sigma_minus_pair"


@pytest.mark.parametrize("name", list_presets())
def test_every_bundled_preset_loads(name):
    config = load_config(preset=name, environ={})
    config.to_scan_config()
    for series in config.sweep.series:
        config.to_scan_config(series)


def test_presets_are_bundled():
    presets = list_presets()
    for name in ("cell2-sigma-f4", "cell2-linlin-f3-b285", "fig9", "fig8-widths", "table2"):
        assert name in presets


def test_lin_perp_preset_label():
    config = load_config(preset="cell2-linperp-f4", environ={})
    assert config.to_scan_config().scheme.label == "lin_perp_lin"


def test_series_overrides_run_excitation():
    config = load_config(preset="fig9", environ={})
    linlin = next(series for series in config.sweep.series if series.name == "linlin-f3")
    scan_config = config.to_scan_config(linlin)
    assert scan_config.scheme.label == "lin_par_lin"
    assert scan_config.tuned_level == 3
    assert scan_config.b_tesla == pytest.approx(139e-6)


def test_unknown_key_reports_line_column_and_key(tmp_path):
    path = write_config(tmp_path, "field:\n  b_ut: 10\ncell:\n  r: 0.5\nscan:\n  bogus: 1\n")
    with pytest.raises(ConfigError) as excinfo:
        load_config(path, environ={})
    error = excinfo.value
    assert error.key == "scan.bogus"
    assert (error.line, error.column) == (6, 3)
    assert "line 6" in str(error)


def test_yaml_syntax_error_reports_line(tmp_path):
    path = write_config(tmp_path, "cell:\n  r: 0.5\nfield: b_ut: 3\n")
    with pytest.raises(ConfigError) as excinfo:
        load_config(path, environ={})
    assert excinfo.value.line == 3
    assert excinfo.value.column is not None


def test_empty_detuning_range_is_a_config_error(tmp_path):
    path = write_config(tmp_path, "scan:\n  delta_r_start_khz: 10\n  delta_r_stop_khz: -10\n")
    with pytest.raises(ConfigError) as excinfo:
        load_config(path, environ={})
    assert excinfo.value.key == "scan"
    assert "empty Raman detuning range" in str(excinfo.value)
    assert excinfo.value.line == 1


def test_out_of_range_value_is_located(tmp_path):
    path = write_config(tmp_path, "cell:\n  name: cell9\n  r: 1.5\n")
    with pytest.raises(ConfigError) as excinfo:
        load_config(path, environ={})
    assert excinfo.value.key == "cell.r"
    assert (excinfo.value.line, excinfo.value.column) == (3, 3)


def test_missing_config_file():
    with pytest.raises(ConfigError, match="not found"):
        load_config("/nonexistent/run.yaml", environ={})


def test_unknown_preset():
    with pytest.raises(ConfigError, match="Unknown preset"):
        load_config(preset="no-such-preset", environ={})


def test_top_level_must_be_a_mapping():
    with pytest.raises(ConfigError, match="mapping"):
        parse_yaml("- 1\n- 2\n")
    assert parse_yaml("") == {}


def test_workers_must_be_positive():
    with pytest.raises(ConfigError) as excinfo:
        load_config(environ={}, overrides={"workers": 0})
    assert excinfo.value.key == "workers"


def test_env_overrides_parse_scalars_and_nest():
    overrides = env_overrides({"CPTSIM_CELL__R": "0.3", "CPTSIM_FIELD__B_UT": "139",
                               "CPTSIM_SCAN__SEED_PREDICTED": "false", "HOME": "/root"})
    assert overrides == {"cell": {"r": 0.3}, "field": {"b_ut": 139}, "scan": {"seed_predicted": False}}


def test_environment_applies_over_file(tmp_path):
    path = write_config(tmp_path, "cell:\n  r: 0.6\nfield:\n  b_ut: 22.7\n")
    config = load_config(path, environ={"CPTSIM_CELL__R": "0.3"})
    assert config.cell.r == 0.3
    assert config.field.b_ut == 22.7


def test_overrides_beat_environment_and_file_beats_preset(tmp_path):
    path = write_config(tmp_path, "field:\n  b_ut: 50\n")
    config = load_config(path, preset="cell2-sigma-f4", environ={"CPTSIM_SEED": "5"},
                         overrides={"seed": 9})
    assert config.field.b_ut == 50
    assert config.seed == 9
    assert config.scan.points == 601


def test_deep_merge_keeps_untouched_keys():
    merged = deep_merge({"cell": {"r": 0.6, "name": "cell2"}, "seed": 1}, {"cell": {"r": 0.3}})
    assert merged == {"cell": {"r": 0.3, "name": "cell2"}, "seed": 1}


def test_r_grid_spans_the_fit_range():
    config = load_config(environ={}, overrides={"fit": {"r_start": 0.2, "r_stop": 0.6, "r_points": 5}})
    assert config.fit.r_grid() == pytest.approx([0.2, 0.3, 0.4, 0.5, 0.6])


def test_tolerance_scale_reaches_solver_tolerances():
    config = load_config(environ={}, overrides={"tolerances": {"scale": 10.0}})
    tolerances = config.to_scan_config().tolerances
    assert tolerances.trace == pytest.approx(1e-9)


def test_resolved_document_is_json_compatible():
    config = load_config(preset="table2", environ={})
    document = resolved_document(config)
    assert json.loads(json.dumps(document)) == document
    assert document["field"]["b_ut"] == 139
