"""
Loading of run configurations from presets, YAML files and environment
variables, with error positions reported as line/column of the YAML source.
"""
import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import yaml
from pydantic import ValidationError

from errors import ConfigError
from models import RunConfig

logger = logging.getLogger(__name__)

PRESETS_DIR = Path(__file__).resolve().parent / "presets"
ENV_PREFIX = "CPTSIM_"


def list_presets() -> List[str]:
    return sorted(path.stem for path in PRESETS_DIR.glob("*.yaml"))


def preset_path(name: str) -> Path:
    path = PRESETS_DIR / f"{name}.yaml"
    if not path.is_file():
        raise ConfigError(f"Unknown preset '{name}'; available: {', '.join(list_presets())}", key="preset")
    return path


def parse_yaml(text: str, source: str = "<string>") -> Dict[str, Any]:
    """Parse a YAML mapping; syntax errors become ConfigError with 1-based line/column"""
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as e:
        mark = e.problem_mark or e.context_mark
        line = mark.line + 1 if mark else None
        column = mark.column + 1 if mark else None
        raise ConfigError(f"{source}: {e.problem or 'invalid YAML'}", line, column)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping, got {type(data).__name__}", 1, 1)
    return data


def deep_merge(base: Mapping[str, Any], override: Mapping[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def env_overrides(environ: Optional[Mapping[str, str]] = None, prefix: str = ENV_PREFIX) -> Dict[str, Any]:
    """
    CPTSIM_SECTION__KEY=value entries as a nested mapping. Values are read
    as YAML scalars, so numbers and booleans keep their types.
    """
    environ = os.environ if environ is None else environ
    overrides: Dict[str, Any] = {}
    for name, raw in environ.items():
        if not name.startswith(prefix):
            continue
        path = [part.lower() for part in name[len(prefix):].split("__") if part]
        if not path:
            continue
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError:
            raise ConfigError(f"Environment override {name} is not a valid value: {raw!r}", key=name)
        node = overrides
        for part in path[:-1]:
            node = node.setdefault(part, {})
        node[path[-1]] = value
        logger.info(f"Config override from environment: {'.'.join(path)}={value!r}")
    return overrides


def locate(text: str, location: Sequence[Any]) -> Optional[Tuple[int, int]]:
    """1-based (line, column) of the deepest YAML node along `location`, or None"""
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return None
    if node is None:
        return None
    found = None
    for part in location:
        if isinstance(node, yaml.MappingNode):
            match = [(k, v) for k, v in node.value if k.value == str(part)]
            if not match:
                break
            key_node, node = match[0]
            found = key_node
        elif isinstance(node, yaml.SequenceNode) and isinstance(part, int) and part < len(node.value):
            node = node.value[part]
            found = node
        else:
            break
    if found is None:
        return None
    return found.start_mark.line + 1, found.start_mark.column + 1


def validate(data: Mapping[str, Any], sources: Sequence[Tuple[str, str]] = ()) -> RunConfig:
    """Validate a merged document; the first error is located in `sources` (name, text)"""
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        error = e.errors()[0]
        location = tuple(error["loc"])
        key = ".".join(str(part) for part in location)
        message = f"{key}: {error['msg']}"
        for source, text in sources:
            position = locate(text, location)
            if position is not None:
                raise ConfigError(f"{source}: {message}", position[0], position[1], key)
        raise ConfigError(message, key=key)


def load_config(config_path: Optional[str] = None, preset: Optional[str] = None,
                environ: Optional[Mapping[str, str]] = None,
                overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """
    Resolve a RunConfig: preset, then config file, then environment, then
    explicit overrides (CLI flags), each layer replacing keys of the previous.
    """
    data: Dict[str, Any] = {}
    sources: List[Tuple[str, str]] = []

    if preset:
        path = preset_path(preset)
        text = path.read_text()
        data = deep_merge(data, parse_yaml(text, str(path)))
        sources.append((str(path), text))
        logger.info(f"Loaded preset {preset}")

    if config_path:
        path = Path(config_path)
        if not path.is_file():
            raise ConfigError(f"Config file not found: {config_path}", key="config")
        text = path.read_text()
        data = deep_merge(data, parse_yaml(text, str(path)))
        sources.insert(0, (str(path), text))
        logger.info(f"Loaded config file {config_path}")

    data = deep_merge(data, env_overrides(environ))
    if overrides:
        data = deep_merge(data, overrides)
    return validate(data, sources)


def resolved_document(config: RunConfig) -> Dict[str, Any]:
    """Plain JSON-compatible form of a resolved config"""
    return config.model_dump(mode="json")
