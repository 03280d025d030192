"""--set KEY=VALUE overrides for experiment configuration.

Keys use dot notation into the nested config (``recovery.refine.max_cycles``)
and are checked against the ExperimentConfig schema before anything is
written, so a misspelt key fails with the closest valid path. Values are
inferred as JSON, then booleans, then numbers, then strings. A bare number
given to a list field (``seeds=3``) becomes a one-element list.
"""
from __future__ import annotations

import difflib
import json
import typing
from typing import Any, Dict, List, Optional, Tuple, Type

from pydantic import BaseModel

from .errors import ConfigError
from .types import ExperimentConfig


def parse_set_override(spec: str) -> tuple[str, Any]:
    """Split ``KEY=VALUE`` and infer the value's type.

    Examples:
        >>> parse_set_override("n=4")
        ('n', 4)
        >>> parse_set_override("exact_moments=true")
        ('exact_moments', True)
        >>> parse_set_override("N_grid=[1000, 10000]")
        ('N_grid', [1000, 10000])
    """
    if "=" not in spec:
        raise ValueError(f"Invalid --set format: {spec!r}. Expected KEY=VALUE (e.g., --set n=4)")

    key, value_str = spec.split("=", 1)
    key = key.strip()
    if not key:
        raise ValueError(f"Empty key in --set: {spec!r}")
    return key, _parse_value(value_str.strip())


def _parse_value(value_str: str) -> Any:
    if not value_str:
        return ""

    try:
        return json.loads(value_str)
    except (json.JSONDecodeError, ValueError):
        pass

    lower = value_str.lower()
    if lower in ("true", "yes", "on"):
        return True
    if lower in ("false", "no", "off"):
        return False

    try:
        if "." in value_str or "e" in lower:
            return float(value_str)
        return int(value_str)
    except ValueError:
        pass

    return value_str


def _unwrap(annotation: Any) -> Any:
    """Strip ``Optional[...]`` so nested sections and list fields are recognised."""
    if typing.get_origin(annotation) is typing.Union:
        args = [a for a in typing.get_args(annotation) if a is not type(None)]
        if len(args) == 1:
            return args[0]
    return annotation


def _section(annotation: Any) -> Optional[Type[BaseModel]]:
    annotation = _unwrap(annotation)
    if isinstance(annotation, type) and issubclass(annotation, BaseModel):
        return annotation
    return None


def config_key_paths(schema: Type[BaseModel] = ExperimentConfig, prefix: str = "") -> List[str]:
    """Every settable dotted path, sections included."""
    paths = []
    for name, info in schema.model_fields.items():
        path = f"{prefix}{name}"
        paths.append(path)
        nested = _section(info.annotation)
        if nested is not None:
            paths.extend(config_key_paths(nested, f"{path}."))
    return paths


def resolve_key_path(key_path: str, schema: Type[BaseModel] = ExperimentConfig) -> Any:
    """Check ``key_path`` against ``schema`` and return the leaf field's annotation.

    Raises:
        ValueError: The path names no field, or walks into a field that is
            not a nested section. The message suggests the closest valid path.
    """
    current: Type[BaseModel] = schema
    *sections, leaf = key_path.split(".")
    for depth, part in enumerate(sections):
        nested = _section(_field(current, part, key_path, schema).annotation)
        if nested is None:
            raise ValueError(f"{'.'.join(sections[: depth + 1])!r} is a value, not a section, in {key_path!r}")
        current = nested
    return _field(current, leaf, key_path, schema).annotation


def _field(model: Type[BaseModel], name: str, key_path: str, schema: Type[BaseModel]) -> Any:
    info = model.model_fields.get(name)
    if info is None:
        close = difflib.get_close_matches(key_path, config_key_paths(schema), n=1)
        hint = f"; did you mean {close[0]!r}?" if close else ""
        raise ValueError(f"Unknown config key {key_path!r}{hint}")
    return info


def coerce_for_field(annotation: Any, value: Any) -> Any:
    """Wrap a scalar given to a list field; everything else passes through for validation."""
    if typing.get_origin(_unwrap(annotation)) is list and isinstance(value, (int, float)) and not isinstance(value, bool):
        return [value]
    return value


def apply_set_override(data: Dict[str, Any], key_path: str, value: Any) -> None:
    """Set ``value`` at ``key_path`` in ``data``, creating nested dicts as needed."""
    keys = key_path.split(".")
    target = data
    for key in keys[:-1]:
        if target.get(key) is None:
            target[key] = {}
        elif not isinstance(target[key], dict):
            raise ValueError(
                f"Cannot navigate through non-dict field '{key}' in path '{key_path}'. "
                f"Field is type {type(target[key]).__name__}"
            )
        target = target[key]
    target[keys[-1]] = value


def apply_overrides_to_data(
    data: Dict[str, Any], set_overrides: List[str], schema: Type[BaseModel] = ExperimentConfig
) -> Dict[str, Any]:
    """Apply every override in order (last wins); ``data`` is modified in place.

    Args:
        data: Raw config mapping, as loaded from the config file plus flags.
        set_overrides: ``KEY=VALUE`` strings from repeated ``--set`` flags.
        schema: Model the key paths are checked against.

    Returns:
        The same ``data`` mapping.

    Raises:
        ConfigError: An override is malformed or names no field of ``schema``.
    """
    parsed: List[Tuple[str, str, Any]] = []
    for spec in set_overrides:
        try:
            key_path, value = parse_set_override(spec)
            parsed.append((spec, key_path, coerce_for_field(resolve_key_path(key_path, schema), value)))
        except ValueError as exc:
            raise ConfigError(f"Invalid --set override {spec!r}: {exc}") from exc
    for spec, key_path, value in parsed:
        try:
            apply_set_override(data, key_path, value)
        except ValueError as exc:
            raise ConfigError(f"Invalid --set override {spec!r}: {exc}") from exc
    return data
