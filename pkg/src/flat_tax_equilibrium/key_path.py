from __future__ import annotations

import logging
from typing import Any, List, Type

import yaml
from pydantic import BaseModel
from pydantic.fields import FieldInfo

from flat_tax_equilibrium.exceptions import ConfigError

logger = logging.getLogger(__name__)


def _is_model_type(annotation: Any) -> bool:
    return isinstance(annotation, type) and issubclass(annotation, BaseModel)


def walk_key_path(model: Type[BaseModel], segments: List[str]) -> FieldInfo:
    """
    Resolve dotted override ``segments`` against ``model``.

    Args:
        model: The config model class to traverse
        segments: Path segments like ["gamma"] or ["solver", "value_tol"].
                 Every segment but the last must name a nested model field.

    Returns:
        The FieldInfo of the leaf field.

    Raises:
        ConfigError: if a segment is not a field, or the path stops at a table
    """
    if not segments or any(not segment for segment in segments):
        raise ConfigError(f"Empty segment in override path '{'.'.join(segments)}'")

    current_model = model
    for i, segment in enumerate(segments):
        if segment not in current_model.model_fields:
            known = ", ".join(sorted(current_model.model_fields))
            raise ConfigError(
                f"Unknown config key '{'.'.join(segments[: i + 1])}' (known keys: {known})"
            )
        field_info = current_model.model_fields[segment]
        is_last = i == len(segments) - 1

        if _is_model_type(field_info.annotation):
            if is_last:
                raise ConfigError(
                    f"'{'.'.join(segments)}' is a table; override one of its keys instead"
                )
            current_model = field_info.annotation
            continue

        if not is_last:
            raise ConfigError(
                f"'{'.'.join(segments[: i + 1])}' is not a table; cannot descend into '{segments[i + 1]}'"
            )
        return field_info

    raise ConfigError(f"Could not resolve override path '{'.'.join(segments)}'")


def coerce_override(text: str) -> Any:
    """
    Parse an override value as a YAML scalar.

    Strings that YAML does not type (``1e-10``) are passed on unchanged and
    left for pydantic to coerce against the field annotation.
    """
    try:
        value = yaml.safe_load(text)
    except yaml.YAMLError:
        logger.debug(f"Override value {text!r} is not YAML; passing it through as a string")
        return text
    if isinstance(value, (dict, list)):
        raise ConfigError(f"Override value {text!r} must be a scalar")
    return text if value is None else value
