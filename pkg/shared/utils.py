"""Shared utilities for all simulator components."""

import json
from typing import Any

from pydantic import ValidationError

from shared.errors import InvalidConfigurationError, SimulatorError


def format_json_response(data: dict[str, Any]) -> str:
    """Format a dictionary as a JSON string for artifacts and tool responses."""
    return json.dumps(data, indent=2, ensure_ascii=False, default=str, sort_keys=True)


def validation_to_config_error(e: ValidationError, lines: dict[str, int] | None = None) -> InvalidConfigurationError:
    """Convert the first pydantic validation error into a field-level config error."""
    first = e.errors()[0]
    original = (first.get("ctx") or {}).get("error")
    if isinstance(original, InvalidConfigurationError):
        if original.line is None and lines and original.field in lines:
            return InvalidConfigurationError(original.message, field=original.field, line=lines[original.field])
        return original
    field = ".".join(str(part) for part in first.get("loc", ()))
    line = (lines or {}).get(field)
    return InvalidConfigurationError(first.get("msg", "invalid value"), field=field or None, line=line)


def handle_run_error(e: Exception) -> tuple[int, str]:
    """Consistent (exit code, JSON message) mapping across CLI and tool server."""
    if isinstance(e, ValidationError):
        e = validation_to_config_error(e)

    if isinstance(e, InvalidConfigurationError):
        payload = {"error": str(e), "kind": "configuration", "field": e.field, "line": e.line}
        return e.exit_code, format_json_response(payload)

    if isinstance(e, SimulatorError):
        payload: dict[str, Any] = {"error": str(e), "kind": type(e).__name__}
        for attr in ("round", "iteration", "client_id"):
            if getattr(e, attr, None) is not None:
                payload[attr] = getattr(e, attr)
        return e.exit_code, format_json_response(payload)

    return 1, format_json_response({"error": f"Unexpected error: {type(e).__name__}: {str(e)}"})
