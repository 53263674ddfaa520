"""Process settings loaded from environment variables (and a local .env file)."""

import os
from dataclasses import dataclass
from dotenv import load_dotenv

load_dotenv()

_LOG_LEVELS = {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}


def _get_env(key: str, default: str = "") -> str:
    """Read an environment variable, treating empty values as unset."""
    value = os.getenv(key, "")
    return value if value else default


def _get_int(key: str, default: int) -> int:
    raw = _get_env(key, str(default))
    try:
        return int(raw)
    except ValueError:
        return default


@dataclass(frozen=True)
class Settings:
    """Immutable process settings."""

    # Artifacts
    output_root: str = "runs"

    # Logging
    log_level: str = "INFO"

    # Execution
    workers: int = 1
    block_rows: int = 32

    # MCP Server
    mcp_transport: str = "stdio"

    def validate(self) -> list[str]:
        """Return list of problems with the current settings."""
        problems = []
        if self.log_level.upper() not in _LOG_LEVELS:
            problems.append(f"FEDKRSO_LOG_LEVEL={self.log_level!r} is not a logging level")
        if self.workers < 1:
            problems.append("FEDKRSO_WORKERS must be >= 1")
        if self.block_rows < 1:
            problems.append("FEDKRSO_BLOCK_ROWS must be >= 1")
        return problems


settings = Settings(
    output_root=_get_env("FEDKRSO_OUTPUT_ROOT", "runs"),
    log_level=_get_env("FEDKRSO_LOG_LEVEL", "INFO"),
    workers=_get_int("FEDKRSO_WORKERS", 1),
    block_rows=_get_int("FEDKRSO_BLOCK_ROWS", 32),
    mcp_transport=_get_env("MCP_TRANSPORT", "stdio"),
)
