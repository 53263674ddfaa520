"""Pydantic input models for the experiment tool server."""

from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from simulator.accounting.models import CostFormat


class ResponseFormat(str, Enum):
    """Output format for tool responses."""
    MARKDOWN = "markdown"
    JSON = "json"


class _ConfigSource(BaseModel):
    """A run config given by path or inline text; neither means all defaults."""
    model_config = ConfigDict(str_strip_whitespace=True, extra="forbid")

    config_path: Optional[str] = Field(default=None, description="Path to a flat `section.key = value` config file")
    config_text: Optional[str] = Field(default=None, description="Inline config in the same flat format")
    overrides: dict[str, str] = Field(
        default_factory=dict,
        description="Dotted-key overrides applied after loading, e.g. {'federation.rounds': '3'}",
    )

    @model_validator(mode="after")
    def _one_source(self):
        if self.config_path and self.config_text:
            raise ValueError("pass config_path or config_text, not both")
        return self


class RunExperimentInput(_ConfigSource):
    """Input for running one experiment."""

    write_artifacts: bool = Field(default=False, description="Write trace.csv, manifest.json and summary.json")
    response_format: ResponseFormat = Field(default=ResponseFormat.MARKDOWN, description="'markdown' or 'json'")


class CostTableInput(_ConfigSource):
    """Input for the closed-form cost table."""

    format: CostFormat = Field(default=CostFormat.MARKDOWN, description="'markdown', 'csv' or 'json'")


class PartitionReportInput(_ConfigSource):
    """Input for the label-heterogeneity report of a config's partition."""

    response_format: ResponseFormat = Field(default=ResponseFormat.MARKDOWN, description="'markdown' or 'json'")
