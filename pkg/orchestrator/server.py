"""Experiment tool server (MCP).

Exposes the simulator to MCP clients:
- run_experiment: run one configured experiment
- cost_table: closed-form per-round costs of all methods
- partition_report: label heterogeneity of a config's client partition
"""

import sys
import os
import logging

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from mcp.server.fastmcp import FastMCP

from config.settings import settings
from orchestrator.models import CostTableInput, PartitionReportInput, RunExperimentInput
from orchestrator.tools import cost_table, partition_report, run_experiment

# ── MCP Server ─────────────────────────────────────────────────────

mcp = FastMCP("fedkrso_mcp")


@mcp.tool(
    name="run_experiment",
    annotations={
        "title": "Run Federated Experiment",
        "readOnlyHint": False,
        "destructiveHint": False,
        "idempotentHint": True,
        "openWorldHint": False,
    },
)
async def tool_run_experiment(params: RunExperimentInput) -> str:
    """Run one federated fine-tuning experiment (fedkrso, fedfft, fedit or ffa_lora).

    Results are deterministic given the config and its master seed.

    Args:
        params (RunExperimentInput): Contains:
            - config_path / config_text (Optional[str]): flat `section.key = value` config
            - overrides (dict[str, str]): dotted-key overrides
            - write_artifacts (bool): write trace.csv, manifest.json, summary.json
            - response_format (ResponseFormat): 'markdown' or 'json'

    Returns:
        str: Run summary plus the per-round trace
    """
    return await run_experiment(
        config_path=params.config_path,
        config_text=params.config_text,
        overrides=params.overrides,
        write_artifacts=params.write_artifacts,
        response_format=params.response_format,
    )


@mcp.tool(
    name="cost_table",
    annotations={
        "title": "Communication and Memory Cost Table",
        "readOnlyHint": True,
        "destructiveHint": False,
        "idempotentHint": True,
        "openWorldHint": False,
    },
)
async def tool_cost_table(params: CostTableInput) -> str:
    """Closed-form per-round uplink, downlink and memory counts for every method.

    Args:
        params (CostTableInput): Contains:
            - config_path / config_text (Optional[str]): config giving layer dims, r, K and I
            - overrides (dict[str, str]): dotted-key overrides
            - format (CostFormat): 'markdown', 'csv' or 'json'

    Returns:
        str: Symbolic and numeric cost rows
    """
    return await cost_table(
        config_path=params.config_path,
        config_text=params.config_text,
        overrides=params.overrides,
        format=params.format,
    )


@mcp.tool(
    name="partition_report",
    annotations={
        "title": "Client Label Heterogeneity",
        "readOnlyHint": True,
        "destructiveHint": False,
        "idempotentHint": True,
        "openWorldHint": False,
    },
)
async def tool_partition_report(params: PartitionReportInput) -> str:
    """Per-client label histograms and mean total-variation distance from the pooled labels.

    Args:
        params (PartitionReportInput): Contains:
            - config_path / config_text (Optional[str]): config with a labelled task
            - overrides (dict[str, str]): dotted-key overrides
            - response_format (ResponseFormat): 'markdown' or 'json'

    Returns:
        str: Heterogeneity report
    """
    return await partition_report(
        config_path=params.config_path,
        config_text=params.config_text,
        overrides=params.overrides,
        response_format=params.response_format,
    )


# ── Entrypoint ─────────────────────────────────────────────────────

if __name__ == "__main__":
    logging.basicConfig(
        level=settings.log_level.upper(),
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        datefmt="%H:%M:%S",
        stream=sys.stderr,
    )
    mcp.run(transport=settings.mcp_transport)
