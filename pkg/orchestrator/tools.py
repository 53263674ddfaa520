"""Tool implementations for the experiment tool server.

Each tool loads a RunConfig, calls the same Orchestrator the CLI uses and
returns markdown or JSON. Failures come back as the JSON error payload
of handle_run_error.
"""

import logging
from typing import Optional

from config.run_config import RunConfig, load_run_config, parse_run_config
from shared.utils import format_json_response, handle_run_error
from simulator.accounting.models import CostFormat
from orchestrator.models import ResponseFormat
from orchestrator.orchestrator import Orchestrator

logger = logging.getLogger(__name__)


def _load(config_path: Optional[str], config_text: Optional[str], overrides: dict[str, str]) -> RunConfig:
    if config_path:
        config = load_run_config(config_path)
    elif config_text:
        config = parse_run_config(config_text)
    else:
        config = RunConfig()
    return config.with_updates(overrides) if overrides else config


# ── Tool: Run Experiment ───────────────────────────────────────────

async def run_experiment(
    config_path: Optional[str] = None,
    config_text: Optional[str] = None,
    overrides: Optional[dict[str, str]] = None,
    write_artifacts: bool = False,
    response_format: ResponseFormat = ResponseFormat.MARKDOWN,
) -> str:
    """Run one experiment and report its summary and per-round trace."""
    try:
        config = _load(config_path, config_text, overrides or {})
        artifacts = Orchestrator().run(config, write=write_artifacts)
        trace, summary = artifacts.trace, artifacts.summary

        if response_format == ResponseFormat.JSON:
            return format_json_response({
                "summary": summary,
                "rounds": [r.model_dump(include={"round", "global_loss", "grad_norm_sq", "uplink_params", "downlink_params"}) for r in trace.records],
                "output_dir": str(artifacts.output_dir) if write_artifacts else None,
            })

        md = f"# 🧪 {trace.method}: {config.run.name}\n\n"
        md += f"**Initial loss:** {summary['initial_loss']:.6g} | **Final loss:** {summary['final_loss']:.6g}\n"
        md += f"**Uplink total:** {summary['total_uplink_params']:,} | **Downlink total:** {summary['total_downlink_params']:,}\n\n"
        md += "| Round | Loss | ‖∇F‖² | Uplink | Downlink |\n"
        md += "|-------|------|-------|--------|----------|\n"
        for r in trace.records:
            md += f"| {r.round} | {r.global_loss:.6g} | {r.grad_norm_sq:.4g} | {r.uplink_params:,} | {r.downlink_params:,} |\n"
        if write_artifacts:
            md += f"\n📁 Artifacts written to `{artifacts.output_dir}`\n"
        return md

    except Exception as e:
        _, message = handle_run_error(e)
        return message


# ── Tool: Cost Table ───────────────────────────────────────────────

async def cost_table(
    config_path: Optional[str] = None,
    config_text: Optional[str] = None,
    overrides: Optional[dict[str, str]] = None,
    format: CostFormat = CostFormat.MARKDOWN,
) -> str:
    """Closed-form per-round communication and memory costs of all four methods."""
    try:
        config = _load(config_path, config_text, overrides or {})
        return Orchestrator().cost_table(config, format)
    except Exception as e:
        _, message = handle_run_error(e)
        return message


# ── Tool: Partition Report ─────────────────────────────────────────

async def partition_report(
    config_path: Optional[str] = None,
    config_text: Optional[str] = None,
    overrides: Optional[dict[str, str]] = None,
    response_format: ResponseFormat = ResponseFormat.MARKDOWN,
) -> str:
    """Per-client label histograms and mean TV distance of the configured partition."""
    try:
        config = _load(config_path, config_text, overrides or {})
        report = Orchestrator().partition_report(config)
        if response_format == ResponseFormat.JSON:
            return format_json_response(report.model_dump())
        return report.to_markdown()
    except Exception as e:
        _, message = handle_run_error(e)
        return message
