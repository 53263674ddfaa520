"""FedKRSO simulator: command-line entrypoint.

Usage:
    python -m orchestrator.main run <config>
    python -m orchestrator.main sweep <config> <grid>
    python -m orchestrator.main costs <config> [--format markdown|csv|json]
    python -m orchestrator.main partition-report <config> [--format markdown|json]
    python -m orchestrator.main replay <manifest.json>

Exit codes: 0 success, 2 configuration error, 3 divergence, 4 partial sweep failure.
"""

import sys
import os
import argparse
import logging
from typing import Optional

# Add project root to path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from config.run_config import load_grid, load_run_config
from config.settings import settings
from shared.utils import format_json_response, handle_run_error
from orchestrator.orchestrator import Orchestrator
from orchestrator.sweep import run_sweep

logger = logging.getLogger(__name__)


# ── Subcommands ────────────────────────────────────────────────────

def _cmd_run(args, orchestrator: Orchestrator) -> int:
    config = load_run_config(args.config)
    artifacts = orchestrator.run(config, output_dir=args.output_dir)
    print(format_json_response({
        "output_dir": str(artifacts.output_dir),
        "rounds": artifacts.summary["rounds"],
        "final_loss": artifacts.summary["final_loss"],
    }))
    return 0


def _cmd_sweep(args, orchestrator: Orchestrator) -> int:
    config = load_run_config(args.config)
    grid = load_grid(args.grid)
    result = run_sweep(config, grid, orchestrator, output_dir=args.output_dir, workers=args.workers)
    print(format_json_response({
        "output_dir": str(result.output_dir),
        "points": len(result.points),
        "failed": len(result.failures),
    }))
    return result.exit_code


def _cmd_costs(args, orchestrator: Orchestrator) -> int:
    config = load_run_config(args.config)
    print(orchestrator.cost_table(config, args.format), end="")
    return 0


def _cmd_partition_report(args, orchestrator: Orchestrator) -> int:
    config = load_run_config(args.config)
    report = orchestrator.partition_report(config)
    if args.format == "json":
        print(format_json_response(report.model_dump()))
    else:
        print(report.to_markdown(), end="")
    return 0


def _cmd_replay(args, orchestrator: Orchestrator) -> int:
    artifacts = orchestrator.replay(args.manifest, output_dir=args.output_dir)
    print(format_json_response({"output_dir": str(artifacts.output_dir), "final_loss": artifacts.summary["final_loss"]}))
    return 0


# ── Parser ─────────────────────────────────────────────────────────

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedkrso", description="Deterministic federated fine-tuning simulator.")
    parser.add_argument("--output-root", default=None, help="Artifact root (default: $FEDKRSO_OUTPUT_ROOT or 'runs').")
    parser.add_argument("--log-level", default=None, help="Logging level (default: $FEDKRSO_LOG_LEVEL or INFO).")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run one experiment.")
    run.add_argument("config")
    run.add_argument("--output-dir", default=None)
    run.set_defaults(handler=_cmd_run)

    sweep = sub.add_parser("sweep", help="Run a cross-product grid over a base config.")
    sweep.add_argument("config")
    sweep.add_argument("grid")
    sweep.add_argument("--output-dir", default=None)
    sweep.add_argument("--workers", type=int, default=settings.workers, help="Grid points run in parallel.")
    sweep.set_defaults(handler=_cmd_sweep)

    costs = sub.add_parser("costs", help="Closed-form per-round cost table.")
    costs.add_argument("config")
    costs.add_argument("--format", choices=["markdown", "csv", "json"], default="markdown")
    costs.set_defaults(handler=_cmd_costs)

    report = sub.add_parser("partition-report", help="Label heterogeneity of the configured partition.")
    report.add_argument("config")
    report.add_argument("--format", choices=["markdown", "json"], default="markdown")
    report.set_defaults(handler=_cmd_partition_report)

    replay = sub.add_parser("replay", help="Re-run an experiment from its manifest.json.")
    replay.add_argument("manifest")
    replay.add_argument("--output-dir", default=None)
    replay.set_defaults(handler=_cmd_replay)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    level = (args.log_level or settings.log_level).upper()
    if not isinstance(logging.getLevelName(level), int):
        level = "INFO"
    logging.basicConfig(
        level=level,
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        datefmt="%H:%M:%S",
    )
    for problem in settings.validate():
        logger.warning(f"⚠️ {problem}")

    orchestrator = Orchestrator(output_root=args.output_root)
    try:
        return args.handler(args, orchestrator)
    except Exception as e:
        code, message = handle_run_error(e)
        if code == 1:
            logger.error(f"Unexpected error: {e}", exc_info=True)
        print(message, file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
