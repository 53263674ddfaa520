"""Experiment orchestrator: builds experiments, dispatches methods and writes artifacts.

Artifacts of a run, all under one output directory:
  trace.csv      one row per round
  manifest.json  full config, master seed and code version (enough to replay)
  summary.json   final metrics, totals and the cost model
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from config.run_config import RunConfig
from config.settings import settings
from shared.errors import InvalidConfigurationError
from shared.utils import format_json_response
from simulator import __version__
from simulator.accounting.costs import format_cost_table, round_costs
from simulator.accounting.models import CostFormat, CostReport, Method
from simulator.federation.experiment import Experiment, build_experiment
from simulator.federation.models import TrainingTrace
from simulator.partitioner.models import HeterogeneityReport
from simulator.partitioner.partition import heterogeneity_report
from orchestrator.method_cards import METHOD_REGISTRY

logger = logging.getLogger(__name__)

TRACE_FILE = "trace.csv"
MANIFEST_FILE = "manifest.json"
SUMMARY_FILE = "summary.json"


@dataclass
class RunArtifacts:
    output_dir: Path
    trace: TrainingTrace
    summary: dict
    written: bool = True

    @property
    def trace_path(self) -> Path:
        return self.output_dir / TRACE_FILE

    @property
    def manifest_path(self) -> Path:
        return self.output_dir / MANIFEST_FILE

    @property
    def summary_path(self) -> Path:
        return self.output_dir / SUMMARY_FILE


def capacity_closure(initial_loss: float, method_loss: float, reference_loss: float) -> float:
    """Share of the reference method's loss reduction a method achieves: (L0 − L)/(L0 − L_ref)."""
    gap = initial_loss - reference_loss
    if gap <= 0:
        raise ValueError(f"reference did not reduce the loss (L0={initial_loss}, L_ref={reference_loss})")
    return (initial_loss - method_loss) / gap


def manifest(config: RunConfig) -> dict:
    return {
        "code_version": __version__,
        "numpy_version": np.__version__,
        "method": config.federation.method.value,
        "master_seed": config.run.master_seed,
        "config": config.model_dump(mode="json"),
    }


class Orchestrator:
    """Runs experiments described by RunConfig objects."""

    def __init__(self, output_root: Optional[str | Path] = None):
        self.output_root = Path(output_root or settings.output_root)

    def output_dir(self, config: RunConfig) -> Path:
        if config.run.output_dir:
            return Path(config.run.output_dir)
        return self.output_root / config.run.name

    # ── Building ───────────────────────────────────────────────────

    def build_experiment(self, config: RunConfig) -> Experiment:
        return build_experiment(config)

    def cost_reports(self, config: RunConfig) -> list[CostReport]:
        """Closed-form rows of all four methods at the config's layer dims and sketch rank.

        LoRA rows are skipped when the rank exceeds a layer dimension.
        """
        dims = config.layer_shapes()
        fed = config.federation
        reports = []
        for method in (Method.FEDFFT, Method.FEDIT, Method.FFA_LORA, Method.FEDKRSO):
            try:
                if method == Method.FEDKRSO:
                    reports.append(round_costs(method, dims, config.sketch.rank, K=fed.K, I=fed.intervals))
                else:
                    reports.append(round_costs(method, dims, config.sketch.rank))
            except InvalidConfigurationError as e:
                logger.warning(f"⚠️ Skipping {method.value} cost row: {e}")
        return reports

    def method_costs(self, config: RunConfig) -> CostReport:
        """Cost row of the configured method at the rank it actually trains with."""
        method = config.federation.method
        fed = config.federation
        if method == Method.FEDKRSO:
            return round_costs(method, config.layer_shapes(), config.sketch.rank, K=fed.K, I=fed.intervals)
        rank = config.lora.rank if method in (Method.FEDIT, Method.FFA_LORA) else config.sketch.rank
        return round_costs(method, config.layer_shapes(), rank)

    def cost_table(self, config: RunConfig, format: CostFormat | str = CostFormat.MARKDOWN) -> str:
        return format_cost_table(self.cost_reports(config), format)

    def partition_report(self, config: RunConfig) -> HeterogeneityReport:
        if not config.task.is_classification:
            raise InvalidConfigurationError("heterogeneity reports need a labelled task", field="task.variant")
        exp = self.build_experiment(config)
        return heterogeneity_report(exp.shards, num_classes=config.task.output_dim)

    # ── Running ────────────────────────────────────────────────────

    def run(
        self,
        config: RunConfig,
        output_dir: Optional[str | Path] = None,
        write: bool = True,
        experiment: Optional[Experiment] = None,
    ) -> RunArtifacts:
        """Dispatch the configured method and write its artifacts."""
        card = METHOD_REGISTRY[config.federation.method]
        out = Path(output_dir) if output_dir else self.output_dir(config)
        logger.info(f"🚀 Running {card.name} ({config.run.name}, seed {config.run.master_seed})")

        exp = experiment or self.build_experiment(config)
        trace = card.runner(config, exp)

        summary = trace.summary()
        summary["master_seed"] = config.run.master_seed
        summary["layer_shapes"] = [list(s) for s in exp.model.layer_shapes]
        costs = self.method_costs(config)
        summary["cost_model"] = {
            **costs.model_dump(mode="json", include={"P", "L", "Q", "uplink_params", "downlink_params", "weight_params", "gradient_params", "optstate_params"}),
            **costs.to_bytes(config.run.element_width),
        }
        if exp.partition is not None:
            summary["shard_sizes"] = exp.partition.sizes
            if exp.dataset is not None and exp.dataset.has_labels:
                summary["mean_tv"] = heterogeneity_report(exp.shards, num_classes=config.task.output_dim).mean_tv

        if write:
            out.mkdir(parents=True, exist_ok=True)
            trace.to_csv(out / TRACE_FILE)
            (out / MANIFEST_FILE).write_text(format_json_response(manifest(config)) + "\n", encoding="utf-8")
            (out / SUMMARY_FILE).write_text(format_json_response(summary) + "\n", encoding="utf-8")
            logger.info(f"✅ Wrote {TRACE_FILE}, {MANIFEST_FILE}, {SUMMARY_FILE} to {out}")
        return RunArtifacts(output_dir=out, trace=trace, summary=summary, written=write)

    def replay(self, manifest_path: str | Path, output_dir: Optional[str | Path] = None) -> RunArtifacts:
        """Re-run a manifest; the trace is byte-identical unless wall-clock recording was on."""
        try:
            data = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
            config = RunConfig.model_validate(data["config"])
        except (OSError, ValueError, KeyError) as e:
            raise InvalidConfigurationError(f"unreadable manifest {manifest_path}: {e}") from None
        return self.run(config, output_dir=output_dir)
