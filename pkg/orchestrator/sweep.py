"""Cross-product sweeps over J, K, α, method and r.

Every grid point runs once per repeat with a master seed derived from the
repeat index only, so different grid points see the same seeds.
"""

import csv
import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from config.run_config import GridSpec, RunConfig
from config.settings import settings
from shared.errors import InvalidConfigurationError
from shared.rng import derive_seed
from shared.utils import format_json_response
from simulator.accounting.models import Method
from simulator.federation.models import TRACE_COLUMNS, TrainingTrace
from orchestrator.orchestrator import Orchestrator

logger = logging.getLogger(__name__)

PARTIAL_FAILURE_EXIT = 4
COMPARISON_FILE = "comparison.csv"
SWEEP_SUMMARY_FILE = "sweep_summary.json"
LABEL_COLUMNS = ["method", "K", "J", "I", "r", "alpha"]


@dataclass
class SweepPoint:
    index: int
    repeat: int
    labels: dict[str, Any]
    config: RunConfig


@dataclass
class SweepResult:
    output_dir: Path
    points: list[SweepPoint]
    traces: dict[int, TrainingTrace] = field(default_factory=dict)
    failures: list[dict] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return PARTIAL_FAILURE_EXIT if self.failures else 0

    def group_means(self) -> list[dict]:
        """Mean final loss per label combination, over repeats that succeeded."""
        groups: dict[tuple, list[float]] = {}
        labels_of: dict[tuple, dict] = {}
        for point in self.points:
            key = tuple(point.labels[c] for c in LABEL_COLUMNS)
            labels_of[key] = point.labels
            if point.index in self.traces:
                groups.setdefault(key, []).append(self.traces[point.index].final_loss)
        return [
            {**labels_of[key], "runs": len(groups.get(key, [])), "mean_final_loss": float(np.mean(groups[key])) if groups.get(key) else None}
            for key in labels_of
        ]


def _point_updates(base: RunConfig, method: Method, K: int, J: Optional[int], r: int, alpha: Optional[str]) -> dict[str, Any]:
    updates: dict[str, Any] = {"federation.method": method.value, "federation.K": K, "sketch.rank": r}
    if method in (Method.FEDIT, Method.FFA_LORA):
        updates["lora.rank"] = r
    if J is not None:
        updates["federation.interval_length"] = J
        if base.federation.enforce_budget:
            budget = base.federation.local_iterations
            if budget % J:
                raise InvalidConfigurationError(f"J={J} does not divide the budget {budget}", field="grid.J")
            updates["federation.intervals"] = budget // J
    if alpha is not None:
        if alpha.lower() == "iid":
            updates["partition.mode"] = "iid"
            updates["partition.alpha"] = None
        else:
            updates["partition.mode"] = "dirichlet"
            updates["partition.alpha"] = float(alpha)
    return updates


def expand_grid(base: RunConfig, grid: GridSpec) -> list[SweepPoint]:
    """All grid points × repeats, validated before anything runs."""
    methods = grid.method or [base.federation.method]
    Ks = grid.K or [base.federation.K]
    Js = grid.J or [None]
    rs = grid.r or [base.sketch.rank]
    alphas = grid.alpha or [None]

    points = []
    for method, K, J, r, alpha in itertools.product(methods, Ks, Js, rs, alphas):
        updates = _point_updates(base, method, K, J, r, alpha)
        for repeat in range(grid.repeats):
            index = len(points)
            run_updates = {
                **updates,
                "run.master_seed": derive_seed(base.run.master_seed, "sweep", repeat),
                "run.name": f"{base.run.name}-{index:04d}",
                "run.output_dir": None,
            }
            config = base.with_updates(run_updates)
            labels = {
                "method": method.value,
                "K": K,
                "J": config.federation.interval_length,
                "I": config.federation.intervals,
                "r": r,
                "alpha": alpha if alpha is not None else (
                    str(base.partition.alpha) if base.partition.mode.value == "dirichlet" else "iid"
                ),
            }
            points.append(SweepPoint(index=index, repeat=repeat, labels=labels, config=config))
    return points


def _write_comparison(path: Path, result: SweepResult) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["point", "repeat", *LABEL_COLUMNS, "master_seed", *TRACE_COLUMNS])
        for point in result.points:
            trace = result.traces.get(point.index)
            if trace is None:
                continue
            for r in trace.records:
                writer.writerow([
                    point.index,
                    point.repeat,
                    *(point.labels[c] for c in LABEL_COLUMNS),
                    point.config.run.master_seed,
                    r.round,
                    format(r.global_loss, ".17g"),
                    format(r.grad_norm_sq, ".17g"),
                    r.uplink_params,
                    r.downlink_params,
                    format(r.seconds, ".17g"),
                ])


def run_sweep(
    base: RunConfig,
    grid: GridSpec,
    orchestrator: Optional[Orchestrator] = None,
    output_dir: Optional[str | Path] = None,
    workers: int = settings.workers,
) -> SweepResult:
    """Run every grid point; failures are recorded and the sweep carries on."""
    orchestrator = orchestrator or Orchestrator()
    out = Path(output_dir) if output_dir else orchestrator.output_dir(base)
    points = expand_grid(base, grid)
    result = SweepResult(output_dir=out, points=points)
    logger.info(f"🧪 Sweep over {', '.join(grid.axes) or 'no axes'}: {len(points)} run(s), {workers} worker(s)")

    def run_point(point: SweepPoint):
        try:
            artifacts = orchestrator.run(point.config, output_dir=out / "points" / f"{point.index:04d}")
            return point, artifacts.trace, None
        except Exception as e:
            logger.warning(f"⚠️ Sweep point {point.index} {point.labels} failed: {type(e).__name__}: {e}")
            return point, None, e

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            outcomes = list(executor.map(run_point, points))
    else:
        outcomes = [run_point(p) for p in points]

    for point, trace, error in outcomes:
        if error is None:
            result.traces[point.index] = trace
        else:
            result.failures.append({
                "point": point.index,
                "labels": point.labels,
                "error": str(error),
                "kind": type(error).__name__,
                "exit_code": getattr(error, "exit_code", 1),
            })

    out.mkdir(parents=True, exist_ok=True)
    _write_comparison(out / COMPARISON_FILE, result)
    summary = {
        "points": len(points),
        "succeeded": len(result.traces),
        "failed": len(result.failures),
        "failures": result.failures,
        "groups": result.group_means(),
    }
    (out / SWEEP_SUMMARY_FILE).write_text(format_json_response(summary) + "\n", encoding="utf-8")
    if result.failures:
        logger.warning(f"⚠️ Sweep finished with {len(result.failures)} failed point(s) of {len(points)}")
    else:
        logger.info(f"✅ Sweep finished: {len(points)} run(s) written to {out}")
    return result
