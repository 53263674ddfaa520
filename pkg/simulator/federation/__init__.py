from simulator.federation.evaluator import ShadowEvaluator
from simulator.federation.experiment import Experiment, build_experiment
from simulator.federation.models import (
    TRACE_COLUMNS,
    ClientState,
    Downlink,
    GlobalAccumulatorSet,
    RoundRecord,
    TrainingTrace,
    Uplink,
)
from simulator.federation.pool import ClientPool
from simulator.federation.protocol import FedKRSOClient, KSeedServer, aggregate, reconstruct_global
from simulator.federation.runners import RUNNERS, run_fedfft, run_fedkrso, run_fedlora, run_method

__all__ = [
    "TRACE_COLUMNS",
    "ClientPool",
    "ClientState",
    "Downlink",
    "Experiment",
    "FedKRSOClient",
    "GlobalAccumulatorSet",
    "KSeedServer",
    "RUNNERS",
    "RoundRecord",
    "ShadowEvaluator",
    "TrainingTrace",
    "Uplink",
    "aggregate",
    "build_experiment",
    "reconstruct_global",
    "run_fedfft",
    "run_fedkrso",
    "run_fedlora",
    "run_method",
]
