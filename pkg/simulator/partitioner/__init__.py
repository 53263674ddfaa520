from simulator.partitioner.models import (
    MAX_PARTITION_RETRIES,
    HeterogeneityReport,
    Partition,
    PartitionMode,
    PartitionSpec,
)
from simulator.partitioner.partition import apply, heterogeneity_report, split

__all__ = [
    "MAX_PARTITION_RETRIES",
    "HeterogeneityReport",
    "Partition",
    "PartitionMode",
    "PartitionSpec",
    "apply",
    "heterogeneity_report",
    "split",
]
