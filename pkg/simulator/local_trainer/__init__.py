from simulator.local_trainer.models import (
    LearningRateSchedule,
    LocalAccumulatorSet,
    LocalConfig,
    LocalTrainingResult,
    MomentState,
    ScheduleKind,
)
from simulator.local_trainer.trainer import (
    LocalTrainer,
    local_step,
    local_training,
    moment_step,
    peak_state_parameter_count,
)

__all__ = [
    "LearningRateSchedule",
    "LocalAccumulatorSet",
    "LocalConfig",
    "LocalTrainer",
    "LocalTrainingResult",
    "MomentState",
    "ScheduleKind",
    "local_step",
    "local_training",
    "moment_step",
    "peak_state_parameter_count",
]
