"""Integration layer: subtask sequencing, skill queries, monitoring and replanning."""

from hybrid_manip.integration.executor import (
    EpisodeResult,
    ExecutionConfig,
    build_skill_observation,
    execute_task,
    monitor,
    subtask_success,
    validate_trace,
)
from hybrid_manip.integration.skills import SkillLibrary

__all__ = [
    "EpisodeResult",
    "ExecutionConfig",
    "SkillLibrary",
    "build_skill_observation",
    "execute_task",
    "monitor",
    "subtask_success",
    "validate_trace",
]
