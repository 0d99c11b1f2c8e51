"""Evaluation batteries, metrics, and report emission."""

from hybrid_manip.bench.metrics import (
    HIGHER_BETTER,
    LOWER_BETTER,
    EpisodeMetrics,
    accuracy,
    adaptability,
    improvement,
    mean_completion_time,
)
from hybrid_manip.bench.report import BenchReport, emit_learning_curve, emit_report, run_benchmark, write_report
from hybrid_manip.bench.runner import Condition, ConditionSpec, hybrid_llm, hybrid_rule_based, rl_only

__all__ = [
    "HIGHER_BETTER",
    "LOWER_BETTER",
    "BenchReport",
    "Condition",
    "ConditionSpec",
    "EpisodeMetrics",
    "accuracy",
    "adaptability",
    "emit_learning_curve",
    "emit_report",
    "hybrid_llm",
    "hybrid_rule_based",
    "improvement",
    "mean_completion_time",
    "rl_only",
    "run_benchmark",
    "write_report",
]
