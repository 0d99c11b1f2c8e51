"""Instruction parsing, rule-based and LLM task planning, and replanning."""

from hybrid_manip.planner.grammar import (
    NamedLocation,
    ObjectRef,
    ParsedCommandList,
    format_commands,
    parse_instruction,
)
from hybrid_manip.planner.llm import LlmClient, LlmExchange, LlmPlanner, plan_llm
from hybrid_manip.planner.plan import (
    AvoidRegion,
    FailureInfo,
    Grasp,
    MoveTo,
    PlaceOn,
    Release,
    RuleBasedPlanner,
    TaskPlan,
    plan_rule_based,
    replan,
    validate_plan,
)
from hybrid_manip.planner.prompt import render_prompt

__all__ = [
    "AvoidRegion",
    "FailureInfo",
    "Grasp",
    "LlmClient",
    "LlmExchange",
    "LlmPlanner",
    "MoveTo",
    "NamedLocation",
    "ObjectRef",
    "ParsedCommandList",
    "PlaceOn",
    "Release",
    "RuleBasedPlanner",
    "TaskPlan",
    "format_commands",
    "parse_instruction",
    "plan_llm",
    "plan_rule_based",
    "render_prompt",
    "replan",
    "validate_plan",
]
