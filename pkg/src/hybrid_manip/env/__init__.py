"""Kinematic tabletop-manipulation environment."""

from hybrid_manip.env.scenario_io import BUILTIN_SCENARIOS, dump_scenario, load_scenario, scenario_from_dict
from hybrid_manip.env.sim import (
    Env,
    ObjectSummary,
    RewardWeights,
    WorldSummary,
    check_goal,
    create_env,
    object_on,
    reset,
    step,
    world_summary,
)
from hybrid_manip.env.types import (
    EE_INFLATE,
    GRASP_TOL,
    MAX_STEP,
    Action,
    Color,
    EeNear,
    Grip,
    Gripper,
    Holding,
    NotHolding,
    ObjectOn,
    ObjectSpec,
    Perturbation,
    ScenarioSpec,
    Shape,
    Sorted,
    StepInfo,
    WorkspaceBounds,
)

__all__ = [name for name in dir() if not name.startswith("_")]
