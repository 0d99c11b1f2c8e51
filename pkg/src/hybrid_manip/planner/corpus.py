"""A deterministic instruction corpus covering every grammar production.

Each entry pairs an instruction with a bundled scenario in which every
reference resolves and every subtask is physically executable, so the
rule-based planner (and any planner claiming to be equivalent to it) must
produce a valid plan for it, and oracle skills must complete that plan.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from hybrid_manip.env.scenario_io import BUILTIN_SCENARIOS, load_scenario
from hybrid_manip.env.sim import Env, WorldSummary
from hybrid_manip.planner.grammar import LOCATIONS

JOINERS = (" and ", ", ", " then ", ", and then ", " and then ")


@dataclass(frozen=True)
class CorpusEntry:
    scenario: str
    instruction: str
    # executing this instruction from the scenario's start state satisfies its goal
    achieves_goal: bool = False


def ref_phrases(world: WorldSummary, graspable: bool | None = None, shape: str | None = None) -> list[str]:
    """Every phrasing that resolves to exactly one object in ``world``."""
    objs = [o for o in world.objects if (graspable is None or o.graspable == graspable) and (shape is None or o.shape == shape)]
    shapes = [o.shape for o in world.objects]
    out = []
    for o in sorted(objs, key=lambda o: o.id):
        out.append(f"the {o.color} {o.shape}")
        if shapes.count(o.shape) == 1:
            out.append(f"the {o.shape}")
    return out


def _world(name: str) -> WorldSummary:
    return Env(load_scenario(name)).world_summary()


def scenario_corpus(name: str) -> list[CorpusEntry]:
    world = _world(name)
    items = ref_phrases(world, graspable=True)
    surfaces = ref_phrases(world, shape="platform")
    obstacles = ref_phrases(world, shape="obstacle")
    # obstacles block motion, so they are never motion targets
    anything = [r for r in ref_phrases(world) if r not in obstacles] + list(LOCATIONS)
    singles = [f"move to {t}" for t in anything]
    singles += [f"pick up {g}" for g in items] + [f"grasp {g}" for g in items]
    if obstacles:
        # transports must route around the obstacle
        singles += [f"pick up {g}, avoid {o} and place it on {s}" for g in items for o in obstacles for s in surfaces]
        singles += [f"grasp {g} then avoid {o} and place it on {s}" for g in items for o in obstacles for s in surfaces]
        singles += [f"avoid {o} and move to {t}" for o in obstacles for t in anything]
    else:
        singles += [f"put {g} on {s}" for g in items for s in surfaces]
        singles += [f"pick up {g} and place it on {s}" for g in items for s in surfaces]
    cubes = {o.color for o in world.objects if o.graspable and o.shape == "cube"}
    platforms = {o.color for o in world.objects if o.shape == "platform"}
    if cubes and cubes <= platforms:
        singles += ["sort the cubes by color", "Sort the cubes by colour"]
    # free-hand motions compose with anything
    motions = [f"move to {loc}" for loc in LOCATIONS]
    pairs = [
        f"{a}{j}{b}"
        for (a, b), j in zip(itertools.product(singles, motions), itertools.cycle(JOINERS))
    ]
    return [CorpusEntry(name, s) for s in singles + pairs]


def goal_corpus() -> list[CorpusEntry]:
    """Instructions whose execution satisfies the scenario goal."""
    entries = []
    for name in BUILTIN_SCENARIOS:
        spec = load_scenario(name)
        entries.append(CorpusEntry(name, spec.instruction, True))
    entries += [
        CorpusEntry("pick_place", "put the red cube on the blue platform", True),
        CorpusEntry("pick_place", "pick up the cube, then place it on the platform.", True),
        CorpusEntry("pick_place", "grasp the red cube and then put it on the blue platform", True),
        CorpusEntry("sort_3", "Sort the cubes by colour.", True),
        CorpusEntry("obstacle_course", "pick up the cube, avoid the obstacle, and place it on the platform", True),
        CorpusEntry("reach_cube", "move to home and then move to the red cube", True),
    ]
    return entries


def full_corpus() -> list[CorpusEntry]:
    entries = []
    for name in BUILTIN_SCENARIOS:
        entries.extend(scenario_corpus(name))
    return entries + goal_corpus()
