"""Hand-coded proportional-control skill policies.

They read the same skill observation as the learned policies and emit the
same normalized action, so the executor cannot tell them apart.
"""

from __future__ import annotations

import numpy as np

from hybrid_manip.env.types import EE_INFLATE, MAX_STEP
from hybrid_manip.rl.skills import EE_SLOT, OBSTACLE_HALF_SLOT, OBSTACLE_SLOT, TARGET_SLOT

# Extra vertical clearance kept above an obstacle while crossing it.
AVOID_MARGIN = 0.03


def straight_line(rel: np.ndarray) -> np.ndarray:
    """Normalized step along ``rel``; lands exactly on the target once within one step."""
    rel = np.asarray(rel, dtype=np.float64)
    scale = max(MAX_STEP, float(np.max(np.abs(rel))))
    return rel / scale


def segment_hits_box(start: np.ndarray, end: np.ndarray, center: np.ndarray, half: float) -> bool:
    """Slab test: does the segment start->end pass through the axis-aligned cube?"""
    d = end - start
    t0, t1 = 0.0, 1.0
    for axis in range(3):
        lo, hi = center[axis] - half, center[axis] + half
        if abs(d[axis]) < 1e-12:
            if start[axis] < lo or start[axis] > hi:
                return False
            continue
        a, b = (lo - start[axis]) / d[axis], (hi - start[axis]) / d[axis]
        if a > b:
            a, b = b, a
        t0, t1 = max(t0, a), min(t1, b)
        if t0 > t1:
            return False
    return True


def reach(obs: np.ndarray) -> np.ndarray:
    return straight_line(obs[TARGET_SLOT])


def avoid_reach(obs: np.ndarray) -> np.ndarray:
    """Climb over the obstacle when the straight path is blocked, then descend to the target."""
    half = float(obs[OBSTACLE_HALF_SLOT])
    rel_target = obs[TARGET_SLOT]
    if half <= 0.0:
        return straight_line(rel_target)
    ee = obs[EE_SLOT]
    center = ee + obs[OBSTACLE_SLOT]
    target = ee + rel_target
    clearance = half + EE_INFLATE + AVOID_MARGIN
    if not segment_hits_box(ee, target, center, clearance):
        return straight_line(rel_target)
    safe_z = center[2] + clearance
    if ee[2] < safe_z - 1e-9:
        return straight_line(np.array([0.0, 0.0, safe_z - ee[2]]))
    return straight_line(np.array([rel_target[0], rel_target[1], 0.0]))


ORACLE_POLICIES = {"reach": reach, "grasp": reach, "place": reach, "avoid_reach": avoid_reach}
