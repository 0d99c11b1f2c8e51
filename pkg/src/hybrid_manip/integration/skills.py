"""Skill libraries: oracle controllers or trained checkpoints, behind one interface."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from hybrid_manip.env.types import Action
from hybrid_manip.errors import SkillMissing
from hybrid_manip.integration.oracle import ORACLE_POLICIES
from hybrid_manip.rl.checkpoint import PolicyCheckpoint
from hybrid_manip.rl.skills import SKILLS, act, to_env_action

CHECKPOINT_SUFFIX = ".ckpt"


@dataclass
class SkillLibrary:
    policies: dict[str, Callable[[np.ndarray], Action]] = field(default_factory=dict)
    source: str = "custom"

    @classmethod
    def oracle(cls) -> "SkillLibrary":
        def wrap(skill, fn):
            return lambda obs: to_env_action(skill, fn(obs), obs)

        return cls({s: wrap(s, fn) for s, fn in ORACLE_POLICIES.items()}, "oracle")

    @classmethod
    def from_checkpoints(cls, ckpts: dict[str, PolicyCheckpoint]) -> "SkillLibrary":
        def wrap(ckpt):
            return lambda obs: act(ckpt, obs, deterministic=True)

        return cls({name: wrap(c) for name, c in ckpts.items()}, "checkpoints")

    @classmethod
    def load(cls, directory: str | Path) -> "SkillLibrary":
        """Load every ``<skill>.ckpt`` found in ``directory``."""
        directory = Path(directory)
        ckpts = {}
        for skill in SKILLS:
            path = directory / f"{skill}{CHECKPOINT_SUFFIX}"
            if path.exists():
                ckpts[skill] = PolicyCheckpoint.load(path)
        if not ckpts:
            raise SkillMissing(f"no skill checkpoints in {directory}")
        return cls.from_checkpoints(ckpts)

    def has(self, skill: str) -> bool:
        return skill in self.policies

    def require(self, skills) -> None:
        missing = sorted(set(skills) - set(self.policies))
        if missing:
            raise SkillMissing(f"plan needs untrained skill(s): {', '.join(missing)}")

    def act(self, skill: str, obs: np.ndarray) -> Action:
        try:
            policy = self.policies[skill]
        except KeyError:
            raise SkillMissing(f"no policy for skill {skill!r}") from None
        return policy(obs)
