"""Line-delimited JSON traces for golden-file comparisons."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable

from hybrid_manip.env.sim import Env
from hybrid_manip.env.types import Action


def _floats(values) -> list[float]:
    return [float(v) for v in values]


def rollout_trace(env: Env, actions: Iterable[Action]) -> list[dict]:
    """Reset ``env`` and apply ``actions`` until they run out or the episode ends."""
    records = [{"step": 0, "observation": _floats(env.reset())}]
    for action in actions:
        if env.done:
            break
        obs, reward, done, info = env.step(action)
        records.append(
            {
                "step": env.step_count,
                "action": {"delta": _floats(action.delta), "grip": action.grip.value},
                "observation": _floats(obs),
                "reward": reward,
                "done": done,
                "collision": info.collision,
                "fired": info.fired_perturbations,
            }
        )
    return records


def dumps_jsonl(records: Iterable[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)


def write_jsonl(records: Iterable[dict], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_jsonl(records))
    return path


def read_jsonl(path: str | Path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]
