"""Episode metrics and the improvement formula used in the comparison table."""

from __future__ import annotations

from dataclasses import asdict, dataclass

from hybrid_manip.errors import EmptySet, ZeroBaseline

LOWER_BETTER = "lower_better"
HIGHER_BETTER = "higher_better"


@dataclass(frozen=True)
class EpisodeMetrics:
    scenario: str
    condition: str
    episode: int
    seed: int
    perturbed: bool
    success: bool
    steps: int
    completion_time_s: float
    replans: int
    cumulative_reward: float
    error: str | None = None

    def __post_init__(self):
        if self.completion_time_s < 0:
            raise ValueError("completion_time_s must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


def _rate(episodes) -> float:
    return 100.0 * sum(1 for e in episodes if e.success) / len(episodes)


def accuracy(episodes) -> float:
    """Success rate, in percent, over unperturbed episodes."""
    pool = [e for e in episodes if not e.perturbed]
    if not pool:
        raise EmptySet("accuracy needs at least one unperturbed episode")
    return _rate(pool)


def adaptability(episodes) -> float:
    """Success rate, in percent, over perturbed episodes."""
    pool = [e for e in episodes if e.perturbed]
    if not pool:
        raise EmptySet("adaptability needs at least one perturbed episode")
    return _rate(pool)


def mean_completion_time(episodes) -> float:
    """Mean completion time in seconds over successful episodes."""
    times = [e.completion_time_s for e in episodes if e.success]
    if not times:
        raise EmptySet("no successful episodes to time")
    return sum(times) / len(times)


def censored_completion_time(episodes, limit_s: float) -> float:
    """Mean time with failed episodes counted at the episode limit.

    A lower bound on the true mean when some episodes never finish.
    """
    if not episodes:
        raise EmptySet("no episodes")
    return sum(e.completion_time_s if e.success else limit_s for e in episodes) / len(episodes)


def improvement(baseline: float, treatment: float, direction: str) -> float:
    """Percent improvement of ``treatment`` over ``baseline``, full precision."""
    if baseline == 0:
        raise ZeroBaseline("improvement is undefined for a zero baseline")
    if direction == LOWER_BETTER:
        return 100.0 * (baseline - treatment) / baseline
    if direction == HIGHER_BETTER:
        return 100.0 * (treatment - baseline) / baseline
    raise ValueError(f"direction must be {LOWER_BETTER!r} or {HIGHER_BETTER!r}, got {direction!r}")
