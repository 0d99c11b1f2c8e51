"""Exception hierarchy shared by every subpackage."""

from __future__ import annotations


class HybridManipError(Exception):
    """Base class for all errors raised by hybrid_manip."""


# simulator
class InvalidScenario(HybridManipError):
    pass


class EpisodeFinished(HybridManipError):
    pass


# numerical core / learning
class DimensionMismatch(HybridManipError, ValueError):
    pass


class NonFiniteGradient(HybridManipError, FloatingPointError):
    pass


class NonFiniteLoss(HybridManipError, FloatingPointError):
    pass


class LengthMismatch(HybridManipError, ValueError):
    pass


class EmptyBuffer(HybridManipError):
    pass


class InsufficientReplay(HybridManipError):
    pass


# planning
class ParseError(HybridManipError):
    """Instruction text did not match the command grammar.

    ``position`` is a character offset into the original text and
    ``expected`` lists the tokens that would have been accepted there.
    """

    def __init__(self, message: str, position: int, expected: list[str], text: str = "", token: str = ""):
        super().__init__(message)
        self.position = position
        self.expected = list(expected)
        self.text = text
        self.token = token

    def render(self) -> str:
        """Multi-line rendering with a caret under the offending token."""
        lines = [str(self)]
        if self.text:
            lines.append("  " + self.text)
            lines.append("  " + " " * self.position + "^")
        if self.expected:
            lines.append("expected one of: " + ", ".join(self.expected))
        return "\n".join(lines)


class PlanningError(HybridManipError):
    pass


class UnresolvableRef(PlanningError):
    pass


class AmbiguousRef(PlanningError):
    pass


class InvalidPlan(PlanningError):
    pass


class SchemaError(PlanningError):
    pass


class TransportError(HybridManipError):
    pass


class ReplanLimitExceeded(HybridManipError):
    pass


# integration
class PlannerFailure(HybridManipError):
    pass


class SkillMissing(HybridManipError):
    pass


# bench
class EmptySet(HybridManipError, ValueError):
    pass


class ZeroBaseline(HybridManipError, ZeroDivisionError):
    pass


class ConfigError(HybridManipError):
    pass
