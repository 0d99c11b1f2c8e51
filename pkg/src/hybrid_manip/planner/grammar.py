"""Deterministic command grammar for instructions.

::

    instruction := command (sep command)* ["."]
    sep         := [","] ["and"] ["then"]          (at least one of them)
    command     := "pick" "up" ref | "grasp" ref | "place" "it" "on" ref
                 | "put" ref "on" ref | "move" "to" ref
                 | "sort" "the" plural "by" "color" | "avoid" ref
    ref         := "it" | ["the"] [color] noun

Matching is case-insensitive. ``it`` binds to the most recently grasped
reference (pick up, grasp, or the object of put) and is stored resolved, so
the pretty-printer never has to emit it.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

from hybrid_manip.errors import ParseError

COLORS = ("red", "green", "blue", "yellow")
SHAPES = ("cube", "sphere", "platform", "obstacle")
LOCATIONS = ("home", "center")
PLURALS = {"cubes": "cube", "spheres": "sphere"}
COMMAND_WORDS = ("avoid", "grasp", "move", "pick", "place", "put", "sort")
SEPARATORS = (",", "and", "then")

_TOKEN = re.compile(r"\s+|[a-z]+|[,.]|.", re.S)


@dataclass(frozen=True)
class ObjectRef:
    color: str | None = None
    shape: str | None = None
    name: str | None = None

    def __post_init__(self):
        if self.color is None and self.shape is None and self.name is None:
            raise ValueError("ObjectRef needs at least one of color, shape, name")

    def __str__(self) -> str:
        words = [w for w in (self.color, self.shape) if w]
        return " ".join(words) if words else str(self.name)

    def to_dict(self) -> dict:
        return {k: v for k, v in (("color", self.color), ("shape", self.shape), ("name", self.name)) if v is not None}


@dataclass(frozen=True)
class NamedLocation:
    name: str

    def __str__(self) -> str:
        return self.name

    def to_dict(self) -> dict:
        return {"location": self.name}


Target = Union[ObjectRef, NamedLocation]


@dataclass(frozen=True)
class PickUpCmd:
    ref: ObjectRef


@dataclass(frozen=True)
class GraspCmd:
    ref: ObjectRef


@dataclass(frozen=True)
class PlaceOnCmd:
    target: ObjectRef


@dataclass(frozen=True)
class PutCmd:
    ref: ObjectRef
    target: ObjectRef


@dataclass(frozen=True)
class MoveToCmd:
    target: Target


@dataclass(frozen=True)
class SortCmd:
    shape: str


@dataclass(frozen=True)
class AvoidCmd:
    ref: ObjectRef


Command = Union[PickUpCmd, GraspCmd, PlaceOnCmd, PutCmd, MoveToCmd, SortCmd, AvoidCmd]


@dataclass(frozen=True)
class ParsedCommandList:
    commands: tuple[Command, ...]

    def __len__(self) -> int:
        return len(self.commands)

    def __iter__(self):
        return iter(self.commands)


@dataclass(frozen=True)
class _Tok:
    text: str
    pos: int


def tokenize(text: str) -> list[_Tok]:
    lowered = text.lower()
    toks = []
    for m in _TOKEN.finditer(lowered):
        s = m.group()
        if s.isspace():
            continue
        if not (s.isalpha() or s in ",."):
            raise ParseError(f"unexpected character {s!r} at position {m.start()}", m.start(), [], text, text[m.start()])
        toks.append(_Tok(s, m.start()))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = tokenize(text)
        self.i = 0
        self.last_grasped: ObjectRef | None = None

    def peek(self) -> str | None:
        return self.toks[self.i].text if self.i < len(self.toks) else None

    def fail(self, expected) -> ParseError:
        exp = sorted(set(expected))
        if self.i < len(self.toks):
            tok = self.toks[self.i]
            orig = self.text[tok.pos : tok.pos + len(tok.text)]
            return ParseError(f"unexpected token {orig!r} at position {tok.pos}", tok.pos, exp, self.text, orig)
        pos = len(self.text.rstrip())
        return ParseError(f"unexpected end of instruction at position {pos}", pos, exp, self.text, "")

    def expect(self, *words: str) -> str:
        tok = self.peek()
        if tok not in words:
            raise self.fail(words)
        self.i += 1
        return tok

    def accept(self, word: str) -> bool:
        if self.peek() == word:
            self.i += 1
            return True
        return False

    def ref(self, allow_it: bool = True, allow_location: bool = False) -> Target:
        if allow_it and self.peek() == "it":
            if self.last_grasped is None:
                raise self.fail([*COLORS, *SHAPES, "the"])
            self.i += 1
            return self.last_grasped
        had_the = self.accept("the")
        color = None
        if self.peek() in COLORS:
            color = self.expect(*COLORS)
        nouns = list(SHAPES)
        if allow_location and color is None:
            nouns += LOCATIONS
        expected = nouns + ([] if color else list(COLORS)) + ([] if had_the or not allow_it else ["it"])
        if self.peek() not in nouns:
            raise self.fail(expected + ([] if had_the or color else ["the"]))
        noun = self.expect(*nouns)
        if noun in LOCATIONS:
            return NamedLocation(noun)
        return ObjectRef(color=color, shape=noun)

    def command(self) -> Command:
        word = self.peek()
        if word == "pick":
            self.i += 1
            self.expect("up")
            ref = self.ref()
            self.last_grasped = ref
            return PickUpCmd(ref)
        if word == "grasp":
            self.i += 1
            ref = self.ref()
            self.last_grasped = ref
            return GraspCmd(ref)
        if word == "place":
            self.i += 1
            self.expect("it")
            self.expect("on")
            return PlaceOnCmd(self.ref(allow_it=False))
        if word == "put":
            self.i += 1
            ref = self.ref()
            self.last_grasped = ref
            self.expect("on")
            return PutCmd(ref, self.ref(allow_it=False))
        if word == "move":
            self.i += 1
            self.expect("to")
            return MoveToCmd(self.ref(allow_location=True))
        if word == "sort":
            self.i += 1
            self.expect("the")
            plural = self.expect(*PLURALS)
            self.expect("by")
            self.expect("color", "colour")
            return SortCmd(PLURALS[plural])
        if word == "avoid":
            self.i += 1
            return AvoidCmd(self.ref(allow_it=False))
        raise self.fail(COMMAND_WORDS)

    def separator(self) -> bool:
        start = self.i
        self.accept(",")
        self.accept("and")
        self.accept("then")
        return self.i > start

    def parse(self) -> ParsedCommandList:
        if not self.toks:
            raise ParseError("empty instruction", 0, list(COMMAND_WORDS), self.text, "")
        commands = [self.command()]
        while self.i < len(self.toks):
            if self.peek() == "." and self.i == len(self.toks) - 1:
                self.i += 1
                break
            if not self.separator():
                raise self.fail([*SEPARATORS, "."])
            commands.append(self.command())
        return ParsedCommandList(tuple(commands))


def parse_instruction(instr: str) -> ParsedCommandList:
    """Parse an instruction into commands; raises ParseError with position and expected tokens."""
    if not isinstance(instr, str) or not instr.strip():
        raise ParseError("empty instruction", 0, list(COMMAND_WORDS), instr if isinstance(instr, str) else "", "")
    return _Parser(instr).parse()


def _ref_text(ref: Target) -> str:
    if isinstance(ref, NamedLocation):
        return ref.name
    return "the " + " ".join(w for w in (ref.color, ref.shape) if w)


def format_command(cmd: Command) -> str:
    if isinstance(cmd, PickUpCmd):
        return f"pick up {_ref_text(cmd.ref)}"
    if isinstance(cmd, GraspCmd):
        return f"grasp {_ref_text(cmd.ref)}"
    if isinstance(cmd, PlaceOnCmd):
        return f"place it on {_ref_text(cmd.target)}"
    if isinstance(cmd, PutCmd):
        return f"put {_ref_text(cmd.ref)} on {_ref_text(cmd.target)}"
    if isinstance(cmd, MoveToCmd):
        return f"move to {_ref_text(cmd.target)}"
    if isinstance(cmd, SortCmd):
        return f"sort the {cmd.shape}s by color"
    if isinstance(cmd, AvoidCmd):
        return f"avoid {_ref_text(cmd.ref)}"
    raise TypeError(f"not a command: {cmd!r}")


def format_commands(parsed: ParsedCommandList) -> str:
    """Canonical text for a command list; re-parses to an identical structure."""
    return " and ".join(format_command(c) for c in parsed.commands)
