"""
ArtLang: the articulation language the actor writes.

    part   <name> "<mesh ref>" [scale (sx, sy, sz)];
    place  <child> on <parent> axis <+x|-x|+y|-y|+z|-z> [offset (dx, dy, dz)] [clearance <m>];
    joint  <child> to <parent> <fixed|prismatic|revolute> [axis (ax, ay, az)] [pivot (px, py, pz)] [limit (lower, upper)];

`#` starts a comment. Statement order is evaluation order. The grammar is
frozen in docs/ARTLANG.md.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

from .errors import ArtLangError, SourceLocation
from .urdf import JointKind, JointLimit, UrdfError, fmt

PLACEMENT_AXES = ("+x", "-x", "+y", "-y", "+z", "-z")

Vector = tuple[float, float, float]

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<newline>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<signed_word>[+-][A-Za-z]\w*)
  | (?P<number>[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_]\w*)
  | (?P<punct>[;(),])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    value: str
    location: SourceLocation


@dataclass(frozen=True)
class PartDecl:
    name: str
    mesh_ref: str
    scale: Vector = (1.0, 1.0, 1.0)
    location: Optional[SourceLocation] = field(default=None, compare=False)


@dataclass(frozen=True)
class PlaceStmt:
    child: str
    parent: str
    axis: str
    lateral_offset: Vector = (0.0, 0.0, 0.0)
    clearance: float = 0.0
    location: Optional[SourceLocation] = field(default=None, compare=False)

    def __post_init__(self):
        if self.axis not in PLACEMENT_AXES:
            raise ArtLangError(f"invalid placement axis '{self.axis}'", code="invalid_axis", location=self.location)
        if not self.clearance >= 0.0:
            raise ArtLangError(f"clearance must be non-negative, got {self.clearance}", code="invalid_clearance", location=self.location)

    @property
    def axis_index(self) -> int:
        return "xyz".index(self.axis[1])

    @property
    def axis_sign(self) -> float:
        return 1.0 if self.axis[0] == "+" else -1.0


@dataclass(frozen=True)
class JointStmt:
    child: str
    parent: str
    kind: JointKind
    global_axis: Optional[Vector] = None
    global_pivot: Optional[Vector] = None
    limit: Optional[JointLimit] = None
    location: Optional[SourceLocation] = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind == JointKind.FIXED:
            return
        if self.global_axis is None or math.sqrt(sum(c * c for c in self.global_axis)) < 1e-12:
            raise ArtLangError(f"{self.kind.value} joint on '{self.child}' needs a non-zero axis", code="invalid_joint_axis", location=self.location)
        if self.limit is None:
            raise ArtLangError(f"{self.kind.value} joint on '{self.child}' needs a limit", code="missing_limit", location=self.location)


Statement = Union[PlaceStmt, JointStmt]


@dataclass(frozen=True)
class ArtProgram:
    part_decls: tuple[PartDecl, ...] = ()
    statements: tuple[Statement, ...] = ()

    @property
    def part_names(self) -> list[str]:
        return [p.name for p in self.part_decls]

    def part(self, name: str) -> PartDecl:
        for decl in self.part_decls:
            if decl.name == name:
                return decl
        raise KeyError(name)

    @property
    def placements(self) -> list[PlaceStmt]:
        return [s for s in self.statements if isinstance(s, PlaceStmt)]

    @property
    def joint_statements(self) -> list[JointStmt]:
        return [s for s in self.statements if isinstance(s, JointStmt)]

    def placement_for(self, child: str) -> Optional[PlaceStmt]:
        return next((s for s in self.placements if s.child == child), None)

    def joint_for(self, child: str) -> Optional[JointStmt]:
        return next((s for s in self.joint_statements if s.child == child), None)

    def without_joints(self) -> ArtProgram:
        return ArtProgram(self.part_decls, tuple(self.placements))


# ---------------------------------------------------------------- lexing

def tokenize(text: str) -> Iterator[Token]:
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        location = SourceLocation(line, pos - line_start + 1)
        if match is None:
            raise ArtLangError(f"unexpected character {text[pos]!r}", code="syntax_error", location=location)
        kind = match.lastgroup
        if kind == "newline":
            line += 1
            line_start = match.end()
        elif kind not in ("ws", "comment"):
            yield Token(kind, match.group(), location)
        pos = match.end()
    yield Token("eof", "", SourceLocation(line, pos - line_start + 1))


class _Parser:
    def __init__(self, text: str):
        self.tokens = list(tokenize(text))
        self.index = 0

    @property
    def current(self) -> Token:
        return self.tokens[self.index]

    def advance(self) -> Token:
        token = self.current
        self.index += 1
        return token

    def error(self, message: str, token: Optional[Token] = None, code: str = "syntax_error") -> ArtLangError:
        token = token or self.current
        found = "end of input" if token.kind == "eof" else repr(token.value)
        return ArtLangError(f"{message}, found {found}", code=code, location=token.location)

    def expect_word(self, word: str) -> Token:
        if self.current.kind != "ident" or self.current.value != word:
            raise self.error(f"expected '{word}'")
        return self.advance()

    def expect_punct(self, char: str) -> Token:
        if self.current.kind != "punct" or self.current.value != char:
            raise self.error(f"expected '{char}'")
        return self.advance()

    def ident(self, what: str) -> str:
        if self.current.kind != "ident":
            raise self.error(f"expected {what}")
        return self.advance().value

    def number(self) -> float:
        if self.current.kind != "number":
            raise self.error("expected a number")
        return float(self.advance().value)

    def vector(self) -> Vector:
        self.expect_punct("(")
        x = self.number()
        self.expect_punct(",")
        y = self.number()
        self.expect_punct(",")
        z = self.number()
        self.expect_punct(")")
        return (x, y, z)

    def pair(self) -> tuple[float, float]:
        self.expect_punct("(")
        lo = self.number()
        self.expect_punct(",")
        hi = self.number()
        self.expect_punct(")")
        return lo, hi

    def string(self) -> str:
        if self.current.kind != "string":
            raise self.error("expected a quoted mesh reference")
        raw = self.advance().value[1:-1]
        return re.sub(r"\\(.)", r"\1", raw)

    def clauses(self, allowed: tuple[str, ...]) -> dict[str, tuple[Token, object]]:
        seen: dict[str, tuple[Token, object]] = {}
        while not (self.current.kind == "punct" and self.current.value == ";"):
            token = self.current
            if token.kind != "ident" or token.value not in allowed:
                raise self.error(f"expected one of {', '.join(allowed)} or ';'")
            if token.value in seen:
                raise self.error(f"clause '{token.value}' given twice", token)
            self.advance()
            seen[token.value] = (token, self.clause_value(token.value))
        self.advance()
        return seen

    def clause_value(self, name: str):
        if name in ("scale", "offset", "pivot"):
            return self.vector()
        if name == "clearance":
            return self.number()
        if name == "limit":
            return self.pair()
        if name == "axis":
            # placement axes are signed words, joint axes are vectors
            token = self.current
            if token.kind == "signed_word" or token.kind == "ident":
                self.advance()
                if token.value not in PLACEMENT_AXES:
                    raise ArtLangError(f"invalid axis token '{token.value}'", code="invalid_axis", location=token.location)
                return token.value
            return self.vector()
        raise AssertionError(name)

    def parse(self) -> ArtProgram:
        decls: list[PartDecl] = []
        statements: list[Statement] = []
        while self.current.kind != "eof":
            head = self.current
            if head.kind != "ident" or head.value not in ("part", "place", "joint"):
                raise self.error("expected 'part', 'place' or 'joint'")
            self.advance()
            if head.value == "part":
                decls.append(self.part_decl(head))
            elif head.value == "place":
                statements.append(self.place_stmt(head))
            else:
                statements.append(self.joint_stmt(head))
        program = ArtProgram(tuple(decls), tuple(statements))
        check_program(program)
        return program

    def part_decl(self, head: Token) -> PartDecl:
        name = self.ident("a part name")
        mesh_ref = self.string()
        clauses = self.clauses(("scale",))
        scale = clauses["scale"][1] if "scale" in clauses else (1.0, 1.0, 1.0)
        if any(s <= 0 for s in scale):
            raise ArtLangError(f"scale of '{name}' must be positive", code="invalid_scale", location=clauses["scale"][0].location)
        return PartDecl(name, mesh_ref, scale, head.location)

    def place_stmt(self, head: Token) -> PlaceStmt:
        child = self.ident("a child part")
        self.expect_word("on")
        parent = self.ident("a parent part")
        clauses = self.clauses(("axis", "offset", "clearance"))
        if "axis" not in clauses:
            raise ArtLangError("placement needs an axis", code="syntax_error", location=head.location)
        axis_token, axis = clauses["axis"]
        if not isinstance(axis, str):
            raise ArtLangError("placement axis must be one of " + ", ".join(PLACEMENT_AXES), code="invalid_axis", location=axis_token.location)
        return PlaceStmt(
            child=child,
            parent=parent,
            axis=axis,
            lateral_offset=clauses["offset"][1] if "offset" in clauses else (0.0, 0.0, 0.0),
            clearance=clauses["clearance"][1] if "clearance" in clauses else 0.0,
            location=head.location,
        )

    def joint_stmt(self, head: Token) -> JointStmt:
        child = self.ident("a child part")
        self.expect_word("to")
        parent = self.ident("a parent part")
        kind_token = self.current
        kind_name = self.ident("a joint kind")
        try:
            kind = JointKind(kind_name)
        except ValueError:
            raise ArtLangError(f"unknown joint kind '{kind_name}'", code="unknown_joint_type", location=kind_token.location)
        clauses = self.clauses(("axis", "pivot", "limit"))
        axis = clauses["axis"][1] if "axis" in clauses else None
        if isinstance(axis, str):
            raise ArtLangError("joint axis must be a vector", code="invalid_axis", location=clauses["axis"][0].location)
        limit = None
        if "limit" in clauses:
            try:
                limit = JointLimit(*clauses["limit"][1])
            except UrdfError as exc:
                raise ArtLangError(exc.message, code="invalid_limit", location=clauses["limit"][0].location)
        return JointStmt(
            child=child,
            parent=parent,
            kind=kind,
            global_axis=axis,
            global_pivot=clauses["pivot"][1] if "pivot" in clauses else None,
            limit=limit,
            location=head.location,
        )


def check_program(program: ArtProgram) -> None:
    declared: set[str] = set()
    for decl in program.part_decls:
        if decl.name in declared:
            raise ArtLangError(f"part '{decl.name}' declared twice", code="duplicate_part", location=decl.location)
        declared.add(decl.name)
    placed: set[str] = set()
    jointed: set[str] = set()
    for stmt in program.statements:
        for ref in (stmt.child, stmt.parent):
            if ref not in declared:
                raise ArtLangError(f"undeclared part '{ref}'", code="undeclared_part", location=stmt.location)
        if stmt.child == stmt.parent:
            raise ArtLangError(f"part '{stmt.child}' cannot attach to itself", code="self_reference", location=stmt.location)
        seen = placed if isinstance(stmt, PlaceStmt) else jointed
        if stmt.child in seen:
            code = "duplicate_placement" if isinstance(stmt, PlaceStmt) else "duplicate_joint"
            raise ArtLangError(f"part '{stmt.child}' already has a {'placement' if seen is placed else 'joint'}", code=code, location=stmt.location)
        seen.add(stmt.child)


def parse_artlang(text: str) -> ArtProgram:
    return _Parser(text).parse()


# ---------------------------------------------------------------- printing

def _vec(values) -> str:
    return "(" + ", ".join(fmt(v) for v in values) + ")"


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def format_statement(stmt: Union[PartDecl, Statement]) -> str:
    if isinstance(stmt, PartDecl):
        text = f"part {stmt.name} {_quote(stmt.mesh_ref)}"
        if tuple(stmt.scale) != (1.0, 1.0, 1.0):
            text += f" scale {_vec(stmt.scale)}"
    elif isinstance(stmt, PlaceStmt):
        text = f"place {stmt.child} on {stmt.parent} axis {stmt.axis}"
        if any(c != 0.0 for c in stmt.lateral_offset):
            text += f" offset {_vec(stmt.lateral_offset)}"
        if stmt.clearance != 0.0:
            text += f" clearance {fmt(stmt.clearance)}"
    else:
        text = f"joint {stmt.child} to {stmt.parent} {stmt.kind.value}"
        if stmt.global_axis is not None:
            text += f" axis {_vec(stmt.global_axis)}"
        if stmt.global_pivot is not None:
            text += f" pivot {_vec(stmt.global_pivot)}"
        if stmt.limit is not None:
            text += f" limit {_vec((stmt.limit.lower, stmt.limit.upper))}"
    return text + ";"


def format_program(program: ArtProgram) -> str:
    """Canonical source: declarations first, then statements in evaluation order."""
    lines = [format_statement(d) for d in program.part_decls]
    lines += [format_statement(s) for s in program.statements]
    return "\n".join(lines) + "\n"
