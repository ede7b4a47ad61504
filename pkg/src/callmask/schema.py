"""Function schemas, registries, and call expressions.

Two text formats live here:

* the Python-stub documentation format for a single function::

    def get_flight_details(flight_id):
      '''
      Get detailed information on specific flights, ...
      Args:
        flight_id (string): The flight_id represents the ID of a flight.
      '''

* the call-response format, e.g. ``insta_download_url('https://...')<nexa_end>``.

Both render/parse pairs are exact inverses on valid objects. Registries are
stored as JSON: a top-level list of ``{name, description, args:[{name, type,
description, enum_values?}]}``.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import (
    ArityMismatch,
    DuplicateFunctionName,
    MalformedStub,
    ParseError,
    SchemaViolation,
    TypeMismatch,
    UnknownFunction,
)

END_MARKER = "<nexa_end>"
SENTINEL_NAME = "no_relevant_function"

IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")

KINDS = ("string", "integer", "float", "dict", "boolean", "enum")

# Documentation sources are inconsistent about type words; these are folded
# into canonical kinds at parse time.
_TYPE_ALIASES = {
    "string": "string",
    "str": "string",
    "integer": "integer",
    "int": "integer",
    "float": "float",
    "number": "float",
    "dict": "dict",
    "boolean": "boolean",
    "bool": "boolean",
}

_ENUM_WORD_RE = re.compile(r"enum\[(.*)\]$")

MAX_DICT_DEPTH = 4


def _is_identifier(name: str) -> bool:
    return IDENT_RE.fullmatch(name) is not None


@dataclass(frozen=True)
class ArgType:
    """The declared type of one argument; enum carries its member set."""

    kind: str
    enum_values: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaViolation(f"unknown argument kind {self.kind!r}")
        if self.kind == "enum":
            if not self.enum_values:
                raise SchemaViolation("enum type requires non-empty enum_values")
            if len(set(self.enum_values)) != len(self.enum_values):
                raise SchemaViolation("enum_values must be duplicate-free")
            for v in self.enum_values:
                if "'" in v or "\n" in v:
                    raise SchemaViolation(
                        f"enum value {v!r} cannot contain quotes or newlines"
                    )
        elif self.enum_values is not None:
            raise SchemaViolation("enum_values only allowed for kind='enum'")

    def type_word(self) -> str:
        """Canonical type word used in stub Args blocks."""
        if self.kind == "enum":
            members = ",".join(f"'{v}'" for v in self.enum_values)
            return f"enum[{members}]"
        return self.kind


STRING = ArgType("string")
INTEGER = ArgType("integer")
FLOAT = ArgType("float")
DICT = ArgType("dict")
BOOLEAN = ArgType("boolean")


def parse_type_word(word: str) -> ArgType:
    """Map a stub type word (including aliases) onto an ArgType."""
    word = word.strip()
    enum_match = _ENUM_WORD_RE.fullmatch(word)
    if enum_match:
        body = enum_match.group(1)
        values = re.findall(r"'([^']*)'", body)
        if not values:
            raise MalformedStub(f"enum type word {word!r} lists no values")
        return ArgType("enum", tuple(values))
    kind = _TYPE_ALIASES.get(word.lower())
    if kind is None:
        raise MalformedStub(f"unknown type word {word!r}")
    return ArgType(kind)


@dataclass(frozen=True)
class ArgSpec:
    name: str
    type: ArgType
    description: str

    def __post_init__(self):
        if not _is_identifier(self.name):
            raise SchemaViolation(f"argument name {self.name!r} is not an identifier")
        if "\n" in self.description:
            raise SchemaViolation("argument descriptions must be single-line")


@dataclass(frozen=True)
class FunctionSchema:
    name: str
    description: str
    args: tuple[ArgSpec, ...]

    def __post_init__(self):
        if not _is_identifier(self.name):
            raise SchemaViolation(f"function name {self.name!r} is not an identifier")
        if not self.description.strip():
            raise SchemaViolation(f"function {self.name!r} has an empty description")
        if "\n" in self.description:
            raise SchemaViolation("function descriptions must be single-line")
        object.__setattr__(self, "args", tuple(self.args))
        names = [a.name for a in self.args]
        if len(set(names)) != len(names):
            raise SchemaViolation(f"function {self.name!r} repeats argument names")

    @property
    def arity(self) -> int:
        return len(self.args)


SENTINEL = FunctionSchema(
    name=SENTINEL_NAME,
    description=(
        "Call this when no other provided function can be called to answer "
        "the user query."
    ),
    args=(
        ArgSpec(
            "user_query",
            STRING,
            "The user_query that cannot be answered by any other function calls.",
        ),
    ),
)


@dataclass(frozen=True)
class FunctionRegistry:
    """Ordered function set; always contains the sentinel exactly once."""

    functions: tuple[FunctionSchema, ...]

    def __post_init__(self):
        object.__setattr__(self, "functions", tuple(self.functions))
        names = [f.name for f in self.functions]
        seen = set()
        for n in names:
            if n in seen:
                raise DuplicateFunctionName(f"function {n!r} declared twice")
            seen.add(n)
        if names.count(SENTINEL_NAME) != 1:
            raise SchemaViolation("registry must contain the sentinel exactly once")

    def get(self, name: str) -> FunctionSchema:
        for f in self.functions:
            if f.name == name:
                return f
        raise UnknownFunction(f"function {name!r} is not registered")

    def names(self) -> list[str]:
        return [f.name for f in self.functions]

    def non_sentinel(self) -> list[FunctionSchema]:
        return [f for f in self.functions if f.name != SENTINEL_NAME]

    @property
    def sentinel(self) -> FunctionSchema:
        return self.get(SENTINEL_NAME)


ArgValue = str | int | float | bool | dict


@dataclass(frozen=True)
class CallExpression:
    """A parsed function call: name plus positional literal values."""

    function: str
    arguments: tuple[ArgValue, ...]

    def __post_init__(self):
        object.__setattr__(self, "arguments", tuple(self.arguments))
        if not _is_identifier(self.function):
            raise SchemaViolation(f"call target {self.function!r} is not an identifier")


def sentinel_call(query: str) -> CallExpression:
    return CallExpression(SENTINEL_NAME, (query,))


# --- stub format ------------------------------------------------------------

_DEF_RE = re.compile(r"^\s*def\s+([A-Za-z_][A-Za-z0-9_]*)\s*\(([^)]*)\)\s*:\s*$")
_ARG_LINE_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*\(([^()]+)\)\s*:\s*(.*)$")
_TRIPLE_QUOTES = ("'''", '"""')


def parse_stub(text: str) -> FunctionSchema:
    """Parse one documentation stub into a FunctionSchema.

    Accepts both triple-quote styles and tolerates surrounding blank lines;
    raises MalformedStub when the def header, docstring, or Args block is
    missing or inconsistent.
    """
    lines = text.splitlines()
    header_idx = None
    for i, line in enumerate(lines):
        if line.strip():
            header_idx = i
            break
    if header_idx is None:
        raise MalformedStub("stub is empty")
    header = _DEF_RE.match(lines[header_idx])
    if header is None:
        raise MalformedStub(f"missing def header in {lines[header_idx]!r}")
    name = header.group(1)
    declared = [a.strip() for a in header.group(2).split(",") if a.strip()]
    for a in declared:
        if not _is_identifier(a):
            raise MalformedStub(f"bad parameter name {a!r}")

    body = [ln.strip() for ln in lines[header_idx + 1 :]]
    quote = None
    start = None
    for i, ln in enumerate(body):
        if ln in _TRIPLE_QUOTES:
            quote, start = ln, i
            break
        if ln:
            raise MalformedStub("missing docstring")
    if quote is None:
        raise MalformedStub("missing docstring")
    try:
        end = body.index(quote, start + 1)
    except ValueError:
        raise MalformedStub("unterminated docstring") from None

    doc = body[start + 1 : end]
    if any(ln.strip() for ln in body[end + 1 :]):
        raise MalformedStub("trailing content after docstring")

    desc_lines: list[str] = []
    args_at = None
    for i, ln in enumerate(doc):
        if ln == "Args:":
            args_at = i
            break
        if ln:
            desc_lines.append(ln)
    description = " ".join(desc_lines)
    if not description:
        raise MalformedStub(f"stub for {name!r} has no description")

    specs: list[ArgSpec] = []
    if args_at is not None:
        for ln in doc[args_at + 1 :]:
            if not ln:
                continue
            m = _ARG_LINE_RE.match(ln)
            if m is None:
                raise MalformedStub(f"bad Args line {ln!r}")
            specs.append(ArgSpec(m.group(1), parse_type_word(m.group(2)), m.group(3)))

    by_name = {s.name: s for s in specs}
    if len(by_name) != len(specs):
        raise MalformedStub(f"stub for {name!r} repeats an Args entry")
    if sorted(by_name) != sorted(declared):
        raise MalformedStub(
            f"stub for {name!r}: header parameters {declared} do not match "
            f"Args block {sorted(by_name)}"
        )
    ordered = tuple(by_name[a] for a in declared)
    return FunctionSchema(name, description, ordered)


def render_stub(schema: FunctionSchema) -> str:
    """Render a schema back into stub text (inverse of parse_stub)."""
    params = ", ".join(a.name for a in schema.args)
    out = [f"def {schema.name}({params}):", "  '''", f"  {schema.description}"]
    if schema.args:
        out.append("  Args:")
        for a in schema.args:
            out.append(f"    {a.name} ({a.type.type_word()}): {a.description}")
    out.append("  '''")
    return "\n".join(out)


def parse_stubs(text: str) -> list[FunctionSchema]:
    """Parse a stub file: one or more stubs separated by blank lines."""
    chunks: list[list[str]] = []
    for line in text.splitlines():
        if _DEF_RE.match(line):
            chunks.append([line])
        elif chunks:
            chunks[-1].append(line)
        elif line.strip():
            raise MalformedStub(f"content before first stub: {line!r}")
    return [parse_stub("\n".join(c)) for c in chunks]


# --- registry files ---------------------------------------------------------

def _schema_from_dict(obj: dict) -> FunctionSchema:
    try:
        args = []
        for a in obj.get("args", []):
            if "enum_values" in a:
                argtype = ArgType("enum", tuple(a["enum_values"]))
            else:
                argtype = parse_type_word(a["type"])
            args.append(ArgSpec(a["name"], argtype, a.get("description", "")))
        return FunctionSchema(obj["name"], obj["description"], tuple(args))
    except KeyError as exc:
        raise SchemaViolation(f"registry entry missing field {exc}") from None


def schema_to_dict(schema: FunctionSchema) -> dict:
    entry: dict = {
        "name": schema.name,
        "description": schema.description,
        "args": [],
    }
    for a in schema.args:
        arg: dict = {"name": a.name, "type": a.type.kind, "description": a.description}
        if a.type.kind == "enum":
            arg["enum_values"] = list(a.type.enum_values)
        entry["args"].append(arg)
    return entry


def load_registry(document: str | list) -> FunctionRegistry:
    """Build a registry from JSON text (or an already-parsed list).

    The sentinel is prepended when the document does not declare it.
    """
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise SchemaViolation(f"registry document is not valid JSON: {exc}") from None
    if not isinstance(document, list):
        raise SchemaViolation("registry document must be a top-level list")
    schemas = [_schema_from_dict(o) for o in document]
    if not any(s.name == SENTINEL_NAME for s in schemas):
        schemas.insert(0, SENTINEL)
    return FunctionRegistry(tuple(schemas))


def dump_registry(registry: FunctionRegistry) -> str:
    return json.dumps([schema_to_dict(f) for f in registry.functions], indent=2)


# --- call expressions -------------------------------------------------------

def format_value(value: ArgValue) -> str:
    """Render one literal value in call syntax."""
    if isinstance(value, bool):
        return "True" if value else "False"
    if isinstance(value, str):
        if "'" in value or "\n" in value:
            raise SchemaViolation(
                f"string value {value!r} cannot contain quotes or newlines"
            )
        return f"'{value}'"
    if isinstance(value, int):
        return repr(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise SchemaViolation("float values must be finite")
        return np.format_float_positional(value, unique=True, trim="0")
    if isinstance(value, dict):
        parts = []
        for k, v in value.items():
            parts.append(f"{format_value(k)}: {format_value(v)}")
        return "{" + ", ".join(parts) + "}"
    raise SchemaViolation(f"unsupported value type {type(value).__name__}")


def render_call(call: CallExpression) -> str:
    """Render a call with the trailing end marker, e.g. ``f('x', 2)<nexa_end>``."""
    args = ", ".join(format_value(v) for v in call.arguments)
    return f"{call.function}({args}){END_MARKER}"


class _ValueParser:
    """Recursive-descent reader for literal values inside a call."""

    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, message: str) -> ParseError:
        return ParseError(f"{message} at offset {self.pos} in {self.text!r}")

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def skip_spaces(self):
        while self.peek() == " ":
            self.pos += 1

    def expect(self, ch: str):
        if self.peek() != ch:
            raise self.error(f"expected {ch!r}")
        self.pos += 1

    def value(self, depth: int = 0) -> ArgValue:
        ch = self.peek()
        if ch == "'":
            return self.string()
        if ch == "{":
            return self.dict_literal(depth)
        if ch in "TF":
            return self.boolean()
        if ch == "-" or ch.isdigit():
            return self.number()
        raise self.error("expected a literal value")

    def string(self) -> str:
        self.expect("'")
        start = self.pos
        while True:
            ch = self.peek()
            if ch == "":
                raise self.error("unterminated string")
            if ch == "\n":
                raise self.error("newline inside string")
            if ch == "'":
                body = self.text[start : self.pos]
                self.pos += 1
                return body
            self.pos += 1

    def boolean(self) -> bool:
        for word, result in (("True", True), ("False", False)):
            if self.text.startswith(word, self.pos):
                self.pos += len(word)
                return result
        raise self.error("expected True or False")

    def number(self) -> int | float:
        start = self.pos
        if self.peek() == "-":
            self.pos += 1
        digits = 0
        while self.peek().isdigit():
            self.pos += 1
            digits += 1
        if digits == 0:
            raise self.error("expected digits")
        if self.peek() != ".":
            return int(self.text[start : self.pos])
        self.pos += 1
        frac = 0
        while self.peek().isdigit():
            self.pos += 1
            frac += 1
        if frac == 0:
            raise self.error("expected fraction digits")
        return float(self.text[start : self.pos])

    def dict_literal(self, depth: int) -> dict:
        if depth + 1 > MAX_DICT_DEPTH:
            raise self.error(f"dict nesting deeper than {MAX_DICT_DEPTH}")
        self.expect("{")
        out: dict = {}
        self.skip_spaces()
        if self.peek() == "}":
            self.pos += 1
            return out
        while True:
            key = self.string()
            self.skip_spaces()
            self.expect(":")
            self.skip_spaces()
            out[key] = self.value(depth + 1)
            self.skip_spaces()
            ch = self.peek()
            if ch == "}":
                self.pos += 1
                return out
            self.expect(",")
            self.skip_spaces()


def _value_matches(value: ArgValue, argtype: ArgType) -> bool:
    if argtype.kind == "string":
        return isinstance(value, str)
    if argtype.kind == "integer":
        return isinstance(value, int) and not isinstance(value, bool)
    if argtype.kind == "float":
        return isinstance(value, float)
    if argtype.kind == "boolean":
        return isinstance(value, bool)
    if argtype.kind == "dict":
        return isinstance(value, dict)
    if argtype.kind == "enum":
        return isinstance(value, str) and value in argtype.enum_values
    return False


def validate_call(call: CallExpression, registry: FunctionRegistry) -> FunctionSchema:
    """Check a call against the registry; returns the matching schema."""
    schema = registry.get(call.function)
    if len(call.arguments) != schema.arity:
        raise ArityMismatch(
            f"{call.function} takes {schema.arity} arguments, got {len(call.arguments)}"
        )
    for value, spec in zip(call.arguments, schema.args):
        if not _value_matches(value, spec.type):
            raise TypeMismatch(
                f"{call.function}: argument {spec.name!r} expects "
                f"{spec.type.type_word()}, got {value!r}"
            )
    return schema


def parse_call(text: str, registry: FunctionRegistry) -> CallExpression:
    """Parse response text into a validated CallExpression.

    The trailing ``<nexa_end>`` marker is accepted and stripped. Raises
    ParseError / UnknownFunction / ArityMismatch / TypeMismatch so callers
    can attribute the failure.
    """
    stripped = text.strip()
    if stripped.endswith(END_MARKER):
        stripped = stripped[: -len(END_MARKER)].rstrip()

    m = IDENT_RE.match(stripped)
    if m is None:
        raise ParseError(f"no function name at start of {stripped!r}")
    name = m.group(0)

    # Tolerance is deliberately narrow: spaces are skipped after commas
    # only, so the strict and relaxed match modes stay distinguishable.
    reader = _ValueParser(stripped)
    reader.pos = m.end()
    reader.expect("(")
    values: list[ArgValue] = []
    if reader.peek() == ")":
        reader.pos += 1
    else:
        while True:
            values.append(reader.value())
            if reader.peek() == ")":
                reader.pos += 1
                break
            reader.expect(",")
            reader.skip_spaces()
    if reader.pos != len(stripped):
        raise ParseError(f"trailing text after call: {stripped[reader.pos:]!r}")

    call = CallExpression(name, tuple(values))
    validate_call(call, registry)
    return call
