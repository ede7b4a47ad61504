"""Incremental recognizers for argument-value lexemes.

A matcher consumes one character at a time and reports whether the text so
far can still extend to a valid literal of its argument type. The decoder
builds the value portion of its token mask from this viability signal.

Lexeme grammars:

* integer  ``-?[0-9]+``
* float    ``-?[0-9]+\\.[0-9]+`` (digits required on both sides of the dot)
* string   ``'`` body ``'`` where body excludes the quote and newline
* boolean  ``True`` | ``False``
* enum     quote-delimited member of the declared value set
* dict     balanced ``{}`` with string keys, ``': '`` / ``', '`` separators,
           values from the scalar lexemes or nested dicts up to depth 4

Dead states are absorbing; a viable-complete state means the consumed text
is already a full literal (it may still be extendable, e.g. ``42`` -> ``420``).
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass

from .errors import DeadState
from .schema import MAX_DICT_DEPTH, ArgType
from .trie import Trie, TrieNode


class MatchStatus(enum.Enum):
    VIABLE_INCOMPLETE = "viable-incomplete"
    VIABLE_COMPLETE = "viable-complete"
    DEAD = "dead"


DIGITS = frozenset("0123456789")

# A viable-character set is either inclusive ("in", chars) or complementary
# ("not_in", chars) so unbounded alphabets (string bodies) stay finite.
IN = "in"
NOT_IN = "not_in"

NOTHING = (IN, frozenset())


def union_chars(a: tuple[str, frozenset], extra: frozenset) -> tuple[str, frozenset]:
    mode, chars = a
    if mode == IN:
        return (IN, chars | extra)
    return (NOT_IN, chars - extra)


def char_allowed(viable: tuple[str, frozenset], ch: str) -> bool:
    mode, chars = viable
    return (ch in chars) if mode == IN else (ch not in chars)


@functools.lru_cache(maxsize=None)
def _enum_trie(values: tuple[str, ...]) -> Trie:
    return Trie(f"'{v}'" for v in values).freeze()


# --- scalar machines ---------------------------------------------------------
# Each machine is an immutable tuple; advancing returns a new tuple or None
# for dead. "num" accepts both integer and float shapes (dict values may be
# either, and the distinction only settles when a dot arrives).

def _scalar_start(kind: str, ch: str):
    if kind in ("int", "float", "num"):
        if ch == "-":
            return (kind, "minus")
        if ch in DIGITS:
            return (kind, "int")
        return None
    if kind == "str":
        return (kind, "body") if ch == "'" else None
    if kind == "bool":
        return (kind, ch) if ch in ("T", "F") else None
    raise AssertionError(kind)


def _scalar_advance(machine: tuple, ch: str):
    kind, state = machine[0], machine[1]
    if kind in ("int", "float", "num"):
        if state == "minus":
            return (kind, "int") if ch in DIGITS else None
        if state == "int":
            if ch in DIGITS:
                return machine
            if ch == "." and kind in ("float", "num"):
                return (kind, "dot")
            return None
        if state == "dot":
            return (kind, "frac") if ch in DIGITS else None
        if state == "frac":
            return machine if ch in DIGITS else None
    if kind == "str":
        if state == "body":
            if ch == "'":
                return (kind, "closed")
            if ch == "\n":
                return None
            return machine
        return None  # closed strings do not extend
    if kind == "bool":
        prefix = state + ch
        if any(w.startswith(prefix) for w in ("True", "False")):
            return (kind, prefix)
        return None
    raise AssertionError(kind)


def _scalar_complete(machine: tuple) -> bool:
    kind, state = machine[0], machine[1]
    if kind == "int":
        return state == "int"
    if kind == "float":
        return state == "frac"
    if kind == "num":
        return state in ("int", "frac")
    if kind == "str":
        return state == "closed"
    if kind == "bool":
        return state in ("True", "False")
    raise AssertionError(kind)


def _scalar_viable(machine: tuple) -> tuple[str, frozenset]:
    kind, state = machine[0], machine[1]
    if kind in ("int", "float", "num"):
        if state == "minus":
            return (IN, DIGITS)
        if state == "int":
            if kind == "int":
                return (IN, DIGITS)
            return (IN, DIGITS | {"."})
        if state in ("dot", "frac"):
            return (IN, DIGITS)
    if kind == "str":
        if state == "body":
            return (NOT_IN, frozenset("\n"))
        return NOTHING
    if kind == "bool":
        nxt = {w[len(state)] for w in ("True", "False") if w.startswith(state) and len(w) > len(state)}
        return (IN, frozenset(nxt))
    raise AssertionError(kind)


_SCALAR_START_CHARS = frozenset("'-TF") | DIGITS


# --- dict machine -------------------------------------------------------------
# State: ("dict", frames, closed). Each frame is one open brace: (micro, sub)
# where micro names what comes next and sub is a scalar machine when a key or
# scalar value is mid-flight.

def _dict_new() -> tuple:
    return ("dict", (), False)


def _dict_advance(machine: tuple, ch: str):
    _, frames, closed = machine
    if closed:
        return None
    if not frames:
        return ("dict", ((("key_or_close"), None),), False) if ch == "{" else None

    micro, sub = frames[-1]

    def replace(micro2, sub2=None):
        return ("dict", frames[:-1] + ((micro2, sub2),), False)

    def pop():
        rest = frames[:-1]
        if not rest:
            return ("dict", (), True)
        parent_micro, _ = rest[-1]
        assert parent_micro == "value_dict"
        return ("dict", rest[:-1] + (("after_value", None),), False)

    if micro == "key_or_close":
        if ch == "'":
            return replace("key", ("str", "body"))
        if ch == "}":
            return pop()
        return None
    if micro == "key":
        nxt = _scalar_advance(sub, ch)
        if nxt is None:
            return None
        if nxt[1] == "closed":
            return replace("colon")
        return replace("key", nxt)
    if micro == "colon":
        return replace("space_v") if ch == ":" else None
    if micro == "space_v":
        return replace("value_start") if ch == " " else None
    if micro == "value_start":
        if ch == "{":
            if len(frames) >= MAX_DICT_DEPTH:
                return None
            return ("dict", frames[:-1] + (("value_dict", None), ("key_or_close", None)), False)
        if ch == "'":
            return replace("scalar", ("str", "body"))
        if ch == "-":
            return replace("scalar", ("num", "minus"))
        if ch in DIGITS:
            return replace("scalar", ("num", "int"))
        if ch in "TF":
            return replace("scalar", ("bool", ch))
        return None
    if micro == "scalar":
        nxt = _scalar_advance(sub, ch)
        if nxt is not None:
            return replace("scalar", nxt)
        if _scalar_complete(sub):
            if ch == ",":
                return replace("comma_space")
            if ch == "}":
                return pop()
        return None
    if micro == "after_value":
        if ch == ",":
            return replace("comma_space")
        if ch == "}":
            return pop()
        return None
    if micro == "comma_space":
        return replace("key_quote") if ch == " " else None
    if micro == "key_quote":
        return replace("key", ("str", "body")) if ch == "'" else None
    raise AssertionError(micro)


def _dict_complete(machine: tuple) -> bool:
    return machine[2]


def _dict_viable(machine: tuple) -> tuple[str, frozenset]:
    _, frames, closed = machine
    if closed:
        return NOTHING
    if not frames:
        return (IN, frozenset("{"))
    micro, sub = frames[-1]
    if micro == "key_or_close":
        return (IN, frozenset("'}"))
    if micro == "key":
        return _scalar_viable(sub)
    if micro == "colon":
        return (IN, frozenset(":"))
    if micro in ("space_v", "comma_space"):
        return (IN, frozenset(" "))
    if micro == "value_start":
        chars = _SCALAR_START_CHARS
        if len(frames) < MAX_DICT_DEPTH:
            chars = chars | {"{"}
        return (IN, chars)
    if micro == "scalar":
        viable = _scalar_viable(sub)
        if _scalar_complete(sub):
            viable = union_chars(viable, frozenset(",}"))
        return viable
    if micro == "after_value":
        return (IN, frozenset(",}"))
    if micro == "key_quote":
        return (IN, frozenset("'"))
    raise AssertionError(micro)


# --- public matcher -----------------------------------------------------------

@dataclass(frozen=True)
class MatcherState:
    argtype: ArgType
    consumed: str
    status: MatchStatus
    machine: tuple | TrieNode | None

    @property
    def dead(self) -> bool:
        return self.status is MatchStatus.DEAD

    @property
    def complete(self) -> bool:
        return self.status is MatchStatus.VIABLE_COMPLETE


def new_matcher(argtype: ArgType) -> MatcherState:
    """Fresh matcher: nothing consumed, viable and incomplete."""
    if argtype.kind == "enum":
        machine: tuple | TrieNode = _enum_trie(argtype.enum_values).root
    elif argtype.kind == "dict":
        machine = _dict_new()
    elif argtype.kind == "string":
        machine = ("str", "start")
    elif argtype.kind == "integer":
        machine = ("int", "start")
    elif argtype.kind == "float":
        machine = ("float", "start")
    elif argtype.kind == "boolean":
        machine = ("bool", "")
    else:
        raise AssertionError(argtype.kind)
    return MatcherState(argtype, "", MatchStatus.VIABLE_INCOMPLETE, machine)


def _machine_advance(argtype: ArgType, machine, ch: str):
    kind = argtype.kind
    if kind == "enum":
        return machine.children.get(ch)
    if kind == "dict":
        return _dict_advance(machine, ch)
    if machine[1] in ("start", ""):
        if kind == "boolean":
            return _scalar_advance(machine, ch) if machine[1] else _scalar_start("bool", ch)
        return _scalar_start(machine[0], ch)
    return _scalar_advance(machine, ch)


def _machine_complete(argtype: ArgType, machine) -> bool:
    kind = argtype.kind
    if kind == "enum":
        return machine.is_end
    if kind == "dict":
        return _dict_complete(machine)
    if machine[1] in ("start", ""):
        return False
    return _scalar_complete(machine)


def advance(state: MatcherState, ch: str) -> MatcherState:
    """Feed one character; dead states absorb silently."""
    if state.dead:
        return MatcherState(state.argtype, state.consumed + ch, MatchStatus.DEAD, None)
    machine = _machine_advance(state.argtype, state.machine, ch)
    if machine is None:
        return MatcherState(state.argtype, state.consumed + ch, MatchStatus.DEAD, None)
    status = (
        MatchStatus.VIABLE_COMPLETE
        if _machine_complete(state.argtype, machine)
        else MatchStatus.VIABLE_INCOMPLETE
    )
    return MatcherState(state.argtype, state.consumed + ch, status, machine)


def viable_next_chars(state: MatcherState) -> tuple[str, frozenset]:
    """Characters that keep the matcher alive, as (mode, chars).

    Mode "in" lists the viable characters; mode "not_in" lists the killers
    (everything else is viable). Dead states admit nothing.
    """
    if state.dead:
        return NOTHING
    kind = state.argtype.kind
    machine = state.machine
    if kind == "enum":
        return (IN, frozenset(machine.children))
    if kind == "dict":
        return _dict_viable(machine)
    if machine[1] == "start":
        if kind == "string":
            return (IN, frozenset("'"))
        return (IN, DIGITS | {"-"})
    if kind == "boolean" and machine[1] == "":
        return (IN, frozenset("TF"))
    return _scalar_viable(machine)


def feed(state: MatcherState, text: str) -> MatcherState:
    for ch in text:
        if state.dead:
            break
        state = advance(state, ch)
    return state


def allowed_continuations(state: MatcherState, candidates: list[str]) -> list[bool]:
    """Entry i is True iff feeding candidates[i] keeps the state viable."""
    if state.dead:
        raise DeadState("cannot extend a dead matcher")
    out = []
    for cand in candidates:
        out.append(not feed(state, cand).dead)
    return out
