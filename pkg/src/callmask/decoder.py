"""Mask-constrained greedy decoding over the call-response grammar.

A decode session tracks a grammar cursor over the response language::

    function_name '(' value (', ' value)* ')' '<nexa_end>'

At each step the engine asks the language model for a next-token
distribution, zeroes out every token whose characters would make the
response ungrammatical, and takes the argmax of the surviving mass. A token
may cross grammar boundaries (finish a value, emit the separator, and start
the next value) as long as the full character simulation stays viable.

The unmasked baseline decodes by raw argmax with no grammar, so its output
can be arbitrarily malformed; that gap is what the benchmark measures.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from . import typematch
from .errors import (
    BudgetExhausted,
    ConstraintDeadlock,
    InvalidDistribution,
    MaskedTokenStep,
    UnspellableRegistry,
)
from .schema import (
    END_MARKER,
    CallExpression,
    FunctionRegistry,
    parse_call,
)
from .trie import PrefixSet, Trie, build_prefix_set

DEFAULT_MAX_TOKENS = 512

_IDENT_CHARS = frozenset(
    "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_"
)

# Phase names. OpenParen is the zero-arity wait state: for functions with
# arguments the cursor moves straight from the '(' into Value(0) with a
# fresh matcher.
FUNCTION_NAME = "FunctionName"
OPEN_PAREN = "OpenParen"
VALUE = "Value"
SEPARATOR = "Separator"
END = "EndMarker"
DONE = "Done"


class LanguageModelInterface(Protocol):
    """Anything that maps emitted-token context to a next-token distribution."""

    def next_distribution(self, context: tuple[int, ...]) -> np.ndarray: ...


@dataclass(frozen=True)
class Vocabulary:
    """Ordered token strings; a token's id is its position."""

    tokens: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if not self.tokens:
            raise ValueError("vocabulary cannot be empty")
        for t in self.tokens:
            if not isinstance(t, str) or not t:
                raise ValueError(f"bad token {t!r}: tokens are non-empty strings")
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})
        object.__setattr__(self, "_max_len", max(len(t) for t in self.tokens))
        object.__setattr__(self, "_charset", frozenset("".join(self.tokens)))

    def __len__(self) -> int:
        return len(self.tokens)

    def token(self, token_id: int) -> str:
        return self.tokens[token_id]

    def id_of(self, token: str) -> int:
        return self._index[token]

    @property
    def charset(self) -> frozenset[str]:
        return self._charset

    def tokenize(self, text: str) -> list[int]:
        """Greedy longest-match tokenization; raises on uncoverable text."""
        out: list[int] = []
        i = 0
        while i < len(text):
            for length in range(min(self._max_len, len(text) - i), 0, -1):
                tid = self._index.get(text[i : i + length])
                if tid is not None:
                    out.append(tid)
                    i += length
                    break
            else:
                raise ValueError(f"text not spellable at offset {i}: {text[i:i+8]!r}")
        return out

    def decode(self, token_ids) -> str:
        return "".join(self.tokens[t] for t in token_ids)

    @classmethod
    def char_level(cls, chars) -> "Vocabulary":
        return cls(tuple(dict.fromkeys(chars)))

    @classmethod
    def printable_ascii(cls) -> "Vocabulary":
        """One token per printable ASCII character.

        Closing/structural characters get the lowest ids so that argmax
        tie-breaking (lowest id wins) steers flat distributions toward
        finishing values instead of padding them forever. The dot precedes
        the digits for the same reason: a float stuck in its integer part
        must reach the fraction before it can ever complete.
        """
        head = "')},: ({<>.0123456789-"
        rest = [
            chr(c)
            for c in range(32, 127)
            if chr(c) not in head and chr(c).islower()
        ]
        rest += [
            chr(c)
            for c in range(32, 127)
            if chr(c) not in head and chr(c).isupper()
        ]
        rest += [
            chr(c) for c in range(32, 127) if chr(c) not in head + "".join(rest)
        ]
        return cls(tuple(head) + tuple(rest))


@dataclass(frozen=True)
class MaskVector:
    """Boolean vector over the vocabulary: True = kept (V1), False = masked (V2)."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=bool)
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def cardinality(self) -> int:
        return int(self.values.sum())

    def v1_indices(self) -> np.ndarray:
        return np.flatnonzero(self.values)

    def v2_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.values)

    @classmethod
    def full(cls, size: int) -> "MaskVector":
        return cls(np.ones(size, dtype=bool))


class _Tables:
    """Immutable per-session lookup structures shared by all cursor clones."""

    __slots__ = ("registry", "vocab", "name_trie", "name_prefixes", "words")

    def __init__(self, registry: FunctionRegistry, vocab: Vocabulary):
        self.registry = registry
        self.vocab = vocab
        names = registry.names()
        self.name_trie = Trie(names).freeze()
        self.name_prefixes: PrefixSet = build_prefix_set(names)
        self.words = frozenset(names)


class GrammarCursor:
    """Position in the response grammar; cheap to clone for token simulation."""

    __slots__ = ("tables", "phase", "node", "name", "schema", "arg_index",
                 "matcher", "end_pos")

    def __init__(self, tables: _Tables):
        self.tables = tables
        self.phase = FUNCTION_NAME
        self.node = tables.name_trie.root
        self.name = ""
        self.schema = None
        self.arg_index = 0
        self.matcher = None
        self.end_pos = 0

    def clone(self) -> "GrammarCursor":
        c = GrammarCursor.__new__(GrammarCursor)
        c.tables = self.tables
        c.phase = self.phase
        c.node = self.node
        c.name = self.name
        c.schema = self.schema
        c.arg_index = self.arg_index
        c.matcher = self.matcher
        c.end_pos = self.end_pos
        return c

    def phase_label(self) -> str:
        if self.phase == VALUE:
            return f"Value({self.arg_index})"
        return self.phase

    def _start_value(self, index: int):
        self.phase = VALUE
        self.arg_index = index
        self.matcher = typematch.new_matcher(self.schema.args[index].type)

    def advance_char(self, ch: str) -> bool:
        """Consume one character; False means the grammar rejects it."""
        if self.phase == FUNCTION_NAME:
            if ch == "(" and self.node.is_end:
                self.schema = self.tables.registry.get(self.name)
                if self.schema.arity == 0:
                    self.phase = OPEN_PAREN
                else:
                    self._start_value(0)
                return True
            nxt = self.node.children.get(ch)
            if nxt is None:
                return False
            self.node = nxt
            self.name += ch
            return True

        if self.phase == OPEN_PAREN:
            if ch == ")":
                self.phase = END
                self.end_pos = 0
                return True
            return False

        if self.phase == VALUE:
            advanced = typematch.advance(self.matcher, ch)
            if not advanced.dead:
                self.matcher = advanced
                return True
            if self.matcher.complete:
                last = self.arg_index == self.schema.arity - 1
                if ch == "," and not last:
                    self.phase = SEPARATOR
                    return True
                if ch == ")" and last:
                    self.phase = END
                    self.end_pos = 0
                    return True
            return False

        if self.phase == SEPARATOR:
            if ch == " ":
                self._start_value(self.arg_index + 1)
                return True
            return False

        if self.phase == END:
            if self.end_pos < len(END_MARKER) and ch == END_MARKER[self.end_pos]:
                self.end_pos += 1
                if self.end_pos == len(END_MARKER):
                    self.phase = DONE
                return True
            return False

        return False  # DONE accepts nothing

    def simulate(self, text: str) -> bool:
        for ch in text:
            if not self.advance_char(ch):
                return False
        return True

    def viable_next_chars(self) -> tuple[str, frozenset]:
        """Single-character viability set, as (mode, chars) like typematch."""
        if self.phase == FUNCTION_NAME:
            chars = frozenset(self.node.children)
            if self.node.is_end:
                chars = chars | {"("}
            return (typematch.IN, chars)
        if self.phase == OPEN_PAREN:
            return (typematch.IN, frozenset(")"))
        if self.phase == VALUE:
            viable = typematch.viable_next_chars(self.matcher)
            if self.matcher.complete:
                last = self.arg_index == self.schema.arity - 1
                viable = typematch.union_chars(viable, frozenset(")" if last else ","))
            return viable
        if self.phase == SEPARATOR:
            return (typematch.IN, frozenset(" "))
        if self.phase == END:
            return (typematch.IN, frozenset(END_MARKER[self.end_pos]))
        return typematch.NOTHING


@dataclass(frozen=True)
class DecodeState:
    """Immutable snapshot of a decode session; step() returns a new one."""

    tables: _Tables
    cursor: GrammarCursor
    emitted: tuple[int, ...]
    char_stream: str

    @property
    def registry(self) -> FunctionRegistry:
        return self.tables.registry

    @property
    def vocab(self) -> Vocabulary:
        return self.tables.vocab

    @property
    def phase(self) -> str:
        return self.cursor.phase

    @property
    def done(self) -> bool:
        return self.cursor.phase == DONE


def _covered(chars, charset: frozenset[str]) -> bool:
    return all(c in charset for c in chars)


def _check_spellable(registry: FunctionRegistry, vocab: Vocabulary):
    cs = vocab.charset
    for schema in registry.functions:
        missing = [c for c in schema.name if c not in cs]
        if missing:
            raise UnspellableRegistry(
                f"{schema.name}: characters {missing!r} appear in no token"
            )
        needed = set("()") | set(END_MARKER)
        if schema.arity >= 2:
            needed |= {",", " "}
        missing = [c for c in sorted(needed) if c not in cs]
        if missing:
            raise UnspellableRegistry(
                f"{schema.name}: structural characters {missing!r} unavailable"
            )
        for arg in schema.args:
            kind = arg.type.kind
            if kind in ("string", "enum") and "'" not in cs:
                raise UnspellableRegistry(f"{schema.name}.{arg.name}: no quote token")
            if kind in ("integer", "float") and not (typematch.DIGITS & cs):
                raise UnspellableRegistry(f"{schema.name}.{arg.name}: no digit tokens")
            if kind == "float" and "." not in cs:
                raise UnspellableRegistry(f"{schema.name}.{arg.name}: no dot token")
            if kind == "boolean" and not (
                _covered("True", cs) or _covered("False", cs)
            ):
                raise UnspellableRegistry(
                    f"{schema.name}.{arg.name}: neither boolean literal spellable"
                )
            if kind == "dict" and not _covered("{}'", cs):
                raise UnspellableRegistry(f"{schema.name}.{arg.name}: no dict tokens")
            if kind == "enum" and not any(
                _covered(v, cs) for v in arg.type.enum_values
            ):
                raise UnspellableRegistry(
                    f"{schema.name}.{arg.name}: no enum member spellable"
                )


def new_session(registry: FunctionRegistry, vocab: Vocabulary) -> DecodeState:
    """Fresh decode state at the start of the response grammar."""
    _check_spellable(registry, vocab)
    tables = _Tables(registry, vocab)
    return DecodeState(tables, GrammarCursor(tables), (), "")


def _token_viable(state: DecodeState, token: str,
                  viable: tuple[str, frozenset]) -> bool:
    if not typematch.char_allowed(viable, token[0]):
        return False
    if len(token) == 1:
        return True
    cursor = state.cursor
    # Fast path: identifier-only tokens inside the name phase reduce to one
    # O(1) prefix-set membership probe.
    if cursor.phase == FUNCTION_NAME and set(token) <= _IDENT_CHARS:
        return state.tables.name_prefixes.membership(cursor.name + token)
    return cursor.clone().simulate(token)


def compute_mask(state: DecodeState) -> MaskVector:
    """Token mask for the current state: True iff the token keeps the
    response grammatical (simulating across phase boundaries as needed)."""
    if state.done:
        raise ValueError("decode already finished; no further tokens to mask")
    viable = state.cursor.viable_next_chars()
    values = np.fromiter(
        (_token_viable(state, tok, viable) for tok in state.vocab.tokens),
        dtype=bool,
        count=len(state.vocab),
    )
    if not values.any():
        raise ConstraintDeadlock(
            f"all {len(values)} tokens masked at phase {state.cursor.phase_label()}"
        )
    return MaskVector(values)


def _masked_distribution(dist: np.ndarray, mask: MaskVector) -> tuple[np.ndarray, bool]:
    product = np.where(mask.values, dist, 0.0)
    total = product.sum()
    if total > 0.0:
        return product / total, False
    fallback = mask.values / mask.cardinality
    return fallback, True


def apply_mask(dist: np.ndarray, mask: MaskVector) -> np.ndarray:
    """Elementwise-mask a distribution and renormalize over the survivors.

    Masked entries are exactly zero; kept entries are rescaled to sum to 1,
    which never moves the argmax. When every kept entry has zero
    probability the result falls back to uniform over the kept set.
    """
    dist = np.asarray(dist, dtype=float)
    if dist.shape != mask.values.shape:
        raise ValueError("distribution and mask sizes differ")
    return _masked_distribution(dist, mask)[0]


def step(state: DecodeState, token_id: int) -> DecodeState:
    """Advance by one token; the token must be unmasked for this state."""
    token = state.vocab.token(token_id)
    cursor = state.cursor.clone()
    if not cursor.simulate(token):
        raise MaskedTokenStep(
            f"token {token!r} is not viable at phase {state.cursor.phase_label()}"
        )
    return DecodeState(
        state.tables, cursor, state.emitted + (token_id,), state.char_stream + token
    )


@dataclass(frozen=True)
class TraceStep:
    step: int
    dist: np.ndarray
    mask: MaskVector
    chosen: int
    phase: str
    fallback: bool
    masked_dist: np.ndarray

    def to_record(self, vocab: Vocabulary) -> dict:
        return {
            "step": self.step,
            "dist_digest": hashlib.sha256(
                np.ascontiguousarray(self.dist).tobytes()
            ).hexdigest()[:12],
            "mask_cardinality": self.mask.cardinality,
            "chosen": self.chosen,
            "token": vocab.token(self.chosen),
            "phase": self.phase,
            "fallback": self.fallback,
            "product_at_chosen": float(self.dist[self.chosen])
            if self.mask.values[self.chosen]
            else 0.0,
            "renormalized_at_chosen": float(self.masked_dist[self.chosen]),
        }


@dataclass
class DecodeTrace:
    steps: list[TraceStep]

    def __len__(self) -> int:
        return len(self.steps)

    def to_jsonl(self, vocab: Vocabulary) -> str:
        return "\n".join(json.dumps(s.to_record(vocab)) for s in self.steps)


def _validated(dist, size: int) -> np.ndarray:
    dist = np.asarray(dist, dtype=float)
    if dist.shape != (size,):
        raise InvalidDistribution(f"expected shape ({size},), got {dist.shape}")
    if (dist < 0).any():
        raise InvalidDistribution("negative probabilities")
    if abs(float(dist.sum()) - 1.0) > 1e-9:
        raise InvalidDistribution(f"probabilities sum to {dist.sum()!r}")
    return dist


def decode_greedy(
    lm: LanguageModelInterface,
    state: DecodeState,
    max_tokens: int = DEFAULT_MAX_TOKENS,
) -> tuple[CallExpression, DecodeTrace]:
    """Masked greedy decode: argmax of dist * mask each step until Done.

    The returned text always parses, by construction; the trace carries the
    per-step distributions, masks, and renormalized values.
    """
    if max_tokens < 1:
        raise ValueError("max_tokens must be >= 1")
    trace: list[TraceStep] = []
    size = len(state.vocab)
    while not state.done:
        if len(trace) >= max_tokens:
            raise BudgetExhausted(
                f"no Done within {max_tokens} tokens",
                partial_text=state.char_stream,
                trace=DecodeTrace(trace),
            )
        dist = _validated(lm.next_distribution(state.emitted), size)
        mask = compute_mask(state)
        masked_dist, fallback = _masked_distribution(dist, mask)
        if fallback:
            chosen = int(np.argmax(mask.values))
        else:
            # Argmax on the raw product, so renormalization can never
            # perturb the choice.
            chosen = int(np.argmax(np.where(mask.values, dist, 0.0)))
        trace.append(
            TraceStep(
                len(trace), dist, mask, chosen,
                state.cursor.phase_label(), fallback, masked_dist,
            )
        )
        state = step(state, chosen)
    call = parse_call(state.char_stream, state.registry)
    return call, DecodeTrace(trace)


def decode_unmasked(
    lm: LanguageModelInterface,
    state: DecodeState,
    max_tokens: int = DEFAULT_MAX_TOKENS,
) -> tuple[str, DecodeTrace]:
    """Baseline argmax decode with no mask; output may be malformed.

    Stops once the emitted text ends with the end marker, else raises
    BudgetExhausted carrying the partial text.
    """
    if max_tokens < 1:
        raise ValueError("max_tokens must be >= 1")
    vocab = state.vocab
    size = len(vocab)
    full = MaskVector.full(size)
    emitted: tuple[int, ...] = ()
    text = ""
    trace: list[TraceStep] = []
    while not text.endswith(END_MARKER):
        if len(trace) >= max_tokens:
            raise BudgetExhausted(
                f"no end marker within {max_tokens} tokens",
                partial_text=text,
                trace=DecodeTrace(trace),
            )
        dist = _validated(lm.next_distribution(emitted), size)
        chosen = int(np.argmax(dist))
        trace.append(
            TraceStep(len(trace), dist, full, chosen, "Unconstrained", False, dist)
        )
        emitted = emitted + (chosen,)
        text += vocab.token(chosen)
    return text, DecodeTrace(trace)


def replay_tokens(
    lm: LanguageModelInterface,
    state: DecodeState,
    tokens,
) -> tuple[DecodeTrace, DecodeState]:
    """Teacher-forced pass: record dist+mask at each step of a fixed token
    sequence. Raises MaskedTokenStep if any forced token is masked, so a
    clean pass doubles as a mask-completeness certificate."""
    trace: list[TraceStep] = []
    size = len(state.vocab)
    for token_id in tokens:
        dist = _validated(lm.next_distribution(state.emitted), size)
        mask = compute_mask(state)
        if not mask.values[token_id]:
            raise MaskedTokenStep(
                f"forced token {state.vocab.token(token_id)!r} masked at "
                f"phase {state.cursor.phase_label()}"
            )
        masked_dist, fallback = _masked_distribution(dist, mask)
        trace.append(
            TraceStep(
                len(trace), dist, mask, int(token_id),
                state.cursor.phase_label(), fallback, masked_dist,
            )
        )
        state = step(state, int(token_id))
    return DecodeTrace(trace), state
