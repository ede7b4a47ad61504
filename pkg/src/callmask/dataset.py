"""Prompt rendering and desk-scale dataset construction.

Datapoints pair a query with the function stubs shown in the prompt and a
gold call (the fallback call for unsolvable queries). Hard negatives come
from a similarity ranking over function descriptions: candidates are ranked
by cosine similarity and sampled from a mid-range rank window so the
distractors are related but not near-duplicates.

Dataset files are JSON lines, one datapoint per line with inline schemas
and the gold call in rendered form. Query corpora are plain text: negatives
one query per line, positives ``<gold call><TAB><query>``.
"""

from __future__ import annotations

import json
import re
import zlib
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .errors import MissingSentinel, RegistryTooSmall, UnbalancedSpecs
from .schema import (
    END_MARKER,
    SENTINEL,
    SENTINEL_NAME,
    CallExpression,
    FunctionRegistry,
    FunctionSchema,
    parse_call,
    render_call,
    render_stub,
    schema_to_dict,
    sentinel_call,
    _schema_from_dict,
    validate_call,
)

PROMPT_PREAMBLE = (
    "You are an assistant, and you need to call find appropriate functions "
    "according to the query of the users. Firstly, find the relevant "
    "functions, then get the function arguments by understanding the user's "
    "query. The following functions are available for you to fetch further "
    "data to answer user questions:"
)


@dataclass(frozen=True)
class SamplingConfig:
    positive_count: int = 1          # M of the M/N positive:negative ratio
    negative_count: int = 1          # N
    similar_k: int = 3               # hard negatives attached per datapoint
    rank_window: tuple[int, int] = (5, 10)  # 1-indexed, inclusive both ends
    positives_per_api: int = 5
    seed: int = 0


@dataclass(frozen=True)
class DataPoint:
    functions: tuple[FunctionSchema, ...]
    query: str
    gold: CallExpression
    thought: str | None
    solvable: bool

    def __post_init__(self):
        object.__setattr__(self, "functions", tuple(self.functions))
        names = {f.name for f in self.functions}
        if self.gold.function not in names:
            raise ValueError(
                f"gold function {self.gold.function!r} not among presented functions"
            )
        if self.solvable != (self.gold.function != SENTINEL_NAME):
            raise ValueError("solvable flag contradicts the gold function")

    def registry(self) -> FunctionRegistry:
        return FunctionRegistry(self.functions)

    def gold_text(self) -> str:
        return render_call(self.gold)


class EmbeddingProvider(Protocol):
    def embed(self, text: str) -> np.ndarray: ...


class TermFrequencyEmbedding:
    """Deterministic bag-of-words embedding via a stable hashing trick."""

    def __init__(self, dim: int = 512):
        self.dim = dim

    def embed(self, text: str) -> np.ndarray:
        tokens = re.findall(r"[a-z0-9]+", text.lower()) or [text.lower()]
        vec = np.zeros(self.dim)
        for tok in tokens:
            vec[zlib.crc32(tok.encode()) % self.dim] += 1.0
        return vec


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def _derived_rng(seed: int, *labels: str) -> np.random.Generator:
    return np.random.default_rng([seed] + [zlib.crc32(s.encode()) for s in labels])


# --- prompt template -----------------------------------------------------------

def render_prompt(
    functions,
    query: str,
    response: str | None = None,
    thought: str | None = None,
) -> str:
    """Render the full training/inference prompt.

    Layout: preamble, a ``Function:`` header, the stubs separated by blank
    lines, the query, then optional ``Response:`` (with end marker) and
    ``Thought:`` lines. Without a response the prompt ends after the query,
    which is the inference-time form.
    """
    functions = list(functions)
    if not any(f.name == SENTINEL_NAME for f in functions):
        raise MissingSentinel("prompt function list must include the fallback")
    stubs = "\n\n\n".join(render_stub(f) for f in functions)
    text = f"{PROMPT_PREAMBLE}\n\nFunction:\n\n{stubs}\n\n\n{query}\n"
    if response is not None:
        body = response.strip()
        if body.endswith(END_MARKER):
            body = body[: -len(END_MARKER)]
        text += f"\nResponse:{body}{END_MARKER}\n"
    if thought is not None:
        text += f"\nThought:{thought}\n"
    return text


# --- similarity sampling ---------------------------------------------------------

def rank_by_similarity(
    registry: FunctionRegistry,
    target: FunctionSchema,
    provider: EmbeddingProvider | None = None,
) -> list[tuple[FunctionSchema, float]]:
    """All other non-sentinel functions with their description similarity,
    best first; ties broken by name."""
    provider = provider or TermFrequencyEmbedding()
    anchor = provider.embed(target.description)
    scored = [
        (f, cosine_similarity(anchor, provider.embed(f.description)))
        for f in registry.non_sentinel()
        if f.name != target.name
    ]
    scored.sort(key=lambda pair: (-pair[1], pair[0].name))
    return scored


def similar_functions(
    registry: FunctionRegistry,
    target: FunctionSchema,
    config: SamplingConfig,
    provider: EmbeddingProvider | None = None,
) -> list[FunctionSchema]:
    """Sample hard negatives from the configured similarity-rank window.

    When the registry is too small to fill the window the pool widens to
    every available rank; it is an error only if even that cannot supply
    the requested count.
    """
    if config.similar_k == 0:
        return []
    ranked = [f for f, _ in rank_by_similarity(registry, target, provider)]
    low, high = config.rank_window
    pool = ranked[low - 1 : high] if len(ranked) >= high else ranked
    if len(pool) < config.similar_k:
        raise RegistryTooSmall(
            f"need {config.similar_k} similar functions, only {len(pool)} candidates"
        )
    rng = _derived_rng(config.seed, "similar", target.name)
    picks = sorted(rng.choice(len(pool), size=config.similar_k, replace=False))
    return [pool[int(i)] for i in picks]


# --- datapoint assembly -----------------------------------------------------------

def build_datapoint(
    target: FunctionSchema,
    query: str,
    gold_args,
    registry: FunctionRegistry,
    config: SamplingConfig,
    thought: str | None = None,
    provider: EmbeddingProvider | None = None,
) -> DataPoint:
    """A solvable datapoint: target plus sampled hard negatives plus fallback."""
    gold = CallExpression(target.name, tuple(gold_args))
    validate_call(gold, registry)
    functions = [target] + similar_functions(registry, target, config, provider)
    functions.append(registry.sentinel)
    rng = _derived_rng(config.seed, "shuffle", target.name, query)
    order = rng.permutation(len(functions))
    return DataPoint(
        functions=tuple(functions[int(i)] for i in order),
        query=query,
        gold=gold,
        thought=thought,
        solvable=True,
    )


def build_negative(
    query: str,
    distractors,
    config: SamplingConfig,
) -> DataPoint:
    """An unsolvable datapoint: the gold answer is the fallback call."""
    functions = list(distractors)
    if not any(f.name == SENTINEL_NAME for f in functions):
        functions.append(SENTINEL)
    rng = _derived_rng(config.seed, "negative", query)
    order = rng.permutation(len(functions))
    return DataPoint(
        functions=tuple(functions[int(i)] for i in order),
        query=query,
        gold=sentinel_call(query),
        thought=None,
        solvable=False,
    )


@dataclass(frozen=True)
class PositiveSpec:
    function: str
    query: str
    args: tuple


def build_eval_set(
    registry: FunctionRegistry,
    positive_specs,
    negative_specs,
    seed: int = 0,
    config: SamplingConfig | None = None,
) -> list[DataPoint]:
    """Benchmark entries: four candidate functions plus the fallback each,
    alternating solvable and unsolvable at the configured ratio."""
    config = config or SamplingConfig(seed=seed)
    positive_specs = list(positive_specs)
    negative_specs = list(negative_specs)
    if (
        len(positive_specs) * config.negative_count
        != len(negative_specs) * config.positive_count
    ):
        raise UnbalancedSpecs(
            f"{len(positive_specs)} positives vs {len(negative_specs)} negatives "
            f"breaks the {config.positive_count}:{config.negative_count} ratio"
        )
    candidates = registry.non_sentinel()
    if len(candidates) < 4:
        raise RegistryTooSmall("benchmark entries need at least 4 candidate functions")

    entries: list[DataPoint] = []

    def presented(rng, target: FunctionSchema | None) -> tuple[FunctionSchema, ...]:
        others = [f for f in candidates if target is None or f.name != target.name]
        need = 4 if target is None else 3
        picks = rng.choice(len(others), size=need, replace=False)
        chosen = [others[int(i)] for i in picks]
        if target is not None:
            chosen.append(target)
        chosen.append(registry.sentinel)
        order = rng.permutation(len(chosen))
        return tuple(chosen[int(i)] for i in order)

    for i, spec in enumerate(positive_specs):
        target = registry.get(spec.function)
        gold = CallExpression(spec.function, tuple(spec.args))
        validate_call(gold, registry)
        rng = _derived_rng(seed, "eval-pos", str(i), spec.query)
        entries.append(
            DataPoint(presented(rng, target), spec.query, gold, None, True)
        )

    negatives: list[DataPoint] = []
    for j, query in enumerate(negative_specs):
        rng = _derived_rng(seed, "eval-neg", str(j), query)
        negatives.append(
            DataPoint(presented(rng, None), query, sentinel_call(query), None, False)
        )

    interleaved: list[DataPoint] = []
    for pos, neg in zip(entries, negatives):
        interleaved.extend((pos, neg))
    # Ratio != 1:1 leaves a remainder on one side.
    longer = entries if len(entries) > len(negatives) else negatives
    interleaved.extend(longer[min(len(entries), len(negatives)) :])
    return interleaved


# --- corpora and dataset files ------------------------------------------------------

def parse_positive_corpus(text: str, registry: FunctionRegistry) -> list[PositiveSpec]:
    """Lines of ``<gold call><TAB><query>``; the call is validated."""
    specs = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        call_text, _, query = line.partition("\t")
        if not query:
            raise ValueError(f"positive corpus line missing TAB: {line!r}")
        call = parse_call(call_text, registry)
        specs.append(PositiveSpec(call.function, query.strip(), call.arguments))
    return specs


def parse_negative_corpus(text: str) -> list[str]:
    """One unanswerable query per line."""
    return [
        line.strip()
        for line in text.splitlines()
        if line.strip() and not line.startswith("#")
    ]


def datapoint_to_dict(dp: DataPoint) -> dict:
    record = {
        "functions": [schema_to_dict(f) for f in dp.functions],
        "query": dp.query,
        "gold": render_call(dp.gold),
        "solvable": dp.solvable,
    }
    if dp.thought is not None:
        record["thought"] = dp.thought
    return record


def datapoint_from_dict(record: dict) -> DataPoint:
    functions = tuple(_schema_from_dict(o) for o in record["functions"])
    registry = FunctionRegistry(functions)
    gold = parse_call(record["gold"], registry)
    return DataPoint(
        functions=functions,
        query=record["query"],
        gold=gold,
        thought=record.get("thought"),
        solvable=record["solvable"],
    )


def write_dataset(entries, path):
    with open(path, "w", encoding="utf-8") as fh:
        for dp in entries:
            fh.write(json.dumps(datapoint_to_dict(dp)) + "\n")


def read_dataset(path) -> list[DataPoint]:
    with open(path, encoding="utf-8") as fh:
        return [datapoint_from_dict(json.loads(line)) for line in fh if line.strip()]
