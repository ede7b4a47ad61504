"""Benchmark runner: mock language models, paired masked/unmasked decoding,
and exact-match accuracy with failure attribution.

Mock models stand in for fine-tuned checkpoints. The oracle scripts the gold
token sequence; the noisy variant redirects the top token to a random one
with a per-step probability, which manufactures exactly the interesting
failure classes (misspelled names, corrupted parameters, broken syntax).
The biased variant pulls toward an attractor string regardless of what is
registered, and the random variant is the adversarial floor.

Remote text-completion models (no logit access) plug in through
RemoteAdapter and can only run unmasked in relaxed mode.
"""

from __future__ import annotations

import json
import urllib.request
from dataclasses import dataclass, field

import numpy as np

from .dataset import DataPoint, render_prompt
from .decoder import (
    DEFAULT_MAX_TOKENS,
    Vocabulary,
    decode_greedy,
    decode_unmasked,
    new_session,
)
from .errors import (
    ArityMismatch,
    BadSpec,
    BudgetExhausted,
    ParseError,
    TypeMismatch,
    UnknownFunction,
)
from .schema import END_MARKER, CallExpression, FunctionRegistry, parse_call

ORACLE_SLACK = 1e-6

WRONG_FUNCTION = "wrong_function"
WRONG_ARGUMENTS = "wrong_arguments"
PARSE_FAILURE = "parse_failure"
BUDGET_EXHAUSTED = "budget_exhausted"
FAILURE_CAUSES = (WRONG_FUNCTION, WRONG_ARGUMENTS, PARSE_FAILURE, BUDGET_EXHAUSTED)


class MockLM:
    """Base for scripted models; subclasses fill in next_distribution."""

    variant = "abstract"

    def __init__(self, vocab: Vocabulary):
        self.vocab = vocab

    def _uniform(self) -> np.ndarray:
        return np.full(len(self.vocab), 1.0 / len(self.vocab))

    def _peaked(self, token_id: int, mass: float) -> np.ndarray:
        size = len(self.vocab)
        if size == 1:
            return np.array([1.0])
        dist = np.full(size, (1.0 - mass) / (size - 1))
        dist[token_id] = mass
        return dist


class OracleLM(MockLM):
    """Scripted model: nearly all mass on the next scripted token."""

    variant = "oracle"

    def __init__(self, vocab: Vocabulary, script: list[int]):
        super().__init__(vocab)
        self.script = list(script)

    def next_distribution(self, context) -> np.ndarray:
        pos = len(context)
        if pos >= len(self.script):
            return self._uniform()
        return self._peaked(self.script[pos], 1.0 - ORACLE_SLACK)


class NoisyLM(OracleLM):
    """Oracle whose top-1 is redirected to a random token with prob eps.

    A redirect puts most of the mass on the random token while the scripted
    token drops to a clear second place: the shape of a confident
    hallucination. Unmasked argmax follows the hallucination; a mask that
    rejects it lets the runner-up win, which is the recovery the masked
    decoder is supposed to deliver.
    """

    variant = "noisy"
    REDIRECT_MASS = 0.55
    RUNNER_UP_MASS = 0.40

    def __init__(self, vocab: Vocabulary, script: list[int], eps: float, seed: int):
        super().__init__(vocab, script)
        self.eps = eps
        self.rng = np.random.default_rng(seed)

    def next_distribution(self, context) -> np.ndarray:
        dist = super().next_distribution(context)
        if self.rng.random() >= self.eps:
            return dist
        size = len(self.vocab)
        top = int(np.argmax(dist))
        j = int(self.rng.integers(size))
        rest = 1.0 - self.REDIRECT_MASS - self.RUNNER_UP_MASS
        noisy = np.full(size, rest / size)
        noisy[j] += self.REDIRECT_MASS
        noisy[top] += self.RUNNER_UP_MASS
        return noisy


class RandomLM(MockLM):
    """Fresh random distribution every step."""

    variant = "random"

    def __init__(self, vocab: Vocabulary, seed: int):
        super().__init__(vocab)
        self.rng = np.random.default_rng(seed)

    def next_distribution(self, context) -> np.ndarray:
        return self.rng.dirichlet(np.ones(len(self.vocab)))


class BiasedLM(MockLM):
    """Pulls toward spelling an attractor text, ignoring the registry."""

    variant = "biased"

    def __init__(self, vocab: Vocabulary, attractor_text: str, strength: float):
        super().__init__(vocab)
        self.script = vocab.tokenize(attractor_text)
        self.strength = strength

    def next_distribution(self, context) -> np.ndarray:
        pos = len(context)
        if pos >= len(self.script):
            return self._uniform()
        return self._peaked(self.script[pos], self.strength)


@dataclass
class MockFactory:
    """Builds a per-entry model; scripted variants bind to the entry's gold."""

    variant: str
    eps: float = 0.0
    strength: float = 0.9
    text: str | None = None

    def bind(self, vocab: Vocabulary, gold_text: str | None = None,
             seed: int = 0) -> MockLM:
        if self.variant in ("oracle", "noisy"):
            source = self.text if self.text is not None else gold_text
            if source is None:
                raise BadSpec(f"{self.variant} model needs a script or a gold text")
            script = vocab.tokenize(source)
            if self.variant == "oracle":
                return OracleLM(vocab, script)
            return NoisyLM(vocab, script, self.eps, seed)
        if self.variant == "random":
            return RandomLM(vocab, seed)
        if self.variant == "biased":
            if self.text is None:
                raise BadSpec("biased model needs an attractor string")
            attractor = self.text
            if "(" not in attractor:
                attractor = f"{attractor}('x')"
            if not attractor.endswith(END_MARKER):
                attractor += END_MARKER
            return BiasedLM(vocab, attractor, self.strength)
        raise BadSpec(f"unknown mock variant {self.variant!r}")


def make_mock(spec: str) -> MockFactory:
    """Parse a model spec: ``mock:<variant>[:<param>[:<text>]]``.

    Examples: ``mock:oracle``, ``mock:noisy:0.2``,
    ``mock:biased:0.9:send_email``, ``mock:oracle:f('x')<nexa_end>``.
    """
    parts = spec.split(":", 2)
    if parts[0] != "mock" or len(parts) < 2:
        raise BadSpec(f"not a mock spec: {spec!r}")
    variant = parts[1]
    rest = parts[2] if len(parts) > 2 else None
    if variant == "oracle":
        return MockFactory("oracle", text=rest)
    if variant == "noisy":
        if rest is None:
            raise BadSpec("noisy spec needs an epsilon, e.g. mock:noisy:0.2")
        eps_text, _, script = rest.partition(":")
        try:
            eps = float(eps_text)
        except ValueError:
            raise BadSpec(f"bad epsilon {eps_text!r}") from None
        return MockFactory("noisy", eps=eps, text=script or None)
    if variant == "random":
        return MockFactory("random")
    if variant == "biased":
        if rest is None:
            raise BadSpec("biased spec needs strength and attractor")
        strength_text, _, attractor = rest.partition(":")
        try:
            strength = float(strength_text)
        except ValueError:
            raise BadSpec(f"bad strength {strength_text!r}") from None
        if not attractor:
            raise BadSpec("biased spec needs an attractor string")
        return MockFactory("biased", strength=strength, text=attractor)
    raise BadSpec(f"unknown mock variant {variant!r}")


class RemoteAdapter:
    """Text-in/text-out adapter for API models without logit access.

    Masking cannot be applied through this interface; runs are unmasked and
    matched in relaxed mode. Raw transcripts are kept rather than guessing
    at sampling parameters.
    """

    def __init__(self, endpoint: str, timeout: float = 30.0):
        self.endpoint = endpoint
        self.timeout = timeout
        self.transcripts: list[dict] = []

    def complete(self, prompt: str) -> str:
        payload = json.dumps({"prompt": prompt}).encode()
        request = urllib.request.Request(
            self.endpoint, data=payload, headers={"Content-Type": "application/json"}
        )
        with urllib.request.urlopen(request, timeout=self.timeout) as resp:
            text = json.loads(resp.read().decode()).get("text", "")
        self.transcripts.append({"prompt": prompt, "response": text})
        return text


def make_model(spec: str):
    if spec.startswith("mock:"):
        return make_mock(spec)
    if spec.startswith("remote:"):
        return RemoteAdapter(spec[len("remote:"):])
    raise BadSpec(f"model spec must start with mock: or remote:, got {spec!r}")


# --- matching ---------------------------------------------------------------

def _normalize_relaxed(text: str) -> str:
    import re

    out = text.strip()
    if out.endswith(END_MARKER):
        out = out[: -len(END_MARKER)].rstrip()
    out = out.replace('"', "'")
    out = re.sub(r"\s*\(\s*", "(", out, count=1)
    out = re.sub(r"\s*\)\s*$", ")", out)
    out = re.sub(r"\s*,\s*", ", ", out)
    return out


def match_call(
    predicted,
    gold: CallExpression,
    registry: FunctionRegistry,
    mode: str = "strict",
) -> tuple[bool, str | None]:
    """Exact match of function name and argument values.

    ``predicted`` may be a CallExpression or raw text; raw text is parsed
    first (after normalization in relaxed mode). Returns (matched, cause)
    where cause is one of the failure-cause names or None on a match.
    """
    if mode not in ("strict", "relaxed"):
        raise ValueError(f"unknown match mode {mode!r}")
    call = predicted
    if not isinstance(predicted, CallExpression):
        text = _normalize_relaxed(predicted) if mode == "relaxed" else predicted
        try:
            call = parse_call(text, registry)
        except UnknownFunction:
            return False, WRONG_FUNCTION
        except (ArityMismatch, TypeMismatch):
            return False, WRONG_ARGUMENTS
        except ParseError:
            return False, PARSE_FAILURE
    if call.function != gold.function:
        return False, WRONG_FUNCTION
    if call.arguments != gold.arguments:
        return False, WRONG_ARGUMENTS
    return True, None


# --- reports ------------------------------------------------------------------

@dataclass
class AccuracyReport:
    masked: bool
    mode: str
    seed: int
    total: int = 0
    correct: int = 0
    breakdown: dict = field(default_factory=lambda: {c: 0 for c in FAILURE_CAUSES})

    @property
    def accuracy(self) -> float:
        return self.correct / self.total if self.total else 0.0

    def record(self, matched: bool, cause: str | None):
        self.total += 1
        if matched:
            self.correct += 1
        else:
            self.breakdown[cause] = self.breakdown.get(cause, 0) + 1

    def check(self):
        assert self.correct <= self.total
        assert sum(self.breakdown.values()) == self.total - self.correct
        return self

    def to_dict(self) -> dict:
        return {
            "masked": self.masked,
            "mode": self.mode,
            "seed": self.seed,
            "total": self.total,
            "correct": self.correct,
            "accuracy": self.accuracy,
            "breakdown": dict(self.breakdown),
        }

    def to_table(self) -> str:
        rows = [
            f"masked={self.masked} mode={self.mode} seed={self.seed}",
            f"  accuracy  {self.correct}/{self.total} = {self.accuracy:.3f}",
        ]
        for cause in FAILURE_CAUSES:
            rows.append(f"  {cause:<18} {self.breakdown.get(cause, 0)}")
        return "\n".join(rows)


def _entry_seed(seed: int, index: int) -> int:
    return (seed * 1_000_003 + index) & 0x7FFFFFFF


def _eval_entry(
    index: int,
    dp: DataPoint,
    model: MockFactory,
    masked: bool,
    mode: str,
    max_tokens: int,
    seed: int,
    vocab: Vocabulary,
) -> tuple[bool, str | None]:
    registry = dp.registry()
    lm = model.bind(vocab, gold_text=dp.gold_text(), seed=_entry_seed(seed, index))
    state = new_session(registry, vocab)
    try:
        if masked:
            call, _ = decode_greedy(lm, state, max_tokens)
            return match_call(call, dp.gold, registry, mode)
        text, _ = decode_unmasked(lm, state, max_tokens)
        return match_call(text, dp.gold, registry, mode)
    except BudgetExhausted:
        return False, BUDGET_EXHAUSTED


def run_eval(
    dataset: list[DataPoint],
    model,
    masked: bool,
    mode: str = "strict",
    max_tokens: int = DEFAULT_MAX_TOKENS,
    seed: int = 0,
    vocab: Vocabulary | None = None,
    jobs: int = 1,
) -> AccuracyReport:
    """Decode every entry and score exact matches against the gold calls.

    ``model`` is a MockFactory (or spec string) bound per entry, or a
    RemoteAdapter (unmasked relaxed only). Per-entry errors are folded into
    the failure breakdown, never raised. Entries are independent and carry
    their own derived seeds, so the report is identical at any ``jobs``.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    if isinstance(model, str):
        model = make_model(model)
    vocab = vocab or Vocabulary.printable_ascii()
    report = AccuracyReport(masked=masked, mode=mode, seed=seed)

    if isinstance(model, RemoteAdapter):
        if masked:
            raise BadSpec("remote models expose no logits; masking is unavailable")
        for dp in dataset:
            prompt = render_prompt(dp.functions, dp.query)
            text = model.complete(prompt)
            report.record(*match_call(text, dp.gold, dp.registry(), "relaxed"))
        return report.check()

    def work(pair):
        index, dp = pair
        return _eval_entry(index, dp, model, masked, mode, max_tokens, seed, vocab)

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, enumerate(dataset)))
    else:
        results = [work(pair) for pair in enumerate(dataset)]
    for matched, cause in results:
        report.record(matched, cause)
    return report.check()
