"""Per-step validation loss and precision, masked and unmasked.

For a step with distribution y-hat, one-hot gold label, and a mask splitting
the vocabulary into kept indices V1 and dropped indices V2 (gold in V1):

* unmasked loss      -log(yhat_gold)
* masked loss        -log(yhat_gold / sum_{j in V1} yhat_j)   (renormalized)
* literal masked loss  the restricted cross-entropy sum, which under one-hot
  labels collapses to the unmasked loss; exposed for completeness.
* precision          1 iff the (masked) argmax lands on gold.

Two executable theorems: masking never increases the loss (strictly
decreases it whenever the mask drops probability mass) and never decreases
precision. The loss check runs on dyadic distributions (denominator 2^20)
so subset sums are exact in float arithmetic and the inequalities can be
asserted with no tolerance at all.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .decoder import DecodeTrace, MaskVector
from .errors import GoldMasked, LengthMismatch, ZeroProbabilityGold

STRICTNESS_FLOOR = 1e-12
_DYADIC_GRID = 1 << 20


@dataclass(frozen=True)
class StepRecord:
    """One decoding step: distribution, gold index, mask, argmax choice."""

    dist: np.ndarray
    gold: int
    mask: MaskVector
    chosen: int = -1

    def __post_init__(self):
        dist = np.asarray(self.dist, dtype=float)
        object.__setattr__(self, "dist", dist)
        if not 0 <= self.gold < len(dist):
            raise ValueError(f"gold index {self.gold} outside vocabulary")
        if len(self.mask) != len(dist):
            raise LengthMismatch("mask and distribution sizes differ")
        if self.chosen < 0:
            object.__setattr__(self, "chosen", int(np.argmax(dist)))


def _gold_prob(rec: StepRecord) -> float:
    p = float(rec.dist[rec.gold])
    if p <= 0.0:
        raise ZeroProbabilityGold(f"gold token has probability {p}")
    return p


def loss_unmasked(rec: StepRecord) -> float:
    """Cross-entropy against the one-hot gold: -log(yhat_gold)."""
    return -math.log(_gold_prob(rec))


def _require_gold_kept(rec: StepRecord):
    if not rec.mask.values[rec.gold]:
        raise GoldMasked(f"gold index {rec.gold} is masked; metric undefined")


def loss_masked(rec: StepRecord) -> float:
    """Cross-entropy on the mask-renormalized distribution.

    Equals -log(yhat_gold / kept_mass). Since kept_mass <= 1 this never
    exceeds the unmasked loss, and it drops below it strictly whenever the
    mask removes probability mass.
    """
    _require_gold_kept(rec)
    p = _gold_prob(rec)
    kept = float(np.sum(rec.dist[rec.mask.values]))
    return -math.log(p / kept)


def loss_masked_literal(rec: StepRecord) -> float:
    """The restricted cross-entropy sum over kept indices, unrenormalized.

    With one-hot labels the only surviving term is the gold one, so this
    coincides with the unmasked loss whenever it is defined at all.
    """
    _require_gold_kept(rec)
    return -math.log(_gold_prob(rec))


def masked_argmax(dist: np.ndarray, mask: MaskVector) -> int:
    """Argmax restricted to kept indices; ties go to the lowest index."""
    scores = np.where(mask.values, dist, -1.0)
    return int(np.argmax(scores))


def precision_indicator(rec: StepRecord, masked: bool) -> int:
    """1 iff the argmax (restricted to the mask when masked) equals gold."""
    if masked:
        _require_gold_kept(rec)
        return int(masked_argmax(rec.dist, rec.mask) == rec.gold)
    return int(int(np.argmax(rec.dist)) == rec.gold)


# --- theorem checks -----------------------------------------------------------

def _dyadic_distribution(rng: np.random.Generator, size: int) -> np.ndarray:
    """A strictly positive random distribution whose entries are multiples
    of 2^-20, so sums of any subset are exact in float64."""
    counts = rng.multinomial(_DYADIC_GRID - size, np.full(size, 1.0 / size)) + 1
    return counts.astype(float) / _DYADIC_GRID


@dataclass
class LossTheoremReport:
    trials: int
    vocab_size: int
    violations: list = field(default_factory=list)
    strictness_failures: list = field(default_factory=list)
    equalities: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations and not self.strictness_failures

    def to_dict(self) -> dict:
        return {
            "check": "loss-dominance",
            "trials": self.trials,
            "vocab_size": self.vocab_size,
            "violations": self.violations,
            "strictness_failures": self.strictness_failures,
            "equalities": self.equalities,
            "ok": self.ok,
        }


def theorem_loss_check(
    trials: int, vocab_size: int, seed: int = 0
) -> LossTheoremReport:
    """Randomized check that masking reduces the validation loss.

    Every trial draws a distribution and a random gold-keeping mask and
    asserts masked <= unmasked, strict whenever the dropped mass exceeds
    STRICTNESS_FLOOR. Full masks (nothing dropped) are mixed in to confirm
    exact equality on that boundary.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    report = LossTheoremReport(trials, vocab_size)
    for t in range(trials):
        dist = _dyadic_distribution(rng, vocab_size)
        gold = int(rng.integers(vocab_size))
        if t % 97 == 0:
            keep = np.ones(vocab_size, dtype=bool)
        else:
            keep = rng.random(vocab_size) < 0.5
            keep[gold] = True
        mask = MaskVector(keep)
        rec = StepRecord(dist, gold, mask)
        lm = loss_masked(rec)
        lu = loss_unmasked(rec)
        dropped = float(np.sum(dist[~keep]))
        if lm > lu:
            report.violations.append(
                {"trial": t, "masked": lm, "unmasked": lu, "dropped_mass": dropped}
            )
        if dropped > STRICTNESS_FLOOR and not lm < lu:
            report.strictness_failures.append(
                {"trial": t, "masked": lm, "unmasked": lu, "dropped_mass": dropped}
            )
        if lm == lu:
            report.equalities += 1
    return report


@dataclass
class PrecisionTheoremReport:
    cases: int = 0
    violations: list = field(default_factory=list)
    vocab_sizes: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "check": "precision-dominance",
            "cases": self.cases,
            "vocab_sizes": list(self.vocab_sizes),
            "violations": self.violations[:10],
            "ok": self.ok,
        }


def _grid_distributions(rng: np.random.Generator, size: int, count: int) -> np.ndarray:
    """count random distributions plus deterministic edge cases (uniform,
    one-hots, two-way ties)."""
    extras = [np.full(size, 1.0 / size)]
    for i in range(size):
        one_hot = np.zeros(size)
        one_hot[i] = 1.0
        extras.append(one_hot)
        tie = np.full(size, 0.5 / size)
        tie[i] += 0.25
        tie[(i + 1) % size] += 0.25
        extras.append(tie)
    random_part = rng.dirichlet(np.ones(size), size=max(0, count - len(extras)))
    return np.vstack([extras, random_part]) if len(random_part) else np.array(extras)


def theorem_precision_check(
    vocab_sizes=(4, 5, 6, 7, 8),
    dists_per_size: int = 1000,
    seed: int = 0,
) -> PrecisionTheoremReport:
    """Exhaustive check that masking never lowers precision.

    For every vocabulary size, every grid distribution, every gold index,
    and every mask keeping the gold index, asserts
    precision(masked) >= precision(unmasked).
    """
    rng = np.random.default_rng(seed)
    report = PrecisionTheoremReport(vocab_sizes=tuple(vocab_sizes))
    for size in vocab_sizes:
        if size > 16:
            raise ValueError("exhaustive mask enumeration capped at |V|=16")
        patterns = np.arange(1, 1 << size, dtype=np.uint32)
        masks = (patterns[:, None] >> np.arange(size)) & 1
        masks = masks.astype(bool)
        for dist in _grid_distributions(rng, size, dists_per_size):
            unmasked_arg = int(np.argmax(dist))
            scores = np.where(masks, dist[None, :], -1.0)
            masked_args = scores.argmax(axis=1)
            for gold in range(size):
                keep_rows = masks[:, gold]
                unmasked_hit = unmasked_arg == gold
                bad = keep_rows & unmasked_hit & (masked_args != gold)
                report.cases += int(keep_rows.sum())
                for row in np.flatnonzero(bad):
                    report.violations.append(
                        {
                            "vocab_size": size,
                            "gold": gold,
                            "mask_pattern": int(patterns[row]),
                            "dist": dist.tolist(),
                        }
                    )
    return report


# --- sequence aggregation -------------------------------------------------------

@dataclass
class SequenceReport:
    mean_masked_loss: float
    mean_unmasked_loss: float
    per_step_precision: list[int]
    exact_sequence_match: bool
    gold_masked_steps: int

    def to_dict(self) -> dict:
        return {
            "mean_masked_loss": self.mean_masked_loss,
            "mean_unmasked_loss": self.mean_unmasked_loss,
            "per_step_precision": self.per_step_precision,
            "exact_sequence_match": self.exact_sequence_match,
            "gold_masked_steps": self.gold_masked_steps,
        }


def sequence_report(trace: DecodeTrace, gold_tokens) -> SequenceReport:
    """Aggregate the per-step quantities over one decode against gold tokens.

    Steps where the gold token fell outside the mask (possible once a decode
    has diverged) are excluded from the masked-loss mean and counted.
    """
    gold_tokens = list(gold_tokens)
    if not trace.steps or len(trace.steps) != len(gold_tokens):
        raise LengthMismatch(
            f"trace has {len(trace.steps)} steps, gold has {len(gold_tokens)}"
        )
    masked_losses: list[float] = []
    unmasked_losses: list[float] = []
    precision: list[int] = []
    gold_masked = 0
    for step, gold in zip(trace.steps, gold_tokens):
        rec = StepRecord(step.dist, int(gold), step.mask, chosen=step.chosen)
        unmasked_losses.append(loss_unmasked(rec))
        if rec.mask.values[rec.gold]:
            masked_losses.append(loss_masked(rec))
        else:
            gold_masked += 1
        precision.append(int(step.chosen == int(gold)))
    return SequenceReport(
        mean_masked_loss=float(np.mean(masked_losses)) if masked_losses else math.inf,
        mean_unmasked_loss=float(np.mean(unmasked_losses)),
        per_step_precision=precision,
        exact_sequence_match=all(precision),
        gold_masked_steps=gold_masked,
    )
