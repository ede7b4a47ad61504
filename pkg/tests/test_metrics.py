import math

import numpy as np
import pytest

from callmask import (
    MaskVector,
    StepRecord,
    loss_masked,
    loss_masked_literal,
    loss_unmasked,
    new_session,
    precision_indicator,
    replay_tokens,
    sequence_report,
    theorem_loss_check,
    theorem_precision_check,
)
from callmask.errors import GoldMasked, LengthMismatch, ZeroProbabilityGold
from callmask.evalharness import make_mock
from callmask.metrics import masked_argmax


def mask_of(*bits):
    return MaskVector(np.array(bits, dtype=bool))


def rec(dist, gold, bits, chosen=-1):
    return StepRecord(np.array(dist, float), gold, mask_of(*bits), chosen)


class TestLossUnmasked:
    def test_direct_value(self):
        assert loss_unmasked(rec([0.5, 0.3, 0.2], 0, (1, 1, 1))) == pytest.approx(
            0.6931471805599453, abs=1e-15
        )

    def test_certain_gold_is_zero(self):
        assert loss_unmasked(rec([1.0, 0.0], 0, (1, 1))) == 0.0

    def test_zero_probability_gold(self):
        with pytest.raises(ZeroProbabilityGold):
            loss_unmasked(rec([0.0, 1.0], 0, (1, 1)))


class TestLossMasked:
    def test_direct_value(self):
        value = loss_masked(rec([0.5, 0.3, 0.2], 0, (1, 1, 0)))
        assert value == pytest.approx(0.4700036292457356, abs=1e-15)

    def test_full_mask_equals_unmasked_exactly(self):
        r = rec([0.5, 0.25, 0.25], 1, (1, 1, 1))
        assert loss_masked(r) == loss_unmasked(r)

    def test_gold_only_mask_is_zero(self):
        assert loss_masked(rec([0.25, 0.5, 0.25], 1, (0, 1, 0))) == 0.0

    def test_gold_masked_raises(self):
        with pytest.raises(GoldMasked):
            loss_masked(rec([0.5, 0.5], 0, (0, 1)))

    def test_literal_form_collapses_to_unmasked(self):
        r = rec([0.5, 0.3, 0.2], 0, (1, 1, 0))
        assert loss_masked_literal(r) == loss_unmasked(r)


class TestPrecisionIndicator:
    def test_unmasked_miss(self):
        assert precision_indicator(rec([0.5, 0.3, 0.2], 1, (1, 1, 1)), masked=False) == 0

    def test_masked_restriction_recovers(self):
        assert precision_indicator(rec([0.5, 0.3, 0.2], 1, (0, 1, 1)), masked=True) == 1

    def test_single_token_vocab(self):
        assert precision_indicator(rec([1.0], 0, (1,)), masked=False) == 1
        assert precision_indicator(rec([1.0], 0, (1,)), masked=True) == 1

    def test_masked_requires_gold_kept(self):
        with pytest.raises(GoldMasked):
            precision_indicator(rec([0.5, 0.5], 0, (0, 1)), masked=True)

    def test_tie_break_lowest_index(self):
        assert precision_indicator(rec([0.4, 0.4, 0.2], 0, (1, 1, 1)), masked=False) == 1
        assert precision_indicator(rec([0.4, 0.4, 0.2], 1, (1, 1, 1)), masked=False) == 0


class TestTheoremLoss:
    def test_no_violations_small_run(self):
        report = theorem_loss_check(trials=2000, vocab_size=16, seed=1)
        assert report.ok
        assert report.equalities >= 1  # full-mask trials give exact equality

    def test_uniform_half_mask_reduces_by_ln2(self):
        dist = np.full(32, 1.0 / 32)
        keep = np.zeros(32, dtype=bool)
        keep[:16] = True
        r = StepRecord(dist, 3, MaskVector(keep))
        assert loss_unmasked(r) - loss_masked(r) == pytest.approx(math.log(2), abs=1e-12)

    def test_strictness_on_any_dropped_mass(self):
        report = theorem_loss_check(trials=500, vocab_size=8, seed=2)
        assert not report.strictness_failures


class TestTheoremPrecision:
    def test_exhaustive_small(self):
        report = theorem_precision_check(vocab_sizes=(4,), dists_per_size=50, seed=0)
        assert report.ok
        assert report.cases > 0

    def test_restriction_containing_argmax_keeps_it(self):
        rng = np.random.default_rng(9)
        for _ in range(300):
            size = int(rng.integers(2, 12))
            dist = rng.dirichlet(np.ones(size))
            top = int(np.argmax(dist))
            keep = rng.random(size) < 0.5
            keep[top] = True
            assert masked_argmax(dist, MaskVector(keep)) == top

    def test_mask_can_flip_wrong_to_right(self):
        r = rec([0.4, 0.6], 0, (1, 0))
        assert precision_indicator(r, masked=False) == 0
        assert precision_indicator(r, masked=True) == 1


class TestSequenceReport:
    def _trace(self, gold, vocab, lm_spec, seed=0, eps_gold=None):
        from callmask import load_registry

        registry = load_registry(
            '[{"name": "youtube_downloader", "description": "Get it.", '
            '"args": [{"name": "u", "type": "string", "description": ""}]}]'
        )
        lm = make_mock(lm_spec).bind(vocab, gold_text=gold, seed=seed)
        tokens = vocab.tokenize(gold)
        trace, final = replay_tokens(lm, new_session(registry, vocab), tokens)
        return trace, tokens

    def test_oracle_all_precise_but_nonzero_loss(self, ascii_vocab):
        gold = "youtube_downloader('u')<nexa_end>"
        trace, tokens = self._trace(gold, ascii_vocab, "mock:oracle")
        report = sequence_report(trace, tokens)
        assert report.exact_sequence_match
        assert all(p == 1 for p in report.per_step_precision)
        assert report.mean_masked_loss > 0.0

    def test_noisy_masked_loss_dominated(self, ascii_vocab):
        gold = "youtube_downloader('https://youtu.be/N6vLKEx40Hk')<nexa_end>"
        for seed in range(500):
            trace, tokens = self._trace(gold, ascii_vocab, "mock:noisy:0.25", seed=seed)
            report = sequence_report(trace, tokens)
            assert report.mean_masked_loss <= report.mean_unmasked_loss
            assert report.gold_masked_steps == 0

    def test_empty_trace_rejected(self):
        from callmask.decoder import DecodeTrace

        with pytest.raises(LengthMismatch):
            sequence_report(DecodeTrace([]), [])
