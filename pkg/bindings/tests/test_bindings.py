import json

import numpy as np
import pytest

bindings = pytest.importorskip("callmask_bindings")

from callmask import Vocabulary, decode_greedy, load_registry, new_session
from callmask.decoder import compute_mask
from callmask.errors import (
    ConstraintDeadlock,
    LengthMismatch,
    SchemaViolation,
)
from callmask.evalharness import make_mock

REGISTRY_DOC = json.dumps(
    [
        {
            "name": "youtube_downloader",
            "description": "Get direct video URL for youtube to download.",
            "args": [{"name": "videourl", "type": "string", "description": "URL."}],
        },
        {
            "name": "set_volume",
            "description": "Set the speaker volume level.",
            "args": [{"name": "level", "type": "integer", "description": "0-100."}],
        },
        {
            "name": "pick_country",
            "description": "Choose a destination country.",
            "args": [
                {
                    "name": "country",
                    "type": "enum",
                    "enum_values": ["US", "UK", "Australia"],
                    "description": "Destination.",
                }
            ],
        },
    ]
)

VOCAB = Vocabulary.printable_ascii()


def open_handle():
    return bindings.open_session(REGISTRY_DOC, VOCAB.tokens)


class TestSessionLifecycle:
    def test_open(self):
        handle = open_handle()
        assert not bindings.is_done(handle)
        bindings.close(handle)

    def test_bad_registry_raises_core_error(self):
        doc = json.dumps(
            [
                {"name": "dup", "description": "One.", "args": []},
                {"name": "dup", "description": "Two.", "args": []},
            ]
        )
        with pytest.raises(SchemaViolation):
            bindings.open_session(doc, VOCAB.tokens)

    def test_double_close(self):
        handle = open_handle()
        bindings.close(handle)
        with pytest.raises(bindings.SessionClosed):
            bindings.close(handle)

    def test_use_after_close(self):
        handle = open_handle()
        bindings.close(handle)
        with pytest.raises(bindings.SessionClosed):
            bindings.mask_step(handle, np.full(len(VOCAB), 1.0 / len(VOCAB)))

    def test_wrong_length_distribution(self):
        handle = open_handle()
        with pytest.raises(LengthMismatch):
            bindings.mask_step(handle, np.array([1.0]))


class TestMaskStep:
    def test_uniform_matches_core_mask(self):
        handle = open_handle()
        uniform = np.full(len(VOCAB), 1.0 / len(VOCAB))
        mask, chosen, masked_dist = bindings.mask_step(handle, uniform)
        core_mask = compute_mask(new_session(load_registry(REGISTRY_DOC), VOCAB))
        assert (mask == core_mask.values).all()
        assert chosen == int(np.argmax(core_mask.values))
        assert abs(float(masked_dist.sum()) - 1.0) < 1e-9
        assert (masked_dist[~mask] == 0).all()

    def test_deadlock_propagates(self):
        doc = json.dumps(
            [
                {
                    "name": "pick",
                    "description": "Pick.",
                    "args": [
                        {
                            "name": "c",
                            "type": "enum",
                            "enum_values": ["AB", "CD"],
                            "description": "",
                        }
                    ],
                }
            ]
        )
        vocab = Vocabulary.char_level("pick()'<nexa_d>norlvtfu_iABC")
        handle = bindings.open_session(doc, vocab.tokens)
        for ch in "pick('C":
            one_hot = np.zeros(len(vocab))
            one_hot[vocab.id_of(ch)] = 1.0
            bindings.mask_step(handle, one_hot)
        with pytest.raises(ConstraintDeadlock):
            bindings.mask_step(handle, np.full(len(vocab), 1.0 / len(vocab)))


class TestDifferentialEquivalence:
    @pytest.mark.parametrize("spec", ["mock:noisy:0.3", "mock:random"])
    def test_fifty_seeded_runs_match_core(self, spec):
        registry = load_registry(REGISTRY_DOC)
        golds = [
            "youtube_downloader('https://youtu.be/N6vLKEx40Hk')<nexa_end>",
            "set_volume(42)<nexa_end>",
            "pick_country('Australia')<nexa_end>",
        ]
        for seed in range(50):
            gold = golds[seed % len(golds)]

            lm = make_mock(spec).bind(VOCAB, gold_text=gold, seed=seed)
            call, trace = decode_greedy(lm, new_session(registry, VOCAB), 4096)
            core_tokens = [s.chosen for s in trace.steps]

            lm = make_mock(spec).bind(VOCAB, gold_text=gold, seed=seed)
            handle = bindings.open_session(REGISTRY_DOC, VOCAB.tokens)
            bound_tokens: list[int] = []
            context: tuple[int, ...] = ()
            while not bindings.is_done(handle):
                dist = lm.next_distribution(context)
                mask, chosen, masked_dist = bindings.mask_step(handle, dist)
                core_step = trace.steps[len(bound_tokens)]
                assert (mask == core_step.mask.values).all()
                assert (masked_dist == core_step.masked_dist).all()
                bound_tokens.append(chosen)
                context = context + (chosen,)

            assert bound_tokens == core_tokens, (spec, seed)
            assert bindings.emitted_text(handle) == VOCAB.decode(core_tokens)
            bindings.close(handle)
