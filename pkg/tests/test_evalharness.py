import numpy as np
import pytest

from callmask import CallExpression, load_registry, run_eval
from callmask.dataset import PositiveSpec, build_eval_set
from callmask.errors import BadSpec
from callmask.evalharness import (
    BUDGET_EXHAUSTED,
    PARSE_FAILURE,
    RemoteAdapter,
    WRONG_ARGUMENTS,
    WRONG_FUNCTION,
    make_mock,
    make_model,
    match_call,
)

from conftest import load_fixture_corpora, synthetic_registry


@pytest.fixture(scope="module")
def fixture_dataset(downloader_registry):
    positives, negatives = load_fixture_corpora(downloader_registry)
    return build_eval_set(downloader_registry, positives, negatives, seed=0)


class TestMakeMock:
    def test_variants_parse(self):
        assert make_mock("mock:oracle").variant == "oracle"
        assert make_mock("mock:noisy:0.2").eps == 0.2
        assert make_mock("mock:random").variant == "random"
        biased = make_mock("mock:biased:0.8:send_email")
        assert biased.strength == 0.8 and biased.text == "send_email"

    def test_inline_script_keeps_colons(self):
        fac = make_mock("mock:oracle:f('http://x')<nexa_end>")
        assert fac.text == "f('http://x')<nexa_end>"

    @pytest.mark.parametrize(
        "spec",
        ["mock:", "mock:telepathy", "mock:noisy", "mock:noisy:abc",
         "mock:biased", "mock:biased:0.5", "oracle", "llm:gpt"],
    )
    def test_bad_specs(self, spec):
        with pytest.raises(BadSpec):
            make_model(spec) if not spec.startswith("mock") else make_mock(spec)

    def test_oracle_needs_script(self, ascii_vocab):
        with pytest.raises(BadSpec):
            make_mock("mock:oracle").bind(ascii_vocab)

    def test_distributions_sum_to_one(self, ascii_vocab):
        gold = "youtube_downloader('u')<nexa_end>"
        for spec in ("mock:oracle", "mock:noisy:0.7", "mock:random", "mock:biased:0.9:f"):
            lm = make_mock(spec).bind(ascii_vocab, gold_text=gold, seed=3)
            for pos in range(4):
                dist = lm.next_distribution(tuple(range(pos)))
                assert abs(float(dist.sum()) - 1.0) < 1e-9
                assert (dist >= 0).all()

    def test_noisy_zero_eps_equals_oracle(self, ascii_vocab):
        gold = "youtube_downloader('u')<nexa_end>"
        oracle = make_mock("mock:oracle").bind(ascii_vocab, gold_text=gold)
        noisy = make_mock("mock:noisy:0.0").bind(ascii_vocab, gold_text=gold, seed=1)
        for pos in range(6):
            ctx = tuple(range(pos))
            assert (oracle.next_distribution(ctx) == noisy.next_distribution(ctx)).all()

    def test_oracle_argmax_follows_script(self, ascii_vocab):
        gold = "facebook_dl_link('u')<nexa_end>"
        lm = make_mock("mock:oracle").bind(ascii_vocab, gold_text=gold)
        script = ascii_vocab.tokenize(gold)
        context = []
        for expected in script:
            assert int(np.argmax(lm.next_distribution(tuple(context)))) == expected
            context.append(expected)


class TestMatchCall:
    def test_exact_match(self, downloader_registry):
        gold = CallExpression("insta_download_url", ("https://x/",))
        assert match_call(gold, gold, downloader_registry) == (True, None)

    def test_wrong_function_cause(self):
        registry = load_registry(
            '[{"name": "send_emil", "description": "Send.", '
            '"args": [{"name": "to", "type": "string", "description": ""}]}]'
        )
        gold = CallExpression("send_emil", ("x",))
        matched, cause = match_call("send_email('x')", gold, registry)
        assert (matched, cause) == (False, WRONG_FUNCTION)

    def test_wrong_arguments_cause(self, downloader_registry):
        gold = CallExpression("youtube_downloader", ("a",))
        matched, cause = match_call(
            CallExpression("youtube_downloader", ("b",)), gold, downloader_registry
        )
        assert (matched, cause) == (False, WRONG_ARGUMENTS)

    def test_relaxed_normalizes_spacing(self, downloader_registry):
        gold = CallExpression("insta_download_url", ("x",))
        text = "insta_download_url( 'x' )"
        assert match_call(text, gold, downloader_registry, "strict")[0] is False
        assert match_call(text, gold, downloader_registry, "relaxed") == (True, None)

    def test_relaxed_quote_style(self, downloader_registry):
        gold = CallExpression("insta_download_url", ("x",))
        assert match_call('insta_download_url("x")', gold, downloader_registry, "relaxed") == (
            True,
            None,
        )

    def test_strict_garbage_is_parse_failure(self, downloader_registry):
        gold = CallExpression("youtube_downloader", ("a",))
        matched, cause = match_call("???", gold, downloader_registry)
        assert (matched, cause) == (False, PARSE_FAILURE)


class TestRunEval:
    def test_oracle_masked_is_perfect(self, fixture_dataset):
        report = run_eval(fixture_dataset, "mock:oracle", masked=True, seed=0)
        assert report.accuracy == 1.0
        assert report.total == 20

    def test_random_masked_never_parse_fails(self, fixture_dataset):
        report = run_eval(
            fixture_dataset, "mock:random", masked=True, seed=1, max_tokens=4096
        )
        assert report.breakdown[PARSE_FAILURE] == 0
        assert report.breakdown[BUDGET_EXHAUSTED] == 0

    def test_noisy_paired_uplift(self):
        registry = synthetic_registry()
        names = [f.name for f in registry.non_sentinel()]
        positives = []
        for i in range(25):
            target = registry.get(names[i % len(names)])
            kind = target.args[0].type.kind
            value = {
                "string": f"v{i}", "integer": i, "float": i + 0.5, "boolean": True,
                "dict": {"k": i},
            }.get(kind, target.args[0].type.enum_values[0] if kind == "enum" else None)
            positives.append(PositiveSpec(target.name, f"query {i}", (value,)))
        negatives = [f"off-topic {i}" for i in range(25)]
        dataset = build_eval_set(registry, positives, negatives, seed=4)
        masked = run_eval(dataset, "mock:noisy:0.2", masked=True, seed=11)
        unmasked = run_eval(dataset, "mock:noisy:0.2", masked=False, seed=11)
        assert masked.accuracy >= unmasked.accuracy
        assert masked.breakdown[PARSE_FAILURE] == 0

    def test_report_reproducible_and_job_invariant(self, fixture_dataset):
        kwargs = dict(masked=True, mode="strict", seed=5)
        a = run_eval(fixture_dataset, "mock:noisy:0.3", **kwargs)
        b = run_eval(fixture_dataset, "mock:noisy:0.3", **kwargs)
        c = run_eval(fixture_dataset, "mock:noisy:0.3", jobs=4, **kwargs)
        assert a.to_dict() == b.to_dict() == c.to_dict()

    def test_breakdown_sums(self, fixture_dataset):
        report = run_eval(fixture_dataset, "mock:noisy:0.5", masked=False, seed=2)
        assert sum(report.breakdown.values()) == report.total - report.correct

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            run_eval([], "mock:random", masked=True)

    def test_remote_cannot_be_masked(self, fixture_dataset):
        with pytest.raises(BadSpec):
            run_eval(fixture_dataset, RemoteAdapter("http://localhost:1/v1"), masked=True)


class TestBiasedScenario:
    def test_masked_stays_registered_unmasked_drifts(self, ascii_vocab):
        from callmask import decode_greedy, decode_unmasked, new_session

        registry = load_registry(
            '[{"name": "send_emil", "description": "Send a message.", '
            '"args": [{"name": "to", "type": "string", "description": ""}]}]'
        )
        factory = make_mock("mock:biased:0.9:send_email")
        unregistered_seen = 0
        for seed in range(10):
            lm = factory.bind(ascii_vocab, seed=seed)
            call, _ = decode_greedy(lm, new_session(registry, ascii_vocab))
            assert call.function == "send_emil"
            lm = factory.bind(ascii_vocab, seed=seed)
            text, _ = decode_unmasked(lm, new_session(registry, ascii_vocab))
            if text.startswith("send_email("):
                unregistered_seen += 1
        assert unregistered_seen >= 1
