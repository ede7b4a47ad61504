"""Mask-constrained greedy decoding for API function calls."""

from .schema import (
    END_MARKER,
    SENTINEL,
    SENTINEL_NAME,
    ArgSpec,
    ArgType,
    CallExpression,
    FunctionRegistry,
    FunctionSchema,
    dump_registry,
    load_registry,
    parse_call,
    parse_stub,
    parse_stubs,
    render_call,
    render_stub,
    sentinel_call,
    validate_call,
)
from .trie import PrefixSet, Trie, build_prefix_set
from .typematch import (
    MatcherState,
    MatchStatus,
    advance,
    allowed_continuations,
    feed,
    new_matcher,
    viable_next_chars,
)
from .decoder import (
    DecodeState,
    DecodeTrace,
    MaskVector,
    Vocabulary,
    apply_mask,
    compute_mask,
    decode_greedy,
    decode_unmasked,
    new_session,
    replay_tokens,
    step,
)
from .metrics import (
    StepRecord,
    loss_masked,
    loss_masked_literal,
    loss_unmasked,
    precision_indicator,
    sequence_report,
    theorem_loss_check,
    theorem_precision_check,
)
from .dataset import (
    DataPoint,
    PositiveSpec,
    SamplingConfig,
    TermFrequencyEmbedding,
    build_datapoint,
    build_eval_set,
    build_negative,
    read_dataset,
    render_prompt,
    similar_functions,
    write_dataset,
)
from .evalharness import (
    AccuracyReport,
    MockFactory,
    make_mock,
    match_call,
    run_eval,
)

__version__ = "0.1.0"
