"""Command-line entry point.

Subcommands: decode one response, run a paired accuracy eval over a dataset
file, run the masking theorem checks, build an eval dataset from fixture
corpora, and dump the name-trie prefixes for debugging.

Exit codes: 0 success; 1 usage/file/spec errors; 2 decode could not finish
(deadlock or budget); 3 a theorem check found a counterexample.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import dataset as ds
from . import evalharness as ev
from . import metrics
from .decoder import Vocabulary, decode_greedy, decode_unmasked, new_session
from .errors import (
    BadSpec,
    BudgetExhausted,
    CallmaskError,
    ConstraintDeadlock,
    RegistryTooSmall,
    UnbalancedSpecs,
)
from .schema import load_registry, render_call
from .trie import Trie


def _read(path: str) -> str:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"no such file: {path}")
    return p.read_text(encoding="utf-8")


def cmd_decode(args) -> int:
    registry = load_registry(_read(args.registry))
    model = ev.make_model(args.lm)
    vocab = Vocabulary.printable_ascii()
    lm = model.bind(vocab, gold_text=None, seed=args.seed)
    state = new_session(registry, vocab)
    try:
        if args.masked:
            call, trace = decode_greedy(lm, state, args.max_tokens)
            print(render_call(call))
        else:
            text, trace = decode_unmasked(lm, state, args.max_tokens)
            print(text)
            try:
                from .schema import parse_call

                parse_call(text, registry)
            except CallmaskError as exc:
                print(f"warning: output does not parse: {exc}", file=sys.stderr)
    except (ConstraintDeadlock, BudgetExhausted) as exc:
        print(f"decode failed: {exc}", file=sys.stderr)
        return 2
    if args.trace:
        print(trace.to_jsonl(vocab), file=sys.stderr)
    return 0


def cmd_eval(args) -> int:
    entries = ds.read_dataset(args.dataset)
    sections = {}
    modes = {"true": [True], "false": [False], "both": [True, False]}[args.masked]
    for masked in modes:
        report = ev.run_eval(
            entries,
            args.lm,
            masked=masked,
            mode=args.mode,
            max_tokens=args.max_tokens,
            seed=args.seed,
            jobs=args.jobs,
        )
        sections["masked" if masked else "unmasked"] = report
        print(report.to_table())
    if args.out:
        payload = {name: r.to_dict() for name, r in sections.items()}
        Path(args.out).write_text(json.dumps(payload, indent=2), encoding="utf-8")
    return 0


def cmd_theorems(args) -> int:
    reports = [
        metrics.theorem_loss_check(args.trials, args.vocab_size, args.seed),
        metrics.theorem_loss_check(max(1, args.trials // 10), 1000, args.seed + 1),
    ]
    sizes = tuple(range(4, min(args.vocab_size, 8) + 1)) if args.exhaustive else (4, 5, 6, 7, 8)
    precision = metrics.theorem_precision_check(sizes, args.grid, args.seed)
    if args.inject_violation:
        reports[0].violations.append({"trial": -1, "note": "injected test hook"})
    failed = False
    for rep in reports:
        status = "ok" if rep.ok else "VIOLATED"
        print(
            f"loss-dominance |V|={rep.vocab_size} trials={rep.trials} "
            f"equalities={rep.equalities}: {status}"
        )
        if not rep.ok:
            failed = True
            for v in rep.violations[:5] + rep.strictness_failures[:5]:
                print(f"  counterexample: {v}")
    status = "ok" if precision.ok else "VIOLATED"
    print(
        f"precision-dominance sizes={list(precision.vocab_sizes)} "
        f"cases={precision.cases}: {status}"
    )
    if not precision.ok:
        failed = True
        for v in precision.violations[:5]:
            print(f"  counterexample: {v}")
    return 3 if failed else 0


def cmd_dataset(args) -> int:
    registry = load_registry(_read(args.registry))
    positives = ds.parse_positive_corpus(_read(args.positives), registry)
    if args.per_api is not None:
        by_fn: dict[str, int] = {}
        kept = []
        for spec in positives:
            if by_fn.get(spec.function, 0) < args.per_api:
                by_fn[spec.function] = by_fn.get(spec.function, 0) + 1
                kept.append(spec)
        positives = kept
    negatives = ds.parse_negative_corpus(_read(args.negatives))
    entries = ds.build_eval_set(registry, positives, negatives, seed=args.seed)
    ds.write_dataset(entries, args.out)
    solvable = sum(1 for e in entries if e.solvable)
    print(f"wrote {len(entries)} entries ({solvable} solvable) to {args.out}")
    return 0


def cmd_trie(args) -> int:
    if args.action != "dump":
        print(f"unknown trie action {args.action!r}", file=sys.stderr)
        return 1
    registry = load_registry(_read(args.registry))
    trie = Trie(registry.names())
    for prefix in trie.get_all_prefixes():
        print(prefix)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="callmask")
    parser.add_argument("--seed", type=int, default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decode", help="decode one response from a model spec")
    p.add_argument("--registry", required=True)
    p.add_argument("--lm", required=True, help="mock:<variant>[:...] or remote:<url>")
    p.add_argument("--query", default="", help="echoed into the prompt context")
    p.add_argument("--masked", type=_bool_flag, default=True)
    p.add_argument("--max-tokens", type=int, default=512)
    p.add_argument("--trace", action="store_true")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", help="paired accuracy eval over a dataset file")
    p.add_argument("--dataset", required=True)
    p.add_argument("--lm", required=True)
    p.add_argument("--masked", choices=["true", "false", "both"], default="both")
    p.add_argument("--mode", choices=["strict", "relaxed"], default="strict")
    p.add_argument("--max-tokens", type=int, default=512)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("theorems", help="run the masking theorem checks")
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--vocab-size", type=int, default=32)
    p.add_argument("--grid", type=int, default=1000)
    p.add_argument("--exhaustive", action="store_true")
    p.add_argument("--inject-violation", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_theorems)

    p = sub.add_parser("dataset", help="build an eval set from fixture corpora")
    p.add_argument("--registry", required=True)
    p.add_argument("--positives", required=True)
    p.add_argument("--negatives", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--per-api", type=int, default=None,
                   help="cap positives per function")
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("trie", help="inspect the function-name prefix index")
    p.add_argument("action", choices=["dump"])
    p.add_argument("--registry", required=True)
    p.set_defaults(func=cmd_trie)

    return parser


def _bool_flag(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except (BadSpec, UnbalancedSpecs, RegistryTooSmall) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except CallmaskError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
