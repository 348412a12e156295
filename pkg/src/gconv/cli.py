"""Command line interface: ``gconv <command> ...``.

Exit status is 0 on success, 1 when matching, convergence or a transformation
fails, and 2 for unreadable or malformed input.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from gconv.anf import NormalizeError, normalize
from gconv.converge import converge
from gconv.gin import ParseError, parse_grammar, parse_trace, print_grammar, print_trace
from gconv.model import Grammar, classify_anf
from gconv.prodsig import MatchFailure, format_prodsig, global_resolution, prodsig
from gconv.report import render_report
from gconv.xbgf import TransformError, apply_trace

log = logging.getLogger("gconv")

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror or exc}") from None


def _grammar(path: str) -> Grammar:
    try:
        return parse_grammar(_read(path))
    except ParseError as exc:
        raise InputError(f"{path}:{exc}") from None


def _write(path: str, text: str) -> None:
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror or exc}") from None


def _err(message: str) -> None:
    print(message, file=sys.stderr)


def cmd_check_anf(args) -> int:
    c = classify_anf(_grammar(args.grammar))
    if not c.ok:
        for n, why in c.violations:
            _err(f"{n}: {why}")
        return EXIT_FAIL
    for title, names in (("chain", c.plus_set), ("sequence", c.minus_set), ("undefined", c.bottom_set)):
        print(f"{title}: {', '.join(sorted(names))}")
    return EXIT_OK


def cmd_normalize(args) -> int:
    try:
        result = normalize(_grammar(args.grammar))
    except NormalizeError as exc:
        _err(f"{args.grammar}: {exc}")
        return EXIT_FAIL
    text = print_grammar(result.normalized)
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    if args.trace:
        _write(args.trace, print_trace(result.trace))
    return EXIT_OK


def cmd_prodsig(args) -> int:
    for p in _grammar(args.grammar).productions:
        print(f"{p.lhs} :: {format_prodsig(prodsig(p))}")
    return EXIT_OK


def _anf(g: Grammar, path: str) -> Grammar:
    if classify_anf(g).ok:
        return g
    log.info("%s is not in ANF; normalizing it first", path)
    return normalize(g).normalized


def cmd_match(args) -> int:
    try:
        master = _anf(_grammar(args.master), args.master)
        servant = _anf(_grammar(args.servant), args.servant)
        resolution = global_resolution(master, servant)
    except NormalizeError as exc:
        _err(str(exc))
        return EXIT_FAIL
    except MatchFailure as exc:
        _err(f"no match: {exc}")
        for m, s in exc.partial.pairs:
            _err(f"  matched so far: {m} -> {s}")
        return EXIT_FAIL
    for m, s in resolution.pairs:
        print(f"{m or '-'} -> {s or '-'}")
    return EXIT_OK


def cmd_converge(args) -> int:
    master = _grammar(args.master)
    servants = [(Path(p).stem, _grammar(p)) for p in args.servants]
    results = []
    for name, servant in servants:
        result = converge(master, servant, name)
        results.append(result)
        if result.converged:
            print(f"{name}: converged ({len(result.servant_trace())} steps)")
        else:
            print(f"{name}: FAILED")
            _err(f"{name}: {result.reason}")
    if args.traces:
        out = Path(args.traces)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise InputError(f"{out}: {exc.strerror or exc}") from None
        for r in results:
            for kind, trace in (
                ("mutate", r.mutation_trace),
                ("anf", r.servant_anf_trace),
                ("rename", r.rename_trace),
                ("struct", r.structural_trace),
            ):
                _write(str(out / f"{r.servant_name}.{kind}.xbgf"), print_trace(trace))
    if args.report:
        _write(args.report, render_report(Path(args.master).stem, master, results))
    return EXIT_OK if all(r.converged for r in results) else EXIT_FAIL


def cmd_apply(args) -> int:
    g = _grammar(args.grammar)
    try:
        trace = parse_trace(_read(args.trace))
    except ParseError as exc:
        raise InputError(f"{args.trace}:{exc}") from None
    try:
        h = apply_trace(g, trace, "backward" if args.backward else "forward")
    except TransformError as exc:
        _err(f"{args.trace}: {exc}")
        return EXIT_FAIL
    text = print_grammar(h)
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gconv", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check-anf", help="classify nonterminals or list ANF violations")
    p.add_argument("grammar")
    p.set_defaults(func=cmd_check_anf)

    p = sub.add_parser("normalize", help="rewrite a grammar into abstract normal form")
    p.add_argument("grammar")
    p.add_argument("--out", help="write the normalized grammar here instead of stdout")
    p.add_argument("--trace", help="write the transformation trace here")
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("prodsig", help="print the signature of every production")
    p.add_argument("grammar")
    p.set_defaults(func=cmd_prodsig)

    p = sub.add_parser("match", help="match the nonterminals of two grammars")
    p.add_argument("master")
    p.add_argument("servant")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("converge", help="converge servant grammars to a master")
    p.add_argument("master")
    p.add_argument("servants", nargs="+")
    p.add_argument("--report", help="write a markdown report")
    p.add_argument("--traces", help="directory for per-servant trace files")
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("apply", help="replay a trace on a grammar")
    p.add_argument("grammar")
    p.add_argument("trace")
    p.add_argument("--backward", action="store_true", help="undo the trace instead")
    p.add_argument("--out", help="write the result here instead of stdout")
    p.set_defaults(func=cmd_apply)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        _err(str(exc))
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
