"""Markdown report of a convergence run. Output depends only on the inputs."""

from __future__ import annotations

from gconv.anf import NormalizeError, normalize
from gconv.converge import ConvergenceResult
from gconv.gin import print_grammar, print_production, print_trace
from gconv.model import Grammar
from gconv.prodsig import format_prodsig, prodsig


def _block(text: str, lang: str = "") -> list[str]:
    return [f"```{lang}", text.rstrip("\n"), "```", ""]


def _trace_section(title: str, trace) -> list[str]:
    lines = [f"#### {title} ({len(trace)} steps)", ""]
    if trace:
        lines += _block(print_trace(trace), "xbgf")
    else:
        lines += ["(no steps)", ""]
    return lines


def _prodsig_table(g: Grammar) -> list[str]:
    lines = ["| production | signature |", "| --- | --- |"]
    for p in g.productions:
        lines.append(f"| `{print_production(p)}` | `{format_prodsig(prodsig(p))}` |")
    return lines + [""]


def _side(name) -> str:
    return "-" if name is None else name


def _servant_section(result: ConvergenceResult) -> list[str]:
    status = "converged" if result.converged else "FAILED"
    lines = [f"## Servant {result.servant_name}: {status}", ""]
    g = result.grammars
    lines += ["### Original grammar", ""] + _block(print_grammar(g["servant"]), "gin")
    lines += ["### Traces", ""]
    lines += _trace_section("Mutation", result.mutation_trace)
    lines += _trace_section("Normalization", result.servant_anf_trace)
    if "servant_anf" in g:
        lines += ["### Abstract normal form", ""] + _block(print_grammar(g["servant_anf"]), "gin")
        lines += ["### Production signatures", ""] + _prodsig_table(g["servant_anf"])
    if result.resolution is not None:
        lines += [f"### Nominal resolution ({result.resolution.backtracks} backtracks)", ""]
        why = result.resolution.justification
        for m, s in result.resolution.pairs:
            note = why.get((m, s), "unmatched" if m is None or s is None else "")
            lines.append(f"- resolution: {_side(s)} -> {_side(m)} ({note})")
        lines.append("")
        lines += _trace_section("Renaming", result.rename_trace)
        if "final" in g or result.structural_trace:
            lines += _trace_section("Structural resolution", result.structural_trace)
    lines += ["### Verdict", ""]
    if result.converged:
        steps = len(result.servant_trace())
        lines += [f"converged in {steps} steps", ""]
    else:
        lines += [f"FAILED: {result.reason}", ""]
        if result.failure is not None:
            f = result.failure
            if f.frontier is not None:
                lines += [f"frontier: {_side(f.frontier[0])} (master) / {_side(f.frontier[1])} (servant)", ""]
            if f.partial.pairs:
                lines += ["deepest partial resolution:", ""]
                lines += [f"- {_side(s)} -> {_side(m)}" for m, s in f.partial.pairs]
                lines.append("")
    return lines


def render_report(master_name: str, master: Grammar, results: list[ConvergenceResult]) -> str:
    lines = ["# Grammar convergence report", ""]
    converged = sum(r.converged for r in results)
    lines += [f"{converged} of {len(results)} servants converged.", ""]
    lines += [f"## Master {master_name}", ""] + _block(print_grammar(master), "gin")
    try:
        norm = normalize(master)
    except NormalizeError as exc:
        lines += [f"The master cannot be normalized: {exc}", ""]
    else:
        lines += ["### Traces", ""] + _trace_section("Normalization", norm.trace)
        lines += ["### Abstract normal form", ""] + _block(print_grammar(norm.normalized), "gin")
        lines += ["### Production signatures", ""] + _prodsig_table(norm.normalized)
    for r in results:
        lines += _servant_section(r)
    return "\n".join(lines).rstrip("\n") + "\n"
