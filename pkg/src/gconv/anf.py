"""Rewriting grammars into Abstract Normal Form, recording every step.

The pipeline runs fixed stages: single root, no labels or selectors, no
separator lists, no terminals, no epsilon productions, no inner choices,
vertical alternatives, chain/sequence shape, no trivial chains, no
unreachable nonterminals. Each stage emits :class:`~gconv.xbgf.Step` values
and the grammar is only ever changed by replaying them, so the trace and the
result cannot drift apart.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from gconv.model import (
    DECORATORS,
    ANFClassification,
    Choice,
    Epsilon,
    Grammar,
    Nonterminal,
    Selector,
    SepListPlus,
    SepListStar,
    classify_anf,
    is_atom,
    items_of,
    reachable_from,
    walk,
)
from gconv.xbgf import (
    Step,
    split_recursion,
    apply_forward,
    desugar_image,
    local_index,
    nonterminals_in,
    occurrences,
    put,
    strip,
    wrap_sites,
)

log = logging.getLogger(__name__)


class NormalizeError(Exception):
    pass


class BudgetExceeded(NormalizeError):
    pass


@dataclass(frozen=True)
class NormalizationResult:
    normalized: Grammar
    trace: tuple[Step, ...]
    classification: ANFClassification


def fresh_name(g: Grammar, base: str, prefix: str | None = None) -> str:
    stem = prefix if prefix is not None else base
    k = 1
    while f"{stem}_{k}" in g.nonterminals:
        k += 1
    return f"{stem}_{k}"


def _size(g: Grammar) -> int:
    nodes = sum(sum(1 for _ in walk(p.rhs)) for p in g.productions)
    return len(g.nonterminals) + len(g.productions) + nodes


class _Recorder:
    def __init__(self, g: Grammar, budget: int | None = None):
        self.g = g
        self.steps: list[Step] = []
        self.budget = budget

    def __call__(self, op: str, *args) -> None:
        step = Step(op, tuple(args))
        self.g = apply_forward(self.g, step)
        self.steps.append(step)
        if self.budget is not None and len(self.steps) > self.budget:
            raise BudgetExceeded(f"normalization exceeded its budget of {self.budget} steps")


def _reroot(rec: _Recorder) -> None:
    g = rec.g
    if not g.roots:
        raise NormalizeError("grammar has no root")
    for r in g.roots:
        if r not in g.defined:
            raise NormalizeError(f"root {r} is undefined")
    if len(g.roots) > 1:
        first = g.roots[0]
        reach = reachable_from(g, [first])
        stray = [r for r in g.roots[1:] if r not in reach]
        if stray:
            raise NormalizeError(f"roots {', '.join(stray)} are not reachable from {first}")
        rec("reroot", (first,), tuple(g.roots))


def _unlabel(rec: _Recorder) -> None:
    for pos, p in enumerate(rec.g.productions):
        if p.label is not None:
            rec("unlabel", p.lhs, local_index(rec.g, pos), p.label)


def _first_in_productions(g: Grammar, pick):
    for pos, p in enumerate(g.productions):
        found = pick(p.rhs)
        if found is not None:
            return pos, p, found
    return None


def _first_selector(rhs):
    for path, node in walk(rhs):
        if isinstance(node, Selector):
            return path, node
    return None


def _unselect(rec: _Recorder) -> None:
    while (hit := _first_in_productions(rec.g, _first_selector)) is not None:
        pos, p, (path, node) = hit
        _, width = put(p.rhs, path, node.expr)
        args = [p.lhs, local_index(rec.g, pos), path, node.name]
        if width != 1:
            args.append(width)
        rec("unselect", *args)


def _innermost_sep_list(rhs):
    for path, node in walk(rhs):
        if isinstance(node, (SepListPlus, SepListStar)) and not any(
            isinstance(inner, (SepListPlus, SepListStar)) for k in node.children() for _, inner in walk(k)
        ):
            return path, node
    return None


def _desugar(rec: _Recorder) -> None:
    while (hit := _first_in_productions(rec.g, _innermost_sep_list)) is not None:
        pos, p, (path, node) = hit
        args = [p.lhs, local_index(rec.g, pos), path, node.separator]
        if isinstance(node, SepListPlus):
            _, width = put(p.rhs, path, desugar_image(node))
            if width != 1:
                args.append(width)
            rec("desugarSepPlus", *args)
        else:
            rec("desugarSepStar", *args)


def _abstract(rec: _Recorder) -> None:
    for pos, p in enumerate(rec.g.productions):
        if strip(p.rhs) != p.rhs:
            rec("abstract", p.lhs, local_index(rec.g, pos), p.rhs)


def _eliminate_epsilon(rec: _Recorder) -> None:
    for n in rec.g.lhs_order():
        g = rec.g
        eps = tuple(i for i in g.positions_of(n) if isinstance(g.productions[i].rhs, Epsilon))
        if not eps:
            continue
        rest = Grammar(g.roots, tuple(q for i, q in enumerate(g.productions) if i not in eps))
        if n not in rest.defined and n in g.roots:
            raise NormalizeError(f"root {n} derives only the empty string")
        sites = wrap_sites(rest, n) if n in rest.defined else ()
        rec("eliminateEpsilon", n, eps, sites)


def _first_inner_choice(rhs):
    for path, node in walk(rhs):
        if path and isinstance(node, Choice):
            return path, node
    return None


def _hoist_choices(rec: _Recorder) -> None:
    while (hit := _first_in_productions(rec.g, _first_inner_choice)) is not None:
        _, p, (_, node) = hit
        name = fresh_name(rec.g, p.lhs)
        rec("extract", name, node, p.lhs)
        rec("vertical", name, 1, len(node.items))


def _verticalize(rec: _Recorder) -> None:
    pos = 0
    while pos < len(rec.g.productions):
        p = rec.g.productions[pos]
        if isinstance(p.rhs, Choice):
            rec("vertical", p.lhs, local_index(rec.g, pos), len(p.rhs.items))
            pos += len(p.rhs.items)
        else:
            pos += 1


def _shape_target(g: Grammar):
    """The next (scope, expression) pair to extract, or ``None``."""
    for n in g.lhs_order():
        prods = [p for p in g.productions if p.lhs == n]
        if len(prods) > 1:
            for p in prods:
                if not isinstance(p.rhs, Nonterminal):
                    return n, p.rhs
            continue
        for item in items_of(prods[0].rhs):
            if is_atom(item):
                continue
            if isinstance(item, DECORATORS):
                return n, item.expr
            return n, item
    return None


def _enforce_shape(rec: _Recorder) -> None:
    while (target := _shape_target(rec.g)) is not None:
        scope, expr = target
        rec("extract", fresh_name(rec.g, scope), expr, scope)


def _trivial_chain(g: Grammar):
    for n in g.lhs_order():
        positions = g.positions_of(n)
        if len(positions) != 1 or n in g.roots:
            continue
        rhs = g.productions[positions[0]].rhs
        if isinstance(rhs, Nonterminal) and rhs.name != n:
            return n, positions[0], rhs
    return None


def _inline_chains(rec: _Recorder) -> None:
    while (hit := _trivial_chain(rec.g)) is not None:
        n, pos, rhs = hit
        rec("inline", n, pos, rhs, occurrences(rec.g, n))


def _remove_unreachable(rec: _Recorder) -> None:
    reach = reachable_from(rec.g, rec.g.roots)
    for n in rec.g.lhs_order():
        if n not in reach:
            g = rec.g
            positions = tuple(g.positions_of(n))
            rec("removeUnreachable", n, positions, *(g.productions[i].rhs for i in positions))


_STAGES = (
    _reroot,
    _unlabel,
    _unselect,
    _desugar,
    _abstract,
    _eliminate_epsilon,
    _hoist_choices,
    _verticalize,
    _enforce_shape,
    _inline_chains,
    _remove_unreachable,
)


def normalize(g: Grammar) -> NormalizationResult:
    """Rewrite ``g`` into Abstract Normal Form.

    Raises :class:`NormalizeError` when the grammar has no usable root and
    :class:`BudgetExceeded` if the pipeline runs away.
    """
    rec = _Recorder(g, budget=10 * _size(g))
    for stage in _STAGES:
        before = len(rec.steps)
        stage(rec)
        log.debug("%s: %d steps", stage.__name__.lstrip("_"), len(rec.steps) - before)
    classification = classify_anf(rec.g)
    if not classification.ok:
        raise NormalizeError(f"normalization left violations: {classification.violations}")
    return NormalizationResult(rec.g, tuple(rec.steps), classification)


def _yaccified(g: Grammar):
    for n in g.lhs_order():
        positions = g.positions_of(n)
        if len(positions) != 2:
            continue
        prods = [g.productions[i] for i in positions]
        if any(p.label is not None for p in prods):
            continue
        for variant in ("left", "right"):
            recursive = [split_recursion(n, p.rhs, variant) is not None for p in prods]
            if recursive.count(True) != 1:
                continue
            rec_pos = positions[recursive.index(True)]
            base_pos = positions[recursive.index(False)]
            if g.productions[base_pos].rhs == Nonterminal(n):
                continue
            return n, variant, base_pos, rec_pos
    return None


def _layer(g: Grammar):
    """A chain ``Y ::= X`` whose target is used nowhere else and defined by a
    single production: the intermediate layer ``X`` can be folded into ``Y``."""
    for y in g.lhs_order():
        positions = g.positions_of(y)
        if len(positions) != 1:
            continue
        rhs = g.productions[positions[0]].rhs
        if not isinstance(rhs, Nonterminal) or rhs.name == y:
            continue
        x = rhs.name
        xs = g.positions_of(x)
        if len(xs) != 1 or x in g.roots or g.productions[xs[0]].label is not None:
            continue
        if x in set(nonterminals_in(g.productions[xs[0]].rhs)):
            continue
        if occurrences(g, x) != ((y, 1),):
            continue
        return x, xs[0]
    return None


def mutate_for_convergence(g: Grammar) -> tuple[Grammar, tuple[Step, ...]]:
    """Deyaccify recursive list encodings and fold single-use chain layers."""
    rec = _Recorder(g, budget=10 * _size(g))
    while True:
        hit = _yaccified(rec.g)
        if hit is not None:
            rec("deyaccify", *hit)
            continue
        layer = _layer(rec.g)
        if layer is not None:
            x, pos = layer
            rec("inline", x, pos, rec.g.productions[pos].rhs, occurrences(rec.g, x))
            continue
        return rec.g, tuple(rec.steps)
