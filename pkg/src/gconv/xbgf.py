"""Reversible grammar transformation steps.

A :class:`Step` is an operator name plus positional arguments. Arguments are
names (``str``), integers, expressions, or tuples of names/integers/tuples.
Conventions shared by all operators:

* ``index`` is the 1-based index of a production among those of its lhs;
* ``pos`` / ``positions`` are 0-based positions in the whole production list;
* a path is a tuple of 0-based child indices into a right-hand side;
* an occurrence is ``(lhs, index, *path)``.

Each step records enough context to be undone without looking anywhere else.
:func:`apply_backward` computes the candidate pre-image and then re-runs the
step forward, so a grammar outside the image of a step is always rejected.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator

from gconv.model import (
    DECORATORS,
    Choice,
    Epsilon,
    Expr,
    Grammar,
    Nonterminal,
    Optional,
    Plus,
    Production,
    Selector,
    SepListPlus,
    SepListStar,
    Sequence,
    Star,
    Terminal,
    choice,
    items_of,
    node_at,
    nonterminals_in,
    rebuild,
    reachable_from,
    seq,
    walk,
)


@dataclass(frozen=True)
class Step:
    op: str
    args: tuple = ()

    def __str__(self):
        from gconv.gin import print_step

        return print_step(self)


Trace = tuple  # of Step


class TransformError(Exception):
    def __init__(self, op: str, message: str):
        super().__init__(f"{op}: {message}")
        self.op = op
        self.message = message


class TraceError(TransformError):
    def __init__(self, index: int, cause: TransformError):
        super().__init__(cause.op, f"step {index}: {cause.message}")
        self.index = index
        self.cause = cause


# name: (required kinds, optional kinds, variadic kind)
# kinds: n = name, i = int, e = expression, l = list
SIGNATURES: dict[str, tuple[str, str, str | None]] = {
    "rename": ("nn", "", None),
    "unlabel": ("nin", "", None),
    "unselect": ("niln", "i", None),
    "abstract": ("nie", "", None),
    "desugarSepPlus": ("nile", "i", None),
    "desugarSepStar": ("nile", "", None),
    "extract": ("nen", "", None),
    "inline": ("niel", "", None),
    "vertical": ("nii", "", None),
    "widen": ("ni", "l", None),
    "narrow": ("ni", "l", None),
    "permute": ("nl", "", None),
    "deyaccify": ("nnii", "", None),
    "removeUnreachable": ("nl", "", "e"),
    "reroot": ("ll", "", None),
    "eliminateEpsilon": ("nll", "", None),
}

_KIND_CHECK: dict[str, Callable[[object], bool]] = {
    "n": lambda a: isinstance(a, str),
    "i": lambda a: isinstance(a, int) and not isinstance(a, bool) and a >= 0,
    "e": lambda a: isinstance(a, Expr),
    "l": lambda a: isinstance(a, tuple),
}
_KIND_NAME = {"n": "name", "i": "integer", "e": "expression", "l": "list"}


def check_step(step: Step) -> None:
    """Raise ``ValueError`` for an unknown operator or ill-formed arguments."""
    if step.op not in SIGNATURES:
        raise ValueError(f"unknown operator {step.op!r}")
    required, optional, variadic = SIGNATURES[step.op]
    n = len(step.args)
    if variadic is None and not len(required) <= n <= len(required) + len(optional):
        expected = str(len(required)) if not optional else f"{len(required)}-{len(required) + len(optional)}"
        raise ValueError(f"{step.op} takes {expected} arguments, got {n}")
    if variadic is not None and n < len(required):
        raise ValueError(f"{step.op} takes at least {len(required)} arguments, got {n}")
    kinds = required + optional
    for k, arg in enumerate(step.args):
        kind = kinds[k] if k < len(kinds) else variadic
        if not _KIND_CHECK[kind](arg):
            raise ValueError(f"{step.op}: argument {k + 1} must be a {_KIND_NAME[kind]}")


# -- expression surgery -------------------------------------------------------


def _set(expr: Expr, path: tuple[int, ...], node: Expr) -> Expr:
    if not path:
        return node
    kids = list(expr.children())
    kids[path[0]] = _set(kids[path[0]], path[1:], node)
    return rebuild(expr, kids)


def _splices(parent: Expr, node: Expr) -> bool:
    return (isinstance(parent, Sequence) and isinstance(node, Sequence)) or (
        isinstance(parent, Choice) and isinstance(node, Choice)
    )


def put(rhs: Expr, path: tuple[int, ...], node: Expr) -> tuple[Expr, int]:
    """Replace the node at ``path``; a sequence dropped into a sequence (or a
    choice into a choice) is spliced. Returns the new rhs and the number of
    parent slots the node now occupies."""
    if not path:
        return node, 1
    parent = node_at(rhs, path[:-1])
    if isinstance(parent, Sequence) and isinstance(node, Epsilon):
        raise ValueError("cannot place eps inside a sequence")
    kids = list(parent.children())
    i = path[-1]
    width = 1
    if _splices(parent, node):
        kids[i : i + 1] = node.items
        width = len(node.items)
    else:
        kids[i] = node
    return _set(rhs, path[:-1], rebuild(parent, kids)), width


def take(rhs: Expr, path: tuple[int, ...], width: int) -> Expr:
    """Inverse view of :func:`put`: the (possibly spliced) node at ``path``."""
    if width == 1:
        return node_at(rhs, path)
    if not path:
        raise ValueError("a spliced node needs a parent")
    parent = node_at(rhs, path[:-1])
    i = path[-1]
    if not isinstance(parent, (Sequence, Choice)) or i + width > len(parent.items) or width >= len(parent.items):
        raise ValueError(f"no span of width {width} at {list(path)}")
    span = parent.items[i : i + width]
    return seq(*span) if isinstance(parent, Sequence) else choice(*span)


def put_span(rhs: Expr, path: tuple[int, ...], width: int, node: Expr) -> Expr:
    if width == 1:
        return _set(rhs, path, node)
    parent = node_at(rhs, path[:-1])
    kids = list(parent.children())
    i = path[-1]
    kids[i : i + width] = [node]
    return _set(rhs, path[:-1], rebuild(parent, kids))


def substitute(expr: Expr, name: str, replacement: Expr) -> Expr:
    if isinstance(expr, Nonterminal):
        return replacement if expr.name == name else expr
    kids = expr.children()
    if not kids:
        return expr
    return rebuild(expr, [substitute(k, name, replacement) for k in kids])


def replace_subtree(expr: Expr, target: Expr, replacement: Expr) -> tuple[Expr, int]:
    """Replace every (outermost) occurrence of ``target``; return the count."""
    if expr == target:
        return replacement, 1
    kids = expr.children()
    if not kids:
        return expr, 0
    total = 0
    new = []
    for k in kids:
        nk, c = replace_subtree(k, target, replacement)
        new.append(nk)
        total += c
    return (rebuild(expr, new) if total else expr), total


def rename_in(expr: Expr, old: str, new: str) -> Expr:
    return substitute(expr, old, Nonterminal(new))


def _nullable_wrap(expr: Expr) -> Expr:
    if isinstance(expr, (Optional, Star)):
        return expr
    if isinstance(expr, Plus):
        return Star(expr.expr)
    return Optional(expr)


def _repeat(kind, body: Expr) -> Expr:
    if isinstance(body, DECORATORS):
        inner = body.expr
        if kind is Plus and isinstance(body, Plus):
            return body
        return Star(inner)
    return kind(body)


def strip(expr: Expr) -> Expr:
    """Remove every terminal and simplify what the removal leaves behind:
    epsilon alternatives turn their choice optional, empty repetitions vanish
    and stacked repetition marks collapse to one."""
    if isinstance(expr, (Epsilon, Terminal)):
        return Epsilon()
    if isinstance(expr, Nonterminal):
        return expr
    if isinstance(expr, Sequence):
        return seq(*(strip(e) for e in expr.items))
    if isinstance(expr, Choice):
        alts = [strip(e) for e in expr.items]
        kept = [a for a in alts if not isinstance(a, Epsilon)]
        if not kept:
            return Epsilon()
        body = choice(*kept)
        return _nullable_wrap(body) if len(kept) < len(alts) else body
    if isinstance(expr, Optional):
        body = strip(expr.expr)
        return body if isinstance(body, Epsilon) else _nullable_wrap(body)
    if isinstance(expr, (Star, Plus)):
        body = strip(expr.expr)
        return body if isinstance(body, Epsilon) else _repeat(type(expr), body)
    if isinstance(expr, (SepListPlus, SepListStar)):
        element, separator = strip(expr.element), strip(expr.separator)
        if isinstance(separator, Epsilon):
            if isinstance(element, Epsilon):
                return Epsilon()
            return _repeat(Plus if isinstance(expr, SepListPlus) else Star, element)
        if isinstance(element, Epsilon):
            return _repeat(Star, separator)
        return type(expr)(element, separator)
    if isinstance(expr, Selector):
        body = strip(expr.expr)
        return body if isinstance(body, Epsilon) else Selector(expr.name, body)
    raise TypeError(f"not an expression: {expr!r}")


def desugar_image(sep_list: Expr) -> Expr:
    element, separator = sep_list.element, sep_list.separator
    if not any(True for _ in nonterminals_in(separator)):
        return Plus(element) if isinstance(sep_list, SepListPlus) else Star(element)
    unrolled = seq(element, Star(seq(separator, element)))
    return unrolled if isinstance(sep_list, SepListPlus) else Optional(unrolled)


def wrap_sites(g: Grammar, n: str) -> tuple[tuple, ...]:
    """Occurrences that :func:`eliminateEpsilon` rewrites: bare ``n`` (made
    optional) and ``n+`` (made ``n*``)."""
    sites = []
    counters: dict[str, int] = {}
    for p in g.productions:
        counters[p.lhs] = counters.get(p.lhs, 0) + 1
        parents: dict[tuple, Expr] = {}
        for path, node in walk(p.rhs):
            parents[path] = node
            parent = parents.get(path[:-1]) if path else None
            if isinstance(node, Plus) and node.expr == Nonterminal(n):
                sites.append((p.lhs, counters[p.lhs], *path))
            elif node == Nonterminal(n) and not isinstance(parent, DECORATORS):
                sites.append((p.lhs, counters[p.lhs], *path))
    return tuple(sites)


def occurrences(g: Grammar, n: str) -> tuple[tuple, ...]:
    found = []
    counters: dict[str, int] = {}
    for p in g.productions:
        counters[p.lhs] = counters.get(p.lhs, 0) + 1
        for path, node in walk(p.rhs):
            if node == Nonterminal(n):
                found.append((p.lhs, counters[p.lhs], *path))
    return tuple(found)


def local_index(g: Grammar, pos: int) -> int:
    lhs = g.productions[pos].lhs
    return sum(1 for p in g.productions[: pos + 1] if p.lhs == lhs)


# -- operators ----------------------------------------------------------------


class _Fail(Exception):
    pass


def _require(cond: bool, message: str):
    if not cond:
        raise _Fail(message)


def _position(g: Grammar, lhs: str, index: int) -> int:
    _require(lhs in g.nonterminals, f"unknown nonterminal {lhs}")
    positions = g.positions_of(lhs)
    _require(1 <= index <= len(positions), f"{lhs} has no production number {index}")
    return positions[index - 1]


def _with(g: Grammar, pos: int, prod: Production) -> Grammar:
    prods = list(g.productions)
    prods[pos] = prod
    return Grammar(g.roots, tuple(prods))


def _rhs(g: Grammar, lhs: str, index: int) -> tuple[int, Production]:
    pos = _position(g, lhs, index)
    return pos, g.productions[pos]


def _path(arg) -> tuple[int, ...]:
    _require(all(isinstance(i, int) for i in arg), f"malformed path {list(arg)}")
    return tuple(arg)


def _node(rhs: Expr, path) -> Expr:
    try:
        return node_at(rhs, path)
    except IndexError as exc:
        raise _Fail(str(exc)) from None


def _rename(g: Grammar, x: str, y: str) -> Grammar:
    _require(x in g.nonterminals, f"unknown nonterminal {x}")
    _require(y not in g.nonterminals, f"{y} is not fresh")
    roots = tuple(y if r == x else r for r in g.roots)
    prods = tuple(
        Production(y if p.lhs == x else p.lhs, rename_in(p.rhs, x, y), p.label) for p in g.productions
    )
    return Grammar(roots, prods)


def _f_rename(g, x, y):
    return _rename(g, x, y)


def _b_rename(g, x, y):
    return _rename(g, y, x)


def _f_unlabel(g, lhs, index, label):
    pos, p = _rhs(g, lhs, index)
    _require(p.label == label, f"production {lhs}/{index} is not labelled {label}")
    return _with(g, pos, Production(p.lhs, p.rhs))


def _b_unlabel(g, lhs, index, label):
    pos, p = _rhs(g, lhs, index)
    _require(p.label is None, f"production {lhs}/{index} is already labelled")
    return _with(g, pos, Production(p.lhs, p.rhs, label))


def _f_unselect(g, lhs, index, path, name, width=1):
    pos, p = _rhs(g, lhs, index)
    path = _path(path)
    node = _node(p.rhs, path)
    _require(isinstance(node, Selector) and node.name == name, f"no selector {name} at {list(path)} in {lhs}")
    try:
        rhs, w = put(p.rhs, path, node.expr)
    except ValueError as exc:
        raise _Fail(str(exc)) from None
    _require(w == width, f"selector body occupies {w} slots, recorded {width}")
    return _with(g, pos, Production(p.lhs, rhs, p.label))


def _b_unselect(g, lhs, index, path, name, width=1):
    pos, p = _rhs(g, lhs, index)
    path = _path(path)
    try:
        body = take(p.rhs, path, width)
        rhs = put_span(p.rhs, path, width, Selector(name, body))
    except (ValueError, IndexError) as exc:
        raise _Fail(str(exc)) from None
    return _with(g, pos, Production(p.lhs, rhs, p.label))


def _f_abstract(g, lhs, index, before):
    pos, p = _rhs(g, lhs, index)
    _require(p.rhs == before, f"production {lhs}/{index} differs from the recorded one")
    after = strip(before)
    _require(after != before, f"production {lhs}/{index} has nothing to abstract")
    return _with(g, pos, Production(p.lhs, after, p.label))


def _b_abstract(g, lhs, index, before):
    pos, p = _rhs(g, lhs, index)
    _require(p.rhs == strip(before), f"production {lhs}/{index} is not the abstraction of the record")
    return _with(g, pos, Production(p.lhs, before, p.label))


def _desugar_forward(kind):
    def forward(g, lhs, index, path, separator, width=1):
        pos, p = _rhs(g, lhs, index)
        path = _path(path)
        node = _node(p.rhs, path)
        _require(isinstance(node, kind), f"no {kind.__name__} at {list(path)} in {lhs}")
        _require(node.separator == separator, "separator differs from the recorded one")
        try:
            rhs, w = put(p.rhs, path, desugar_image(node))
        except ValueError as exc:
            raise _Fail(str(exc)) from None
        _require(w == width, f"desugared list occupies {w} slots, recorded {width}")
        return _with(g, pos, Production(p.lhs, rhs, p.label))

    return forward


def _desugar_backward(kind):
    def backward(g, lhs, index, path, separator, width=1):
        pos, p = _rhs(g, lhs, index)
        path = _path(path)
        try:
            image = take(p.rhs, path, width)
        except (ValueError, IndexError) as exc:
            raise _Fail(str(exc)) from None
        if not any(True for _ in nonterminals_in(separator)):
            _require(isinstance(image, Plus if kind is SepListPlus else Star), "no desugared list here")
            element = image.expr
        else:
            if kind is SepListStar:
                _require(isinstance(image, Optional), "no desugared list here")
                image = image.expr
            parts = items_of(image)
            _require(len(parts) >= 1 and isinstance(parts[-1], Star), "no desugared list here")
            element = seq(*parts[:-1])
        try:
            rhs = put_span(p.rhs, path, width, kind(element, separator))
        except (ValueError, IndexError) as exc:
            raise _Fail(str(exc)) from None
        return _with(g, pos, Production(p.lhs, rhs, p.label))

    return backward


def _f_extract(g, n, expr, scope):
    _require(n not in g.nonterminals, f"{n} is not fresh")
    _require(scope in g.defined, f"scope {scope} is undefined")
    _require(not isinstance(expr, Epsilon), "cannot extract eps")
    total = 0
    prods = []
    for p in g.productions:
        if p.lhs == scope:
            rhs, c = replace_subtree(p.rhs, expr, Nonterminal(n))
            total += c
            p = Production(p.lhs, rhs, p.label)
        prods.append(p)
    _require(total > 0, f"expression does not occur in {scope}")
    prods.append(Production(n, expr))
    return Grammar(g.roots, tuple(prods))


def _b_extract(g, n, expr, scope):
    _require(g.productions and g.productions[-1].lhs == n, f"{n} is not the last defined nonterminal")
    _require(len(g.positions_of(n)) == 1 and n not in g.roots, f"{n} is not an extracted nonterminal")
    _require(g.productions[-1].rhs == expr, f"{n} is not defined as the recorded expression")
    prods = []
    for p in g.productions[:-1]:
        if p.lhs == scope:
            p = Production(p.lhs, substitute(p.rhs, n, expr), p.label)
        prods.append(p)
    return Grammar(g.roots, tuple(prods))


def _occurrence(g: Grammar, occ) -> tuple[int, tuple[int, ...]]:
    _require(len(occ) >= 2 and isinstance(occ[0], str), f"malformed occurrence {occ}")
    pos = _position(g, occ[0], occ[1])
    return pos, _path(occ[2:])


def _f_inline(g, n, pos, expr, occs):
    _require(n in g.defined, f"{n} is undefined")
    _require(g.positions_of(n) == [pos], f"{n} must have exactly one production, at {pos}")
    p = g.productions[pos]
    _require(p.label is None and p.rhs == expr, f"{n} is not defined as the recorded expression")
    _require(n not in g.roots, f"{n} is a root")
    _require(n not in set(nonterminals_in(expr)), f"{n} is recursive")
    found = occurrences(g, n)
    _require(found == tuple(occs), f"recorded occurrences of {n} are out of date")
    prods = list(g.productions)
    for occ in found:
        at, path = _occurrence(g, occ)
        q = prods[at]
        if path:
            parent = node_at(q.rhs, path[:-1])
            _require(
                not _splices(parent, expr) and not (isinstance(parent, Sequence) and isinstance(expr, Epsilon)),
                f"inlining {n} at {occ} would need flattening",
            )
        prods[at] = Production(q.lhs, _set(q.rhs, path, expr), q.label)
    del prods[pos]
    return Grammar(g.roots, tuple(prods))


def _b_inline(g, n, pos, expr, occs):
    _require(n not in g.nonterminals, f"{n} is not fresh")
    _require(0 <= pos <= len(g.productions), f"position {pos} out of range")
    prods = list(g.productions)
    for occ in occs:
        at, path = _occurrence(g, occ)
        q = prods[at]
        _require(_node(q.rhs, path) == expr, f"occurrence {occ} does not hold the inlined expression")
        prods[at] = Production(q.lhs, _set(q.rhs, path, Nonterminal(n)), q.label)
    prods.insert(pos, Production(n, expr))
    return Grammar(g.roots, tuple(prods))


def _f_vertical(g, n, index, count):
    pos, p = _rhs(g, n, index)
    _require(isinstance(p.rhs, Choice) and p.label is None, f"production {n}/{index} is not an unlabelled choice")
    _require(len(p.rhs.items) == count, f"choice has {len(p.rhs.items)} alternatives, recorded {count}")
    prods = list(g.productions)
    prods[pos : pos + 1] = [Production(n, alt) for alt in p.rhs.items]
    return Grammar(g.roots, tuple(prods))


def _b_vertical(g, n, index, count):
    pos = _position(g, n, index)
    group = g.productions[pos : pos + count]
    _require(
        count >= 2 and len(group) == count and all(q.lhs == n and q.label is None for q in group),
        f"no {count} adjacent productions of {n}",
    )
    prods = list(g.productions)
    try:
        merged = choice(*(q.rhs for q in group))
    except ValueError as exc:
        raise _Fail(str(exc)) from None
    prods[pos : pos + count] = [Production(n, merged)]
    return Grammar(g.roots, tuple(prods))


def _first(rhs: Expr, kind) -> tuple[int, ...] | None:
    for path, node in walk(rhs):
        if isinstance(node, kind):
            return path
    return None


def _swap_rep(source, target, op):
    def forward(g, n, index, path=None):
        pos, p = _rhs(g, n, index)
        at = _first(p.rhs, source) if path is None else _path(path)
        _require(at is not None, f"no {source.__name__} in {n}/{index}")
        node = _node(p.rhs, at)
        _require(isinstance(node, source), f"no {source.__name__} at {list(at)} in {n}/{index}")
        return _with(g, pos, Production(p.lhs, _set(p.rhs, at, target(node.expr)), p.label))

    def backward(g, n, index, path=None):
        pos, p = _rhs(g, n, index)
        if path is not None:
            at = _path(path)
            node = _node(p.rhs, at)
            _require(isinstance(node, target), f"no {target.__name__} at {list(at)} in {n}/{index}")
            return _with(g, pos, Production(p.lhs, _set(p.rhs, at, source(node.expr)), p.label))
        candidates = []
        for at, node in walk(p.rhs):
            if isinstance(node, target):
                h = _with(g, pos, Production(p.lhs, _set(p.rhs, at, source(node.expr)), p.label))
                try:
                    if forward(h, n, index) == g:
                        candidates.append(h)
                except _Fail:
                    pass
        _require(len(candidates) == 1, f"{op} without a path has {len(candidates)} pre-images")
        return candidates[0]

    return forward, backward


_f_widen, _b_widen = _swap_rep(Plus, Star, "widen")
_f_narrow, _b_narrow = _swap_rep(Star, Plus, "narrow")


def _single(g: Grammar, n: str) -> tuple[int, Production]:
    positions = g.positions_of(n)
    _require(len(positions) == 1, f"{n} must have exactly one production")
    return positions[0], g.productions[positions[0]]


def _permutation(order) -> tuple[int, ...]:
    _require(sorted(order) == list(range(len(order))), f"{list(order)} is not a permutation")
    return tuple(order)


def _f_permute(g, n, order):
    pos, p = _single(g, n)
    order = _permutation(order)
    _require(isinstance(p.rhs, Sequence) and len(p.rhs.items) == len(order), f"{n} is not a sequence of {len(order)}")
    return _with(g, pos, Production(n, Sequence(tuple(p.rhs.items[k] for k in order)), p.label))


def _b_permute(g, n, order):
    order = _permutation(order)
    inverse = [0] * len(order)
    for k, j in enumerate(order):
        inverse[j] = k
    return _f_permute(g, n, tuple(inverse))


def split_recursion(n: str, rhs: Expr, variant: str) -> Expr | None:
    parts = items_of(rhs)
    if len(parts) < 2:
        return None
    if variant == "left" and parts[0] == Nonterminal(n):
        return seq(*parts[1:])
    if variant == "right" and parts[-1] == Nonterminal(n):
        return seq(*parts[:-1])
    return None


def _f_deyaccify(g, n, variant, base_pos, rec_pos):
    _require(variant in ("left", "right"), f"unknown variant {variant}")
    _require(sorted(g.positions_of(n)) == sorted({base_pos, rec_pos}) and base_pos != rec_pos,
             f"{n} must have exactly two productions, at {base_pos} and {rec_pos}")
    base, rec = g.productions[base_pos], g.productions[rec_pos]
    _require(base.label is None and rec.label is None, f"{n} has labelled productions")
    part = split_recursion(n, rec.rhs, variant)
    _require(part is not None, f"production at {rec_pos} is not {variant}-recursive in {n}")
    _require(split_recursion(n, base.rhs, variant) is None, f"base production of {n} is recursive too")
    _require(base.rhs != Nonterminal(n), f"base production of {n} is a self chain")
    rhs = seq(base.rhs, Star(part)) if variant == "left" else seq(Star(part), base.rhs)
    prods = list(g.productions)
    prods[min(base_pos, rec_pos)] = Production(n, rhs)
    del prods[max(base_pos, rec_pos)]
    return Grammar(g.roots, tuple(prods))


def _b_deyaccify(g, n, variant, base_pos, rec_pos):
    _require(variant in ("left", "right"), f"unknown variant {variant}")
    pos, p = _single(g, n)
    _require(pos == min(base_pos, rec_pos), f"{n} is not at position {pos}")
    parts = items_of(p.rhs)
    rep = parts[-1] if variant == "left" else (parts[0] if parts else None)
    _require(isinstance(rep, Star), f"{n} is not a deyaccified production")
    rest = parts[:-1] if variant == "left" else parts[1:]
    base = seq(*rest)
    rec = seq(Nonterminal(n), rep.expr) if variant == "left" else seq(rep.expr, Nonterminal(n))
    prods = list(g.productions)
    del prods[pos]
    for at, q in sorted([(base_pos, Production(n, base)), (rec_pos, Production(n, rec))], key=lambda t: t[0]):
        _require(at <= len(prods), f"position {at} out of range")
        prods.insert(at, q)
    return Grammar(g.roots, tuple(prods))


def _f_remove_unreachable(g, n, positions, *rhss):
    _require(n in g.defined, f"{n} is undefined")
    _require(n not in reachable_from(g, g.roots), f"{n} is reachable")
    _require(list(positions) == g.positions_of(n), f"recorded positions of {n} are out of date")
    _require(len(rhss) == len(positions), "one expression per removed production expected")
    for at, rhs in zip(positions, rhss):
        q = g.productions[at]
        _require(q.label is None and q.rhs == rhs, f"production at {at} differs from the recorded one")
    keep = set(positions)
    return Grammar(g.roots, tuple(q for i, q in enumerate(g.productions) if i not in keep))


def _b_remove_unreachable(g, n, positions, *rhss):
    _require(n not in g.defined, f"{n} is already defined")
    _require(len(rhss) == len(positions) and list(positions) == sorted(set(positions)), "malformed record")
    prods = list(g.productions)
    for at, rhs in zip(positions, rhss):
        _require(isinstance(at, int) and at <= len(prods), f"position {at} out of range")
        prods.insert(at, Production(n, rhs))
    return Grammar(g.roots, tuple(prods))


def _f_reroot(g, new, old):
    _require(g.roots == tuple(old), f"roots are {list(g.roots)}, not {list(old)}")
    _require(tuple(new) != tuple(old), "roots unchanged")
    _require(len(set(new)) == len(new) and all(r in g.nonterminals for r in new), f"bad root set {list(new)}")
    return Grammar(tuple(new), g.productions)


def _b_reroot(g, new, old):
    _require(g.roots == tuple(new), f"roots are {list(g.roots)}, not {list(new)}")
    _require(len(set(old)) == len(old) and all(r in g.nonterminals for r in old), f"bad root set {list(old)}")
    return Grammar(tuple(old), g.productions)


def _f_eliminate_epsilon(g, n, positions, sites):
    eps = [i for i, q in enumerate(g.productions) if q.lhs == n and isinstance(q.rhs, Epsilon)]
    _require(bool(eps), f"{n} has no eps production")
    _require(list(positions) == eps, f"recorded eps positions of {n} are out of date")
    _require(all(g.productions[i].label is None for i in eps), f"labelled eps production of {n}")
    keep = set(eps)
    h = Grammar(g.roots, tuple(q for i, q in enumerate(g.productions) if i not in keep))
    expected = wrap_sites(h, n) if n in h.defined else ()
    _require(tuple(sites) == expected, f"recorded occurrences of {n} are out of date")
    prods = list(h.productions)
    for occ in expected:
        at, path = _occurrence(h, occ)
        q = prods[at]
        node = node_at(q.rhs, path)
        new = Star(node.expr) if isinstance(node, Plus) else Optional(node)
        prods[at] = Production(q.lhs, _set(q.rhs, path, new), q.label)
    return Grammar(h.roots, tuple(prods))


def _b_eliminate_epsilon(g, n, positions, sites):
    prods = list(g.productions)
    for occ in sites:
        at, path = _occurrence(g, occ)
        q = prods[at]
        node = _node(q.rhs, path)
        if isinstance(node, Optional) and node.expr == Nonterminal(n):
            old = node.expr
        elif isinstance(node, Star) and node.expr == Nonterminal(n):
            old = Plus(node.expr)
        else:
            raise _Fail(f"occurrence {occ} is not a wrapped {n}")
        prods[at] = Production(q.lhs, _set(q.rhs, path, old), q.label)
    for at in positions:
        _require(isinstance(at, int) and at <= len(prods), f"position {at} out of range")
        prods.insert(at, Production(n, Epsilon()))
    return Grammar(g.roots, tuple(prods))


_OPS: dict[str, tuple[Callable, Callable]] = {
    "rename": (_f_rename, _b_rename),
    "unlabel": (_f_unlabel, _b_unlabel),
    "unselect": (_f_unselect, _b_unselect),
    "abstract": (_f_abstract, _b_abstract),
    "desugarSepPlus": (_desugar_forward(SepListPlus), _desugar_backward(SepListPlus)),
    "desugarSepStar": (_desugar_forward(SepListStar), _desugar_backward(SepListStar)),
    "extract": (_f_extract, _b_extract),
    "inline": (_f_inline, _b_inline),
    "vertical": (_f_vertical, _b_vertical),
    "widen": (_f_widen, _b_widen),
    "narrow": (_f_narrow, _b_narrow),
    "permute": (_f_permute, _b_permute),
    "deyaccify": (_f_deyaccify, _b_deyaccify),
    "removeUnreachable": (_f_remove_unreachable, _b_remove_unreachable),
    "reroot": (_f_reroot, _b_reroot),
    "eliminateEpsilon": (_f_eliminate_epsilon, _b_eliminate_epsilon),
}


def _checked(step: Step):
    try:
        check_step(step)
    except ValueError as exc:
        raise TransformError(step.op, str(exc)) from None
    return _OPS[step.op]


def apply_forward(g: Grammar, step: Step) -> Grammar:
    forward, _ = _checked(step)
    try:
        return forward(g, *step.args)
    except _Fail as exc:
        raise TransformError(step.op, str(exc)) from None


def apply_backward(g: Grammar, step: Step) -> Grammar:
    forward, backward = _checked(step)
    try:
        h = backward(g, *step.args)
        again = forward(h, *step.args)
    except (_Fail, ValueError) as exc:
        raise TransformError(step.op, f"grammar is not in the image of the step ({exc})") from None
    if again != g:
        raise TransformError(step.op, "grammar is not in the image of the step")
    return h


def apply_trace(g: Grammar, trace, direction: str = "forward") -> Grammar:
    """Replay ``trace``; failures carry the 1-based index of the failing step."""
    if direction not in ("forward", "backward"):
        raise ValueError(f"direction must be forward or backward, not {direction!r}")
    numbered = list(enumerate(trace, start=1))
    if direction == "backward":
        numbered.reverse()
    apply = apply_forward if direction == "forward" else apply_backward
    for index, step in numbered:
        try:
            g = apply(g, step)
        except TransformError as exc:
            raise TraceError(index, exc) from None
    return g


def iter_replay(g: Grammar, trace) -> Iterator[tuple[Grammar, Step, Grammar]]:
    """Yield ``(before, step, after)`` for each step of a forward replay."""
    for step in trace:
        after = apply_forward(g, step)
        yield g, step, after
        g = after
