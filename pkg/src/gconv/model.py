"""Grammar data model: expressions, productions, grammars and the baseline
comparisons between grammars (identity and nominal equivalence).

Every value here is immutable. Expression constructors are strict about the
shape invariants (no unary sequences/choices, no directly nested sequences or
choices); use :func:`seq` and :func:`choice` to build flattened values.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, Union

Path = tuple[int, ...]


class Expr:
    """Base class of right-hand-side expressions."""

    __slots__ = ()

    def children(self) -> tuple[Expr, ...]:
        return ()


@dataclass(frozen=True)
class Epsilon(Expr):
    pass


@dataclass(frozen=True)
class Terminal(Expr):
    literal: str


@dataclass(frozen=True)
class Nonterminal(Expr):
    name: str


@dataclass(frozen=True)
class Sequence(Expr):
    items: tuple[Expr, ...]

    def __post_init__(self):
        if len(self.items) < 2:
            raise ValueError("a sequence needs at least two items")
        for item in self.items:
            if isinstance(item, (Sequence, Epsilon)):
                raise ValueError(f"invalid sequence item {item!r}")

    def children(self):
        return self.items


@dataclass(frozen=True)
class Choice(Expr):
    items: tuple[Expr, ...]

    def __post_init__(self):
        if len(self.items) < 2:
            raise ValueError("a choice needs at least two alternatives")
        if any(isinstance(item, Choice) for item in self.items):
            raise ValueError("nested choice must be flattened")

    def children(self):
        return self.items


@dataclass(frozen=True)
class Optional(Expr):
    expr: Expr

    def children(self):
        return (self.expr,)


@dataclass(frozen=True)
class Star(Expr):
    expr: Expr

    def children(self):
        return (self.expr,)


@dataclass(frozen=True)
class Plus(Expr):
    expr: Expr

    def children(self):
        return (self.expr,)


@dataclass(frozen=True)
class SepListPlus(Expr):
    element: Expr
    separator: Expr

    def children(self):
        return (self.element, self.separator)


@dataclass(frozen=True)
class SepListStar(Expr):
    element: Expr
    separator: Expr

    def children(self):
        return (self.element, self.separator)


@dataclass(frozen=True)
class Selector(Expr):
    name: str
    expr: Expr

    def children(self):
        return (self.expr,)


Decorator = Union[Optional, Star, Plus]
DECORATORS = (Optional, Star, Plus)


def seq(*items: Expr) -> Expr:
    """Build a flattened sequence; epsilons vanish, one item stands alone."""
    flat: list[Expr] = []
    for item in items:
        if isinstance(item, Sequence):
            flat.extend(item.items)
        elif not isinstance(item, Epsilon):
            flat.append(item)
    if not flat:
        return Epsilon()
    if len(flat) == 1:
        return flat[0]
    return Sequence(tuple(flat))


def choice(*items: Expr) -> Expr:
    flat: list[Expr] = []
    for item in items:
        if isinstance(item, Choice):
            flat.extend(item.items)
        else:
            flat.append(item)
    if not flat:
        raise ValueError("empty choice")
    if len(flat) == 1:
        return flat[0]
    return Choice(tuple(flat))


def items_of(expr: Expr) -> tuple[Expr, ...]:
    """Sequence items of ``expr`` (a non-sequence is a one-item sequence)."""
    if isinstance(expr, Sequence):
        return expr.items
    if isinstance(expr, Epsilon):
        return ()
    return (expr,)


def rebuild(expr: Expr, children: Iterable[Expr]) -> Expr:
    """Return ``expr`` with its children replaced, re-flattening as needed."""
    kids = tuple(children)
    if isinstance(expr, Sequence):
        return seq(*kids)
    if isinstance(expr, Choice):
        return choice(*kids)
    if isinstance(expr, (Optional, Star, Plus)):
        return type(expr)(kids[0])
    if isinstance(expr, (SepListPlus, SepListStar)):
        return type(expr)(kids[0], kids[1])
    if isinstance(expr, Selector):
        return Selector(expr.name, kids[0])
    return expr


def walk(expr: Expr, path: Path = ()) -> Iterator[tuple[Path, Expr]]:
    """Pre-order traversal yielding ``(path, node)`` pairs."""
    yield path, expr
    for i, child in enumerate(expr.children()):
        yield from walk(child, path + (i,))


def node_at(expr: Expr, path: Path) -> Expr:
    for i in path:
        kids = expr.children()
        if not 0 <= i < len(kids):
            raise IndexError(f"path {list(path)} leaves the expression")
        expr = kids[i]
    return expr


def nonterminals_in(expr: Expr) -> Iterator[str]:
    for _, node in walk(expr):
        if isinstance(node, Nonterminal):
            yield node.name


def terminals_in(expr: Expr) -> Iterator[str]:
    for _, node in walk(expr):
        if isinstance(node, Terminal):
            yield node.literal


def is_decorated_nonterminal(expr: Expr) -> bool:
    return isinstance(expr, DECORATORS) and isinstance(expr.expr, Nonterminal)


def is_atom(expr: Expr) -> bool:
    """An ANF sequence atom: a nonterminal, possibly with one of ``? * +``."""
    return isinstance(expr, Nonterminal) or is_decorated_nonterminal(expr)


def atom_name(expr: Expr) -> str:
    return expr.name if isinstance(expr, Nonterminal) else expr.expr.name


@dataclass(frozen=True)
class Production:
    lhs: str
    rhs: Expr
    label: str | None = None


@dataclass(frozen=True)
class Grammar:
    """A grammar ``(N, T, P, S)``.

    Nonterminals and terminals are derived from the roots and productions, so
    the membership invariants hold by construction.
    """

    roots: tuple[str, ...]
    productions: tuple[Production, ...] = field(default=())

    def __post_init__(self):
        if len(set(self.roots)) != len(self.roots):
            raise ValueError("duplicate root")

    @cached_property
    def nonterminals(self) -> frozenset[str]:
        names = set(self.roots)
        for p in self.productions:
            names.add(p.lhs)
            names.update(nonterminals_in(p.rhs))
        return frozenset(names)

    @cached_property
    def terminals(self) -> frozenset[str]:
        lits: set[str] = set()
        for p in self.productions:
            lits.update(terminals_in(p.rhs))
        return frozenset(lits)

    @cached_property
    def defined(self) -> frozenset[str]:
        return frozenset(p.lhs for p in self.productions)

    def lhs_order(self) -> list[str]:
        """Defined nonterminals in order of their first production."""
        return list(dict.fromkeys(p.lhs for p in self.productions))

    def positions_of(self, n: str) -> list[int]:
        return [i for i, p in enumerate(self.productions) if p.lhs == n]


def grammar_identical(g: Grammar, h: Grammar) -> bool:
    """Component-wise identity; production order and labels matter."""
    return (
        g.nonterminals == h.nonterminals
        and g.terminals == h.terminals
        and g.roots == h.roots
        and g.productions == h.productions
    )


def nominally_equivalent(g: Grammar, h: Grammar) -> bool:
    """Equal vocabularies and roots, and equal production multisets."""
    return (
        g.nonterminals == h.nonterminals
        and g.terminals == h.terminals
        and set(g.roots) == set(h.roots)
        and Counter(g.productions) == Counter(h.productions)
    )


def productions_of(g: Grammar, n: str) -> tuple[Production, ...]:
    if n not in g.nonterminals:
        raise KeyError(f"unknown nonterminal {n!r}")
    return tuple(p for p in g.productions if p.lhs == n)


def uses(g: Grammar) -> dict[str, set[str]]:
    graph: dict[str, set[str]] = {}
    for p in g.productions:
        graph.setdefault(p.lhs, set()).update(nonterminals_in(p.rhs))
    return graph


def reachable_from(g: Grammar, start: Iterable[str]) -> frozenset[str]:
    graph = uses(g)
    seen = set(start)
    todo = list(seen)
    while todo:
        for m in graph.get(todo.pop(), ()):
            if m not in seen:
                seen.add(m)
                todo.append(m)
    return frozenset(seen)


@dataclass(frozen=True)
class ANFClassification:
    plus_set: frozenset[str]
    minus_set: frozenset[str]
    bottom_set: frozenset[str]
    violations: tuple[tuple[str, str], ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def kind(self, n: str) -> str | None:
        if n in self.plus_set:
            return "chain"
        if n in self.minus_set:
            return "sequence"
        if n in self.bottom_set:
            return "undefined"
        return None


def classify_anf(g: Grammar) -> ANFClassification:
    """Partition nonterminals into chain-defined, sequence-defined and
    undefined ones, collecting every reason the grammar is not in ANF.

    Violations whose subject is the grammar as a whole are reported with the
    pseudo-symbol ``*``.
    """
    violations: list[tuple[str, str]] = []
    if g.terminals:
        lits = ", ".join(sorted(repr(t) for t in g.terminals))
        violations.append(("*", f"terminal set nonempty: {lits}"))
    if len(g.roots) != 1:
        violations.append(("*", f"expected exactly one root, found {len(g.roots)}"))

    chains, sequences, undefined = set(), set(), set()
    by_lhs: dict[str, list[Production]] = {}
    for p in g.productions:
        by_lhs.setdefault(p.lhs, []).append(p)
    for n in sorted(g.nonterminals):
        prods = by_lhs.get(n, [])
        if not prods:
            undefined.add(n)
            continue
        labelled = [p for p in prods if p.label is not None]
        if labelled:
            violations.append((n, f"labelled production [{labelled[0].label}]"))
            continue
        if all(isinstance(p.rhs, Nonterminal) for p in prods):
            chains.add(n)
        elif len(prods) == 1 and all(is_atom(x) for x in items_of(prods[0].rhs)) and items_of(prods[0].rhs):
            sequences.add(n)
        elif len(prods) > 1:
            violations.append((n, f"{len(prods)} productions but not all are chain rules"))
        else:
            violations.append((n, "right-hand side is not a sequence of nonterminals"))
    for r in g.roots:
        if r in undefined:
            violations.append((r, "root is undefined"))
    return ANFClassification(
        frozenset(chains), frozenset(sequences), frozenset(undefined), tuple(violations)
    )
