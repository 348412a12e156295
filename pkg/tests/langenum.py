"""Brute-force bounded language of a grammar.

Strings are tuples of atoms: terminal literals and undefined nonterminals.
The language of every defined nonterminal is computed up to a length bound by
fixpoint iteration straight from the expression tree, without using any of
the transformation code.
"""

from __future__ import annotations

from gconv.model import (
    Choice,
    Epsilon,
    Grammar,
    Nonterminal,
    Optional,
    Plus,
    Selector,
    SepListPlus,
    SepListStar,
    Sequence,
    Star,
    Terminal,
)


def _concat(xs, ys, bound):
    return {x + y for x in xs for y in ys if len(x) + len(y) <= bound}


def _closure(xs, bound):
    result = {()}
    frontier = {()}
    while frontier:
        frontier = _concat(frontier, xs, bound) - result
        result |= frontier
    return result


def _lang(expr, env, defined, bound):
    if isinstance(expr, Epsilon):
        return {()}
    if isinstance(expr, Terminal):
        return {(expr.literal,)}
    if isinstance(expr, Nonterminal):
        return env[expr.name] if expr.name in defined else {(expr.name,)}
    if isinstance(expr, Sequence):
        out = {()}
        for item in expr.items:
            out = _concat(out, _lang(item, env, defined, bound), bound)
        return out
    if isinstance(expr, Choice):
        return set().union(*(_lang(e, env, defined, bound) for e in expr.items))
    if isinstance(expr, Optional):
        return {()} | _lang(expr.expr, env, defined, bound)
    if isinstance(expr, Star):
        return _closure(_lang(expr.expr, env, defined, bound), bound)
    if isinstance(expr, Plus):
        body = _lang(expr.expr, env, defined, bound)
        return _concat(body, _closure(body, bound), bound)
    if isinstance(expr, (SepListPlus, SepListStar)):
        e = _lang(expr.element, env, defined, bound)
        s = _lang(expr.separator, env, defined, bound)
        plus = _concat(e, _closure(_concat(s, e, bound), bound), bound)
        return plus if isinstance(expr, SepListPlus) else plus | {()}
    if isinstance(expr, Selector):
        return _lang(expr.expr, env, defined, bound)
    raise TypeError(expr)


def bounded_languages(g: Grammar, bound: int = 4) -> dict[str, frozenset]:
    """Strings of length at most ``bound`` derivable from each defined
    nonterminal."""
    defined = g.defined
    env = {n: set() for n in defined}
    changed = True
    while changed:
        changed = False
        for p in g.productions:
            new = _lang(p.rhs, env, defined, bound) - env[p.lhs]
            if new:
                env[p.lhs] |= new
                changed = True
    return {n: frozenset(s) for n, s in env.items()}
