"""Footprints, production signatures and nominal resolution.

A footprint records how a nonterminal occurs in one right-hand side, as a
sorted tuple of markers. The signature of a production maps each nonterminal
it uses to its footprint. Two productions match when their signature entries
can be paired one-to-one with equivalent footprints, and matching productions
induce pairs of corresponding nonterminals. :func:`global_resolution` grows
such pairs from the roots outwards with a backtracking search.
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field

from gconv.model import (
    Grammar,
    Nonterminal,
    Optional,
    Plus,
    Production,
    Selector,
    Sequence,
    Star,
    classify_anf,
)

ONE, OPT, PLUS, STAR = "one", "opt", "plus", "star"
MARKERS = (ONE, OPT, PLUS, STAR)
_RANK = {m: i for i, m in enumerate(MARKERS)}

OMEGA = None  # stands for "no partner" in a resolution pair

Footprint = tuple[str, ...]
ProdSig = dict[str, Footprint]
Pair = tuple[str | None, str | None]


def canonical(markers) -> Footprint:
    return tuple(sorted(markers, key=_RANK.__getitem__))


def _markers(n: str, x) -> list[str]:
    if x == Nonterminal(n):
        return [ONE]
    for kind, mark in ((Optional, OPT), (Plus, PLUS), (Star, STAR)):
        if isinstance(x, kind):
            return [mark] if x.expr == Nonterminal(n) else []
    if isinstance(x, Selector):
        return _markers(n, x.expr)
    if isinstance(x, Sequence):
        return [m for item in x.items for m in _markers(n, item)]
    return []


def footprint(n: str, x) -> Footprint:
    """Markers for the occurrences of ``n`` as a (decorated) atom in ``x``.

    Choices and decorated compound bodies contribute nothing.
    """
    return canonical(_markers(n, x))


def plus_to_star(f: Footprint) -> Footprint:
    return canonical(STAR if m == PLUS else m for m in f)


def footprint_equiv(f: Footprint, g: Footprint) -> bool:
    return canonical(f) == canonical(g) or plus_to_star(f) == plus_to_star(g)


def prodsig(p: Production) -> ProdSig:
    names = sorted({n for n in _names(p.rhs)})
    sig = {n: footprint(n, p.rhs) for n in names}
    return {n: f for n, f in sig.items() if f}


def _names(x):
    if isinstance(x, Nonterminal):
        yield x.name
    for k in x.children():
        yield from _names(k)


def format_footprint(f: Footprint) -> str:
    return "{" + ",".join(f) + "}"


def format_prodsig(sig: ProdSig) -> str:
    return "{" + ", ".join(f"{n}:{format_footprint(f)}" for n, f in sorted(sig.items())) + "}"


def prodsig_equiv(p: Production, q: Production) -> bool:
    """True iff the signature entries of ``p`` and ``q`` pair up one-to-one
    with equivalent footprints.

    Footprint equivalence is an equivalence relation whose classes are named
    by :func:`plus_to_star`, so a perfect matching exists exactly when both
    signatures have the same number of entries in every class.
    """
    return _classes(prodsig(p)) == _classes(prodsig(q))


def _classes(sig: ProdSig) -> Counter:
    return Counter(plus_to_star(f) for f in sig.values())


def _bijections(left: list[str], right: list[str]):
    for perm in itertools.permutations(right):
        yield tuple(zip(left, perm))


def _consistent(pairs) -> bool:
    fwd: dict = {}
    bwd: dict = {}
    for a, b in pairs:
        if fwd.setdefault(a, b) != b or bwd.setdefault(b, a) != a:
            return False
    return True


def production_resolutions(p: Production, q: Production) -> list[frozenset[Pair]]:
    """Every nominal resolution induced by a footprint-respecting bijection
    between the signatures of ``p`` and ``q``, including the lhs pair.

    Resolutions are listed in lexicographic order of their sorted pairs.
    """
    if not prodsig_equiv(p, q):
        raise ValueError(f"productions of {p.lhs} and {q.lhs} have inequivalent signatures")
    sp, sq = prodsig(p), prodsig(q)
    groups = []
    for cls in sorted(set(_classes(sp))):
        left = sorted(n for n, f in sp.items() if plus_to_star(f) == cls)
        right = sorted(n for n, f in sq.items() if plus_to_star(f) == cls)
        groups.append(list(_bijections(left, right)))
    found = set()
    for combo in itertools.product(*groups):
        pairs = {(p.lhs, q.lhs)}
        for part in combo:
            pairs.update(part)
        if _consistent(pairs):
            found.add(frozenset(pairs))
    return sorted(found, key=lambda r: sorted(r, key=_pair_key))


def _pair_key(pair: Pair):
    a, b = pair
    return (a is None, a or "", b is None, b or "")


@dataclass(frozen=True)
class NominalResolution:
    """Pairs ``(master, servant)``; ``None`` on either side means unmatched."""

    pairs: tuple[Pair, ...]
    justification: dict = field(default_factory=dict, compare=False)
    backtracks: int = field(default=0, compare=False)

    def mapping(self) -> dict[str, str]:
        return {a: b for a, b in self.pairs if a is not None and b is not None}

    def inverse(self) -> dict[str, str]:
        return {b: a for a, b in self.pairs if a is not None and b is not None}


class NotANF(ValueError):
    pass


class MatchFailure(Exception):
    """No global resolution exists; carries the deepest consistent partial
    resolution and the pair at which it got stuck."""

    def __init__(self, reason: str, partial: NominalResolution, frontier: Pair | None):
        where = f" at {frontier[0]} / {frontier[1]}" if frontier else ""
        super().__init__(f"{reason}{where}")
        self.reason = reason
        self.partial = partial
        self.frontier = frontier


def _sorted_pairs(pairs) -> tuple[Pair, ...]:
    return tuple(sorted(pairs, key=_pair_key))


class _Search:
    def __init__(self, master: Grammar, servant: Grammar):
        self.master, self.servant = master, servant
        self.cm, self.cs = classify_anf(master), classify_anf(servant)
        self.backtracks = 0
        self.best: tuple[int, dict, Pair | None, str] = (-1, {}, None, "")

    def note_failure(self, depth: int, fwd: dict, frontier: Pair, reason: str):
        if depth > self.best[0]:
            self.best = (depth, dict(fwd), frontier, reason)

    def candidates(self, m: str, s: str):
        """Candidate pair sets for ``(m, s)`` with a witness description, or a
        failure reason."""
        km, ks = self.cm.kind(m), self.cs.kind(s)
        if km != ks:
            return f"{m} is {km or 'unknown'} but {s} is {ks or 'unknown'}", []
        if km == "undefined":
            return None, [((), "both undefined")]
        pm = [p for p in self.master.productions if p.lhs == m]
        ps = [p for p in self.servant.productions if p.lhs == s]
        if km == "sequence":
            p, q = pm[0], ps[0]
            if not prodsig_equiv(p, q):
                return (
                    f"signatures differ: {format_prodsig(prodsig(p))} vs {format_prodsig(prodsig(q))}",
                    [],
                )
            witness = f"{format_prodsig(prodsig(p))} ~ {format_prodsig(prodsig(q))}"
            return None, [(tuple(r), witness) for r in production_resolutions(p, q)]
        tm = sorted(p.rhs.name for p in pm)
        ts = sorted(p.rhs.name for p in ps)
        if len(tm) != len(ts):
            return f"{m} has {len(tm)} alternatives but {s} has {len(ts)}", []
        seen = set()
        out = []
        for perm in itertools.permutations(ts):
            if perm in seen:
                continue
            seen.add(perm)
            out.append((tuple(zip(tm, perm)), f"chain alternatives of {m} ~ {s}"))
        return None, out

    def run(self, agenda: list[Pair], i: int, fwd: dict, bwd: dict, why: dict):
        if i == len(agenda):
            return fwd, why
        m, s = agenda[i]
        reason, options = self.candidates(m, s)
        if reason is not None:
            self.note_failure(i, fwd, (m, s), reason)
            return None
        for pairs, witness in options:
            f2, b2, new = dict(fwd), dict(bwd), []
            ok = True
            for a, b in sorted(pairs):
                if a in f2 or b in b2:
                    if f2.get(a) != b or b2.get(b) != a:
                        ok = False
                        break
                    continue
                f2[a], b2[b] = b, a
                new.append((a, b))
            if not ok:
                self.backtracks += 1
                self.note_failure(i, fwd, (m, s), "no candidate consistent with earlier matches")
                continue
            w2 = dict(why)
            for pair in new:
                w2[pair] = f"{m} / {s}: {witness}"
            found = self.run(agenda + new, i + 1, f2, b2, w2)
            if found is not None:
                return found
            self.backtracks += 1
        if options:
            self.note_failure(i, fwd, (m, s), "every candidate led to a dead end")
        return None


def global_resolution(master: Grammar, servant: Grammar) -> NominalResolution:
    """Match two ANF grammars nonterminal by nonterminal, starting at the roots.

    Returns the first complete resolution in a deterministic search order;
    raises :class:`MatchFailure` when none exists.
    """
    for label, g in (("master", master), ("servant", servant)):
        c = classify_anf(g)
        if not c.ok:
            raise NotANF(f"{label} grammar is not in ANF: {c.violations[0][0]}: {c.violations[0][1]}")
    search = _Search(master, servant)
    root = (master.roots[0], servant.roots[0])
    found = search.run([root], 0, {root[0]: root[1]}, {root[1]: root[0]}, {root: "roots"})
    if found is None:
        _, fwd, frontier, reason = search.best
        partial = NominalResolution(_sorted_pairs(fwd.items()), {}, search.backtracks)
        raise MatchFailure(reason, partial, frontier)
    fwd, why = found
    pairs = set(fwd.items())
    pairs.update((a, OMEGA) for a in master.nonterminals - fwd.keys())
    matched = set(fwd.values())
    pairs.update((OMEGA, b) for b in servant.nonterminals - matched)
    return NominalResolution(_sorted_pairs(pairs), why, search.backtracks)
