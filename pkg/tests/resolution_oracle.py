"""Exhaustive nominal matching for small ANF grammars, and a generator of
small ANF grammar pairs.

The oracle tries every injective map from master nonterminals to servant
nonterminals and keeps those under which roots correspond, every nonterminal
keeps its kind, chain targets correspond as multisets and every sequence
rule's occurrence markers correspond up to treating ``+`` as ``*``. Marker
counting is done here from the rule items, independently of the library.
"""

from __future__ import annotations

import itertools
import random
from collections import Counter

from gconv.anf import normalize
from gconv.model import Grammar, Nonterminal, Optional, Plus, Production, Star, classify_anf, items_of, seq


def _marks(rhs) -> dict[str, list[str]]:
    out: dict[str, list[str]] = {}
    for item in items_of(rhs):
        if isinstance(item, Nonterminal):
            out.setdefault(item.name, []).append("1")
        else:
            mark = {Optional: "?", Plus: "*", Star: "*"}[type(item)]
            out.setdefault(item.expr.name, []).append(mark)
    return {n: sorted(ms) for n, ms in out.items()}


def _kinds(g: Grammar) -> dict[str, str]:
    c = classify_anf(g)
    return {n: c.kind(n) for n in g.nonterminals}


def accepted_maps(master: Grammar, servant: Grammar) -> list[dict[str, str]]:
    nm = sorted(master.nonterminals)
    ns = sorted(servant.nonterminals)
    if len(nm) > len(ns):
        return []
    km, ks = _kinds(master), _kinds(servant)
    rules_m = {n: [p.rhs for p in master.productions if p.lhs == n] for n in nm}
    rules_s = {n: [p.rhs for p in servant.productions if p.lhs == n] for n in ns}
    found = []
    for image in itertools.permutations(ns, len(nm)):
        phi = dict(zip(nm, image))
        if phi[master.roots[0]] != servant.roots[0]:
            continue
        if any(km[m] != ks[s] for m, s in phi.items()):
            continue
        ok = True
        for m in nm:
            s = phi[m]
            if km[m] == "chain":
                ok = Counter(phi[r.name] for r in rules_m[m]) == Counter(r.name for r in rules_s[s])
            elif km[m] == "sequence":
                mapped = {phi[n]: ms for n, ms in _marks(rules_m[m][0]).items()}
                ok = mapped == _marks(rules_s[s][0])
            if not ok:
                break
        if ok:
            found.append(phi)
    return found


def _atom(rng, name):
    kind = rng.choice((Nonterminal, Nonterminal, Optional, Star, Plus))
    return Nonterminal(name) if kind is Nonterminal else kind(Nonterminal(name))


def random_anf(rng: random.Random, k: int) -> Grammar:
    """A random grammar that normalizes to ANF with few nonterminals."""
    names = [f"N{i}" for i in range(k)]
    prods = []
    for i, n in enumerate(names):
        later = names[i + 1 :] or names
        kind = "sequence" if i == 0 else rng.choice(("sequence", "chain", "undefined"))
        if kind == "undefined" and i + 1 < k:
            kind = "sequence"
        if kind == "sequence":
            items = [_atom(rng, rng.choice(later if rng.random() < 0.7 else names)) for _ in range(rng.randint(1, 3))]
            if i + 1 < k:
                items[0] = _atom(rng, names[i + 1])
            prods.append(Production(n, seq(*items)))
        elif kind == "chain":
            targets = {names[i + 1] if i + 1 < k else rng.choice(names)}
            targets.update(rng.choice(names) for _ in range(rng.randint(0, 2)))
            targets.discard(n)
            if not targets:
                targets = {rng.choice([x for x in names if x != n])}
            prods.extend(Production(n, Nonterminal(t)) for t in sorted(targets))
    g = Grammar(("N0",), tuple(prods))
    return normalize(g).normalized


def disguise(rng: random.Random, g: Grammar) -> Grammar:
    """Rename, reorder productions and sequences, and swap ``+``/``*``."""
    names = sorted(g.nonterminals)
    fresh = [f"s{i}" for i in range(len(names))]
    rng.shuffle(fresh)
    ren = dict(zip(names, fresh))

    def conv(item):
        if isinstance(item, Nonterminal):
            return Nonterminal(ren[item.name])
        kind = type(item)
        if kind in (Plus, Star) and rng.random() < 0.5:
            kind = Star if kind is Plus else Plus
        return kind(Nonterminal(ren[item.expr.name]))

    prods = []
    for p in g.productions:
        items = [conv(x) for x in items_of(p.rhs)]
        rng.shuffle(items)
        prods.append(Production(ren[p.lhs], seq(*items)))
    rng.shuffle(prods)
    return Grammar((ren[g.roots[0]],), tuple(prods))


def perturb(rng: random.Random, g: Grammar) -> Grammar:
    """Change one marker or drop one item somewhere, keeping ANF."""
    prods = list(g.productions)
    seqs = [i for i, p in enumerate(prods) if not isinstance(p.rhs, Nonterminal)]
    if not seqs:
        return g
    i = rng.choice(seqs)
    items = list(items_of(prods[i].rhs))
    j = rng.randrange(len(items))
    x = items[j]
    name = x.name if isinstance(x, Nonterminal) else x.expr.name
    if rng.random() < 0.5 or len(items) == 1:
        items[j] = Optional(Nonterminal(name)) if isinstance(x, Nonterminal) else Nonterminal(name)
    else:
        del items[j]
    prods[i] = Production(prods[i].lhs, seq(*items))
    return Grammar(g.roots, tuple(prods))


def pair_suite(seed: int = 0, count: int = 150) -> list[tuple[Grammar, Grammar]]:
    rng = random.Random(seed)
    pairs = []
    while len(pairs) < count:
        master = random_anf(rng, rng.randint(1, 8))
        if len(master.nonterminals) > 6:
            continue
        roll = rng.random()
        if roll < 0.5:
            servant = disguise(rng, master)
        elif roll < 0.8:
            servant = disguise(rng, perturb(rng, master))
        else:
            servant = random_anf(rng, rng.randint(1, 8))
        if len(servant.nonterminals) > 6 or not classify_anf(servant).ok:
            continue
        pairs.append((master, servant))
    return pairs
