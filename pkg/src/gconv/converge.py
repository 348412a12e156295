"""Guided convergence of a servant grammar towards a master grammar.

The servant is mutated (recursive lists and single-use chain layers removed),
both grammars are normalized, their nonterminals are matched, the servant is
renamed to the master's vocabulary and the remaining repetition-kind and
ordering differences are resolved. Every change to the servant is a recorded
step, so the result can be replayed in either direction.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field

from gconv.anf import BudgetExceeded, NormalizeError, mutate_for_convergence, normalize
from gconv.model import (
    Grammar,
    Plus,
    Sequence,
    Star,
    atom_name,
    classify_anf,
    items_of,
)
from gconv.prodsig import MatchFailure, NominalResolution, NotANF, global_resolution
from gconv.xbgf import Step, apply_forward, apply_trace

log = logging.getLogger(__name__)

CONVERGED = "converged"
FAILED = "failed"


class StructError(Exception):
    def __init__(self, nonterminal: str, master_rules, servant_rules, message: str = "rules differ"):
        super().__init__(f"{nonterminal}: {message}")
        self.nonterminal = nonterminal
        self.master_rules = tuple(master_rules)
        self.servant_rules = tuple(servant_rules)
        self.message = message


class ConvergeError(Exception):
    pass


@dataclass
class ConvergenceResult:
    servant_name: str
    mutation_trace: tuple[Step, ...] = ()
    servant_anf_trace: tuple[Step, ...] = ()
    master_anf_trace: tuple[Step, ...] = ()
    resolution: NominalResolution | None = None
    rename_trace: tuple[Step, ...] = ()
    structural_trace: tuple[Step, ...] = ()
    verdict: str = FAILED
    reason: str = ""
    failure: MatchFailure | None = None
    grammars: dict[str, Grammar] = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.verdict == CONVERGED

    def servant_trace(self) -> tuple[Step, ...]:
        """All servant-side steps in application order."""
        return self.mutation_trace + self.servant_anf_trace + self.rename_trace + self.structural_trace


def verify_converged(master_anf: Grammar, servant_final: Grammar) -> bool:
    return (
        master_anf.nonterminals == servant_final.nonterminals
        and master_anf.roots == servant_final.roots
        and Counter(master_anf.productions) == Counter(servant_final.productions)
    )


def plan_renames(resolution: NominalResolution, servant: Grammar) -> tuple[Step, ...]:
    """Rename steps turning servant names into master names.

    A rename needs a fresh target, so steps are ordered to free each target
    first; cycles are broken through ``tmp_<k>``.
    """
    pending = {s: m for m, s in resolution.mapping().items() if s != m}
    names = set(servant.nonterminals)
    steps = []
    k = 0
    while pending:
        ready = sorted(s for s, m in pending.items() if m not in names)
        if ready:
            s = ready[0]
            m = pending.pop(s)
            steps.append(Step("rename", (s, m)))
            names.discard(s)
            names.add(m)
            continue
        blocked = [m for m in pending.values() if m not in pending]
        if blocked:
            raise ConvergeError(f"cannot rename to {blocked[0]}: the name is taken by an unmatched nonterminal")
        s = sorted(pending)[0]
        k += 1
        while f"tmp_{k}" in names or f"tmp_{k}" in pending.values():
            k += 1
        tmp = f"tmp_{k}"
        steps.append(Step("rename", (s, tmp)))
        names.discard(s)
        names.add(tmp)
        pending[tmp] = pending.pop(s)
    return tuple(steps)


def _alignment(master_items, servant_items):
    """``order`` with ``servant_items[order[k]]`` matching ``master_items[k]``,
    exact matches first, then plus/star look-alikes."""
    order: list[int | None] = [None] * len(master_items)
    used = set()

    def loose(x):
        return (atom_name(x), "rep" if isinstance(x, (Plus, Star)) else type(x).__name__)

    for same in (lambda a, b: a == b, lambda a, b: loose(a) == loose(b)):
        for k, a in enumerate(master_items):
            if order[k] is not None:
                continue
            for j, b in enumerate(servant_items):
                if j not in used and same(a, b):
                    order[k] = j
                    used.add(j)
                    break
    return None if None in order else tuple(order)


def structural_resolve(master_anf: Grammar, servant: Grammar) -> tuple[Step, ...]:
    """Steps that make the servant's productions equal to the master's.

    Only repetition kinds (``+`` against ``*``) and sequence order are
    reconciled; any other difference raises :class:`StructError`.
    """
    steps: list[Step] = []
    g = servant

    def emit(op, *args):
        nonlocal g
        step = Step(op, tuple(args))
        g = apply_forward(g, step)
        steps.append(step)

    names = list(dict.fromkeys(master_anf.lhs_order() + servant.lhs_order()))
    for n in names:
        mp = [p for p in master_anf.productions if p.lhs == n]
        sp = [p for p in g.productions if p.lhs == n]
        if Counter(mp) == Counter(sp):
            continue
        if len(mp) != len(sp):
            raise StructError(n, mp, sp, f"{len(mp)} productions in the master, {len(sp)} in the servant")
        if len(mp) > 1:
            raise StructError(n, mp, sp, "chain alternatives differ")
        mi, si = items_of(mp[0].rhs), items_of(sp[0].rhs)
        order = _alignment(mi, si) if len(mi) == len(si) else None
        if order is None:
            raise StructError(n, mp, sp, "sequences differ beyond repetition kind and order")
        if order != tuple(range(len(order))):
            emit("permute", n, order)
        current = items_of([p for p in g.productions if p.lhs == n][0].rhs)
        for k, (a, b) in enumerate(zip(mi, current)):
            if a == b:
                continue
            path = (k,) if isinstance(mp[0].rhs, Sequence) else ()
            emit("widen" if isinstance(b, Plus) else "narrow", n, 1, path)
    return tuple(steps)


def converge(master: Grammar, servant: Grammar, servant_name: str = "servant") -> ConvergenceResult:
    """Run the whole pipeline. Failures are reported in the verdict; only an
    exhausted step budget is raised."""
    result = ConvergenceResult(servant_name)
    result.grammars["servant"] = servant
    try:
        m_norm = normalize(master)
    except BudgetExceeded:
        raise
    except NormalizeError as exc:
        result.reason = f"master cannot be normalized: {exc}"
        return result
    result.master_anf_trace = m_norm.trace
    result.grammars["master_anf"] = m_norm.normalized

    mutated, result.mutation_trace = mutate_for_convergence(servant)
    result.grammars["mutated"] = mutated
    try:
        s_norm = normalize(mutated)
    except BudgetExceeded:
        raise
    except NormalizeError as exc:
        result.reason = f"servant cannot be normalized: {exc}"
        return result
    result.servant_anf_trace = s_norm.trace
    result.grammars["servant_anf"] = s_norm.normalized

    try:
        resolution = global_resolution(m_norm.normalized, s_norm.normalized)
    except MatchFailure as exc:
        result.failure = exc
        result.reason = f"no nominal resolution: {exc}"
        return result
    except NotANF as exc:
        result.reason = str(exc)
        return result
    result.resolution = resolution
    log.info("%s: resolution with %d pairs after %d backtracks", servant_name, len(resolution.pairs), resolution.backtracks)

    try:
        result.rename_trace = plan_renames(resolution, s_norm.normalized)
    except ConvergeError as exc:
        result.reason = str(exc)
        return result
    renamed = apply_trace(s_norm.normalized, result.rename_trace)
    result.grammars["renamed"] = renamed

    try:
        result.structural_trace = structural_resolve(m_norm.normalized, renamed)
    except StructError as exc:
        result.reason = f"structural difference in {exc}"
        return result
    final = apply_trace(renamed, result.structural_trace)
    result.grammars["final"] = final

    if not verify_converged(m_norm.normalized, final):
        result.reason = "converged grammar differs from the master"
        return result
    assert classify_anf(final).ok
    result.verdict = CONVERGED
    return result
