"""Bundled grammars: a master grammar of a small functional language, servant
variants of it, and one grammar of a different language."""

from __future__ import annotations

from importlib import resources

from gconv.gin import parse_grammar
from gconv.model import Grammar

MASTER = "fl_master"
SERVANTS = ("fl_concrete", "fl_star_lists", "fl_adt", "fl_permuted", "fl_layered")
INCOMPATIBLE = "arith_toy"


def path(name: str):
    return resources.files(__name__).joinpath(f"{name}.gin")


def text(name: str) -> str:
    return path(name).read_text(encoding="utf-8")


def load(name: str) -> Grammar:
    return parse_grammar(text(name))


def names() -> list[str]:
    return sorted(p.name[: -len(".gin")] for p in resources.files(__name__).iterdir() if p.name.endswith(".gin"))
