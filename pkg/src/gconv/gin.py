"""Textual notation for grammars (``.gin``) and transformation traces (``.xbgf``).

Grammar files::

    # comment
    root Program
    Program ::= Function+ ;
    [binary] Expr ::= Expr Ops Expr ;
    Args ::= { Expr "," }* | eps ;

Trace files hold one step per line, ``op(arg, ...) ;``. An argument is a
name, a non-negative integer, a bracketed list of such items, or a grammar
expression between ``<`` and ``>``. A bare quoted literal is read as the
terminal expression it denotes and printed back in angle brackets.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from gconv.model import (
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
    seq,
)


@dataclass(frozen=True)
class SourceSpan:
    line: int
    column: int

    def __str__(self):
        return f"{self.line}:{self.column}"


class ParseError(Exception):
    def __init__(self, message: str, span: SourceSpan):
        super().__init__(f"{span}: {message}")
        self.message = message
        self.span = span


_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+|\#[^\n]*)
  | (?P<string>"(?:\\["\\]|[^"\\\n])*")
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<int>[0-9]+)
  | (?P<punct>::=|::|[|;()\[\]{}?*+,<>])
    """,
    re.VERBOSE,
)


@dataclass
class Token:
    kind: str
    text: str
    span: SourceSpan


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos, line, col = 0, 1, 1
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            if text[pos] == '"':
                raise ParseError("unterminated or malformed string literal", SourceSpan(line, col))
            raise ParseError(f"unexpected character {text[pos]!r}", SourceSpan(line, col))
        kind = m.lastgroup
        chunk = m.group()
        if kind != "ws":
            tokens.append(Token(chunk if kind == "punct" else kind, chunk, SourceSpan(line, col)))
        newlines = chunk.count("\n")
        if newlines:
            line += newlines
            col = len(chunk) - chunk.rfind("\n")
        else:
            col += len(chunk)
        pos = m.end()
    tokens.append(Token("eof", "", SourceSpan(line, col)))
    return tokens


def _unquote(text: str) -> str:
    return re.sub(r"\\([\"\\])", r"\1", text[1:-1])


def _quote(literal: str) -> str:
    return '"' + literal.replace("\\", "\\\\").replace('"', '\\"') + '"'


class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.tokens[min(self.i + k, len(self.tokens) - 1)]

    def advance(self) -> Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, kind: str, what: str | None = None) -> Token:
        if self.tok.kind != kind:
            self.error(f"expected {what or repr(kind)}, found {self.describe(self.tok)}")
        return self.advance()

    def error(self, message: str, tok: Token | None = None):
        raise ParseError(message, (tok or self.tok).span)

    @staticmethod
    def describe(tok: Token) -> str:
        return "end of input" if tok.kind == "eof" else repr(tok.text)

    # expressions, loosest to tightest

    _STOP = {"|", ";", ")", "}", ">", "eof"}

    def choice(self) -> Expr:
        alts = [self.sequence()]
        while self.tok.kind == "|":
            self.advance()
            alts.append(self.sequence())
        return choice(*alts)

    def sequence(self) -> Expr:
        start = self.tok
        parts = []
        while self.tok.kind not in self._STOP:
            parts.append(self.selector())
        if not parts:
            self.error("empty expression (write eps for the empty sequence)", start)
        return seq(*parts) if len(parts) > 1 else parts[0]

    def selector(self) -> Expr:
        if self.tok.kind == "ident" and self.peek().kind == "::":
            name = self.advance().text
            self.advance()
            return Selector(name, self.selector())
        return self.postfix()

    def postfix(self) -> Expr:
        expr = self.atom()
        while self.tok.kind in ("?", "*", "+"):
            mark = self.advance().kind
            expr = {"?": Optional, "*": Star, "+": Plus}[mark](expr)
        return expr

    def atom(self) -> Expr:
        tok = self.tok
        if tok.kind == "ident":
            self.advance()
            return Epsilon() if tok.text == "eps" else Nonterminal(tok.text)
        if tok.kind == "string":
            self.advance()
            return Terminal(_unquote(tok.text))
        if tok.kind == "(":
            self.advance()
            inner = self.choice()
            self.expect(")")
            return inner
        if tok.kind == "{":
            self.advance()
            element = self.selector()
            if self.tok.kind == "}":
                self.error("separator list needs an element and a separator")
            separator = self.selector()
            self.expect("}")
            mark = self.tok
            if mark.kind == "+":
                self.advance()
                return SepListPlus(element, separator)
            if mark.kind == "*":
                self.advance()
                return SepListStar(element, separator)
            self.error("expected '+' or '*' after separator list")
        self.error(f"unexpected {self.describe(tok)}")

    # grammar files

    def grammar(self) -> Grammar:
        roots: list[tuple[str, Token]] = []
        prods: list[Production] = []
        while self.tok.kind != "eof":
            if self.tok.kind == "ident" and self.tok.text == "root" and self.peek().kind == "ident":
                self.advance()
                name_tok = self.advance()
                if name_tok.text == "eps":
                    self.error("'eps' is not a nonterminal name", name_tok)
                if any(r == name_tok.text for r, _ in roots):
                    self.error(f"duplicate root declaration {name_tok.text!r}", name_tok)
                roots.append((name_tok.text, name_tok))
                continue
            label = None
            if self.tok.kind == "[":
                self.advance()
                label = self.expect("ident", "production label").text
                self.expect("]")
            lhs_tok = self.expect("ident", "nonterminal")
            if lhs_tok.text == "eps":
                self.error("'eps' cannot be defined", lhs_tok)
            self.expect("::=")
            rhs = self.choice()
            self.expect(";")
            prods.append(Production(lhs_tok.text, rhs, label))
        if not roots:
            raise ParseError("missing root declaration", SourceSpan(1, 1))
        g = Grammar(tuple(r for r, _ in roots), tuple(prods))
        mentioned = Grammar((), tuple(prods)).nonterminals
        for name, tok in roots:
            if name not in mentioned:
                self.error(f"undeclared root {name!r}", tok)
        return g

    # traces

    def trace(self):
        from gconv.xbgf import Step, check_step

        steps = []
        while self.tok.kind != "eof":
            op_tok = self.expect("ident", "operator name")
            self.expect("(")
            args = []
            if self.tok.kind != ")":
                args.append(self.argument())
                while self.tok.kind == ",":
                    self.advance()
                    args.append(self.argument())
            self.expect(")")
            self.expect(";")
            step = Step(op_tok.text, tuple(args))
            try:
                check_step(step)
            except ValueError as exc:
                self.error(str(exc), op_tok)
            steps.append(step)
        return tuple(steps)

    def argument(self):
        if self.tok.kind == "<":
            self.advance()
            expr = self.choice()
            self.expect(">")
            return expr
        return self.list_item()

    def list_item(self):
        tok = self.tok
        if tok.kind == "ident":
            self.advance()
            return tok.text
        if tok.kind == "int":
            self.advance()
            return int(tok.text)
        if tok.kind == "string":
            self.advance()
            return Terminal(_unquote(tok.text))
        if tok.kind == "[":
            self.advance()
            items = []
            if self.tok.kind != "]":
                items.append(self.list_item())
                while self.tok.kind == ",":
                    self.advance()
                    items.append(self.list_item())
            self.expect("]")
            return tuple(items)
        self.error(f"unexpected {self.describe(tok)} in argument list")


def parse_grammar(text: str) -> Grammar:
    return _Parser(text).grammar()


def parse_expression(text: str) -> Expr:
    p = _Parser(text)
    expr = p.choice()
    p.expect("eof", "end of expression")
    return expr


def parse_trace(text: str):
    return _Parser(text).trace()


_CHOICE, _SEQ, _SEL, _POST, _ATOM = range(5)


def _render(expr: Expr) -> tuple[str, int]:
    if isinstance(expr, Nonterminal):
        return expr.name, _ATOM
    if isinstance(expr, Terminal):
        return _quote(expr.literal), _ATOM
    if isinstance(expr, Epsilon):
        return "eps", _ATOM
    if isinstance(expr, Choice):
        return " | ".join(_fmt(e, _SEQ) for e in expr.items), _CHOICE
    if isinstance(expr, Sequence):
        return " ".join(_fmt(e, _SEL) for e in expr.items), _SEQ
    if isinstance(expr, Selector):
        return f"{expr.name}::{_fmt(expr.expr, _SEL)}", _SEL
    if isinstance(expr, (Optional, Star, Plus)):
        mark = {Optional: "?", Star: "*", Plus: "+"}[type(expr)]
        return _fmt(expr.expr, _POST) + mark, _POST
    if isinstance(expr, (SepListPlus, SepListStar)):
        mark = "+" if isinstance(expr, SepListPlus) else "*"
        return f"{{ {_fmt(expr.element, _SEL)} {_fmt(expr.separator, _SEL)} }}{mark}", _ATOM
    raise TypeError(f"not an expression: {expr!r}")


def _fmt(expr: Expr, context: int) -> str:
    text, level = _render(expr)
    return f"({text})" if level < context else text


def print_expression(expr: Expr) -> str:
    return _fmt(expr, _CHOICE)


def print_production(p: Production) -> str:
    label = f"[{p.label}] " if p.label is not None else ""
    return f"{label}{p.lhs} ::= {print_expression(p.rhs)} ;"


def print_grammar(g: Grammar) -> str:
    lines = [f"root {r}" for r in g.roots]
    lines.extend(print_production(p) for p in g.productions)
    return "".join(line + "\n" for line in lines)


def _print_arg(arg) -> str:
    if isinstance(arg, Expr):
        return f"<{print_expression(arg)}>"
    if isinstance(arg, tuple):
        return "[" + ", ".join(_print_arg(a) for a in arg) + "]"
    return str(arg)


def print_step(step) -> str:
    return f"{step.op}(" + ", ".join(_print_arg(a) for a in step.args) + ") ;"


def print_trace(trace) -> str:
    return "".join(print_step(s) + "\n" for s in trace)
