import pytest

from gconv import corpus
from gconv.anf import normalize
from gconv.gin import parse_expression, parse_grammar, parse_trace, print_grammar
from gconv.model import grammar_identical
from gconv.xbgf import (
    SIGNATURES,
    Step,
    TraceError,
    TransformError,
    apply_backward,
    apply_forward,
    apply_trace,
    strip,
)
from grammargen import random_grammar


def G(text):
    return parse_grammar(text)


def E(text):
    return parse_expression(text)


def assert_step(before, step, after):
    """Forward gives ``after`` and backward restores ``before`` exactly."""
    g, h = G(before), G(after)
    out = apply_forward(g, step)
    assert grammar_identical(out, h), print_grammar(out)
    assert grammar_identical(apply_backward(h, step), g)


CASES = [
    ("root A\nA ::= B C ;\nB ::= C ;\n", Step("rename", ("B", "D")), "root A\nA ::= D C ;\nD ::= C ;\n"),
    ("root A\nA ::= B ;\n", Step("rename", ("A", "Z")), "root Z\nZ ::= B ;\n"),
    ("root A\n[l] A ::= B ;\n", Step("unlabel", ("A", 1, "l")), "root A\nA ::= B ;\n"),
    ("root A\nA ::= x::B C ;\n", Step("unselect", ("A", 1, (0,), "x")), "root A\nA ::= B C ;\n"),
    ("root A\nA ::= x::(B C) D ;\n", Step("unselect", ("A", 1, (0,), "x", 2)), "root A\nA ::= B C D ;\n"),
    (
        'root A\nA ::= "if" B "then" C ;\n',
        Step("abstract", ("A", 1, E('"if" B "then" C'))),
        "root A\nA ::= B C ;\n",
    ),
    (
        'root A\nA ::= ("x" | B) C ;\n',
        Step("abstract", ("A", 1, E('("x" | B) C'))),
        "root A\nA ::= B? C ;\n",
    ),
    (
        'root A\nA ::= { B "," }+ ;\n',
        Step("desugarSepPlus", ("A", 1, (), E('","'))),
        "root A\nA ::= B+ ;\n",
    ),
    (
        "root A\nA ::= C { B S }+ ;\n",
        Step("desugarSepPlus", ("A", 1, (1,), E("S"), 2)),
        "root A\nA ::= C B (S B)* ;\n",
    ),
    (
        "root A\nA ::= { B S }* ;\n",
        Step("desugarSepStar", ("A", 1, (), E("S"))),
        "root A\nA ::= (B (S B)*)? ;\n",
    ),
    (
        "root A\nA ::= B (C D)* ;\nA ::= C D ;\n",
        Step("extract", ("X", E("C D"), "A")),
        "root A\nA ::= B X* ;\nA ::= X ;\nX ::= C D ;\n",
    ),
    (
        "root A\nA ::= B C ;\nB ::= D+ ;\n",
        Step("inline", ("B", 1, E("D+"), (("A", 1, 0),))),
        "root A\nA ::= D+ C ;\n",
    ),
    ("root A\nA ::= B | C D ;\n", Step("vertical", ("A", 1, 2)), "root A\nA ::= B ;\nA ::= C D ;\n"),
    ("root E\nE ::= S E+ ;\n", Step("widen", ("E", 1)), "root E\nE ::= S E* ;\n"),
    ("root E\nE ::= S E* ;\n", Step("narrow", ("E", 1, (1,))), "root E\nE ::= S E+ ;\n"),
    ("root F\nF ::= S E ;\n", Step("permute", ("F", (1, 0))), "root F\nF ::= E S ;\n"),
    ("root F\nF ::= A B C ;\n", Step("permute", ("F", (2, 0, 1))), "root F\nF ::= C A B ;\n"),
    ("root X\nX ::= A ;\nX ::= X B ;\n", Step("deyaccify", ("X", "left", 0, 1)), "root X\nX ::= A B* ;\n"),
    (
        "root X\nX ::= H X ;\nY ::= Z ;\nX ::= A ;\n",
        Step("deyaccify", ("X", "right", 2, 0)),
        "root X\nX ::= H* A ;\nY ::= Z ;\n",
    ),
    ("root X\nX ::= eps ;\nX ::= X B ;\n", Step("deyaccify", ("X", "left", 0, 1)), "root X\nX ::= B* ;\n"),
    (
        "root A\nA ::= B ;\nD ::= C ;\nD ::= A ;\n",
        Step("removeUnreachable", ("D", (1, 2), E("C"), E("A"))),
        "root A\nA ::= B ;\n",
    ),
    ("root A\nroot B\nA ::= B ;\nB ::= C ;\n", Step("reroot", (("A",), ("A", "B"))), "root A\nA ::= B ;\nB ::= C ;\n"),
    (
        "root A\nA ::= B C+ (B | C) ;\nC ::= eps ;\nC ::= D ;\n",
        Step("eliminateEpsilon", ("C", (1,), (("A", 1, 1), ("A", 1, 2, 1)))),
        "root A\nA ::= B C* (B | C?) ;\nC ::= D ;\n",
    ),
    (
        "root A\nA ::= B C ;\nC ::= eps ;\n",
        Step("eliminateEpsilon", ("C", (1,), ())),
        "root A\nA ::= B C ;\n",
    ),
]


@pytest.mark.parametrize("before, step, after", CASES, ids=[c[1].op + str(i) for i, c in enumerate(CASES)])
def test_operator(before, step, after):
    assert_step(before, step, after)


def test_every_operator_has_a_case():
    assert {c[1].op for c in CASES} == set(SIGNATURES)


@pytest.mark.parametrize(
    "grammar, step, fragment",
    [
        ("root A\nA ::= F F1 ;\n", Step("rename", ("F1", "F")), "F is not fresh"),
        ("root A\nA ::= B ;\n", Step("rename", ("Q", "R")), "unknown nonterminal Q"),
        ("root A\nA ::= B ;\n", Step("unlabel", ("A", 1, "l")), "not labelled"),
        ("root A\nA ::= B ;\n", Step("unlabel", ("A", 2, "l")), "no production number 2"),
        ("root A\nA ::= B ;\n", Step("vertical", ("A", 1, 2)), "not an unlabelled choice"),
        ("root A\nA ::= B ;\n", Step("widen", ("A", 1)), "no Plus"),
        ("root A\nA ::= B ;\nA ::= C ;\n", Step("permute", ("A", (0,))), "exactly one production"),
        ("root A\nA ::= B C ;\n", Step("permute", ("A", (0, 0))), "not a permutation"),
        ("root A\nA ::= B ;\n", Step("inline", ("A", 0, E("B"), ())), "root"),
        ("root A\nA ::= B ;\nB ::= B C ;\n", Step("inline", ("B", 1, E("B C"), (("A", 1), ("B", 1, 0)))), "recursive"),
        ("root A\nA ::= B ;\n", Step("extract", ("X", E("C"), "A")), "does not occur"),
        ("root A\nA ::= B ;\n", Step("removeUnreachable", ("A", (0,), E("B"))), "is reachable"),
        ("root A\nA ::= B ;\n", Step("eliminateEpsilon", ("A", (0,), ())), "no eps production"),
        ("root X\nX ::= A ;\nX ::= B ;\n", Step("deyaccify", ("X", "left", 0, 1)), "not left-recursive"),
        ("root A\nA ::= B ;\n", Step("reroot", (("A",), ("A",))), "unchanged"),
        ("root A\nA ::= B ;\n", Step("abstract", ("A", 1, E("B"))), "nothing to abstract"),
    ],
)
def test_preconditions(grammar, step, fragment):
    with pytest.raises(TransformError, match=fragment) as info:
        apply_forward(G(grammar), step)
    assert info.value.op == step.op


def test_ill_formed_arguments():
    with pytest.raises(TransformError, match="takes 2 arguments"):
        apply_forward(G("root A\nA ::= B ;"), Step("rename", ("A",)))


@pytest.mark.parametrize(
    "grammar, step",
    [
        ("root E\nE ::= S E+ ;\n", Step("widen", ("E", 1))),
        ("root A\nA ::= B C ;\n", Step("abstract", ("A", 1, E('"x" B C D')))),
        ("root A\nA ::= B ;\nA ::= C ;\n", Step("vertical", ("A", 1, 3))),
        ("root X\nX ::= A B ;\n", Step("deyaccify", ("X", "left", 0, 1))),
        ("root A\nA ::= B ;\n", Step("rename", ("A", "B"))),
    ],
)
def test_backward_rejects_grammars_outside_the_image(grammar, step):
    with pytest.raises(TransformError, match="not in the image"):
        apply_backward(G(grammar), step)


def test_widen_backward_example():
    g = apply_backward(G("root E\nE ::= S E* ;\n"), Step("widen", ("E", 1)))
    assert print_grammar(g) == "root E\nE ::= S E+ ;\n"


def test_widen_picks_leftmost():
    g = apply_forward(G("root E\nE ::= A+ B+ ;\n"), Step("widen", ("E", 1)))
    assert print_grammar(g) == "root E\nE ::= A* B+ ;\n"


def test_widen_backward_without_path_is_ambiguous_when_two_stars():
    with pytest.raises(TransformError):
        apply_backward(G("root E\nE ::= A* B* ;\n"), Step("widen", ("E", 1)))


def test_empty_trace():
    g = corpus.load(corpus.MASTER)
    assert apply_trace(g, ()) is g


def test_trace_failure_index_is_exact():
    g = G("root A\nA ::= B ;\n")
    trace = parse_trace("rename(B, C) ;\nrename(C, D) ;\nrename(B, E) ;\nrename(D, F) ;\n")
    with pytest.raises(TraceError) as info:
        apply_trace(g, trace)
    assert info.value.index == 3
    apply_trace(g, trace[: info.value.index - 1])


def test_backward_trace_failure_index():
    g = G("root A\nA ::= Q ;\n")
    trace = parse_trace("rename(B, C) ;\nrename(D, E) ;\nrename(P, Q) ;\n")
    with pytest.raises(TraceError) as info:
        apply_trace(g, trace, "backward")
    assert info.value.index == 2


def test_abstract_backward_reinserts_literals_on_concrete_servant():
    g = corpus.load("fl_concrete")
    result = normalize(g)
    assert grammar_identical(apply_trace(result.normalized, result.trace, "backward"), g)
    assert grammar_identical(apply_trace(g, result.trace), result.normalized)


def test_concrete_servant_replays_to_golden_anf():
    g = corpus.load("fl_concrete")
    trace = normalize(g).trace
    golden = parse_grammar(_golden())
    assert grammar_identical(apply_trace(g, trace), golden)


def _golden():
    from importlib import resources

    return resources.files("gconv.corpus").joinpath("fl_concrete.anf.golden").read_text()


@pytest.mark.parametrize(
    "expr, stripped",
    [
        ('"a" B "c"', "B"),
        ('"a" "b"', "eps"),
        ('("x" | B)+', "B*"),
        ('{ B "," }*', "B*"),
        ('{ "," B }+', "B*"),
        ("B?*", "B*"),
        ("B++", "B+"),
        ('x::"k"', "eps"),
        ('("a" | "b")?', "eps"),
    ],
)
def test_strip(expr, stripped):
    assert strip(E(expr)) == E(stripped)


@pytest.mark.parametrize("seed", range(40))
def test_each_normalization_step_is_reversible(seed):
    g = random_grammar(seed)
    for step in normalize(g).trace:
        h = apply_forward(g, step)
        assert grammar_identical(apply_backward(h, step), g)
        g = h
