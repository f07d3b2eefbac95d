import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from synthcity.errors import GrammarSyntaxError, NonPositiveWeight, UndefinedSymbol, UnknownOperation
from synthcity.grammar import format_program, link, parse_grammar
from synthcity.grammar.ast import (Alternative, Attr, BinOp, Branch, Call, Emit, Neg, Num, Op, Program, Ref,
                                   Rule)


def test_single_rule():
    p = parse_grammar("Lot --> extrude(10) Mass")
    assert len(p.rules) == 1
    r = p.rules[0]
    assert r.name == "Lot" and not r.stochastic
    body = r.alternatives[0].body
    assert body == (Op("extrude", (Num(10.0),)), Emit("Mass"))


def test_stochastic_weights_normalized():
    p = parse_grammar("A --> 30%: B 70%: C")
    r = p.rule("A")
    assert r.weights == (0.3, 0.7)
    assert abs(sum(r.weights) - 1.0) <= 1e-12
    assert [a.body for a in r.alternatives] == [(Emit("B"),), (Emit("C"),)]


def test_raw_weights_are_normalized():
    r = parse_grammar("A --> 1: B 3: C").rule("A")
    assert r.weights == (0.25, 0.75)


def test_unknown_operation_position():
    with pytest.raises(UnknownOperation) as ei:
        parse_grammar("Lot --> frobnicate(3)")
    assert ei.value.line == 1 and ei.value.column == 9


def test_syntax_error_line_column():
    with pytest.raises(GrammarSyntaxError) as ei:
        parse_grammar("Lot --> extrude(10) A\nA --> split(x){ 3 B }")
    assert ei.value.line == 2


@pytest.mark.parametrize("src", ["A --> 0%: B 100%: C", "A --> -5: B 1: C"])
def test_non_positive_weight(src):
    with pytest.raises((NonPositiveWeight, GrammarSyntaxError)):
        parse_grammar(src)


def test_zero_weight_is_non_positive_weight():
    with pytest.raises(NonPositiveWeight):
        parse_grammar("A --> 0%: B 100%: C")


def test_link_reports_undefined_symbol():
    p = parse_grammar("Lot --> extrude(10) Mass")
    with pytest.raises(UndefinedSymbol) as ei:
        link(p)
    assert ei.value.symbol == "Mass"
    link(parse_grammar("Lot --> extrude(10) Mass\nterminal Mass"))
    link(parse_grammar("Lot --> NIL"))


def test_link_checks_attribute_references():
    with pytest.raises(UndefinedSymbol):
        link(parse_grammar("Lot --> extrude(h) X\nterminal X"))
    link(parse_grammar("attr h = rand(3, 9)\nLot --> extrude(h * 2) X\nterminal X"))


def test_comments_and_operators():
    src = """
    # a comment
    attr h = rand(10, 20)   # trailing comment
    Lot --> setback(2) extrude(h) comp(faces){ top: R | side: F | bottom: NIL }
    R --> roof(gable, 30) X
    F --> split(y){ 3: G | ~1: U | ~2: U } color(0.5, 0.5, 0.5) texture(brick)
    terminal X, G, U
    """
    p = link(parse_grammar(src))
    assert p.rule_names == ("Lot", "R", "F")
    assert p.terminals == ("X", "G", "U")
    assert parse_grammar(format_program(p)) == p


def test_duplicate_rule_rejected():
    with pytest.raises(GrammarSyntaxError):
        parse_grammar("A --> B\nA --> C")


def test_expression_precedence():
    p = parse_grammar("attr a = 1 + 2 * 3 - -4 / (5 - 6)\nLot --> extrude(a)")
    e = p.attrs[0].expr
    assert e == BinOp("-", BinOp("+", Num(1), BinOp("*", Num(2), Num(3))),
                      BinOp("/", Neg(Num(4)), BinOp("-", Num(5), Num(6))))


# round trip over generated syntax trees

SYMBOLS = st.sampled_from(["A", "B", "Mass", "Facade", "Roof2", "NIL"])
nums = st.one_of(st.integers(0, 10_000).map(float),
                 st.floats(0, 1e6, allow_nan=False, allow_infinity=False)).map(Num)


def exprs(names):
    leaves = nums if not names else st.one_of(nums, st.sampled_from(names).map(Ref))
    return st.recursive(leaves, lambda sub: st.one_of(
        sub.map(Neg),
        st.tuples(st.sampled_from("+-*/"), sub, sub).map(lambda t: BinOp(*t)),
        st.tuples(sub, sub).map(lambda t: Call("rand", t)),
    ), max_leaves=6)


def bodies(depth=2):
    e = exprs(["h", "w"])
    simple = st.one_of(
        SYMBOLS.map(Emit),
        e.map(lambda x: Op("extrude", (x,))),
        e.map(lambda x: Op("setback", (x,))),
        st.tuples(st.sampled_from(["flat", "gable", "hip"]), e).map(lambda t: Op("roof", (Ref(t[0]), t[1]))),
        st.tuples(e, e, e).map(lambda t: Op("color", t)),
        st.sampled_from(["brick", "glass"]).map(lambda n: Op("texture", (Ref(n),))),
    )
    if depth == 0:
        return st.lists(simple, min_size=1, max_size=4).map(tuple)
    inner = bodies(depth - 1)
    split = st.tuples(st.sampled_from("xyz"), st.lists(st.tuples(e, inner, st.booleans()), min_size=1, max_size=3)).map(
        lambda t: Op("split", (Ref(t[0]),), tuple(Branch(k, b, r) for k, b, r in t[1])))
    comp = st.lists(st.tuples(st.sampled_from(["top", "side", "bottom"]), inner), min_size=1, max_size=3).map(
        lambda arms: Op("comp", (Ref("faces"),), tuple(Branch(k, b) for k, b in arms)))
    return st.lists(st.one_of(simple, split, comp), min_size=1, max_size=4).map(tuple)


@st.composite
def programs(draw):
    attrs = (Attr("h", draw(exprs([]))), Attr("w", draw(exprs(["h"]))))
    names = draw(st.lists(st.sampled_from(["Lot", "Tower", "Wing", "Cap"]), min_size=1, max_size=4, unique=True))
    rules = []
    for n in names:
        k = draw(st.integers(1, 3))
        raw = draw(st.lists(st.integers(1, 100), min_size=k, max_size=k))
        ws = [w / sum(raw) for w in raw] if k > 1 else [1.0]
        rules.append(Rule(n, tuple(Alternative(w, draw(bodies())) for w in ws)))
    return Program(attrs, tuple(rules), ("A", "B"))


@settings(max_examples=100)
@given(programs())
def test_round_trip(prog):
    text = format_program(prog)
    again = parse_grammar(text)
    assert again == prog
    assert format_program(again) == text
