import pytest

from cqe.model import Atom, EQ, anon, atom, bcq, const, skolem, var
from cqe.textio import (
    TextSyntaxError,
    answers_json,
    bcq_text,
    dataset_text,
    parse_program,
    parse_query,
    program_text,
    union_text,
)

x, y = var("x"), var("y")


def test_parse_two_atom_rule():
    prog = parse_program("rule: Likes(x,y), Thr(y) -> ThrFan(x).")
    assert len(prog.rules) == 1
    r = prog.rules[0]
    assert len(r.body) == 2 and r.head[0].predicate == "ThrFan"
    assert not r.exist_vars


def test_parse_existential_rule():
    prog = parse_program("rule: A(x) -> exists y. R(x,y), B(y).")
    (r,) = prog.rules
    assert r.exist_vars == frozenset({y})
    assert {h.predicate for h in r.head} == {"R", "B"}


def test_malformed_existential_head_rejected():
    with pytest.raises(TextSyntaxError):
        parse_program("rule: A(x) -> exists y. R(x,y).")
    with pytest.raises(TextSyntaxError):
        parse_program("rule: A(x), B(x) -> exists y. R(x,y), C(y).")


def test_arity_mismatch_reports_position():
    with pytest.raises(TextSyntaxError, match="arity"):
        parse_program("fact: FoF(John, Bob).\nfact: FoF(John).")


def test_head_conjunction_is_sugar():
    prog = parse_program("rule: A(x) -> B(x), C(x).")
    assert len(prog.rules) == 2
    assert {r.head[0].predicate for r in prog.rules} == {"B", "C"}


def test_unsafe_rule_rejected():
    with pytest.raises(TextSyntaxError, match="unsafe"):
        parse_program("rule: A(x) -> R(x, y).")


def test_syntax_error_carries_position():
    with pytest.raises(TextSyntaxError) as err:
        parse_program("fact: FoF(John,\nBob.")
    assert err.value.line == 2


def test_parse_query_forms():
    q = parse_query("Q(x) :- FoF(John, x).")
    assert q.free == (x,)
    assert q.body[0].args[0] == const("John")

    triangle = parse_query("Q() :- R(x,y), R(y,z), R(z,x).")
    assert triangle.is_boolean and len(triangle.body) == 3

    with pytest.raises(TextSyntaxError, match="empty"):
        parse_query("Q(x) :- .")


def test_parse_query_trailing_dot_optional():
    assert parse_query("Q(x) :- ThrFan(x)") == parse_query("Q(x) :- ThrFan(x).")


def test_equality_infix():
    prog = parse_program("rule: A(x) -> x ~ K.\nfact: K ~ K.")
    assert prog.rules[0].head[0].predicate == EQ
    assert Atom(EQ, (const("K"), const("K"))) in prog.facts


def test_propositional_atoms():
    prog = parse_program("fact: Alarm.\nrule: Alarm -> Alert.")
    assert Atom("Alarm", ()) in prog.facts
    assert prog.rules[0].head[0] == Atom("Alert", ())


def test_facts_must_be_ground():
    with pytest.raises(TextSyntaxError):
        parse_program("fact: FoF(John, x).")


def test_options_and_policy():
    prog = parse_program("option: profile = ql.\npolicy: P(x) :- A(x).")
    assert prog.options == {"profile": "ql"}
    assert prog.policy is not None
    with pytest.raises(TextSyntaxError, match="one policy"):
        parse_program("policy: P(x) :- A(x).\npolicy: P2(x) :- B(x).")


def test_program_round_trip(tmp_path):
    text = """
option: profile = rl.
rule: Likes(x, y), Thr(y) -> ThrFan(x).
rule: A(x) -> exists y. R(x, y), B(y).
fact: FoF(John, Bob).
fact: Cr("strange name").
policy: P(x) :- FoF(John, x).
query: Fans(x) :- ThrFan(x).
"""
    prog = parse_program(text)
    rendered = program_text(prog)
    again = parse_program(rendered)
    assert again == prog
    assert program_text(again) == rendered  # serialize ∘ parse idempotent


def test_anonymous_and_skolem_round_trip():
    ds_text = dataset_text([atom("FoF", const("John"), anon("Bob__1f")), atom("B", skolem("w_A_R"))])
    prog = parse_program(ds_text)
    assert atom("FoF", const("John"), anon("Bob__1f")) in prog.facts
    assert atom("B", skolem("w_A_R")) in prog.facts
    assert "_anon:Bob__1f" in ds_text


def test_quoted_constants_round_trip():
    prog = parse_program('fact: Name("lower case").')
    assert atom("Name", const("lower case")) in prog.facts
    assert '"lower case"' in dataset_text(prog.facts)


def test_dataset_text_is_sorted_deterministically():
    facts = [atom("B", const("K2")), atom("A", const("K9")), atom("B", const("K1"))]
    assert dataset_text(facts).splitlines() == [
        "fact: A(K9).",
        "fact: B(K1).",
        "fact: B(K2).",
    ]


def test_union_text_formula_style():
    u = union_text(
        [bcq(atom("MovFan", const("John"))), bcq(atom("Likes", const("John"), y))]
    )
    assert u == "MovFan(John) | exists y. Likes(John, y)"
    assert union_text([]) == "false"


def test_bcq_text_orders_variables_by_occurrence():
    q = bcq(atom("R", x, y), atom("A", y))
    assert bcq_text(q) == "exists x, y. R(x, y), A(y)"


def test_answers_json_schema():
    assert answers_json({(const("Bob"),)}) == '{"answers": [["Bob"]]}'
    assert answers_json(set()) == '{"answers": []}'


def test_comments_ignored():
    prog = parse_program("% a comment\nfact: A(K). % trailing\n")
    assert len(prog.facts) == 1
