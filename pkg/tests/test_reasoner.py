import itertools

import pytest

from cqe.model import (
    Atom,
    Dataset,
    Ontology,
    Rule,
    anon,
    atom,
    bcq,
    const,
    var,
)
from cqe.reasoner import (
    ANSWER_DOMAIN_ALL,
    NonDatalogError,
    bcq_entails,
    canonical_query,
    certain_answers,
    chase,
    find_homomorphism,
    freeze,
    freeze_union,
    hom_equivalent,
)
from cqe.textio import parse_query

x, y, z = var("x"), var("y"), var("z")
a, b, c = const("Ka"), const("Kb"), const("Kc")


def naive_fixpoint(rules, facts):
    """Brute-force oracle: instantiate every rule over every ground tuple."""
    facts = set(facts)
    constants = sorted(
        {t for f in facts for t in f.args}
        | {t for r in rules for at in r.body + r.head for t in at.args if t.is_constant},
        key=lambda t: t.name,
    )
    changed = True
    while changed:
        changed = False
        for r in rules:
            variables = sorted(r.body_variables(), key=lambda t: t.name)
            for combo in itertools.product(constants, repeat=len(variables)):
                theta = dict(zip(variables, combo))
                if all(at.substitute(theta) in facts for at in r.body):
                    derived = r.head[0].substitute(theta)
                    if derived not in facts:
                        facts.add(derived)
                        changed = True
    return facts


def test_chase_matches_naive_oracle_on_social_network(social_network):
    model = chase(social_network.ontology, social_network.dataset)
    expected = naive_fixpoint(social_network.ontology.rules, social_network.dataset.facts)
    assert model.facts.facts == frozenset(expected)
    # frozen expected value, computed once with the oracle above
    new_facts = model.facts.facts - social_network.dataset.facts
    assert new_facts == {
        atom("Thr", const("Seven")),
        atom("ThrFan", const("John")),
        atom("ThrFan", const("Bob")),
        atom("FoF", const("Bob"), const("John")),
        atom("FoF", const("Mary"), const("Bob")),
    }


def test_chase_of_empty_ontology_is_identity():
    data = Dataset.of([atom("A", a), atom("R", a, b)])
    assert chase(Ontology(), data).facts == data


def test_chase_movie_fans(movie_fans):
    model = chase(movie_fans.ontology, movie_fans.dataset)
    assert model.facts.facts == {
        atom("Likes", const("John"), const("Seven")),
        atom("Movie", const("Seven")),
        atom("MovFan", const("John")),
    }


def test_chase_rejects_existential_rules():
    r = Rule((atom("A", x),), (atom("R", x, y), atom("B", y)), frozenset({y}))
    with pytest.raises(NonDatalogError):
        chase(Ontology.of([r]), Dataset())


def test_chase_provenance_is_minimal_and_closed(social_network):
    model = chase(social_network.ontology, social_network.dataset, with_provenance=True)
    # closed: no rule application adds anything
    assert naive_fixpoint(social_network.ontology.rules, model.facts.facts) == set(
        model.facts.facts
    )
    # minimal: every fact is input or has provenance with in-model premises
    for f in model.facts:
        if f in social_network.dataset:
            continue
        rule_used, premises = model.provenance[f]
        assert rule_used in social_network.ontology.rules
        assert all(p in model.facts for p in premises)


def test_chase_monotone(social_network):
    smaller = Dataset(frozenset(sorted(social_network.dataset.facts, key=repr)[:3]))
    q = parse_query("Q(x) :- ThrFan(x)")
    small = certain_answers(q, social_network.ontology, smaller)
    big = certain_answers(q, social_network.ontology, social_network.dataset)
    assert small <= big


# ---------------------------------------------------------------------------
# Homomorphisms.
# ---------------------------------------------------------------------------


def test_find_homomorphism_simple():
    hom = find_homomorphism([atom("R", x, y)], [atom("R", a, b)])
    assert hom is not None
    assert hom[x] == a and hom[y] == b


def test_triangle_maps_into_self_loop():
    source = [atom("R", x, y), atom("R", y, z), atom("R", z, x)]
    hom = find_homomorphism(source, [atom("R", a, a)])
    assert hom is not None
    assert hom[x] == hom[y] == hom[z] == a


def test_no_homomorphism_between_predicates():
    assert find_homomorphism([atom("A", x)], [atom("B", a)]) is None


def test_constants_are_rigid():
    assert find_homomorphism([atom("A", a)], [atom("A", b)]) is None
    assert find_homomorphism([atom("A", anon("n1"))], [atom("A", b)]) is None


def test_fixed_mapping_respected():
    hom = find_homomorphism([atom("R", x, y)], [atom("R", a, b), atom("R", b, b)], {x: b})
    assert hom is not None and hom[x] == b and hom[y] == b


# ---------------------------------------------------------------------------
# Certain answers.
# ---------------------------------------------------------------------------


def test_certain_answers_running_example(social_network):
    answers = certain_answers(
        social_network.policy, social_network.ontology, social_network.dataset
    )
    assert answers == {(const("Bob"),)}


def test_anonymous_constants_never_answer(social_network):
    # the view replacing Bob with a fresh constant has no policy answers
    an_b = anon("an_b")
    renamed = Dataset.of(
        [
            Atom(f.predicate, tuple(an_b if t == const("Bob") else t for t in f.args))
            for f in social_network.dataset
        ]
    )
    answers = certain_answers(social_network.policy, social_network.ontology, renamed)
    assert answers == set()
    # but they do count for Boolean queries and in the unrestricted domain
    q = parse_query("Q() :- FoF(John, x)")
    assert certain_answers(q, social_network.ontology, renamed) == {()}
    wide = certain_answers(
        social_network.policy, social_network.ontology, renamed, ANSWER_DOMAIN_ALL
    )
    assert wide == {(an_b,)}


def test_boolean_query(social_network):
    q = parse_query("Q() :- Thr(x)")
    assert certain_answers(q, social_network.ontology, social_network.dataset) == {()}


def test_answer_arity_mismatch():
    q = parse_query("Q(x) :- A(x)")
    with pytest.raises(ValueError, match="arity"):
        q.instantiate((a, b))


# ---------------------------------------------------------------------------
# Freeze / canonical query / entailment.
# ---------------------------------------------------------------------------


def test_freeze_replaces_variables_with_fresh_constants():
    q = parse_query("Q() :- Likes(John, y)")
    ds = freeze(q)
    (f,) = ds.facts
    assert f.predicate == "Likes"
    assert f.args[0] == const("John")
    assert f.args[1].kind == "frozen-constant"


def test_freeze_ground_query_is_its_atoms():
    q = bcq(atom("ThrFan", const("Bob")))
    assert freeze(q).facts == {atom("ThrFan", const("Bob"))}


def test_freeze_preserves_shared_variables():
    q = parse_query("Q() :- R(x,y), R(y,x)")
    ds = freeze(q)
    assert len(ds.facts) == 2
    consts = {t for f in ds.facts for t in f.args}
    assert len(consts) == 2


def test_freezes_are_globally_fresh():
    q = parse_query("Q() :- A(x)")
    assert freeze(q).facts != freeze(q).facts
    union = freeze_union([q, q])
    assert len(union.facts) == 2


def test_canonical_query():
    q = canonical_query(Dataset.of([atom("R", a, b)]))
    assert len(q.body) == 1 and q.is_boolean
    assert all(t.is_variable for t in q.body[0].args)

    q2 = canonical_query(Dataset.of([atom("A", a), atom("R", a, a)]))
    assert len(q2.variables()) == 1

    d = Dataset.of([atom("R", a, b), atom("A", a)])
    assert hom_equivalent(freeze(canonical_query(d)), d)


def test_bcq_entails():
    assert bcq_entails(bcq(atom("ThrFan", b)), bcq(atom("ThrFan", b)))
    ground = bcq(atom("FoF", const("John"), const("Bob")))
    exist = parse_query("Q() :- FoF(John, x)")
    assert bcq_entails(ground, exist)
    assert not bcq_entails(parse_query("Q() :- FoF(x, Mary)"), parse_query("Q() :- FoF(Bob, x)"))


def test_bcq_entails_reflexive_and_transitive():
    queries = [
        parse_query("Q() :- R(x, y)"),
        parse_query("Q() :- R(x, x)"),
        parse_query("Q() :- R(Ka, y)"),
        parse_query("Q() :- R(Ka, y), R(y, z)"),
    ]
    for q in queries:
        assert bcq_entails(q, q)
    for q1 in queries:
        for q2 in queries:
            for q3 in queries:
                if bcq_entails(q1, q2) and bcq_entails(q2, q3):
                    assert bcq_entails(q1, q3)


def test_bcq_entails_conjunction_of_premises():
    q1 = parse_query("Q() :- R(Ka, x)")
    q2 = parse_query("Q() :- A(Ka)")
    conclusion = parse_query("Q() :- A(Ka), R(Ka, y)")
    assert bcq_entails([q1, q2], conclusion)
    assert not bcq_entails([q1], conclusion)
