import itertools
import random

import pytest

from cqe.model import (
    Atom,
    Dataset,
    Ontology,
    Rule,
    atom,
    bcq,
    const,
    make_instance,
    var,
)
from cqe.reasoner import chase, freeze, certain_answers
from cqe.sld import (
    TOP_GOAL,
    Goal,
    ShapeError,
    build_proof_graph,
    enumerate_goals,
    prove,
    resolve_step,
    validate_proof,
)
from cqe.textio import bcq_text

from generators import gen_datalog
from conftest import suite_seed

x, y = var("x"), var("y")
a, b = const("Ka"), const("Kb")


def test_resolve_step_with_rule(movie_fans):
    goal = Goal((atom("MovFan", const("John")),))
    rule = next(r for r in movie_fans.ontology.rules if r.head[0].predicate == "MovFan")
    (result,) = resolve_step(goal, rule, 0)
    assert result == Goal((atom("Likes", const("John"), var("v1")),))


def test_resolve_step_with_fact():
    goal = Goal((atom("Likes", const("John"), var("v1")),))
    fact = atom("Likes", const("John"), const("Seven"))
    assert resolve_step(goal, fact, 0) == [TOP_GOAL]


def test_resolve_step_non_unifiable():
    goal = Goal((atom("A", a),))
    rule = Rule((atom("B", x),), (atom("C", x),))
    assert resolve_step(goal, rule, 0) == []


def test_goal_canonicalization():
    g1 = Goal((atom("R", var("u"), var("w")), atom("A", var("w"))))
    g2 = Goal((atom("R", var("p"), var("q")), atom("A", var("q"))))
    assert g1.canonical() == g2.canonical()
    assert g1.canonical() != Goal((atom("R", var("u"), var("w")), atom("A", var("u")))).canonical()


def test_prove_movie_fans(movie_fans):
    proof = prove(Goal((atom("MovFan", const("John")),)), movie_fans.ontology, movie_fans.dataset)
    assert proof is not None
    assert len(proof) == 2
    assert proof.goals[1] == Goal((atom("Likes", const("John"), var("v1")),))
    assert proof.goals[-1].is_top
    assert validate_proof(proof, movie_fans.ontology, movie_fans.dataset)


def test_prove_uses_fact_directly(chain_loop):
    proof = prove(Goal((atom("A", const("C0")),)), chain_loop.ontology, chain_loop.dataset)
    assert proof is not None
    assert len(proof) == 1 and proof.frontier == 0
    assert validate_proof(proof, chain_loop.ontology, chain_loop.dataset)


def test_prove_absence_is_definitive():
    assert prove(Goal((atom("B", a),)), Ontology(), Dataset()) is None


def test_prove_multi_atom_goal(social_network):
    goal = Goal((atom("ThrFan", x), atom("FoF", x, y)))
    proof = prove(goal, social_network.ontology, social_network.dataset)
    assert proof is not None
    assert validate_proof(proof, social_network.ontology, social_network.dataset)
    # normalised: all rule steps precede all fact steps
    kinds = ["rule" if isinstance(s.sentence, Rule) else "fact" for s in proof.steps]
    assert kinds == sorted(kinds, key=lambda k: k == "fact")
    assert proof.frontier == kinds.index("fact")


def test_prove_agrees_with_chase_exhaustively():
    rng = random.Random(suite_seed() + 17)
    for _ in range(25):
        inst = gen_datalog(rng, n_rules=3, max_constants=3)
        model = chase(inst.ontology, inst.dataset)
        constants = sorted(inst.constants(), key=lambda t: t.name) or [a]
        sig = inst.user_signature()
        for pred in sorted(sig):
            arity = sig[pred]
            for args in itertools.product(constants, repeat=arity):
                ground = Atom(pred, tuple(args))
                proof = prove(Goal((ground,)), inst.ontology, inst.dataset)
                assert (proof is not None) == (ground in model.facts)
                if proof is not None:
                    assert validate_proof(proof, inst.ontology, inst.dataset)


# ---------------------------------------------------------------------------
# Proof graphs.
# ---------------------------------------------------------------------------


def test_proof_graph_movie_fans(movie_fans):
    graph = build_proof_graph(movie_fans)
    likes_goal = Goal((atom("Likes", const("John"), var("v1")),))
    movfan_goal = Goal((atom("MovFan", const("John")),))
    assert movfan_goal in graph.nodes and likes_goal in graph.nodes
    assert graph.sources == (movfan_goal,)
    on_paths = graph.nodes_on_paths()
    assert on_paths == {movfan_goal, likes_goal, TOP_GOAL}
    targets = {e.target for e in graph.edges[movfan_goal]}
    assert likes_goal in targets


def test_proof_graph_without_policy_answers():
    inst = make_instance(
        Ontology.of([Rule((atom("R", x, y),), (atom("A", x),))]),
        Dataset(),
        bcq(atom("A", a)),
    )
    graph = build_proof_graph(inst)
    assert graph.sources == ()
    assert graph.nodes_on_paths() == set()


def test_proof_graph_rejects_nonlinear(chain_loop):
    with pytest.raises(ShapeError) as err:
        build_proof_graph(chain_loop)
    assert err.value.failed_flag == "linear"


def test_proof_graph_node_bound():
    rng = random.Random(suite_seed() + 5)
    from generators import gen_linear

    for _ in range(30):
        inst = gen_linear(rng)
        graph = build_proof_graph(inst)
        preds = len(inst.user_signature())
        consts = len(inst.constants())
        assert len(graph.nodes) <= preds * (consts + 2) ** 2 + 1


def test_nodes_on_paths_disclose_policy():
    rng = random.Random(suite_seed() + 6)
    from generators import gen_linear

    checked = 0
    for _ in range(30):
        inst = gen_linear(rng)
        graph = build_proof_graph(inst)
        answers = certain_answers(inst.policy, inst.ontology, inst.dataset)
        for g in graph.nodes_on_paths():
            if g.is_top:
                continue
            frozen = freeze(g.as_bcq())
            model = chase(inst.ontology, frozen)
            assert any(
                certain_answers(inst.policy.instantiate(ans), inst.ontology, frozen) == {()}
                for ans in answers
            )
            checked += 1
    assert checked > 10


def test_proof_graph_dot_output(movie_fans):
    dot = build_proof_graph(movie_fans).to_dot(movie_fans.ontology)
    assert dot.startswith("digraph proof_graph {")
    assert "MovFan(John)" in dot and "⊤" in dot
    assert "rule 2" in dot  # MovFan rule is the second one


# ---------------------------------------------------------------------------
# Goal enumeration.
# ---------------------------------------------------------------------------


def test_enumerate_goals_movie_fans(movie_fans):
    enum = enumerate_goals(movie_fans, 3)
    texts = sorted(bcq_text(q) for q in enum.goals)
    assert texts == ["MovFan(John)", "exists v1. Likes(John, v1)"]
    assert enum.complete


def test_enumerate_goals_chain_truncated(chain_loop):
    enum = enumerate_goals(chain_loop, 4)
    assert not enum.complete
    texts = {bcq_text(q) for q in enum.goals}
    assert "A(C0)" in texts
    assert "exists v1. R(C0, v1), A(v1)" in texts
    assert "exists v1, v2. R(C0, v1), R(v1, v2), A(v2)" in texts


def test_enumerate_goals_empty_policy():
    inst = make_instance(Ontology(), Dataset(), bcq(atom("A", a)))
    enum = enumerate_goals(inst, 4)
    assert enum.goals == frozenset()
    assert enum.complete


def test_enumerated_goals_are_entailed(social_network):
    enum = enumerate_goals(social_network, 3)
    model = chase(social_network.ontology, social_network.dataset)
    for q in enum.goals:
        assert certain_answers(q, social_network.ontology, social_network.dataset) == {()}


def test_prove_agrees_with_chase_on_boolean_cqs():
    # sampled conjunctive goals of up to 4 atoms with shared variables
    from cqe.model import ConjunctiveQuery
    from cqe.reasoner import entails_bool

    rng = random.Random(suite_seed() + 41)
    for _ in range(8):
        inst = gen_datalog(rng, n_rules=3, max_constants=3)
        model = chase(inst.ontology, inst.dataset)
        sig = sorted(inst.user_signature().items())
        terms = sorted(inst.constants(), key=lambda t: t.name) + [var("v1"), var("v2"), var("v3")]
        for _ in range(120):
            k = rng.randint(1, 4)
            body = tuple(
                Atom(p, tuple(rng.choice(terms) for _ in range(arity)))
                for p, arity in (rng.choice(sig) for _ in range(k))
            )
            q = ConjunctiveQuery((), body)
            holds = entails_bool(q, model.index)
            proof = prove(Goal(q.body), inst.ontology, inst.dataset)
            assert (proof is not None) == holds, q
