"""Acceptance suite: one test per exit criterion, one pass/fail line each.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines.  All checks are exact; the randomized suites are seed-fixed via the
CQE_SEED environment variable (default 0).
"""
import itertools
import multiprocessing
import os
import random
import time

from cqe.model import Atom, atom, bcq, const, var
from cqe.obstruction import Obstruction, build_obstruction_linear, pseudo_obstruction_bounded
from cqe.oracle import CQBound, bounded_existential_chase, verify_censor, verify_censors
from cqe.profiles import build_obstruction_ql, is_fringe_tree_query, prepare_profile_instance
from cqe.reasoner import (
    answers_over_model,
    bcq_entails,
    certain_answers,
    chase,
    policy_answers,
)
from cqe.sld import Goal, prove, validate_proof
from cqe.textio import parse_query
from cqe.viewcensor import (
    build_view_guarded,
    build_view_linear,
    build_view_multilinear,
    check_view_confidentiality,
    closed_subsets,
    extend_ontology,
    view_answers,
)

from conftest import load_instance, suite_seed
from generators import gen_datalog, gen_guarded, gen_linear, gen_multilinear, gen_ql

_TIMINGS: dict[str, float] = {}


def _line(criterion: str, ok: bool, detail: str) -> None:
    print(f"criterion {criterion}: {'PASS' if ok else 'FAIL'} — {detail}")
    assert ok, f"criterion {criterion}: {detail}"


def _equivalent_ucqs(built, expected) -> bool:
    def covered(qs1, qs2):
        return all(any(bcq_entails(q1, q2) and bcq_entails(q2, q1) for q2 in qs2) for q1 in qs1)

    return covered(built, expected) and covered(expected, built)


SIG = (("A", 1), ("B", 1), ("R", 2))


def _bound(instance, sig=SIG, max_atoms=3, max_vars=3, **kw):
    consts = tuple(
        sorted((t for t in instance.constants() if t.kind == "constant"), key=lambda t: t.name)
    )
    return CQBound(tuple(sorted(sig)), consts, max_atoms, max_vars, **kw)


# -- criterion 1: proof-graph obstruction reproduction -----------------------


def test_criterion_1_linear_obstruction():
    instance = load_instance("movie_fans.cqe")
    start = time.perf_counter()
    obstruction = build_obstruction_linear(instance)
    elapsed = time.perf_counter() - start
    expected = [
        bcq(atom("MovFan", const("John"))),
        parse_query("Q() :- Likes(John, y)"),
    ]
    ok = _equivalent_ucqs(obstruction.disjuncts, expected) and elapsed < 1.0
    _line(
        "1",
        ok,
        f"obstruction ≡ MovFan(John) ∨ ∃y.Likes(John,y) in {elapsed * 1000:.0f} ms",
    )


# -- criterion 2: anonymised-copy view reproduction ---------------------------


def test_criterion_2_guarded_view():
    instance = load_instance("fan_club.cqe")
    start = time.perf_counter()
    view = build_view_guarded(instance)
    elapsed = time.perf_counter() - start

    john = const("John")
    bob = const("Bob")
    john_labels = {i.user_labels() for i in view.copy_sets[john] if i.user_labels()}
    bob_labels = {i.user_labels() for i in view.copy_sets[bob] if i.user_labels()}
    movfan = frozenset({"MovFan"})
    both = frozenset({"MovFan", "ThrFan"})
    depicted = movfan in john_labels and both in john_labels and both in bob_labels

    extended = extend_ontology(instance.ontology)
    closed = {c.predicates for c in closed_subsets(["MovFan", "ThrFan"], extended)}
    labels_closed = all(
        labels <= {"MovFan", "ThrFan"} and labels in closed
        for labels in john_labels | bob_labels
    )

    dark = certain_answers(instance.policy, instance.ontology, view.facts) == set()
    harmless = parse_query(
        "Q() :- ThrFan(x), FoF(x,y), ThrFan(y), FoF(z,y), MovFan(z), FoF(z, Bob)"
    )
    answered = view_answers(instance, view, harmless) == {()}

    ok = depicted and labels_closed and dark and answered and elapsed < 5.0
    _line(
        "2",
        ok,
        f"copies {{MovFan}},{{MovFan,ThrFan}} for John / {{MovFan,ThrFan}} for Bob; "
        f"cert(P,O,V)=∅; harmless query true; {elapsed:.2f} s",
    )


# -- criterion 3: running-example censors -------------------------------------


def test_criterion_3_running_example_censors():
    instance = load_instance("social_network.cqe")
    bob = const("Bob")
    u_ex = Obstruction(
        (
            bcq(atom("FoF", var("x"), bob)),
            bcq(atom("FoF", bob, var("x"))),
            bcq(atom("Likes", bob, var("x"))),
            bcq(atom("ThrFan", bob)),
        )
    )
    from cqe.obstruction import obstruction_answers

    thr = obstruction_answers(instance, u_ex, parse_query("Q(x) :- ThrFan(x)"))
    fof = obstruction_answers(instance, u_ex, parse_query("Q(x) :- FoF(John, x)"))

    from cqe.model import Dataset, anon
    from cqe.viewcensor import View

    an_b = anon("an_b")
    v_ex = View(
        Dataset.of(
            [
                Atom(f.predicate, tuple(an_b if t == bob else t for t in f.args))
                for f in instance.dataset
            ]
        ),
        method="manual",
    )
    report = verify_censor(instance, v_ex, _bound(instance, instance.user_signature().items(), 2, 2))
    witness = {atom("Likes", bob, const("Seven"))}
    has_witness = any(
        set(w.query.instantiate(w.answer).body) == witness for w in report.optimality_witnesses
    )
    ok = (
        thr == {(const("John"),)}
        and fof == set()
        and report.confidentiality_ok
        and not report.optimality_ok
        and has_witness
    )
    _line(
        "3",
        ok,
        "U_ex: ThrFan→{John}, FoF(John,x)→∅; V_ex: confidentiality pass, "
        "optimality fail with witness Likes(Bob,Seven)",
    )


# -- criterion 4: no finite obstruction for the self-loop chain ---------------


def test_criterion_4_unbounded_pseudo_obstruction():
    instance = load_instance("chain_loop.cqe")
    start = time.perf_counter()
    sizes = []
    statuses = []
    for depth in (3, 4, 5, 6):
        report = pseudo_obstruction_bounded(instance, depth)
        sizes.append(len(report.upsilon))
        statuses.append(report.status)
    elapsed = time.perf_counter() - start
    growing = all(a < b for a, b in zip(sizes, sizes[1:]))
    ok = growing and set(statuses) == {"truncated"} and elapsed < 10.0
    _line("4", ok, f"depths 3..6 truncated with |Υ| = {sizes} in {elapsed:.1f} s")


# -- criterion 5: randomized property suite -----------------------------------

N_PER_CLASS = 200
_WORKERS = max(1, os.cpu_count() or 1)


def _class_seeds(offset: int) -> list[int]:
    base = suite_seed() * 1_000_003 + offset * 17_389
    return [base + i for i in range(N_PER_CLASS)]


def _run_class(worker, offset: int) -> list:
    """Deterministic per-instance seeds, fanned out across processes."""
    seeds = _class_seeds(offset)
    if _WORKERS == 1:
        return [worker(s) for s in seeds]
    with multiprocessing.Pool(_WORKERS) as pool:
        return pool.map(worker, seeds, chunksize=10)


def _check_view_instance(instance, view) -> None:
    # (a) safety and closure invariants
    assert check_view_confidentiality(instance, view)
    extended = extend_ontology(instance.ontology)
    assert chase(extended, view.facts).facts == view.facts
    # (b) confidentiality and bounded optimality via the oracle
    report = verify_censor(instance, view, _bound(instance))
    assert report.confidentiality_ok
    assert report.optimality_ok, [w.text() for w in report.optimality_witnesses[:2]]


def _guarded_worker(seed: int) -> bool:
    rng = random.Random(seed)
    instance = gen_guarded(rng)
    _check_view_instance(instance, build_view_guarded(instance))
    return bool(policy_answers(instance))


def _multilinear_worker(seed: int) -> bool:
    rng = random.Random(seed)
    instance = gen_multilinear(rng)
    _check_view_instance(instance, build_view_multilinear(instance))
    return bool(policy_answers(instance))


def _linear_worker(seed: int) -> bool:
    rng = random.Random(seed)
    instance = gen_linear(rng)
    view = build_view_linear(instance)
    obstruction = build_obstruction_linear(instance)
    assert check_view_confidentiality(instance, view)
    extended = extend_ontology(instance.ontology)
    assert chase(extended, view.facts).facts == view.facts
    reports, divergence = verify_censors(instance, [view, obstruction], _bound(instance))
    for report in reports:
        assert report.confidentiality_ok
        assert report.optimality_ok, [w.text() for w in report.optimality_witnesses[:2]]
    # (c) the two unique-optimal censors agree on every bounded CQ
    assert divergence is None, divergence
    return bool(policy_answers(instance))


QL_SIG = (("A", 1), ("B", 1), ("R", 2), ("S", 2))


def _ql_worker(seed: int) -> bool:
    rng = random.Random(seed)
    instance = gen_ql(rng)
    obstruction = build_obstruction_ql(instance)
    datalog_instance, _, _ = prepare_profile_instance(instance, "ql")
    # fixed signature so the enumeration cache is shared across instances
    report = verify_censor(datalog_instance, obstruction, _bound(datalog_instance, QL_SIG))
    assert report.confidentiality_ok
    assert report.optimality_ok, [w.text() for w in report.optimality_witnesses[:2]]
    return bool(policy_answers(datalog_instance))


def _sld_worker(seed: int) -> int:
    rng = random.Random(seed)
    instance = gen_datalog(rng)
    model = chase(instance.ontology, instance.dataset)
    constants = sorted(instance.constants(), key=lambda t: t.name)
    signature = instance.user_signature()
    checked = 0
    for pred in sorted(signature):
        for args in itertools.product(constants, repeat=signature[pred]):
            ground = Atom(pred, tuple(args))
            proof = prove(Goal((ground,)), instance.ontology, instance.dataset)
            assert (proof is not None) == (ground in model.facts), ground
            if proof is not None:
                assert validate_proof(proof, instance.ontology, instance.dataset), ground
            checked += 1
    return checked


def _class_test(name: str, worker, offset: int, detail: str) -> None:
    start = time.perf_counter()
    results = _run_class(worker, offset)
    elapsed = time.perf_counter() - start
    _TIMINGS[name] = elapsed
    covered = sum(1 for r in results if r)
    assert covered >= N_PER_CLASS // 10
    _line(name, True, detail.format(n=N_PER_CLASS, covered=covered, elapsed=elapsed))


def test_criterion_5_guarded_views():
    _class_test(
        "5(a,b) guarded",
        _guarded_worker,
        101,
        "{n} instances ({covered} with policy answers) safe, closed, optimal; {elapsed:.0f} s",
    )


def test_criterion_5_multilinear_views():
    _class_test(
        "5(a,b) multilinear",
        _multilinear_worker,
        202,
        "{n} instances ({covered} with policy answers) safe, closed, optimal; {elapsed:.0f} s",
    )


def test_criterion_5_linear_views_obstructions_duality():
    _class_test(
        "5(a,b,c) linear",
        _linear_worker,
        303,
        "{n} instances: views and obstructions optimal and censor-identical; {elapsed:.0f} s",
    )


def test_criterion_5_ql_obstructions():
    _class_test(
        "5(b) QL obstructions",
        _ql_worker,
        404,
        "{n} instances ({covered} with policy answers) optimal; {elapsed:.0f} s",
    )


def test_criterion_5_sld_agrees_with_chase():
    start = time.perf_counter()
    results = _run_class(_sld_worker, 505)
    elapsed = time.perf_counter() - start
    _TIMINGS["sld"] = elapsed
    _line(
        "5(d) SLD vs chase",
        True,
        f"{N_PER_CLASS} instances, {sum(results)} ground atoms agree; {elapsed:.0f} s",
    )


def test_criterion_5_total_runtime():
    total = sum(_TIMINGS.values())
    _line("5 runtime", total < 600.0, f"property suite total {total:.0f} s < 600 s")


# -- criterion 6: Skolem rewrite validation ------------------------------------

N_REWRITE = 100


def test_criterion_6_rewrite_validation():
    from cqe.oracle import enumerate_cqs

    rng = random.Random(suite_seed() + 606)
    start = time.perf_counter()
    queries_compared = 0
    for i in range(N_REWRITE):
        instance = gen_ql(rng)
        datalog_instance, rewrite, _ = prepare_profile_instance(instance, "ql")
        model = chase(rewrite.ontology, instance.dataset)
        # strengthening witness: every fired existential is materialized
        for entry in rewrite.entries:
            a_pred = entry.source.body[0].predicate
            role = next(h for h in entry.source.head if h.arity == 2)
            filler = next(h for h in entry.source.head if h.arity == 1)
            for f in model.facts:
                if f.predicate == a_pred and f.arity == 1:
                    c = f.args[0]
                    assert Atom(role.predicate, (c, entry.skolem_constant)) in model.facts, i
                    assert Atom(filler.predicate, (entry.skolem_constant,)) in model.facts, i
        # certain answers over the rewrite match the existential-chase oracle
        depth = 3 + len(rewrite.entries) + 1
        oracle_model = bounded_existential_chase(instance.ontology, instance.dataset, depth)
        max_atoms = 3 if i < 15 else 2
        bound = CQBound.for_instance(
            datalog_instance, max_atoms=max_atoms, max_vars=2, tree_shaped_only=True
        )
        for q in enumerate_cqs(bound):
            if not is_fringe_tree_query(q):
                continue
            via_rewrite = answers_over_model(q, model)
            via_oracle = answers_over_model(q, oracle_model)
            assert via_rewrite == via_oracle, (i, q)
            queries_compared += 1
    elapsed = time.perf_counter() - start
    _line(
        "6",
        True,
        f"{N_REWRITE} QL instances: strengthening witnessed; {queries_compared} "
        f"fringe-tree CQ answer sets match the existential oracle; {elapsed:.0f} s",
    )


# -- criterion 7: exclusions are documented, not implemented -------------------


def test_criterion_7_documented_exclusions():
    """Out of scope by design, not reproducible at desk scale:

    - unbounded optimality of views (existence is undecidable in general);
    - deciding existence of optimal obstructions (open; at least as hard as
      uniform boundedness of binary Datalog);
    - the asymptotic exponential/polynomial view-size claims beyond the copy
      counts spot-checked on the suite instances.

    The view/obstruction non-simulation constructions live as documented
    negative fixtures (tests/test_fixtures_negative.py), and truncated
    pseudo-obstruction reports are labelled non-authoritative.
    """
    import test_fixtures_negative  # the fixtures must exist and import cleanly

    report = pseudo_obstruction_bounded(load_instance("chain_loop.cqe"), 3)
    assert report.status == "truncated"  # explicitly non-authoritative label
    _line("7", True, "exclusions documented; truncated reports labelled non-authoritative")
