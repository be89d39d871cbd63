"""Independent brute-force verification: exhaustive CQ enumeration, censor
property checking, censor agreement, and a bounded existential chase.

Nothing here calls the censor builders: checks are phrased purely in terms of
the chase, freeze and homomorphism search, so they can serve as an oracle for
the constructions under test.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

from .model import (
    Atom,
    ConjunctiveQuery,
    CQEInstance,
    Dataset,
    Ontology,
    Rule,
    Term,
    anon,
    query_is_tree_shaped,
    var,
)
from .reasoner import (
    ANSWER_DOMAIN_INSTANCE,
    ChaseEngine,
    FactIndex,
    LayeredIndex,
    answers_over_model,
    chase,
    datalog_theory,
    entails_bool,
    entails_some_answer,
    freeze,
    freeze_union,
    policy_answers,
)
from .textio import query_text, term_text
from .viewcensor import View
from .obstruction import Obstruction, is_blocked


@dataclass(frozen=True)
class CQBound:
    """Finite CQ enumeration space."""

    signature: tuple[tuple[str, int], ...]
    constants: tuple[Term, ...] = ()
    max_atoms: int = 3
    max_vars: int = 3
    tree_shaped_only: bool = False

    @classmethod
    def for_instance(
        cls, instance: CQEInstance, max_atoms: int = 3, max_vars: int = 3, **kw
    ) -> "CQBound":
        """Bound over the instance's user signature and named constants;
        labelled nulls (anonymous/Skolem constants) are not query vocabulary."""
        sig = tuple(sorted(instance.user_signature().items()))
        consts = tuple(
            sorted(
                (t for t in instance.constants() if t.kind == "constant"),
                key=lambda t: t.name,
            )
        )
        return cls(sig, consts, max_atoms, max_vars, **kw)


def _atom_key(a: Atom) -> tuple:
    return (a.predicate,) + tuple(
        ("v", t.name) if t.is_variable else ("c", t.kind, t.name) for t in a.args
    )


def _query_key(body: tuple[Atom, ...], free: tuple[Term, ...], rename: dict) -> tuple:
    renamed = tuple(sorted(_atom_key(a.substitute(rename)) for a in body))
    return renamed, tuple(rename.get(t, t).name for t in free)


def _is_canonical(body: tuple[Atom, ...], free: tuple[Term, ...], pool: list[Term]) -> bool:
    used = sorted({t for a in body for t in a.variables()}, key=lambda t: t.name)
    targets = pool[: len(used)]
    own = _query_key(body, free, {})
    for perm in itertools.permutations(targets):
        rename = dict(zip(used, perm))
        if _query_key(body, free, rename) < own:
            return False
    return True


_ENUMERATION_CACHE: dict[CQBound, tuple[ConjunctiveQuery, ...]] = {}


def _atom_universe_size(bound: CQBound) -> int:
    terms = len(bound.constants) + bound.max_vars
    return sum(terms**arity for _, arity in bound.signature)


def enumerate_cqs(bound: CQBound) -> Iterator[ConjunctiveQuery]:
    """Every CQ within the bound, exactly once up to variable renaming and
    atom reordering; free tuples are emitted in canonical variable order."""
    cached = _ENUMERATION_CACHE.get(bound)
    if cached is None:
        import math

        combos = sum(
            math.comb(_atom_universe_size(bound), k) for k in range(1, bound.max_atoms + 1)
        )
        if combos > 200_000 or len(_ENUMERATION_CACHE) >= 64:
            return _enumerate_cqs(bound)  # too large to materialize; stay lazy
        cached = tuple(_enumerate_cqs(bound))
        _ENUMERATION_CACHE[bound] = cached
    return iter(cached)


def _enumerate_cqs(bound: CQBound) -> Iterator[ConjunctiveQuery]:
    pool = [var(f"v{i}") for i in range(1, bound.max_vars + 1)]
    terms = list(bound.constants) + pool
    universe: list[Atom] = []
    for pred, arity in sorted(bound.signature):
        if arity == 0:
            universe.append(Atom(pred, ()))
        else:
            for args in itertools.product(terms, repeat=arity):
                universe.append(Atom(pred, tuple(args)))
    universe.sort(key=_atom_key)
    for k in range(1, bound.max_atoms + 1):
        for combo in itertools.combinations(universe, k):
            body = tuple(combo)
            used = sorted({t for a in body for t in a.variables()}, key=lambda t: t.name)
            if len(used) > bound.max_vars:
                continue
            if bound.tree_shaped_only and not query_is_tree_shaped(
                ConjunctiveQuery((), body)
            ):
                continue
            for r in range(len(used) + 1):
                for free in itertools.combinations(used, r):
                    if _is_canonical(body, free, pool):
                        yield ConjunctiveQuery(free, body)


# ---------------------------------------------------------------------------
# Censor answering (from the artifact alone, no builders involved).
# ---------------------------------------------------------------------------


class CensorEvaluator:
    """Answers of censor artifacts over one Datalog instance; the certain
    answers are computed once per query and the censor side is decided by
    per-tuple Boolean checks (a ∈ cert(Q,O,V) iff the instantiated query
    embeds into the chased view)."""

    def __init__(self, instance: CQEInstance) -> None:
        self.instance = instance
        self.data_model = chase(instance.ontology, instance.dataset)
        self._view_models: dict[int, FactIndex] = {}
        self._release_memo: dict[tuple, bool] = {}

    def certain(self, q: ConjunctiveQuery) -> set[tuple[Term, ...]]:
        return answers_over_model(q, self.data_model)

    def _view_index(self, view: View) -> FactIndex:
        cached = self._view_models.get(id(view))
        if cached is None:
            cached = chase(self.instance.ontology, view.facts).index
            self._view_models[id(view)] = cached
        return cached

    def releases(self, censor: View | Obstruction, q: ConjunctiveQuery, answer) -> bool:
        instantiated = q.instantiate(answer)
        key = (id(censor), _instantiation_key(instantiated))
        hit = self._release_memo.get(key)
        if hit is None:
            if isinstance(censor, View):
                hit = entails_bool(instantiated, self._view_index(censor))
            else:
                hit = not is_blocked(instantiated, censor)
            self._release_memo[key] = hit
        return hit

    def answers(self, censor: View | Obstruction, q: ConjunctiveQuery) -> set[tuple[Term, ...]]:
        return {a for a in self.certain(q) if self.releases(censor, q, a)}


def censor_answer_fn(
    instance: CQEInstance, censor: View | Obstruction
) -> Callable[[ConjunctiveQuery], set[tuple[Term, ...]]]:
    """Answer function of a censor artifact over a Datalog instance."""
    evaluator = CensorEvaluator(instance)
    return lambda q: evaluator.answers(censor, q)


# ---------------------------------------------------------------------------
# Verification.
# ---------------------------------------------------------------------------


@dataclass
class Witness:
    query: ConjunctiveQuery
    answer: tuple[Term, ...]

    def text(self) -> str:
        return f"{query_text(self.query)} @ ({', '.join(term_text(t) for t in self.answer)})"


@dataclass
class VerificationReport:
    confidentiality_ok: bool
    disclosed_policy_answer: Optional[tuple[Term, ...]]
    optimality_ok: bool
    optimality_witnesses: list[Witness] = field(default_factory=list)
    queries_checked: int = 0
    answers_released: int = 0
    answers_blocked: int = 0

    def to_json(self) -> str:
        return json.dumps(
            {
                "confidentiality": "pass" if self.confidentiality_ok else "fail",
                "disclosed_policy_answer": (
                    [term_text(t) for t in self.disclosed_policy_answer]
                    if self.disclosed_policy_answer is not None
                    else None
                ),
                "bounded_optimality": "pass" if self.optimality_ok else "fail",
                "optimality_witnesses": [w.text() for w in self.optimality_witnesses],
                "queries_checked": self.queries_checked,
                "answers_released": self.answers_released,
                "answers_blocked": self.answers_blocked,
            },
            indent=2,
        )


_MAX_WITNESSES = 500


def _instantiation_key(q: ConjunctiveQuery) -> tuple:
    """Dedup key for instantiated Boolean queries, up to variable renaming."""
    rename: dict = {}
    keys = []
    for a in q.body:
        parts = [a.predicate]
        for t in a.args:
            if t.is_variable:
                if t not in rename:
                    rename[t] = f"?{len(rename)}"
                parts.append(rename[t])
            else:
                parts.append(f"{t.kind}:{t.name}")
        keys.append(tuple(parts))
    return tuple(sorted(keys))


def verify_censor(
    instance: CQEInstance, censor: View | Obstruction, bound: CQBound
) -> VerificationReport:
    """Check confidentiality and bounded optimality of a censor artifact.

    Confidentiality: the ontology plus the freeze of every positively
    answered bounded query (frozen variables distinct across queries, real
    constants shared) must entail no policy answer that holds over the data.

    Bounded optimality: every blocked answer must disclose some policy answer
    when added to the censor theory — view facts for views, the positively
    answered queries for obstructions.
    """
    reports, _ = verify_censors(instance, [censor], bound)
    return reports[0]


def verify_censors(
    instance: CQEInstance, censors: Sequence[View | Obstruction], bound: CQBound
) -> tuple[list[VerificationReport], Optional["Divergence"]]:
    """Batch variant of verify_censor sharing one enumeration sweep.

    Also reports the first query on which the censors disagree, which decides
    censor agreement without a second pass.
    """
    if not instance.ontology.is_datalog:
        raise ValueError("verify_censor requires a Datalog instance")
    evaluator = CensorEvaluator(instance)
    p_answers = policy_answers(instance)

    released: list[list[ConjunctiveQuery]] = [[] for _ in censors]
    blocked: list[list[Witness]] = [[] for _ in censors]
    divergence: Optional[Divergence] = None
    queries = 0
    for q in enumerate_cqs(bound):
        queries += 1
        certain = evaluator.certain(q)
        if not certain:
            continue
        given = []
        for i, censor in enumerate(censors):
            mine = set()
            for a in sorted(certain, key=lambda row: tuple(term_text(t) for t in row)):
                if evaluator.releases(censor, q, a):
                    mine.add(a)
                    released[i].append(q.instantiate(a))
                else:
                    blocked[i].append(Witness(q, a))
            given.append(mine)
        if divergence is None and any(g != given[0] for g in given[1:]):
            j = next(i for i, g in enumerate(given) if g != given[0])
            divergence = Divergence(q, given[0], given[j])

    rules, _ = datalog_theory(instance.ontology, instance.dataset)
    engine = ChaseEngine(rules)

    reports = []
    for i, censor in enumerate(censors):
        theory = freeze_union(released[i])
        theory_model = engine.saturate(theory.facts)
        disclosed_answer = None
        for s_tuple in sorted(p_answers, key=lambda row: tuple(term_text(t) for t in row)):
            if entails_bool(instance.policy.instantiate(s_tuple), theory_model):
                disclosed_answer = s_tuple
                break
        confidentiality_ok = disclosed_answer is None

        if isinstance(censor, View):
            base = engine.saturate(censor.facts.facts)
        else:
            base = theory_model
        failures: list[Witness] = []
        discloses_memo: dict[tuple, bool] = {}  # instantiations repeat across queries
        for w in blocked[i]:
            instantiated = w.query.instantiate(w.answer)
            key = _instantiation_key(instantiated)
            hit = discloses_memo.get(key)
            if hit is None:
                frozen_q = freeze(instantiated)
                overlay = engine.extend(base, frozen_q.facts)
                layered = LayeredIndex(base, overlay)
                hit = entails_some_answer(instance.policy, p_answers, layered)
                discloses_memo[key] = hit
            if not hit:
                failures.append(w)
                if len(failures) >= _MAX_WITNESSES:
                    break

        reports.append(
            VerificationReport(
                confidentiality_ok,
                tuple(disclosed_answer) if disclosed_answer is not None else None,
                not failures,
                failures,
                queries,
                len(released[i]),
                len(blocked[i]),
            )
        )
    return reports, divergence


@dataclass
class Divergence:
    query: ConjunctiveQuery
    answers_first: set[tuple[Term, ...]]
    answers_second: set[tuple[Term, ...]]


def censors_agree(
    instance: CQEInstance,
    censor1: View | Obstruction,
    censor2: View | Obstruction,
    bound: CQBound,
) -> tuple[bool, Optional[Divergence]]:
    """Compare two censors on every bounded CQ; report the first divergence."""
    evaluator = CensorEvaluator(instance)
    for q in enumerate_cqs(bound):
        certain = evaluator.certain(q)
        if not certain:
            continue
        a1 = {a for a in certain if evaluator.releases(censor1, q, a)}
        a2 = {a for a in certain if evaluator.releases(censor2, q, a)}
        if a1 != a2:
            return False, Divergence(q, a1, a2)
    return True, None


# ---------------------------------------------------------------------------
# Bounded existential chase.
# ---------------------------------------------------------------------------


def bounded_existential_chase(ontology: Ontology, dataset: Dataset, depth: int) -> Dataset:
    """Restricted chase to the given depth, one fresh labelled null per
    unsatisfied qualified existential; depth 0 returns the input unchanged.

    Sound and complete for CQs whose body size is at most the depth over the
    profile fragments, where the canonical model is tree-shaped.
    """
    if depth <= 0:
        return dataset
    datalog_rules: list[Rule] = []
    existential: list[Rule] = []
    for r in ontology.rules:
        if r.exist_vars:
            existential.append(r)
        elif len(r.head) == 1:
            datalog_rules.append(r)
        else:
            datalog_rules.extend(Rule(r.body, (h,)) for h in r.head)
    engine = ChaseEngine(datalog_rules)
    index = engine.saturate(dataset.facts)
    counter = itertools.count(1)
    for _ in range(depth):
        new_facts: list[Atom] = []
        for r in sorted(existential, key=repr):
            a_pred = r.body[0].predicate
            role = next(h for h in r.head if h.arity == 2)
            filler = next(h for h in r.head if h.arity == 1)
            for f in sorted(index.by_pred.get(a_pred, ()), key=lambda f: term_text(f.args[0])):
                if f.arity != 1:
                    continue
                c = f.args[0]
                satisfied = any(
                    Atom(filler.predicate, (g.args[1],)) in index
                    for g in index.by_pos.get((role.predicate, 0, c), ())
                )
                if satisfied:
                    continue
                null = anon(f"n{next(counter)}")
                new_facts.append(Atom(role.predicate, (c, null)))
                new_facts.append(Atom(filler.predicate, (null,)))
        if not new_facts:
            break
        overlay = engine.extend(index, new_facts)
        index.add_all(overlay.facts)
    return Dataset(frozenset(index.facts))


def existential_certain_answers(
    ontology: Ontology, dataset: Dataset, q: ConjunctiveQuery, depth: int
) -> set[tuple[Term, ...]]:
    """Certain answers decided by the bounded existential chase."""
    model = bounded_existential_chase(ontology, dataset, depth)
    return answers_over_model(q, model, ANSWER_DOMAIN_INSTANCE)
