"""Optimal anonymization views for guarded / multi-linear / linear tree-shaped
Datalog instances, and view-censor evaluation.

The guarded construction works in three phases: a greedy maximal safe set of
unary facts, anonymised copies of each constant (one per closed label subset,
kept when safe), and binary edges between copies filtered by a role check.
Safety always means: together with the extended ontology, the view entails no
policy answer that holds over the hidden data.  The role-projection labels
δ_R / ρ_R stay inside the view to gate the role check; user-facing output
projects them away.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .model import (
    DELTA_PREFIX,
    EQ,
    RHO_PREFIX,
    Atom,
    ConjunctiveQuery,
    CQEInstance,
    Dataset,
    Ontology,
    Rule,
    Term,
    anon,
    atom,
    is_internal_predicate,
    var,
)
from .reasoner import (
    ChaseEngine,
    FactIndex,
    LayeredIndex,
    certain_answers,
    chase,
    datalog_theory,
    entails_some_answer,
    policy_answers,
)
from .sld import ShapeError


class InvariantViolation(RuntimeError):
    """A built censor failed its own safety check; this should never happen."""


@dataclass(frozen=True)
class ClosedSet:
    """A set of unary predicates closed under the extended ontology."""

    predicates: frozenset[str]
    base: Optional[Term] = None


@dataclass(frozen=True)
class CopyInfo:
    original: Term
    constant: Term
    labels: frozenset[str]  # full label subset, role projections included

    def user_labels(self) -> frozenset[str]:
        return frozenset(p for p in self.labels if not is_internal_predicate(p))


@dataclass
class View:
    """Anonymization view: facts over instance constants plus fresh copies."""

    facts: Dataset
    copy_sets: dict[Term, tuple[CopyInfo, ...]] = field(default_factory=dict)
    method: str = "guarded"

    def sigma(self, original: Term) -> tuple[Term, ...]:
        return (original,) + tuple(c.constant for c in self.copy_sets.get(original, ()))

    def user_facts(self) -> Dataset:
        return self.facts.restrict_user()

    def auxiliary_facts(self) -> Dataset:
        """The retained δ_R / ρ_R (and other internal) atoms."""
        return Dataset(self.facts.facts - self.user_facts().facts)


def extend_ontology(ontology: Ontology) -> Ontology:
    """O plus role projections R(x,y) → δ_R(x), R(x,y) → ρ_R(y) per binary R."""
    x, y = var("x"), var("y")
    extra: list[Rule] = []
    for name in ontology.binary_predicates():
        extra.append(Rule((atom(name, x, y),), (atom(DELTA_PREFIX + name, x),)))
        extra.append(Rule((atom(name, x, y),), (atom(RHO_PREFIX + name, y),)))
    return ontology.extend(extra)


class _ClosureOracle:
    """Single-constant label closure under an ontology, with memoization.

    Predicates in extra_occurring (the policy body's, in particular) count as
    occurring: forcing them into every label subset is only harmless for
    predicates no rule and no policy can see.
    """

    def __init__(self, extended: Ontology, extra_occurring: Iterable[str] = ()) -> None:
        rules, _ = datalog_theory(extended, Dataset())
        self.engine = ChaseEngine(rules)
        self.occurring = {a.predicate for r in extended.rules for a in r.body + r.head}
        self.occurring.update(extra_occurring)
        self.probe = anon("closure_probe")
        self.cache: dict[frozenset[str], frozenset[str]] = {}

    def closure(self, sub: frozenset[str]) -> frozenset[str]:
        cached = self.cache.get(sub)
        if cached is None:
            index = self.engine.saturate(atom(p, self.probe) for p in sub)
            cached = frozenset(
                f.predicate for f in index if f.arity == 1 and f.args[0] == self.probe
            )
            self.cache[sub] = cached
        return cached

    def closed_subsets(self, candidates: Iterable[str]) -> list[ClosedSet]:
        preds = sorted(set(candidates))
        forced = frozenset(p for p in preds if p not in self.occurring)
        out: list[ClosedSet] = []
        n = len(preds)
        for mask in range(1 << n):
            sub = frozenset(preds[i] for i in range(n) if mask & (1 << i))
            if not forced <= sub:
                continue
            if self.closure(sub) <= sub:
                out.append(ClosedSet(sub))
        out.sort(key=lambda c: (len(c.predicates), tuple(sorted(c.predicates))))
        return out


def closed_subsets(
    candidates: Iterable[str], extended: Ontology, also_occurring: Iterable[str] = ()
) -> list[ClosedSet]:
    """All subsets of the candidate unary predicates closed under the ontology.

    A subset is closed when chasing a fresh constant labelled with it derives
    no unary label outside it, and when it contains every candidate predicate
    that occurs neither in the ontology nor in also_occurring (builders pass
    the policy body's predicates there: a predicate the policy can see is not
    inert, and forcing it onto every copy can block harmless patterns).
    """
    return _ClosureOracle(extended, also_occurring).closed_subsets(candidates)


def _maximal(sets: list[ClosedSet]) -> list[ClosedSet]:
    out = []
    for c in sets:
        if not any(c.predicates < other.predicates for other in sets):
            out.append(c)
    return out


def _copy_name(original: Term, labels: frozenset[str], taken: set[str]) -> str:
    digest = hashlib.sha1("|".join(sorted(labels)).encode("utf-8")).hexdigest()[:6]
    name = f"{original.name}__{digest}"
    k = 0
    while name in taken:
        k += 1
        name = f"{original.name}__{digest}_{k}"
    taken.add(name)
    return name


def _fact_sort_key(f: Atom) -> tuple:
    return (f.predicate, tuple((t.kind, t.name) for t in f.args))


class ViewBuilder:
    """The view under construction: extended ontology, chased data, the
    growing fact set and the per-constant copy registry.  check_role is
    evaluated against this context."""

    def __init__(self, instance: CQEInstance, subsets: str, method: str) -> None:
        self.instance = instance
        self.subsets = subsets
        self.method = method
        self.extended = extend_ontology(instance.ontology)
        rules, facts = datalog_theory(self.extended, instance.dataset)
        self.engine = ChaseEngine(rules)
        self.chase_index = self.engine.saturate(facts)
        self.policy_answers = policy_answers(instance)
        self.view_index = FactIndex()
        self.taken_names = {t.name for t in instance.constants()}
        policy_preds = {a.predicate for a in instance.policy.body}
        self.closure_oracle = _ClosureOracle(self.extended, policy_preds)

    # -- safety -------------------------------------------------------------

    def _discloses(self, index) -> bool:
        """Does the (layered) view entail some policy answer over the data?"""
        if not self.policy_answers:
            return False
        return entails_some_answer(self.instance.policy, self.policy_answers, index)

    def safe_overlay(self, candidates: Sequence[Atom]) -> Optional[FactIndex]:
        """Closure overlay of the candidates over the current view, or None
        when adding them would disclose a policy answer."""
        overlay = self.engine.extend(self.view_index, candidates)
        if self._discloses(LayeredIndex(self.view_index, overlay)):
            return None
        return overlay

    def commit(self, overlay: FactIndex) -> None:
        self.view_index.add_all(overlay.facts)

    # -- phases ---------------------------------------------------------------

    def add_unary_core(self) -> None:
        unary = sorted((f for f in self.chase_index if f.arity == 1), key=_fact_sort_key)
        for f in unary:
            if f in self.view_index:
                continue
            overlay = self.safe_overlay([f])
            if overlay is not None:
                self.commit(overlay)

    def add_copies(self) -> dict[Term, list[CopyInfo]]:
        copy_sets: dict[Term, list[CopyInfo]] = {}
        constants = sorted(
            {t for f in self.chase_index for t in f.args}, key=lambda t: (t.kind, t.name)
        )
        for a in constants:
            labels = sorted(
                f.predicate for f in self.chase_index if f.arity == 1 and f.args == (a,)
            )
            subs = self.closure_oracle.closed_subsets(labels)
            if self.subsets == "maximal":
                subs = _maximal(subs)
            infos: list[CopyInfo] = []
            for sub in subs:
                copy_const = anon(_copy_name(a, sub.predicates, self.taken_names))
                candidate = [atom(p, copy_const) for p in sorted(sub.predicates)]
                overlay = self.safe_overlay(candidate)
                if overlay is not None:
                    self.commit(overlay)
                    infos.append(CopyInfo(a, copy_const, sub.predicates))
            copy_sets[a] = infos
        return copy_sets

    def check_role(self, candidate: Atom) -> bool:
        overlay = self.engine.extend(self.view_index, [candidate])
        if self._discloses(LayeredIndex(self.view_index, overlay)):
            return False
        for f in overlay:
            if f.arity == 1 and f not in self.view_index:
                return False
        return True

    def add_edges(self, copy_sets: dict[Term, list[CopyInfo]]) -> None:
        binary = sorted(
            (f for f in self.chase_index if f.arity == 2 and f.predicate != EQ),
            key=_fact_sort_key,
        )
        projected = {name for name in self.instance.ontology.binary_predicates()}
        for f in binary:
            a, b = f.args
            delta, rho = DELTA_PREFIX + f.predicate, RHO_PREFIX + f.predicate
            for a_star in self._sigma(a, copy_sets):
                # a copy without the δ_R label can never carry an outgoing
                # R edge (the role check would find δ_R missing), so skip early
                if f.predicate in projected and Atom(delta, (a_star,)) not in self.view_index:
                    continue
                for b_star in self._sigma(b, copy_sets):
                    if f.predicate in projected and Atom(rho, (b_star,)) not in self.view_index:
                        continue
                    candidate = Atom(f.predicate, (a_star, b_star))
                    if candidate in self.view_index:
                        continue
                    if self.check_role(candidate):
                        overlay = self.engine.extend(self.view_index, [candidate])
                        self.commit(overlay)

    @staticmethod
    def _sigma(original: Term, copy_sets: dict[Term, list[CopyInfo]]) -> list[Term]:
        return [original] + [c.constant for c in copy_sets.get(original, ())]

    def build(self) -> View:
        self.add_unary_core()
        copy_sets = self.add_copies()
        self.add_edges(copy_sets)
        view = View(
            Dataset(frozenset(self.view_index.facts)),
            {a: tuple(infos) for a, infos in copy_sets.items() if infos},
            self.method,
        )
        if not check_view_confidentiality(self.instance, view):
            raise InvariantViolation("constructed view discloses a policy answer")
        return view


def _check_shape(instance: CQEInstance, *, need: Sequence[str], operation: str) -> None:
    flags = instance.shape()
    for flag in ("datalog",) + tuple(need):
        if not getattr(flags, flag):
            raise ShapeError(f"{operation} requires {flag}=true", flag)
    if instance.ontology.contains_equality or any(f.predicate == EQ for f in instance.dataset):
        raise ShapeError(f"{operation} does not support ≈", "equality-free")
    sig = dict(instance.ontology.signature())
    sig.update(instance.dataset.predicates())
    for a in instance.policy.body:
        sig[a.predicate] = a.arity
    for name, arity in sig.items():
        if arity == 0:
            raise ShapeError(
                f"{operation} does not support propositional predicates ({name})", "arity"
            )


def build_view_guarded(instance: CQEInstance) -> View:
    """Optimal view for a guarded tree-shaped Datalog instance (one anonymous
    copy per constant and closed label subset)."""
    _check_shape(instance, need=("guarded", "tree_shaped"), operation="guarded view construction")
    return ViewBuilder(instance, subsets="all", method="guarded").build()


def build_view_multilinear(instance: CQEInstance) -> View:
    """Polynomial variant for multi-linear tree-shaped instances: copies are
    created only for maximal closed label subsets."""
    _check_shape(
        instance,
        need=("multi_linear", "tree_shaped"),
        operation="multi-linear view construction",
    )
    return ViewBuilder(instance, subsets="maximal", method="multilinear").build()


def linear_safe_core(instance: CQEInstance) -> Dataset:
    """The unique maximal safe subset of the chase over the original constants:
    a fact belongs to it iff, together with the extended ontology, it entails
    no policy answer on its own (one fact per derivation chain in linear
    ontologies, so per-fact safety is joint safety)."""
    extended = extend_ontology(instance.ontology)
    rules, facts = datalog_theory(extended, instance.dataset)
    engine = ChaseEngine(rules)
    chase_index = engine.saturate(facts)
    answers = policy_answers(instance)
    kept: list[Atom] = []
    for f in sorted(chase_index, key=_fact_sort_key):
        single = engine.saturate([f])
        if not entails_some_answer(instance.policy, answers, single):
            kept.append(f)
    return Dataset(frozenset(kept))


def build_view_linear(instance: CQEInstance) -> View:
    """Optimal view for a linear tree-shaped instance; the induced censor is
    the unique optimal one.

    Over the original constants the facts are exactly the unique maximal safe
    subset of the chase; anonymised copies (one per maximal closed label set,
    as in the multi-linear case) are still required so that harmless
    anonymous patterns keep their answers.
    """
    _check_shape(instance, need=("linear", "tree_shaped"), operation="linear view construction")
    view = ViewBuilder(instance, subsets="maximal", method="linear").build()
    return view


def view_answers(
    instance: CQEInstance, view: View, q: ConjunctiveQuery
) -> set[tuple[Term, ...]]:
    """Censored answers: certain answers over the data intersected with those
    over the view, both restricted to instance constants."""
    over_data = certain_answers(q, instance.ontology, instance.dataset)
    over_view = certain_answers(q, instance.ontology, view.facts)
    return over_data & over_view


def check_view_confidentiality(instance: CQEInstance, view: View) -> bool:
    """True iff no policy answer over the hidden data is entailed by O ∪ view."""
    answers = policy_answers(instance)
    if not answers:
        return True
    model = chase(instance.ontology, view.facts)
    return not entails_some_answer(instance.policy, answers, model.index)


def check_role(candidate: Atom, builder: ViewBuilder) -> bool:
    """Whether a binary atom over σ-copies may join the view under
    construction: it must disclose no policy answer, and every unary fact it
    entails must already be present."""
    return builder.check_role(candidate)
