"""Obstruction censors: optimal obstructions for linear Datalog from proof
graphs, answer filtering, and bounded pseudo-obstruction diagnostics.

An obstruction is a Boolean UCQ of forbidden patterns; an answer is withheld
exactly when the instantiated query entails some disjunct.  For linear
instances the disjuncts are the goals on the proof-graph paths from the
instantiated policy atoms to ⊤, minimized under entailment.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .model import ConjunctiveQuery, CQEInstance, Term, UnionQuery
from .reasoner import (
    ChaseEngine,
    FactIndex,
    LayeredIndex,
    bcq_entails,
    certain_answers,
    datalog_theory,
    entails_bool,
    entails_some_answer,
    freeze,
    policy_answers,
)
from .sld import Goal, GoalEnumeration, build_proof_graph, enumerate_goals
from .textio import bcq_text


@dataclass(frozen=True)
class Obstruction:
    """Boolean UCQ of forbidden patterns; an empty disjunct list blocks nothing."""

    disjuncts: tuple[ConjunctiveQuery, ...]
    provenance: tuple[Optional[Goal], ...] = ()

    def __post_init__(self) -> None:
        if self.provenance and len(self.provenance) != len(self.disjuncts):
            raise ValueError("provenance must align with the disjuncts")

    def to_union(self) -> UnionQuery:
        return UnionQuery(self.disjuncts)

    @property
    def is_empty(self) -> bool:
        return not self.disjuncts


@dataclass
class PseudoObstructionReport:
    """Bounded diagnostic: the chosen safe goal set, the covering candidate
    obstruction, and whether the goal space was exhausted."""

    s_set: tuple[ConjunctiveQuery, ...]
    upsilon: tuple[ConjunctiveQuery, ...]
    status: str  # "complete-finite" | "truncated"
    goals_seen: int
    max_depth: int

    @property
    def complete(self) -> bool:
        return self.status == "complete-finite"


def _bcq_key(q: ConjunctiveQuery) -> tuple:
    return (len(q.body), bcq_text(q))


def minimize_disjuncts(
    disjuncts: Iterable[ConjunctiveQuery],
    provenance: Optional[Sequence[Optional[Goal]]] = None,
) -> tuple[list[ConjunctiveQuery], list[Optional[Goal]]]:
    """Keep one representative per entailment-minimal equivalence class.

    A disjunct that entails a strictly more general one is redundant: every
    query blocked through it is blocked through the general one already.
    """
    items = list(disjuncts)
    prov: list[Optional[Goal]] = list(provenance) if provenance else [None] * len(items)
    order = sorted(range(len(items)), key=lambda i: _bcq_key(items[i]))
    kept: list[int] = []
    for i in order:
        q = items[i]
        if any(bcq_entails(q, items[j]) and bcq_entails(items[j], q) for j in kept):
            continue  # equivalent representative already kept
        kept.append(i)
    minimal: list[int] = []
    for i in kept:
        q = items[i]
        dominated = any(
            j != i and bcq_entails(q, items[j]) and not bcq_entails(items[j], q) for j in kept
        )
        if not dominated:
            minimal.append(i)
    return [items[i] for i in minimal], [prov[i] for i in minimal]


def build_obstruction_linear(instance: CQEInstance) -> Obstruction:
    """Optimal obstruction for a linear Datalog instance.

    Disjuncts are the existential closures of the proof-graph goals lying on
    some path from an instantiated policy atom to ⊤, minimized under mutual
    entailment; the induced censor is the unique optimal one.
    """
    graph = build_proof_graph(instance)
    on_paths = sorted((g for g in graph.nodes_on_paths() if not g.is_top), key=repr)
    disjuncts = [g.as_bcq() for g in on_paths]
    minimal, prov = minimize_disjuncts(disjuncts, on_paths)
    return Obstruction(tuple(minimal), tuple(prov))


def is_blocked(q_instantiated: ConjunctiveQuery, obstruction: Obstruction) -> bool:
    """Whether the instantiated query entails some disjunct."""
    if obstruction.is_empty:
        return False
    index = FactIndex(freeze(q_instantiated).facts)
    return any(entails_bool(u, index) for u in obstruction.disjuncts)


def obstruction_answers(
    instance: CQEInstance, obstruction: Obstruction, q: ConjunctiveQuery
) -> set[tuple[Term, ...]]:
    """Certain answers whose instantiations entail no disjunct."""
    answers = certain_answers(q, instance.ontology, instance.dataset)
    return {a for a in answers if not is_blocked(q.instantiate(a), obstruction)}


def pseudo_obstruction_bounded(instance: CQEInstance, max_depth: int) -> PseudoObstructionReport:
    """Bounded pseudo-obstruction diagnostic for general Datalog instances.

    Enumerates the policy-proof goals up to the rule-step bound, greedily
    selects an inclusion-maximal safe subset in deterministic order, and
    covers the complement by its entailment-minimal elements.  Only a
    complete-finite report yields an optimal obstruction; truncated reports
    are not authoritative about existence.
    """
    enum: GoalEnumeration = enumerate_goals(instance, max_depth)
    goals = sorted(enum.goals, key=_bcq_key)
    answers = policy_answers(instance)
    rules, _ = datalog_theory(instance.ontology, instance.dataset)
    engine = ChaseEngine(rules)
    safe_index = FactIndex()
    s_set: list[ConjunctiveQuery] = []
    unsafe: list[ConjunctiveQuery] = []
    for q in goals:
        overlay = engine.extend(safe_index, freeze(q).facts)
        layered = LayeredIndex(safe_index, overlay)
        disclosed = bool(answers) and entails_some_answer(
            instance.policy, answers, layered
        )
        if disclosed:
            unsafe.append(q)
        else:
            safe_index.add_all(overlay.facts)
            s_set.append(q)
    upsilon, _ = minimize_disjuncts(unsafe)
    status = "complete-finite" if enum.complete else "truncated"
    return PseudoObstructionReport(tuple(s_set), tuple(upsilon), status, len(goals), max_depth)


def obstruction_from_report(report: PseudoObstructionReport) -> Obstruction:
    return Obstruction(tuple(report.upsilon))
