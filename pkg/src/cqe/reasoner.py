"""Datalog chase, homomorphism search, certain answers and query entailment.

The chase is a semi-naive fixpoint with per-predicate indexes.  A compiled
engine can also *extend* a frozen base model with extra facts and return just
the overlay of new derivations; the censor builders lean on this to test many
candidate additions cheaply.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Optional, Sequence

from .model import (
    CONST,
    EQ,
    FROZEN,
    Atom,
    ConjunctiveQuery,
    Dataset,
    Ontology,
    Rule,
    Term,
    equality_axioms,
    frozen,
)

ANSWER_DOMAIN_INSTANCE = "instance-constants-only"
ANSWER_DOMAIN_ALL = "all-constants"


class NonDatalogError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Fact indexes.
# ---------------------------------------------------------------------------


class FactIndex:
    """Set of ground atoms indexed by predicate and by (predicate, position, term)."""

    __slots__ = ("facts", "by_pred", "by_pos")

    def __init__(self, facts: Iterable[Atom] = ()) -> None:
        self.facts: set[Atom] = set()
        self.by_pred: dict[str, list[Atom]] = {}
        self.by_pos: dict[tuple[str, int, Term], list[Atom]] = {}
        self.add_all(facts)

    def __contains__(self, f: Atom) -> bool:
        return f in self.facts

    def __len__(self) -> int:
        return len(self.facts)

    def __iter__(self) -> Iterator[Atom]:
        return iter(self.facts)

    def add(self, f: Atom) -> bool:
        if f in self.facts:
            return False
        self.facts.add(f)
        self.by_pred.setdefault(f.predicate, []).append(f)
        for i, t in enumerate(f.args):
            self.by_pos.setdefault((f.predicate, i, t), []).append(f)
        return True

    def add_all(self, facts: Iterable[Atom]) -> None:
        for f in facts:
            self.add(f)

    def candidates(self, pattern: Atom, binding: Mapping[Term, Term]) -> Sequence[Atom]:
        """Facts possibly matching the pattern under the partial binding."""
        bound: list[tuple[int, Term]] = []
        for i, t in enumerate(pattern.args):
            if t.is_constant:
                bound.append((i, t))
            elif t in binding:
                bound.append((i, binding[t]))
        if not bound:
            return self.by_pred.get(pattern.predicate, ())
        best: Optional[Sequence[Atom]] = None
        for i, t in bound:
            cand = self.by_pos.get((pattern.predicate, i, t), ())
            if best is None or len(cand) < len(best):
                best = cand
        return best if best is not None else ()

    def copy(self) -> "FactIndex":
        return FactIndex(self.facts)


class LayeredIndex:
    """Read-only view of a base index plus an overlay, used during extension."""

    __slots__ = ("base", "overlay")

    def __init__(self, base: FactIndex, overlay: FactIndex) -> None:
        self.base = base
        self.overlay = overlay

    def __contains__(self, f: Atom) -> bool:
        return f in self.base or f in self.overlay

    def __iter__(self) -> Iterator[Atom]:
        return itertools.chain(self.base, self.overlay)

    def candidates(self, pattern: Atom, binding: Mapping[Term, Term]) -> Iterator[Atom]:
        yield from self.base.candidates(pattern, binding)
        yield from self.overlay.candidates(pattern, binding)


# ---------------------------------------------------------------------------
# Pattern matching over indexes.
# ---------------------------------------------------------------------------


def _match_into(pattern: Atom, fact: Atom, binding: dict[Term, Term]) -> Optional[list[Term]]:
    """Extend binding so that pattern maps onto fact; return newly bound vars."""
    if pattern.predicate != fact.predicate or pattern.arity != fact.arity:
        return None
    added: list[Term] = []
    for p, f in zip(pattern.args, fact.args):
        if p.is_constant:
            if p != f:
                for v in added:
                    del binding[v]
                return None
        else:
            known = binding.get(p)
            if known is None:
                binding[p] = f
                added.append(p)
            elif known != f:
                for v in added:
                    del binding[v]
                return None
    return added


def _join(atoms: Sequence[Atom], index, binding: dict[Term, Term]) -> Iterator[dict[Term, Term]]:
    """Yield every extension of binding mapping all atoms into the index.

    The most constrained atom (fewest candidate facts) is matched first.
    """
    if not atoms:
        yield binding
        return
    best_i, best_cands = 0, None
    for i, a in enumerate(atoms):
        cands = index.candidates(a, binding)
        try:
            size = len(cands)  # type: ignore[arg-type]
        except TypeError:
            cands = list(cands)
            size = len(cands)
        if best_cands is None or size < len(best_cands):
            best_i, best_cands = i, list(cands) if not isinstance(cands, list) else cands
            if size == 0:
                return
    rest = tuple(a for i, a in enumerate(atoms) if i != best_i)
    pattern = atoms[best_i]
    for fact in best_cands:
        added = _match_into(pattern, fact, binding)
        if added is None:
            continue
        yield from _join(rest, index, binding)
        for v in added:
            del binding[v]


# ---------------------------------------------------------------------------
# The chase.
# ---------------------------------------------------------------------------


@dataclass
class HerbrandModel:
    """Least Herbrand model with optional provenance for derived facts."""

    facts: Dataset
    provenance: Optional[dict[Atom, tuple[Rule, tuple[Atom, ...]]]] = None
    index: FactIndex = field(default_factory=FactIndex, repr=False)

    def __contains__(self, f: Atom) -> bool:
        return f in self.facts

    def __iter__(self) -> Iterator[Atom]:
        return iter(self.facts)

    def __len__(self) -> int:
        return len(self.facts)


def datalog_theory(ontology: Ontology, dataset: Dataset) -> tuple[list[Rule], list[Atom]]:
    """Rules and facts actually reasoned with: head conjunctions are split and,
    when ≈ occurs anywhere, its axiomatization is appended."""
    rules: list[Rule] = []
    for r in ontology.rules:
        if r.exist_vars:
            raise NonDatalogError(f"rule {r!r} has existential variables")
        if len(r.head) == 1:
            rules.append(r)
        else:
            rules.extend(Rule(r.body, (h,)) for h in r.head)
    facts = list(dataset.facts)
    uses_eq = any(f.predicate == EQ for f in facts) or any(
        a.predicate == EQ for r in rules for a in r.body + r.head
    )
    if uses_eq:
        sig = ontology.signature()
        sig.update(dataset.predicates())
        eq_rules, eq_facts = equality_axioms(sig, dataset.constants())
        rules.extend(eq_rules)
        facts.extend(eq_facts)
    return rules, facts


class ChaseEngine:
    """Compiled Datalog rules, reusable across many saturations/extensions."""

    def __init__(self, rules: Iterable[Rule]) -> None:
        self.rules: list[Rule] = []
        for r in rules:
            if not r.is_datalog:
                raise NonDatalogError(f"rule {r!r} is not Datalog")
            self.rules.append(r)
        self.by_body_pred: dict[str, list[tuple[Rule, int]]] = {}
        for r in self.rules:
            for i, a in enumerate(r.body):
                self.by_body_pred.setdefault(a.predicate, []).append((r, i))

    def saturate(
        self,
        facts: Iterable[Atom],
        provenance: Optional[dict[Atom, tuple[Rule, tuple[Atom, ...]]]] = None,
    ) -> FactIndex:
        index = FactIndex()
        delta = [f for f in facts if index.add(f)]
        self._run(index, None, delta, provenance)
        return index

    def extend(self, base: FactIndex, extra: Iterable[Atom]) -> FactIndex:
        """Overlay of new facts derivable from base ∪ extra; base is untouched."""
        overlay = FactIndex()
        delta = [f for f in extra if f not in base and overlay.add(f)]
        self._run(overlay, base, delta, None)
        return overlay

    def _run(
        self,
        store: FactIndex,
        base: Optional[FactIndex],
        delta: list[Atom],
        provenance: Optional[dict[Atom, tuple[Rule, tuple[Atom, ...]]]],
    ) -> None:
        full = LayeredIndex(base, store) if base is not None else store
        while delta:
            delta_index = FactIndex(delta)
            next_delta: list[Atom] = []
            fired: set[tuple[Rule, int]] = set()
            for f in delta:
                for r, i in self.by_body_pred.get(f.predicate, ()):
                    if (r, i) in fired:
                        continue
                    fired.add((r, i))
                    self._apply(r, i, delta_index, full, store, next_delta, provenance)
            delta = next_delta

    def _apply(
        self,
        r: Rule,
        delta_pos: int,
        delta_index: FactIndex,
        full,
        store: FactIndex,
        out: list[Atom],
        provenance,
    ) -> None:
        # Semi-naive: the atom at delta_pos must match a fresh fact, the rest
        # may match anything derived so far.
        pattern = r.body[delta_pos]
        rest = tuple(a for i, a in enumerate(r.body) if i != delta_pos)
        head = r.head_atom
        for seed in list(delta_index.by_pred.get(pattern.predicate, ())):
            binding: dict[Term, Term] = {}
            added = _match_into(pattern, seed, binding)
            if added is None:
                continue
            for full_binding in _join(rest, full, binding):
                derived = head.substitute(full_binding)
                if derived in store or (not isinstance(full, FactIndex) and derived in full):
                    continue
                store.add(derived)
                out.append(derived)
                if provenance is not None and derived not in provenance:
                    provenance[derived] = (r, tuple(a.substitute(full_binding) for a in r.body))


def chase(ontology: Ontology, dataset: Dataset, with_provenance: bool = False) -> HerbrandModel:
    """Least Herbrand model of a Datalog ontology and dataset."""
    rules, facts = datalog_theory(ontology, dataset)
    engine = ChaseEngine(rules)
    provenance: Optional[dict] = {} if with_provenance else None
    index = engine.saturate(facts, provenance)
    return HerbrandModel(Dataset(frozenset(index.facts)), provenance, index)


# ---------------------------------------------------------------------------
# Homomorphisms.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Homomorphism:
    """Mapping from source terms to target constants.

    Constants map to themselves unless they are frozen variables (labelled
    nulls produced by freeze), which may move like variables.
    """

    mapping: tuple[tuple[Term, Term], ...]

    def as_dict(self) -> dict[Term, Term]:
        return dict(self.mapping)

    def __getitem__(self, t: Term) -> Term:
        return dict(self.mapping).get(t, t)


def _movable(t: Term) -> bool:
    return t.is_variable or t.kind == FROZEN


def _rigid_view(atoms: Sequence[Atom]) -> list[Atom]:
    """Treat frozen constants in the source as variables for hom search."""
    out = []
    for a in atoms:
        if any(t.kind == FROZEN for t in a.args):
            out.append(Atom(a.predicate, tuple(Term("variable", "⟨" + t.name + "⟩") if t.kind == FROZEN else t for t in a.args)))
        else:
            out.append(a)
    return out


def _unfreeze_key(t: Term) -> Term:
    return Term("variable", "⟨" + t.name + "⟩") if t.kind == FROZEN else t


def find_homomorphism(
    source: Dataset | Iterable[Atom],
    target: Dataset | FactIndex | Iterable[Atom],
    fixed: Optional[Mapping[Term, Term]] = None,
) -> Optional[Homomorphism]:
    """A homomorphism from source into target extending the fixed mapping, if any.

    Source atoms may contain variables; source constants are mapped to
    themselves except frozen ones, which behave like variables.  The search
    backtracks over all candidate assignments, so absence is definitive.
    """
    src_atoms = list(source.facts) if isinstance(source, Dataset) else list(source)
    if isinstance(target, FactIndex):
        index = target
    elif isinstance(target, Dataset):
        index = FactIndex(target.facts)
    else:
        index = FactIndex(target)
    patterns = _rigid_view(src_atoms)
    binding: dict[Term, Term] = {}
    if fixed:
        for k, v in fixed.items():
            binding[_unfreeze_key(k)] = v
    for found in _join(tuple(patterns), index, binding):
        mapping: dict[Term, Term] = {}
        for a in src_atoms:
            for t in a.args:
                if _movable(t):
                    mapping[t] = found[_unfreeze_key(t)]
                else:
                    mapping[t] = t
        return Homomorphism(tuple(sorted(mapping.items(), key=lambda kv: (kv[0].kind, kv[0].name))))
    return None


def _answers_from_index(
    q: ConjunctiveQuery, index, domain: str
) -> set[tuple[Term, ...]]:
    answers: set[tuple[Term, ...]] = set()
    binding: dict[Term, Term] = {}
    for found in _join(q.body, index, binding):
        if not q.free:  # Boolean: the first embedding settles it
            return {()}
        row = tuple(found[v] for v in q.free)
        if domain == ANSWER_DOMAIN_INSTANCE and any(t.kind != CONST for t in row):
            continue
        answers.add(row)
    return answers


def answers_over_model(
    q: ConjunctiveQuery,
    model: HerbrandModel | FactIndex | Dataset,
    answer_domain: str = ANSWER_DOMAIN_INSTANCE,
) -> set[tuple[Term, ...]]:
    """Evaluate a CQ directly over a materialized model."""
    if isinstance(model, HerbrandModel):
        index = model.index if len(model.index) == len(model.facts) else FactIndex(model.facts)
    elif isinstance(model, Dataset):
        index = FactIndex(model.facts)
    else:
        index = model
    return _answers_from_index(q, index, answer_domain)


def certain_answers(
    q: ConjunctiveQuery,
    ontology: Ontology,
    dataset: Dataset,
    answer_domain: str = ANSWER_DOMAIN_INSTANCE,
) -> set[tuple[Term, ...]]:
    """All tuples over the answer domain whose instantiation is entailed.

    The default domain contains only instance constants: anonymous, Skolem and
    frozen constants behave as labelled nulls and are never returned.
    """
    model = chase(ontology, dataset)
    return _answers_from_index(q, model.index, answer_domain)


def entails_bool(q: ConjunctiveQuery, index) -> bool:
    binding: dict[Term, Term] = {}
    for _ in _join(q.body, index, binding):
        return True
    return False


def entails_some_answer(q: ConjunctiveQuery, answers, index) -> bool:
    """Whether the index makes Q(a⃗) true for some of the given tuples.

    Cheaper than enumerating all answers of Q when the tuple set is small:
    each instantiation is a Boolean match with all free variables bound.
    """
    return any(entails_bool(q.instantiate(a), index) for a in answers)


def policy_answers(instance) -> frozenset[tuple[Term, ...]]:
    """Certain answers of the policy over the hidden dataset, cached."""
    cached = instance.cached_policy_answers
    if cached is not None:
        return cached
    answers = frozenset(certain_answers(instance.policy, instance.ontology, instance.dataset))
    instance.cache_policy_answers(answers)
    return answers


# ---------------------------------------------------------------------------
# Freeze / canonical query.
# ---------------------------------------------------------------------------

_freeze_counter = itertools.count(1)


def freeze(q: ConjunctiveQuery) -> Dataset:
    """Dataset obtained by replacing each variable with a fresh frozen constant."""
    if not q.is_boolean:
        raise ValueError("freeze is defined for Boolean queries")
    n = next(_freeze_counter)
    theta: dict[Term, Term] = {}
    for a in q.body:
        for t in a.variables():
            if t not in theta:
                theta[t] = frozen(f"d_{t.name}_{n}")
    return Dataset(frozenset(a.substitute(theta) for a in q.body))


def freeze_union(queries: Iterable[ConjunctiveQuery]) -> Dataset:
    """Union of freezes with frozen constants kept distinct across queries."""
    facts: set[Atom] = set()
    for q in queries:
        facts.update(freeze(q).facts)
    return Dataset(frozenset(facts))


def canonical_query(structure: Dataset | Iterable[Atom]) -> ConjunctiveQuery:
    """Boolean CQ with one atom per fact and a fresh variable per domain element."""
    facts = structure.facts if isinstance(structure, Dataset) else frozenset(structure)
    ordered = sorted(facts, key=lambda f: (f.predicate, tuple((t.kind, t.name) for t in f.args)))
    theta: dict[Term, Term] = {}
    body: list[Atom] = []
    for f in ordered:
        args = []
        for t in f.args:
            if t not in theta:
                theta[t] = Term("variable", f"v{len(theta) + 1}")
            args.append(theta[t])
        body.append(Atom(f.predicate, tuple(args)))
    if not body:
        raise ValueError("cannot build a query for an empty structure")
    return ConjunctiveQuery((), tuple(body))


def bcq_entails(
    premise: ConjunctiveQuery | Iterable[ConjunctiveQuery], conclusion: ConjunctiveQuery
) -> bool:
    """Whether the (conjunction of) premise BCQs entails the conclusion BCQ.

    Holds iff the conclusion body maps homomorphically — variables free,
    constants fixed — into the freeze of the premise.
    """
    if isinstance(premise, ConjunctiveQuery):
        frozen_premise = freeze(premise)
    else:
        frozen_premise = freeze_union(premise)
    if not conclusion.is_boolean:
        raise ValueError("bcq_entails is defined for Boolean queries")
    index = FactIndex(frozen_premise.facts)
    return entails_bool(conclusion, index)


def hom_equivalent(d1: Dataset, d2: Dataset) -> bool:
    """Structure-level homomorphic equivalence (all elements movable)."""
    q1, q2 = canonical_query(d1), canonical_query(d2)
    return bcq_entails(q1, q2) and bcq_entails(q2, q1)
