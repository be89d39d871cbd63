"""OWL 2 profile support: Skolemizing rewrite of qualified existentials into
Datalog, and the QL / guarded-EL pipelines that reduce view and obstruction
construction to the Datalog builders.

Each rule A(x) → ∃y.[R(x,y) ∧ B(y)] is replaced by three Datalog rules over a
fresh witness role and a globally fresh Skolem constant shared by all rules
with the same (A, R) pair.  The rewrite strengthens the ontology but keeps
certain answers to tree-shaped CQs over the original constants, which is what
the censor pipelines rely on.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .model import (
    Atom,
    ConjunctiveQuery,
    CQEInstance,
    Ontology,
    Rule,
    Term,
    atom,
    is_internal_predicate,
    query_is_tree_shaped,
    skolem,
    top_axioms,
    var,
)
from .reasoner import (
    answers_over_model,
    certain_answers,
    chase,
    policy_answers,
)
from .sld import ShapeError
from .obstruction import Obstruction, build_obstruction_linear, minimize_disjuncts
from .viewcensor import (
    View,
    build_view_guarded,
    build_view_linear,
    build_view_multilinear,
)


@dataclass(frozen=True)
class XiEntry:
    source: Rule
    witness_predicate: str
    skolem_constant: Term


@dataclass
class RewriteResult:
    ontology: Ontology
    entries: tuple[XiEntry, ...]
    skolem_by_pair: dict[tuple[str, str], Term]
    sigma: frozenset[Term]

    @property
    def skolem_map(self) -> dict[tuple[str, str], Term]:
        return self.skolem_by_pair


def _is_type3(r: Rule) -> bool:
    return (
        bool(r.exist_vars)
        and len(r.exist_vars) == 1
        and len(r.body) == 1
        and r.body[0].arity == 1
        and len(r.head) == 2
    )


def skolem_rewrite(ontology: Ontology, sigma: Iterable[Term]) -> RewriteResult:
    """Replace each A(x) → ∃y.[R(x,y) ∧ B(y)] with Datalog rules

        A(x) → R'(x,a),  R'(x,y) → R(x,y),  R'(x,y) → B(y)

    where R' is a fresh role unique to the rule and a is a fresh Skolem
    constant unique to the pair (A, R) and absent from sigma.  Linearity,
    guardedness and tree-shapedness are preserved.
    """
    sigma = frozenset(sigma)
    taken_preds = set(ontology.signature())
    taken_consts = {t.name for t in sigma}
    rules: list[Rule] = []
    entries: list[XiEntry] = []
    skolem_by_pair: dict[tuple[str, str], Term] = {}
    for r in ontology.rules:
        if not r.exist_vars:
            rules.append(r)
            continue
        if not _is_type3(r):
            raise ShapeError(
                f"existential rule {r!r} is not of the qualified-existential shape", "profile"
            )
        a_pred = r.body[0].predicate
        role = next(h for h in r.head if h.arity == 2)
        filler = next(h for h in r.head if h.arity == 1)
        r_pred = role.predicate
        pair = (a_pred, r_pred)
        sk = skolem_by_pair.get(pair)
        if sk is None:
            name = f"w_{a_pred}_{r_pred}"
            k = 0
            while name in taken_consts:
                k += 1
                name = f"w_{a_pred}_{r_pred}_{k}"
            taken_consts.add(name)
            sk = skolem(name)
            skolem_by_pair[pair] = sk
        witness = f"{r_pred}__wit_{a_pred}"
        k = 0
        while witness in taken_preds:
            k += 1
            witness = f"{r_pred}__wit_{a_pred}_{k}"
        taken_preds.add(witness)
        x, y = var("x"), var("y")
        body_atom = atom(a_pred, x)
        rules.append(Rule((body_atom,), (Atom(witness, (x, sk)),)))
        rules.append(Rule((Atom(witness, (x, y)),), (Atom(r_pred, (x, y)),)))
        rules.append(Rule((Atom(witness, (x, y)),), (Atom(filler.predicate, (y,)),)))
        entries.append(XiEntry(r, witness, sk))
    return RewriteResult(Ontology.of(rules), tuple(entries), skolem_by_pair, sigma)


def _require_profile(instance: CQEInstance, want: str) -> str:
    prof = instance.profile()
    if prof.none:
        raise ShapeError("ontology rules do not match the profile templates", "profile")
    if want == "ql":
        if not prof.ql:
            raise ShapeError("ontology is not in the QL profile", "ql")
        return "ql"
    if want == "el":
        if not prof.el:
            raise ShapeError("ontology is not in the EL profile", "el")
        if not prof.guarded_el:
            raise ShapeError("EL ontology is not guarded; only guarded EL is supported", "guarded")
        return "el"
    # auto: prefer the QL route (linear) when available
    if prof.ql:
        return "ql"
    if prof.guarded_el:
        return "el"
    raise ShapeError("ontology is neither QL nor guarded EL", "profile")


def prepare_profile_instance(
    instance: CQEInstance,
    profile: str = "auto",
    extra_sigma: Iterable[Term] = (),
) -> tuple[CQEInstance, RewriteResult, str]:
    """⊤ axioms plus Skolemizing rewrite; returns the Datalog instance the
    censor builders run on, the rewrite bookkeeping, and the selected profile."""
    selected = _require_profile(instance, profile)
    with_top = instance.ontology.extend(top_axioms(instance.user_signature()))
    sigma = frozenset(instance.constants()) | frozenset(extra_sigma)
    rewrite = skolem_rewrite(with_top, sigma)
    datalog_instance = CQEInstance(
        rewrite.ontology, instance.dataset, instance.policy, instance.policy_rule
    )
    return datalog_instance, rewrite, selected


def build_view_profile(
    instance: CQEInstance, profile: str = "auto", extra_sigma: Iterable[Term] = ()
) -> View:
    """Optimal view for a QL or guarded-EL instance with a tree-shaped policy.

    The Datalog builders run on the rewritten instance; the chase of the
    resulting view under the rewritten ontology is the view for the original
    instance (it is a model of the original ontology, Skolem witnesses
    included).
    """
    if not query_is_tree_shaped(instance.policy):
        raise ShapeError("profile view construction requires a tree-shaped policy", "tree_shaped")
    datalog_instance, rewrite, selected = prepare_profile_instance(instance, profile, extra_sigma)
    flags = datalog_instance.shape()
    if flags.linear:
        inner = build_view_linear(datalog_instance)
    elif flags.multi_linear and flags.tree_shaped:
        inner = build_view_multilinear(datalog_instance)
    elif flags.guarded and flags.tree_shaped:
        inner = build_view_guarded(datalog_instance)
    else:
        failed = "guarded" if not flags.guarded else "tree_shaped"
        raise ShapeError("rewritten instance fits no view builder", failed)
    closed = chase(rewrite.ontology, inner.facts)
    return View(closed.facts, inner.copy_sets, selected)


def is_fringe_tree_query(q: ConjunctiveQuery) -> bool:
    """Tree-shaped queries whose existential variables occur in at most one
    binary atom.

    This is the class on which the Skolemizing rewrite is exact: because one
    Skolem constant serves every individual with the same existential type,
    an existential variable joining two binary atoms can travel *through* the
    shared witness and connect individuals that have distinct witnesses in
    every model (e.g. ∃v.R(c,v) ∧ R(d,v)).  With existential variables kept
    on the fringe, witness labels are parent-independent in the profile
    fragments and answers coincide with the certain answers.
    """
    if not query_is_tree_shaped(q):
        return False
    free = set(q.free)
    counts: dict[Term, int] = {}
    for a in q.body:
        if a.arity != 2:
            continue
        for t in a.args:
            if t.is_variable and t not in free:
                counts[t] = counts.get(t, 0) + 1
    return all(n <= 1 for n in counts.values())


def _mentions_internal(q: ConjunctiveQuery) -> bool:
    if any(is_internal_predicate(a.predicate) for a in q.body):
        return True
    return any(t.kind == "skolem-constant" for a in q.body for t in a.args)


def build_obstruction_ql(instance: CQEInstance, extra_sigma: Iterable[Term] = ()) -> Obstruction:
    """Optimal obstruction for a QL instance, via the linear Datalog builder
    on the rewritten instance.

    Disjuncts over witness roles or Skolem constants are internal: users
    cannot mention those symbols, and on every proof-graph path they sit
    between their user-signature neighbours, which are kept.  They are
    therefore scrubbed from the emitted obstruction.
    """
    datalog_instance, _, _ = prepare_profile_instance(instance, "ql", extra_sigma)
    flags = datalog_instance.shape()
    if not flags.linear:
        raise ShapeError("QL obstructions require a single-atom policy body", "linear")
    inner = build_obstruction_linear(datalog_instance)
    kept = [
        (q, g)
        for q, g in zip(inner.disjuncts, inner.provenance or (None,) * len(inner.disjuncts))
        if not _mentions_internal(q)
    ]
    minimal, prov = minimize_disjuncts([q for q, _ in kept], [g for _, g in kept])
    return Obstruction(tuple(minimal), tuple(prov))


def profile_certain_answers(
    instance: CQEInstance, q: ConjunctiveQuery, extra_sigma: Iterable[Term] = ()
) -> set[tuple[Term, ...]]:
    """Certain answers over a profile instance, via the Datalog rewrite.

    Exact for tree-shaped queries over the instance constants.
    """
    if instance.ontology.is_datalog:
        return certain_answers(q, instance.ontology, instance.dataset)
    datalog_instance, _, _ = prepare_profile_instance(instance, "auto", extra_sigma)
    return certain_answers(q, datalog_instance.ontology, datalog_instance.dataset)


def profile_view_answers(
    instance: CQEInstance, view: View, q: ConjunctiveQuery
) -> set[tuple[Term, ...]]:
    """View-censor answers for a profile instance.

    The view side needs no ontology: a profile view is closed under the
    rewritten ontology and hence a model of the original one, so querying the
    view directly decides entailment.
    """
    over_data = profile_certain_answers(instance, q)
    over_view = answers_over_model(q, view.facts)
    return over_data & over_view


def profile_policy_answers(instance: CQEInstance) -> frozenset[tuple[Term, ...]]:
    if instance.ontology.is_datalog:
        return policy_answers(instance)
    datalog_instance, _, _ = prepare_profile_instance(instance, "auto")
    return policy_answers(datalog_instance)
