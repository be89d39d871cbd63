"""SLD resolution over Datalog: proof search, normalised proofs, the proof
graph for linear instances and bounded goal enumeration.

Goals are canonicalized (variables renamed v1, v2, ... in order of first
occurrence) so goals equal up to renaming compare equal.  Proof search is
realized by reconstructing a normalised proof from chase provenance, which
terminates on every input and is complete with respect to the chase.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional, Sequence, Union

from .model import (
    EQ,
    Atom,
    ConjunctiveQuery,
    CQEInstance,
    Dataset,
    Ontology,
    Rule,
    ShapeFlags,
    Term,
    var,
)
from .reasoner import (
    FactIndex,
    _join,
    chase,
    datalog_theory,
    find_homomorphism,
    policy_answers,
)

Sentence = Union[Rule, Atom]


class ShapeError(ValueError):
    """A structural precondition (linearity, guardedness, ...) is not met."""

    def __init__(self, message: str, failed_flag: str | None = None) -> None:
        super().__init__(message)
        self.failed_flag = failed_flag


@dataclass(frozen=True)
class Goal:
    """Conjunction of atoms; the empty conjunction is ⊤."""

    atoms: tuple[Atom, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "_hash", hash(self.atoms))

    def __hash__(self) -> int:
        return self._hash  # type: ignore[attr-defined]

    @property
    def is_top(self) -> bool:
        return not self.atoms

    def canonical(self) -> "Goal":
        theta: dict[Term, Term] = {}
        out: list[Atom] = []
        seen: set[Atom] = set()
        for a in self.atoms:
            args = []
            for t in a.args:
                if t.is_variable:
                    if t not in theta:
                        theta[t] = var(f"v{len(theta) + 1}")
                    args.append(theta[t])
                else:
                    args.append(t)
            renamed = Atom(a.predicate, tuple(args))
            if renamed not in seen:  # conjunction is a set
                seen.add(renamed)
                out.append(renamed)
        return Goal(tuple(out))

    def variables(self) -> set[Term]:
        return {t for a in self.atoms for t in a.variables()}

    def as_bcq(self) -> ConjunctiveQuery:
        return ConjunctiveQuery((), self.atoms)

    def __repr__(self) -> str:
        return "⊤" if self.is_top else " ∧ ".join(map(repr, self.atoms))


TOP_GOAL = Goal(())


# ---------------------------------------------------------------------------
# Unification.
# ---------------------------------------------------------------------------


def mgu(a: Atom, b: Atom) -> Optional[dict[Term, Term]]:
    """Most general unifier of two function-free atoms, or None."""
    if a.predicate != b.predicate or a.arity != b.arity:
        return None
    subst: dict[Term, Term] = {}

    def walk(t: Term) -> Term:
        while t.is_variable and t in subst:
            t = subst[t]
        return t

    for x, y in zip(a.args, b.args):
        x, y = walk(x), walk(y)
        if x == y:
            continue
        if x.is_variable:
            subst[x] = y
        elif y.is_variable:
            subst[y] = x
        else:
            return None
    return {v: walk(v) for v in subst}


def _rename_apart(r: Rule, taken: set[Term]) -> Rule:
    names = {t.name for t in taken}
    theta: dict[Term, Term] = {}
    for a in r.body + r.head:
        for t in a.variables():
            if t in theta:
                continue
            fresh = t
            i = 0
            while fresh.name in names:
                i += 1
                fresh = var(f"{t.name}_{i}")
            names.add(fresh.name)
            theta[t] = fresh
    if all(k == v for k, v in theta.items()):
        return r
    return Rule(
        tuple(a.substitute(theta) for a in r.body),
        tuple(a.substitute(theta) for a in r.head),
        frozenset(theta.get(t, t) for t in r.exist_vars),
    )


def _resolve_detail(goal: Goal, sentence: Sentence, selected: int) -> Optional[tuple[Goal, dict]]:
    beta = goal.atoms[selected]
    rest = goal.atoms[:selected] + goal.atoms[selected + 1 :]
    if isinstance(sentence, Rule):
        rr = _rename_apart(sentence, goal.variables())
        theta = mgu(beta, rr.head_atom)
        if theta is None:
            return None
        new_atoms = tuple(a.substitute(theta) for a in rest) + tuple(
            a.substitute(theta) for a in rr.body
        )
    else:
        theta = mgu(beta, sentence)
        if theta is None:
            return None
        new_atoms = tuple(a.substitute(theta) for a in rest)
    return Goal(new_atoms).canonical(), theta


def resolve_step(goal: Goal, sentence: Sentence, selected: int) -> list[Goal]:
    """Goals obtained by resolving the selected atom with the rule or fact.

    Atom pairs have at most one most general unifier, so the result has at
    most one element; it is empty when unification fails.
    """
    detail = _resolve_detail(goal, sentence, selected)
    return [] if detail is None else [detail[0]]


# ---------------------------------------------------------------------------
# Proofs.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProofStep:
    sentence: Sentence
    selected: int
    unifier: tuple[tuple[Term, Term], ...]


@dataclass(frozen=True)
class Proof:
    """Goal sequence G0 ... Gn with Gn = ⊤ and one resolution step between
    consecutive goals.  All ontology steps precede all fact steps; the index
    of the first fact step is the frontier."""

    goals: tuple[Goal, ...]
    steps: tuple[ProofStep, ...]
    frontier: int

    def __len__(self) -> int:
        return len(self.steps)


def validate_proof(proof: Proof, ontology: Ontology, dataset: Dataset) -> bool:
    """Replay every step; also checks normalisation and sentence provenance."""
    rules, facts = datalog_theory(ontology, dataset)
    fact_set = set(facts)
    if len(proof.goals) != len(proof.steps) + 1 or not proof.goals[-1].is_top:
        return False
    for i, step in enumerate(proof.steps):
        if isinstance(step.sentence, Rule):
            if i >= proof.frontier or step.sentence not in rules:
                return False
        else:
            if i < proof.frontier or step.sentence not in fact_set:
                return False
        produced = resolve_step(proof.goals[i], step.sentence, step.selected)
        if not produced or produced[0] != proof.goals[i + 1].canonical():
            return False
    return True


def _proof_tree(fact: Atom, provenance: dict) -> tuple:
    entry = provenance.get(fact)
    if entry is None:
        return ("leaf", fact)
    r, premises = entry
    return ("rule", r, fact, tuple(_proof_tree(p, provenance) for p in premises))


def _dedup_pairs(pairs: list[tuple[Atom, tuple]]) -> list[tuple[Atom, tuple]]:
    # conjunctions are treated as sets (mirrors Goal.canonical), so a repeated
    # atom carries a single proof obligation
    seen: set[Atom] = set()
    out = []
    for a, node in pairs:
        if a not in seen:
            seen.add(a)
            out.append((a, node))
    return out


def prove(
    goal: Goal | ConjunctiveQuery,
    ontology: Ontology,
    dataset: Dataset,
    max_depth: Optional[int] = None,
) -> Optional[Proof]:
    """A normalised proof of the goal, or None if the goal is not entailed.

    Entailment is decided by the chase, so absence is definitive rather than
    a depth artifact; the proof itself is rebuilt from chase provenance with
    all rule steps before all fact steps.
    """
    if isinstance(goal, ConjunctiveQuery):
        goal = Goal(goal.body)
    if goal.is_top:
        return Proof((TOP_GOAL,), (), 0)
    model = chase(ontology, dataset, with_provenance=True)
    hom = find_homomorphism(goal.atoms, model.index)
    if hom is None:
        return None
    theta = hom.as_dict()
    assert model.provenance is not None
    pairs: list[tuple[Atom, tuple]] = _dedup_pairs(
        [(a, _proof_tree(a.substitute(theta), model.provenance)) for a in goal.atoms]
    )
    goals: list[Goal] = [Goal(tuple(a for a, _ in pairs)).canonical()]
    steps: list[ProofStep] = []

    # Rule phase: unfold every derived atom, leftmost first.
    while True:
        i = next((k for k, (_, node) in enumerate(pairs) if node[0] == "rule"), None)
        if i is None:
            break
        atom_i, node = pairs[i]
        _, r, _, children = node
        rr = _rename_apart(r, {t for a, _ in pairs for t in a.variables()})
        theta_i = mgu(atom_i, rr.head_atom)
        assert theta_i is not None
        rest = [(a.substitute(theta_i), nd) for k, (a, nd) in enumerate(pairs) if k != i]
        body = [(b.substitute(theta_i), child) for b, child in zip(rr.body, children)]
        pairs = _dedup_pairs(rest + body)
        steps.append(ProofStep(r, i, tuple(sorted(theta_i.items(), key=lambda kv: kv[0].name))))
        goals.append(Goal(tuple(a for a, _ in pairs)).canonical())
    frontier = len(steps)

    # Fact phase: discharge the remaining atoms against their leaf facts.
    while pairs:
        atom_0, node = pairs[0]
        fact = node[1]
        theta_0 = mgu(atom_0, fact)
        assert theta_0 is not None
        pairs = _dedup_pairs([(a.substitute(theta_0), nd) for a, nd in pairs[1:]])
        steps.append(ProofStep(fact, 0, tuple(sorted(theta_0.items(), key=lambda kv: kv[0].name))))
        goals.append(Goal(tuple(a for a, _ in pairs)).canonical())

    proof = Proof(tuple(goals), tuple(steps), frontier)
    if max_depth is not None and len(proof) > max_depth:
        return None
    return proof


# ---------------------------------------------------------------------------
# Proof graphs for linear instances.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Edge:
    source: Goal
    sentence: Sentence
    unifier: tuple[tuple[Term, Term], ...]
    target: Goal


@dataclass
class ProofGraph:
    nodes: set[Goal]
    edges: dict[Goal, tuple[Edge, ...]]
    sources: tuple[Goal, ...]

    def successors(self, g: Goal) -> Iterator[Goal]:
        return (e.target for e in self.edges.get(g, ()))

    def nodes_on_paths(self) -> set[Goal]:
        """Nodes lying on some path from a source to ⊤ (including ⊤)."""
        forward: set[Goal] = set()
        stack = list(self.sources)
        while stack:
            g = stack.pop()
            if g in forward:
                continue
            forward.add(g)
            stack.extend(self.successors(g))
        reverse: dict[Goal, list[Goal]] = {}
        for g, es in self.edges.items():
            for e in es:
                reverse.setdefault(e.target, []).append(g)
        backward: set[Goal] = set()
        stack = [TOP_GOAL]
        while stack:
            g = stack.pop()
            if g in backward:
                continue
            backward.add(g)
            stack.extend(reverse.get(g, ()))
        return forward & backward

    def to_dot(self, ontology: Optional[Ontology] = None) -> str:
        rule_index = {r: i + 1 for i, r in enumerate(ontology.rules)} if ontology else {}
        lines = ["digraph proof_graph {", '  rankdir="LR";']
        for g in sorted(self.nodes | {TOP_GOAL}, key=repr):
            shape = "doublecircle" if g.is_top else ("box" if g in self.sources else "ellipse")
            lines.append(f'  "{g!r}" [shape={shape}];')
        seen = set()
        for g in sorted(self.edges, key=repr):
            for e in self.edges[g]:
                if isinstance(e.sentence, Rule):
                    label = f"rule {rule_index.get(e.sentence, '?')}" if rule_index else "rule"
                else:
                    label = repr(e.sentence)
                key = (repr(g), repr(e.target), label)
                if key in seen:
                    continue
                seen.add(key)
                lines.append(f'  "{g!r}" -> "{e.target!r}" [label="{label}"];')
        lines.append("}")
        return "\n".join(lines)


def _require_linear(instance: CQEInstance, operation: str) -> ShapeFlags:
    flags = instance.shape()
    if not flags.datalog:
        raise ShapeError(f"{operation} requires a Datalog instance", "datalog")
    if not flags.linear:
        raise ShapeError(f"{operation} requires a linear instance", "linear")
    if instance.ontology.contains_equality or any(
        f.predicate == EQ for f in instance.dataset
    ):
        raise ShapeError(f"{operation} does not support ≈ (its axioms are not linear)", "linear")
    return flags


def build_proof_graph(instance: CQEInstance) -> ProofGraph:
    """Finite graph of single-atom goals reachable by resolution from the
    instantiated policy atoms; ⊤ is reached through dataset facts."""
    _require_linear(instance, "proof graph construction")
    answers = policy_answers(instance)
    fact_index = FactIndex(instance.dataset.facts)
    sources = []
    for ans in sorted(answers, key=lambda row: tuple(t.name for t in row)):
        body = instance.policy.instantiate(ans).body
        sources.append(Goal(body).canonical())
    nodes: set[Goal] = set()
    edges: dict[Goal, list[Edge]] = {}
    queue = list(sources)
    while queue:
        g = queue.pop()
        if g in nodes or g.is_top:
            continue
        nodes.add(g)
        out: list[Edge] = []
        for r in instance.ontology.rules:
            detail = _resolve_detail(g, r, 0)
            if detail is not None:
                target, theta = detail
                out.append(Edge(g, r, tuple(sorted(theta.items(), key=lambda kv: kv[0].name)), target))
                queue.append(target)
        for fact in fact_index.candidates(g.atoms[0], {}):
            detail = _resolve_detail(g, fact, 0)
            if detail is not None:
                target, theta = detail
                out.append(Edge(g, fact, tuple(sorted(theta.items(), key=lambda kv: kv[0].name)), target))
        edges[g] = out
    return ProofGraph(nodes, {g: tuple(es) for g, es in edges.items()}, tuple(sources))


# ---------------------------------------------------------------------------
# Bounded goal enumeration for general Datalog.
# ---------------------------------------------------------------------------


@dataclass
class GoalEnumeration:
    goals: frozenset[ConjunctiveQuery]
    complete: bool
    rule_depth: int


def _rule_successors(g: Goal, rules: Sequence[Rule]) -> Iterator[Goal]:
    for i in range(len(g.atoms)):
        for r in rules:
            detail = _resolve_detail(g, r, i)
            if detail is not None:
                yield detail[0]


def _all_homs(atoms: Sequence[Atom], index: FactIndex) -> Iterator[dict[Term, Term]]:
    binding: dict[Term, Term] = {}
    for found in _join(tuple(atoms), index, binding):
        yield dict(found)


def enumerate_goals(instance: CQEInstance, max_depth: int) -> GoalEnumeration:
    """Boolean closures of goals occurring in normalised proofs of policy
    answers using at most max_depth rule steps.

    The enumeration unfolds every atom selection; it is complete-finite when
    the canonical goal space is exhausted within the bound, else truncated.
    """
    flags = instance.shape()
    if not flags.datalog:
        raise ShapeError("goal enumeration requires a Datalog instance", "datalog")
    rules, facts = datalog_theory(instance.ontology, instance.dataset)
    fact_index = FactIndex(facts)
    answers = policy_answers(instance)
    depth: dict[Goal, int] = {}
    frontier: list[Goal] = []
    for ans in sorted(answers, key=lambda row: tuple(t.name for t in row)):
        g = Goal(instance.policy.instantiate(ans).body).canonical()
        if g not in depth:
            depth[g] = 0
            frontier.append(g)
    successors: dict[Goal, set[Goal]] = {}
    complete = False
    level = 0
    while level < max_depth:
        if not frontier:
            complete = True
            break
        next_frontier: list[Goal] = []
        for g in frontier:
            succ = set(_rule_successors(g, rules))
            successors[g] = succ
            for s in succ:
                if s not in depth:
                    depth[s] = level + 1
                    next_frontier.append(s)
        frontier = next_frontier
        level += 1
    if not frontier:
        complete = True

    embeddable = {
        g: (next(_all_homs(g.atoms, fact_index), None) is not None) for g in depth
    }
    INF = max_depth + 1
    cost = {g: (0 if embeddable[g] else INF) for g in depth}
    changed = True
    while changed:
        changed = False
        for g, succ in successors.items():
            best = min((cost[s] + 1 for s in succ if s in cost), default=INF)
            if best < cost[g]:
                cost[g] = best
                changed = True

    collected: set[Goal] = set()
    for g, d in depth.items():
        if d + cost[g] <= max_depth:
            collected.add(g)
        if embeddable[g] and d <= max_depth:
            # Goals of the fact phase: any discharge order of any embedding.
            for hom in _all_homs(g.atoms, fact_index):
                n = len(g.atoms)
                for mask in range(1, (1 << n) - 1):
                    kept = [g.atoms[i] for i in range(n) if not mask & (1 << i)]
                    bound_vars = {
                        t
                        for i in range(n)
                        if mask & (1 << i)
                        for t in g.atoms[i].variables()
                    }
                    theta = {v: hom[v] for v in bound_vars}
                    collected.add(Goal(tuple(a.substitute(theta) for a in kept)).canonical())
    collected.discard(TOP_GOAL)
    return GoalEnumeration(
        frozenset(g.as_bcq() for g in collected), complete, max_depth
    )
