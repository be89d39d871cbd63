"""Core vocabulary: terms, atoms, rules, datasets, queries and CQE instances.

Everything here is immutable and hashable, so values can be shared freely
between threads and used as dictionary keys by the reasoning modules.
Classification (rule shapes, OWL 2 profile membership) is pure and cached
on the ontology.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Optional, Sequence

# Term kinds.
CONST = "constant"
ANON = "anonymous-constant"
VAR = "variable"
SKOLEM = "skolem-constant"
FROZEN = "frozen-constant"  # labelled nulls produced by reasoner.freeze

#: Kinds that may appear in ground atoms (datasets, views).
CONSTANT_KINDS = frozenset({CONST, ANON, SKOLEM, FROZEN})

# Reserved predicate names.  EQ is the equality predicate; TOP the universal
# concept used in profile mode; POLICY_PRED heads the internal policy rule;
# DELTA/RHO prefix the role-projection predicates of the view construction.
EQ = "≈"
TOP = "⊤"
POLICY_PRED = "A_p"
DELTA_PREFIX = "δ_"
RHO_PREFIX = "ρ_"


def is_reserved_predicate(name: str) -> bool:
    return (
        name == POLICY_PRED
        or name == TOP
        or name.startswith(DELTA_PREFIX)
        or name.startswith(RHO_PREFIX)
    )


def is_internal_predicate(name: str) -> bool:
    """Predicates invisible to users (stripped from user-facing output)."""
    return (
        name == POLICY_PRED
        or name == TOP
        or name.startswith(DELTA_PREFIX)
        or name.startswith(RHO_PREFIX)
        or "__wit" in name
    )


@dataclass(frozen=True)
class Term:
    kind: str
    name: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "_hash", hash((self.kind, self.name)))

    def __hash__(self) -> int:  # precomputed: terms are hot keys
        return self._hash  # type: ignore[attr-defined]

    @property
    def is_variable(self) -> bool:
        return self.kind == VAR

    @property
    def is_constant(self) -> bool:
        return self.kind in CONSTANT_KINDS

    def __repr__(self) -> str:
        return f"{self.kind[0]}:{self.name}"


def const(name: str) -> Term:
    return Term(CONST, name)


def var(name: str) -> Term:
    return Term(VAR, name)


def anon(name: str) -> Term:
    return Term(ANON, name)


def skolem(name: str) -> Term:
    return Term(SKOLEM, name)


def frozen(name: str) -> Term:
    return Term(FROZEN, name)


@dataclass(frozen=True)
class Atom:
    predicate: str
    args: tuple[Term, ...] = ()

    def __post_init__(self) -> None:
        if len(self.args) > 2:
            raise ValueError(f"predicate {self.predicate} used with arity {len(self.args)} > 2")
        object.__setattr__(self, "_hash", hash((self.predicate, self.args)))

    def __hash__(self) -> int:
        return self._hash  # type: ignore[attr-defined]

    @property
    def arity(self) -> int:
        return len(self.args)

    @property
    def is_ground(self) -> bool:
        return all(t.is_constant for t in self.args)

    def variables(self) -> Iterator[Term]:
        return (t for t in self.args if t.is_variable)

    def constants(self) -> Iterator[Term]:
        return (t for t in self.args if t.is_constant)

    def substitute(self, theta: Mapping[Term, Term]) -> "Atom":
        if not self.args:
            return self
        new_args = tuple(theta.get(t, t) for t in self.args)
        if new_args == self.args:
            return self
        return Atom(self.predicate, new_args)

    def __repr__(self) -> str:
        if not self.args:
            return self.predicate
        return f"{self.predicate}({', '.join(t.name for t in self.args)})"


def atom(predicate: str, *args: Term) -> Atom:
    return Atom(predicate, tuple(args))


@dataclass(frozen=True)
class Rule:
    """Universally quantified implication with a conjunctive body and head.

    Datalog rules have a single head atom and no existential variables.
    Existential heads are only accepted on input (profile rules) and are
    compiled away before reasoning.
    """

    body: tuple[Atom, ...]
    head: tuple[Atom, ...]
    exist_vars: frozenset[Term] = frozenset()

    def __post_init__(self) -> None:
        if not self.body:
            raise ValueError("rule body must be nonempty")
        if not self.head:
            raise ValueError("rule head must be nonempty")
        body_vars = {t for a in self.body for t in a.variables()}
        for a in self.head:
            for t in a.variables():
                if t not in body_vars and t not in self.exist_vars:
                    raise ValueError(f"unsafe rule: head variable {t.name} not bound in body")
        for t in self.exist_vars:
            if t in body_vars:
                raise ValueError(f"existential variable {t.name} occurs in body")
        object.__setattr__(self, "_hash", hash((self.body, self.head, self.exist_vars)))

    def __hash__(self) -> int:
        return self._hash  # type: ignore[attr-defined]

    @property
    def is_datalog(self) -> bool:
        return len(self.head) == 1 and not self.exist_vars

    @property
    def head_atom(self) -> Atom:
        if not self.is_datalog:
            raise ValueError("head_atom is only defined for Datalog rules")
        return self.head[0]

    def body_variables(self) -> set[Term]:
        return {t for a in self.body for t in a.variables()}

    def predicates(self) -> Iterator[tuple[str, int]]:
        for a in self.body + self.head:
            yield a.predicate, a.arity

    def __repr__(self) -> str:
        body = ", ".join(map(repr, self.body))
        head = ", ".join(map(repr, self.head))
        if self.exist_vars:
            names = ",".join(sorted(t.name for t in self.exist_vars))
            return f"{body} -> exists {names}. {head}"
        return f"{body} -> {head}"


def rule(body: Sequence[Atom], head: Atom | Sequence[Atom], exist: Iterable[Term] = ()) -> Rule:
    heads = (head,) if isinstance(head, Atom) else tuple(head)
    return Rule(tuple(body), heads, frozenset(exist))


@dataclass(frozen=True)
class Dataset:
    """A finite set of ground atoms."""

    facts: frozenset[Atom] = frozenset()

    @classmethod
    def of(cls, facts: Iterable[Atom]) -> "Dataset":
        facts = frozenset(facts)
        for f in facts:
            if not f.is_ground:
                raise ValueError(f"dataset fact {f!r} is not ground")
        return cls(facts)

    def __iter__(self) -> Iterator[Atom]:
        return iter(self.facts)

    def __len__(self) -> int:
        return len(self.facts)

    def __contains__(self, f: Atom) -> bool:
        return f in self.facts

    def union(self, other: Iterable[Atom]) -> "Dataset":
        return Dataset(self.facts | frozenset(other))

    def constants(self) -> set[Term]:
        return {t for f in self.facts for t in f.args}

    def predicates(self) -> dict[str, int]:
        return {f.predicate: f.arity for f in self.facts}

    def restrict_user(self) -> "Dataset":
        """Drop facts over internal predicates (A_p, δ_*, ρ_*, ⊤, witnesses)."""
        return Dataset(frozenset(f for f in self.facts if not is_internal_predicate(f.predicate)))


@dataclass(frozen=True)
class ConjunctiveQuery:
    """CQ with an ordered tuple of free variables; Boolean iff the tuple is empty."""

    free: tuple[Term, ...]
    body: tuple[Atom, ...]

    def __post_init__(self) -> None:
        if not self.body:
            raise ValueError("query body must be nonempty")
        body_vars = {t for a in self.body for t in a.variables()}
        for t in self.free:
            if not t.is_variable:
                raise ValueError(f"free term {t!r} is not a variable")
            if t not in body_vars:
                raise ValueError(f"free variable {t.name} does not occur in the body")
        object.__setattr__(self, "_hash", hash((self.free, self.body)))

    def __hash__(self) -> int:
        return self._hash  # type: ignore[attr-defined]

    @property
    def is_boolean(self) -> bool:
        return not self.free

    def variables(self) -> set[Term]:
        return {t for a in self.body for t in a.variables()}

    def existential_variables(self) -> set[Term]:
        return self.variables() - set(self.free)

    def instantiate(self, values: Sequence[Term]) -> "ConjunctiveQuery":
        """Substitute the free variables with constants, yielding a Boolean CQ."""
        if len(values) != len(self.free):
            raise ValueError(
                f"answer arity {len(values)} does not match query arity {len(self.free)}"
            )
        theta = dict(zip(self.free, values))
        return ConjunctiveQuery((), tuple(a.substitute(theta) for a in self.body))

    def __repr__(self) -> str:
        head = ",".join(t.name for t in self.free)
        return f"Q({head}) :- {', '.join(map(repr, self.body))}"


def query(free: Sequence[Term], body: Sequence[Atom]) -> ConjunctiveQuery:
    return ConjunctiveQuery(tuple(free), tuple(body))


def bcq(*body: Atom) -> ConjunctiveQuery:
    return ConjunctiveQuery((), tuple(body))


@dataclass(frozen=True)
class UnionQuery:
    """Union of Boolean CQs."""

    disjuncts: tuple[ConjunctiveQuery, ...]

    def __post_init__(self) -> None:
        if not self.disjuncts:
            raise ValueError("a union query needs at least one disjunct")
        for q in self.disjuncts:
            if not q.is_boolean:
                raise ValueError("union query disjuncts must be Boolean")


# ---------------------------------------------------------------------------
# Shape classification.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ShapeFlags:
    datalog: bool
    guarded: bool
    linear: bool
    multi_linear: bool
    tree_shaped: bool

    def __and__(self, other: "ShapeFlags") -> "ShapeFlags":
        return ShapeFlags(
            self.datalog and other.datalog,
            self.guarded and other.guarded,
            self.linear and other.linear,
            self.multi_linear and other.multi_linear,
            self.tree_shaped and other.tree_shaped,
        )

    def as_dict(self) -> dict[str, bool]:
        return {
            "datalog": self.datalog,
            "guarded": self.guarded,
            "linear": self.linear,
            "multi_linear": self.multi_linear,
            "tree_shaped": self.tree_shaped,
        }


ALL_SHAPES = ShapeFlags(True, True, True, True, True)


def _edges_form_tree(atoms: Sequence[Atom]) -> bool:
    # One undirected edge {t1, t2} per binary atom; parallel edges and
    # self-loops count as cycles, so a tree needs exactly |nodes| - 1 edges
    # and a single connected component.
    edges = [a.args for a in atoms if a.arity == 2]
    if not edges:
        return True
    nodes: set[Term] = set()
    for t1, t2 in edges:
        if t1 == t2:
            return False
        nodes.add(t1)
        nodes.add(t2)
    if len(edges) != len(nodes) - 1:
        return False
    adjacency: dict[Term, list[Term]] = {n: [] for n in nodes}
    for t1, t2 in edges:
        adjacency[t1].append(t2)
        adjacency[t2].append(t1)
    seen = set()
    stack = [next(iter(nodes))]
    while stack:
        n = stack.pop()
        if n in seen:
            continue
        seen.add(n)
        stack.extend(adjacency[n])
    return len(seen) == len(nodes)


def classify_rule_shape(r: Rule) -> ShapeFlags:
    body_vars = r.body_variables()
    guards = [a for a in r.body if body_vars <= set(a.variables())]
    guarded = bool(guards)
    linear = len(r.body) == 1
    multi_linear = len(guards) == len(r.body)
    return ShapeFlags(r.is_datalog, guarded, linear, multi_linear, _edges_form_tree(r.body))


def classify_shape(rules: Iterable[Rule]) -> ShapeFlags:
    """Conjunction of the per-rule flags; the empty rule set has every shape."""
    flags = ALL_SHAPES
    for r in rules:
        flags = flags & classify_rule_shape(r)
    return flags


def query_is_tree_shaped(q: ConjunctiveQuery) -> bool:
    return _edges_form_tree(q.body)


# ---------------------------------------------------------------------------
# OWL 2 profile classification.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProfileClass:
    recognized: bool  # every rule matched a template
    rl: bool
    ql: bool
    el: bool
    guarded_el: bool

    @property
    def none(self) -> bool:
        return not self.recognized

    def as_dict(self) -> dict[str, bool]:
        return {"rl": self.rl, "ql": self.ql, "el": self.el, "guarded_el": self.guarded_el}


NO_PROFILE = ProfileClass(False, False, False, False, False)

# Rule templates, written with placeholder predicates (#P1, #P2, ...) that may
# map to any predicate name, placeholder constants (?c1, ...) that may map to
# any constant, and variables that must map injectively.
_px = var("x")
_py = var("y")
_py1 = var("y1")
_py2 = var("y2")
_pz = var("z")
_pc = const("?c1")


def _template(n: int, body: Sequence[Atom], head: Atom, exist: Iterable[Term] = ()) -> tuple:
    return n, Rule(tuple(body), (head,), frozenset(exist))


_TEMPLATES: list[tuple[int, Rule]] = [
    _template(
        1,
        [
            atom("#P1", _px),
            atom("#P2", _px, _py1),
            atom("#P3", _py1),
            atom("#P2", _px, _py2),
            atom("#P3", _py2),
        ],
        atom(EQ, _py1, _py2),
    ),
    _template(2, [atom("#P1", _px, _py)], atom("#P2", _px, _py)),
    _template(4, [atom("#P1", _px)], atom(EQ, _px, _pc)),
    _template(5, [atom("#P1", _px, _py), atom("#P2", _py, _pz)], atom("#P3", _px, _pz)),
    _template(6, [atom("#P1", _px), atom("#P2", _px)], atom("#P3", _px)),
    _template(7, [atom("#P1", _px), atom("#P2", _px, _py)], atom("#P3", _py)),
    _template(8, [atom("#P1", _px, _py)], atom("#P2", _py, _px)),
    _template(9, [atom("#P1", _px, _pc)], atom("#P2", _px)),
    _template(10, [atom("#P1", _px, _py)], atom("#P2", _py)),
    # Domain companion of template 10: both the domain and the range
    # projection of a role are admitted by all three profiles.
    _template(10, [atom("#P1", _px, _py)], atom("#P2", _px)),
    _template(11, [atom("#P1", _px)], atom("#P2", _px, _pc)),
    _template(12, [atom("#P1", _px)], atom("#P2", _px)),
    _template(13, [atom("#P1", _px, _py), atom("#P2", _py)], atom("#P3", _px)),
]

# The qualified-existential template, A(x) -> exists y. R(x,y) & B(y).
_TEMPLATE_3 = Rule(
    (atom("#P1", _px),),
    (atom("#P2", _px, _py), atom("#P3", _py)),
    frozenset({_py}),
)

_QL_TYPES = {2, 3, 8, 10, 12}
_NON_EL_TYPES = {1, 7, 8}


def _match_atom(pattern: Atom, target: Atom, preds: dict, terms: dict) -> Optional[tuple[dict, dict]]:
    if pattern.arity != target.arity:
        return None
    preds = dict(preds)
    terms = dict(terms)
    if pattern.predicate.startswith("#"):
        bound = preds.get(pattern.predicate)
        if bound is None:
            preds[pattern.predicate] = target.predicate
        elif bound != target.predicate:
            return None
    elif pattern.predicate != target.predicate:
        return None
    for p, t in zip(pattern.args, target.args):
        if p.is_variable:
            if not t.is_variable:
                return None
            bound = terms.get(p)
            if bound is None:
                if t in terms.values():
                    return None  # variable mapping must be injective
                terms[p] = t
            elif bound != t:
                return None
        else:  # placeholder constant matches any constant
            if not t.is_constant:
                return None
            bound = terms.get(p)
            if bound is None:
                terms[p] = t
            elif bound != t:
                return None
    return preds, terms


def _match_rule(template: Rule, r: Rule) -> bool:
    if len(template.body) != len(r.body) or len(template.head) != len(r.head):
        return False
    if bool(template.exist_vars) != bool(r.exist_vars):
        return False

    def assign(pat_atoms: list[Atom], targets: list[Atom], preds: dict, terms: dict) -> Optional[tuple[dict, dict]]:
        if not pat_atoms:
            return preds, terms
        first, rest = pat_atoms[0], pat_atoms[1:]
        for i, t in enumerate(targets):
            matched = _match_atom(first, t, preds, terms)
            if matched is not None:
                result = assign(rest, targets[:i] + targets[i + 1 :], *matched)
                if result is not None:
                    return result
        return None

    state = assign(list(template.head), list(r.head), {}, {})
    if state is None:
        return False
    preds, terms = state
    if assign(list(template.body), list(r.body), preds, terms) is None:
        return False
    if template.exist_vars:
        mapped_exist = {terms.get(v) for v in template.exist_vars}
        if mapped_exist != set(r.exist_vars):
            return False
    return True


def match_profile_template(r: Rule) -> Optional[int]:
    """Template number matched by the rule, or None."""
    if r.exist_vars:
        return 3 if _match_rule(_TEMPLATE_3, r) else None
    for n, template in _TEMPLATES:
        if _match_rule(template, r):
            return n
    return None


def classify_profile(ontology: "Ontology") -> ProfileClass:
    """Profile membership per the thirteen rule templates.

    Rules heading the internal ⊤ predicate are bookkeeping and are skipped.
    A single unmatched rule makes the whole ontology unclassifiable.
    """
    types: set[int] = set()
    for r in ontology.rules:
        if r.is_datalog and r.head_atom.predicate == TOP:
            continue
        n = match_profile_template(r)
        if n is None:
            return NO_PROFILE
    # re-walk to gather types only once we know all match
    for r in ontology.rules:
        if r.is_datalog and r.head_atom.predicate == TOP:
            continue
        n = match_profile_template(r)
        assert n is not None
        types.add(n)
    rl = 3 not in types
    ql = types <= _QL_TYPES
    el = not (types & _NON_EL_TYPES)
    guarded_el = el and classify_shape(ontology.rules).guarded
    return ProfileClass(True, rl, ql, el, guarded_el)


# ---------------------------------------------------------------------------
# Ontologies and CQE instances.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Ontology:
    rules: tuple[Rule, ...] = ()

    @classmethod
    def of(cls, rules: Iterable[Rule]) -> "Ontology":
        return cls(tuple(rules))

    def __post_init__(self) -> None:
        object.__setattr__(self, "_hash", hash(self.rules))

    def __hash__(self) -> int:
        return self._hash  # type: ignore[attr-defined]

    def __iter__(self) -> Iterator[Rule]:
        return iter(self.rules)

    def __len__(self) -> int:
        return len(self.rules)

    def signature(self) -> dict[str, int]:
        sig: dict[str, int] = {}
        for r in self.rules:
            for name, arity in r.predicates():
                sig[name] = arity
        return sig

    def binary_predicates(self) -> list[str]:
        return sorted(name for name, arity in self.signature().items() if arity == 2 and name != EQ)

    @property
    def is_datalog(self) -> bool:
        return all(r.is_datalog for r in self.rules)

    @property
    def contains_equality(self) -> bool:
        return any(a.predicate == EQ for r in self.rules for a in r.body + r.head)

    def shape(self) -> ShapeFlags:
        return classify_shape(self.rules)

    def extend(self, extra: Iterable[Rule]) -> "Ontology":
        return Ontology(self.rules + tuple(extra))


@dataclass(frozen=True)
class CQEInstance:
    """An ontology, a hidden dataset and a policy CQ.

    The policy rule maps the policy body onto the reserved predicate A_p; the
    instance inherits the classification of ontology ∪ {policy rule}.  Policy
    answers are cached lazily once a reasoner computes them.
    """

    ontology: Ontology
    dataset: Dataset
    policy: ConjunctiveQuery
    policy_rule: Rule
    _policy_answers: Optional[frozenset[tuple[Term, ...]]] = field(
        default=None, compare=False, repr=False
    )

    def __post_init__(self) -> None:
        object.__setattr__(self, "_hash", hash((self.ontology, self.dataset.facts, self.policy)))

    def __hash__(self) -> int:
        return self._hash  # type: ignore[attr-defined]

    def shape(self) -> ShapeFlags:
        return classify_shape(self.ontology.rules + (self.policy_rule,))

    def profile(self) -> ProfileClass:
        # Policy rules routinely mention constants, which no template allows,
        # so profile membership is decided on the ontology alone; shape
        # requirements on the policy are enforced by the pipelines.
        return classify_profile(self.ontology)

    def constants(self) -> set[Term]:
        consts = self.dataset.constants()
        for r in self.ontology.rules:
            for a in r.body + r.head:
                consts.update(a.constants())
        for a in self.policy.body:
            consts.update(a.constants())
        return consts

    def user_signature(self) -> dict[str, int]:
        sig = self.ontology.signature()
        sig.update(self.dataset.predicates())
        for a in self.policy.body:
            sig[a.predicate] = a.arity
        return {n: a for n, a in sig.items() if not is_internal_predicate(n)}

    def cache_policy_answers(self, answers: Iterable[tuple[Term, ...]]) -> None:
        object.__setattr__(self, "_policy_answers", frozenset(answers))

    @property
    def cached_policy_answers(self) -> Optional[frozenset[tuple[Term, ...]]]:
        return self._policy_answers


def make_instance(ontology: Ontology, dataset: Dataset, policy: ConjunctiveQuery) -> CQEInstance:
    """Assemble a CQE instance, rejecting clashes with reserved predicates."""
    used: set[str] = set(ontology.signature())
    used.update(dataset.predicates())
    used.update(a.predicate for a in policy.body)
    for name in sorted(used):
        if is_reserved_predicate(name):
            raise ValueError(f"predicate name {name!r} is reserved")
    policy_rule = Rule(tuple(policy.body), (Atom(POLICY_PRED, tuple(policy.free)),))
    return CQEInstance(ontology, dataset, policy, policy_rule)


# ---------------------------------------------------------------------------
# Equality and ⊤ axioms.
# ---------------------------------------------------------------------------


def equality_axioms(
    signature: Mapping[str, int], constants: Iterable[Term]
) -> tuple[list[Rule], list[Atom]]:
    """Finite axiomatization of ≈: reflexivity facts over the given constants
    plus symmetry, transitivity and one congruence rule per argument position.
    """
    x, y, z = var("x"), var("y"), var("z")
    rules: list[Rule] = [
        Rule((atom(EQ, x, y),), (atom(EQ, y, x),)),
        Rule((atom(EQ, x, y), atom(EQ, y, z)), (atom(EQ, x, z),)),
    ]
    for name in sorted(signature):
        arity = signature[name]
        if name == EQ or arity == 0:
            continue
        if arity == 1:
            rules.append(Rule((atom(name, x), atom(EQ, x, y)), (atom(name, y),)))
        else:
            rules.append(Rule((atom(name, x, z), atom(EQ, x, y)), (atom(name, y, z),)))
            rules.append(Rule((atom(name, z, x), atom(EQ, x, y)), (atom(name, z, y),)))
    facts = [atom(EQ, c, c) for c in sorted(set(constants), key=lambda t: (t.kind, t.name))]
    return rules, facts


def top_axioms(signature: Mapping[str, int]) -> list[Rule]:
    """One rule S(x⃗) → ⊤(x) per predicate S and variable position of x⃗."""
    x, y = var("x"), var("y")
    rules: list[Rule] = []
    for name in sorted(signature):
        arity = signature[name]
        if name == TOP or arity == 0:
            continue
        if arity == 1:
            rules.append(Rule((atom(name, x),), (atom(TOP, x),)))
        else:
            rules.append(Rule((atom(name, x, y),), (atom(TOP, x),)))
            rules.append(Rule((atom(name, x, y),), (atom(TOP, y),)))
    return rules
