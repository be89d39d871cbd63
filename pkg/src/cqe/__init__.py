"""Controlled query evaluation for Datalog and OWL 2 profile ontologies.

Certain answers over hidden data, confidentiality-preserving optimal censors
as anonymization views or UCQ obstructions, profile rewritings, and
brute-force verification oracles.
"""

from .model import (
    Atom,
    ConjunctiveQuery,
    CQEInstance,
    Dataset,
    Ontology,
    ProfileClass,
    Rule,
    ShapeFlags,
    Term,
    UnionQuery,
    anon,
    atom,
    bcq,
    classify_profile,
    classify_shape,
    const,
    equality_axioms,
    make_instance,
    query,
    rule,
    skolem,
    top_axioms,
    var,
)
from .reasoner import (
    HerbrandModel,
    Homomorphism,
    bcq_entails,
    canonical_query,
    certain_answers,
    chase,
    find_homomorphism,
    freeze,
)
from .sld import Goal, Proof, ProofGraph, ShapeError, build_proof_graph, enumerate_goals, prove, resolve_step
from .viewcensor import (
    ClosedSet,
    InvariantViolation,
    View,
    build_view_guarded,
    build_view_linear,
    build_view_multilinear,
    check_view_confidentiality,
    closed_subsets,
    extend_ontology,
    view_answers,
)
from .obstruction import (
    Obstruction,
    PseudoObstructionReport,
    build_obstruction_linear,
    obstruction_answers,
    pseudo_obstruction_bounded,
)
from .profiles import (
    RewriteResult,
    build_obstruction_ql,
    build_view_profile,
    skolem_rewrite,
)
from .oracle import (
    CQBound,
    VerificationReport,
    bounded_existential_chase,
    censors_agree,
    enumerate_cqs,
    verify_censor,
)
from .textio import Program, TextSyntaxError, parse_program, parse_query, serialize

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
