"""Command-line front end.

One verb per invocation: classify, chase, answer, build-view,
build-obstruction, censored-answer, verify, proof-graph.  Inputs are program
files in the text format; outputs are deterministic text or JSON on stdout,
censor artifacts are JSON files.  Exit codes: 1 parse error, 2 classification
precondition unmet, 3 internal invariant violation.
"""
from __future__ import annotations

import argparse
import json
import sys
from typing import Optional

from . import textio
from .model import CQEInstance, Dataset, Term, make_instance
from .obstruction import (
    Obstruction,
    build_obstruction_linear,
    obstruction_answers,
    pseudo_obstruction_bounded,
)
from .oracle import CQBound, verify_censor
from .profiles import (
    build_obstruction_ql,
    build_view_profile,
    profile_view_answers,
)
from .reasoner import NonDatalogError, certain_answers, chase
from .sld import ShapeError, build_proof_graph
from .textio import Program, TextSyntaxError, parse_program, parse_query, term_text
from .viewcensor import (
    CopyInfo,
    InvariantViolation,
    View,
    build_view_guarded,
    build_view_linear,
    build_view_multilinear,
    check_view_confidentiality,
    view_answers,
)

EXIT_PARSE = 1
EXIT_PRECONDITION = 2
EXIT_INVARIANT = 3


class CliError(Exception):
    def __init__(self, message: str, code: int) -> None:
        super().__init__(message)
        self.code = code


def _load_program(path: str) -> Program:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return parse_program(handle.read())
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_PARSE)
    except TextSyntaxError as exc:
        raise CliError(f"{path}: {exc}", EXIT_PARSE)


def _instance(prog: Program, path: str) -> CQEInstance:
    if prog.policy is None:
        raise CliError(f"{path}: no policy declared", EXIT_PRECONDITION)
    try:
        return make_instance(prog.ontology, prog.facts, prog.policy)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_PARSE)


def _query(args, prog: Program):
    if args.query:
        try:
            return parse_query(args.query)
        except TextSyntaxError as exc:
            raise CliError(f"--query: {exc}", EXIT_PARSE)
    if prog.queries:
        return prog.queries[0][1]
    raise CliError("no query given (use --query or a query: line)", EXIT_PRECONDITION)


def _profile_option(args, prog: Program) -> Optional[str]:
    return args.profile or prog.options.get("profile")


def _select_method(args, prog: Program, instance: CQEInstance) -> str:
    method = args.method
    if method != "auto":
        return method
    profile = _profile_option(args, prog)
    if profile in ("ql", "el"):
        return profile
    flags = instance.shape()
    if flags.linear:
        return "linear"
    if flags.multi_linear and flags.tree_shaped:
        return "multilinear"
    if flags.guarded and flags.tree_shaped:
        return "guarded"
    failed = "guarded" if not flags.guarded else "tree_shaped"
    raise CliError(f"no applicable view construction: {failed}=false", EXIT_PRECONDITION)


# ---------------------------------------------------------------------------
# Artifact (de)serialization.
# ---------------------------------------------------------------------------


def view_to_json(view: View) -> dict:
    return {
        "type": "view",
        "method": view.method,
        "facts": [textio.atom_to_json(f) for f in textio.sorted_facts(view.facts)],
        "copies": [
            {
                "original": term_text(original),
                "constant": term_text(info.constant),
                "labels": sorted(info.labels),
            }
            for original in sorted(view.copy_sets, key=term_text)
            for info in view.copy_sets[original]
        ],
    }


def view_from_json(data: dict) -> View:
    facts = Dataset(frozenset(textio.atom_from_json(f) for f in data["facts"]))
    copy_sets: dict[Term, list[CopyInfo]] = {}
    for entry in data.get("copies", ()):
        original = textio._parse_constant_text(entry["original"])
        info = CopyInfo(
            original,
            textio._parse_constant_text(entry["constant"]),
            frozenset(entry["labels"]),
        )
        copy_sets.setdefault(original, []).append(info)
    return View(facts, {k: tuple(v) for k, v in copy_sets.items()}, data.get("method", "guarded"))


def obstruction_to_json(obstruction: Obstruction) -> dict:
    return {
        "type": "obstruction",
        "disjuncts": [textio.bcq_to_json(q) for q in obstruction.disjuncts],
        "text": textio.union_text(obstruction.disjuncts),
    }


def obstruction_from_json(data: dict) -> Obstruction:
    return Obstruction(tuple(textio.bcq_from_json(d) for d in data["disjuncts"]))


def _load_censor(args) -> View | Obstruction:
    path = getattr(args, "view_artifact", None) or getattr(args, "obstruction_artifact", None)
    if path is None:
        raise CliError("a censor artifact is required (--view or --obstruction)", EXIT_PRECONDITION)
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot load censor artifact {path}: {exc}", EXIT_PARSE)
    if data.get("type") == "view":
        return view_from_json(data)
    if data.get("type") == "obstruction":
        return obstruction_from_json(data)
    raise CliError(f"{path}: unknown artifact type {data.get('type')!r}", EXIT_PARSE)


# ---------------------------------------------------------------------------
# Verbs.
# ---------------------------------------------------------------------------


def cmd_classify(args) -> int:
    prog = _load_program(args.input)
    if prog.policy is not None:
        instance = _instance(prog, args.input)
        flags = instance.shape()
        profile = instance.profile()
    else:
        ontology = prog.ontology
        flags = ontology.shape()
        from .model import classify_profile

        profile = classify_profile(ontology)
    payload = {"shape": flags.as_dict(), "profile": profile.as_dict() | {"recognized": profile.recognized}}
    if args.json:
        print(json.dumps(payload, indent=2))
    else:
        shape_bits = " ".join(f"{k}={str(v).lower()}" for k, v in flags.as_dict().items())
        prof_bits = " ".join(f"{k}={str(v).lower()}" for k, v in payload["profile"].items())
        print(f"shape: {shape_bits}")
        print(f"profile: {prof_bits}")
    return 0


def cmd_chase(args) -> int:
    prog = _load_program(args.input)
    try:
        model = chase(prog.ontology, prog.facts)
    except NonDatalogError as exc:
        raise CliError(str(exc), EXIT_PRECONDITION)
    if args.json:
        print(json.dumps({"facts": [textio.atom_text(f) for f in textio.sorted_facts(model.facts)]}))
    else:
        print(textio.dataset_text(model.facts))
    return 0


def cmd_answer(args) -> int:
    prog = _load_program(args.input)
    q = _query(args, prog)
    try:
        answers = certain_answers(q, prog.ontology, prog.facts)
    except NonDatalogError as exc:
        raise CliError(str(exc), EXIT_PRECONDITION)
    print(textio.answers_json(answers))
    return 0


def cmd_build_view(args) -> int:
    prog = _load_program(args.input)
    instance = _instance(prog, args.input)
    method = _select_method(args, prog, instance)
    builders = {
        "guarded": build_view_guarded,
        "multilinear": build_view_multilinear,
        "linear": build_view_linear,
        "ql": lambda inst: build_view_profile(inst, "ql"),
        "el": lambda inst: build_view_profile(inst, "el"),
    }
    view = builders[method](instance)
    check_instance = instance if instance.ontology.is_datalog else _rewritten(instance)
    if not check_view_confidentiality(check_instance, view):
        raise CliError("post-build safety check failed", EXIT_INVARIANT)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            json.dump(view_to_json(view), handle, indent=2, sort_keys=True)
    facts = view.facts if args.full_view else view.user_facts()
    print(textio.dataset_text(facts))
    return 0


def cmd_build_obstruction(args) -> int:
    prog = _load_program(args.input)
    instance = _instance(prog, args.input)
    profile = _profile_option(args, prog)
    method = args.method if args.method != "auto" else ("ql" if profile == "ql" else "linear")
    if method == "ql":
        obstruction = build_obstruction_ql(instance)
    elif method == "linear":
        obstruction = build_obstruction_linear(instance)
    else:
        raise CliError(f"--method {method} is not an obstruction method", EXIT_PRECONDITION)
    bound = CQBound.for_instance(instance, max_atoms=2, max_vars=2)
    report = verify_censor(
        instance if instance.ontology.is_datalog else _rewritten(instance), obstruction, bound
    )
    if not report.confidentiality_ok:
        raise CliError("post-build safety check failed", EXIT_INVARIANT)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            json.dump(obstruction_to_json(obstruction), handle, indent=2, sort_keys=True)
    print(textio.union_text(obstruction.disjuncts))
    return 0


def _rewritten(instance: CQEInstance) -> CQEInstance:
    from .profiles import prepare_profile_instance

    rewritten, _, _ = prepare_profile_instance(instance, "auto")
    return rewritten


def cmd_censored_answer(args) -> int:
    prog = _load_program(args.input)
    instance = _instance(prog, args.input)
    q = _query(args, prog)
    censor = _load_censor(args)
    if isinstance(censor, View):
        if instance.ontology.is_datalog:
            answers = view_answers(instance, censor, q)
        else:
            answers = profile_view_answers(instance, censor, q)
    else:
        if not instance.ontology.is_datalog:
            from .profiles import profile_certain_answers
            from .obstruction import is_blocked

            certain = profile_certain_answers(instance, q)
            answers = {a for a in certain if not is_blocked(q.instantiate(a), censor)}
        else:
            answers = obstruction_answers(instance, censor, q)
    print(textio.answers_json(answers))
    return 0


def cmd_verify(args) -> int:
    prog = _load_program(args.input)
    instance = _instance(prog, args.input)
    censor = _load_censor(args)
    if not instance.ontology.is_datalog:
        instance = _rewritten(instance)
    bound = CQBound.for_instance(instance, max_atoms=args.bound_atoms, max_vars=args.bound_vars)
    report = verify_censor(instance, censor, bound)
    print(report.to_json())
    return 0


def cmd_proof_graph(args) -> int:
    prog = _load_program(args.input)
    instance = _instance(prog, args.input)
    graph = build_proof_graph(instance)
    dot = graph.to_dot(instance.ontology)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write(dot + "\n")
    else:
        print(dot)
    if args.figure:
        from .figures import render_proof_graph

        render_proof_graph(graph, args.figure)
    return 0


def cmd_pseudo_obstruction(args) -> int:
    prog = _load_program(args.input)
    instance = _instance(prog, args.input)
    report = pseudo_obstruction_bounded(instance, args.depth)
    payload = {
        "status": report.status,
        "goals_seen": report.goals_seen,
        "safe_goals": [textio.bcq_text(q) for q in report.s_set],
        "upsilon": [textio.bcq_text(q) for q in report.upsilon],
    }
    print(json.dumps(payload, indent=2))
    return 0


# ---------------------------------------------------------------------------
# Entry point.
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cqe",
        description="Controlled query evaluation: certain answers and optimal censors for Datalog ontologies.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p, query=False, method=False, bounds=False, censor=False, out=False):
        p.add_argument("input", help="program file")
        p.add_argument("--json", action="store_true", help="JSON output where applicable")
        p.add_argument("--profile", choices=["rl", "ql", "el"], default=None)
        if query:
            p.add_argument("--query", help='query text, e.g. "Q(x) :- ThrFan(x)"')
        if method:
            p.add_argument(
                "--method",
                choices=["guarded", "multilinear", "linear", "ql", "el", "auto"],
                default="auto",
            )
        if bounds:
            p.add_argument("--bound-atoms", type=int, default=3, dest="bound_atoms")
            p.add_argument("--bound-vars", type=int, default=3, dest="bound_vars")
        if censor:
            p.add_argument("--view", dest="view_artifact", help="view artifact (JSON)")
            p.add_argument(
                "--obstruction", dest="obstruction_artifact", help="obstruction artifact (JSON)"
            )
        if out:
            p.add_argument("-o", "--out", help="write the artifact/output to this file")

    p = sub.add_parser("classify", help="print shape flags and profile membership")
    common(p)
    p.set_defaults(fn=cmd_classify)

    p = sub.add_parser("chase", help="print the least Herbrand model")
    common(p)
    p.set_defaults(fn=cmd_chase)

    p = sub.add_parser("answer", help="print certain answers to a query")
    common(p, query=True)
    p.set_defaults(fn=cmd_answer)

    p = sub.add_parser("build-view", help="build an optimal anonymization view")
    common(p, method=True, out=True)
    p.add_argument("--full-view", action="store_true", help="include internal detail")
    p.set_defaults(fn=cmd_build_view)

    p = sub.add_parser("build-obstruction", help="build an optimal obstruction")
    common(p, method=True, out=True)
    p.set_defaults(fn=cmd_build_obstruction)

    p = sub.add_parser("censored-answer", help="answer a query through a censor artifact")
    common(p, query=True, censor=True)
    p.set_defaults(fn=cmd_censored_answer)

    p = sub.add_parser("verify", help="brute-force verification of a censor artifact")
    common(p, bounds=True, censor=True)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("proof-graph", help="emit the proof graph as DOT (and optionally a figure)")
    common(p, out=True)
    p.add_argument("--figure", help="also render the graph to this image file")
    p.set_defaults(fn=cmd_proof_graph)

    p = sub.add_parser("pseudo-obstruction", help="bounded pseudo-obstruction diagnostic")
    common(p)
    p.add_argument("--depth", type=int, default=4)
    p.set_defaults(fn=cmd_pseudo_obstruction)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except TextSyntaxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ShapeError as exc:
        flag = f" ({exc.failed_flag}=false)" if exc.failed_flag else ""
        print(f"error: {exc}{flag}", file=sys.stderr)
        return EXIT_PRECONDITION
    except NonDatalogError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except InvariantViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
