"""Text format for programs, queries and censor artifacts, plus JSON emission.

Grammar (EBNF sketch)::

    program := line*
    line    := ("rule:" rule | "fact:" atom | "policy:" query
                | "query:" query | "option:" key "=" value) "."
    rule    := atomlist "->" ("exists" varlist ".")? atomlist
    query   := head ":-" atomlist
    atom    := pred ["(" term ("," term)* ")"] | term "~" term

Identifiers starting with a lowercase letter are variables; uppercase-initial
identifiers, quoted strings and the prefixed forms ``_anon:...`` / ``_sk:...``
are constants.  Equality is written infix with ``~``.  Conjunction in rule
heads is sugar for one rule per head atom (except existential heads, which
must follow the qualified-existential shape and stay whole).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .model import (
    ANON,
    CONST,
    EQ,
    FROZEN,
    SKOLEM,
    Atom,
    ConjunctiveQuery,
    Dataset,
    Ontology,
    Rule,
    Term,
    UnionQuery,
    anon,
    const,
    is_internal_predicate,
    skolem,
    var,
)

ANON_MARKER = "_anon:"
SKOLEM_MARKER = "_sk:"
FROZEN_MARKER = "_frozen:"


class TextSyntaxError(ValueError):
    def __init__(self, message: str, line: int, column: int) -> None:
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


@dataclass
class Program:
    rules: list[Rule] = field(default_factory=list)
    facts: Dataset = field(default_factory=Dataset)
    policy: Optional[ConjunctiveQuery] = None
    queries: list[tuple[str, ConjunctiveQuery]] = field(default_factory=list)
    options: dict[str, str] = field(default_factory=dict)

    @property
    def ontology(self) -> Ontology:
        return Ontology.of(self.rules)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Program):
            return NotImplemented
        return (
            self.rules == other.rules
            and self.facts.facts == other.facts.facts
            and self.policy == other.policy
            and self.queries == other.queries
            and self.options == other.options
        )


# ---------------------------------------------------------------------------
# Tokenizer.
# ---------------------------------------------------------------------------

_PUNCT = {"(": "(", ")": ")", ",": ",", ".": ".", "~": "~", "=": "=", "|": "|", ":": ":"}


@dataclass
class _Token:
    kind: str  # ident, quoted, punct, arrow, from, eof
    text: str
    line: int
    column: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "%":  # comment to end of line
            while i < n and text[i] != "\n":
                i += 1
            continue
        if text.startswith("->", i):
            tokens.append(_Token("arrow", "->", line, col))
            i += 2
            col += 2
            continue
        if text.startswith(":-", i):
            tokens.append(_Token("from", ":-", line, col))
            i += 2
            col += 2
            continue
        if ch in _PUNCT:
            tokens.append(_Token("punct", ch, line, col))
            i += 1
            col += 1
            continue
        if ch == '"':
            j = i + 1
            while j < n and text[j] != '"':
                if text[j] == "\n":
                    raise TextSyntaxError("unterminated string", line, col)
                j += 1
            if j >= n:
                raise TextSyntaxError("unterminated string", line, col)
            tokens.append(_Token("quoted", text[i + 1 : j], line, col))
            col += j - i + 1
            i = j + 1
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] in "_:"):
                j += 1
            word = text[i:j]
            # ':' is only allowed inside the reserved constant markers
            if ":" in word and not (
                word.startswith(ANON_MARKER)
                or word.startswith(SKOLEM_MARKER)
                or word.startswith(FROZEN_MARKER)
            ):
                head, _, _ = word.partition(":")
                word = head
                j = i + len(head)
            tokens.append(_Token("ident", word, line, col))
            col += j - i
            i = j
            continue
        raise TextSyntaxError(f"unexpected character {ch!r}", line, col)
    tokens.append(_Token("eof", "", line, col))
    return tokens


class _Parser:
    def __init__(self, text: str) -> None:
        self.tokens = _tokenize(text)
        self.pos = 0
        self.arities: dict[str, int] = {}

    # -- token helpers ------------------------------------------------------

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def next(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: str, text: str | None = None) -> _Token:
        tok = self.next()
        if tok.kind != kind or (text is not None and tok.text != text):
            want = text or kind
            raise TextSyntaxError(f"expected {want!r}, found {tok.text!r}", tok.line, tok.column)
        return tok

    def error(self, message: str, tok: _Token | None = None) -> TextSyntaxError:
        tok = tok or self.peek()
        return TextSyntaxError(message, tok.line, tok.column)

    # -- terms and atoms ----------------------------------------------------

    def term(self, variables_ok: bool = True) -> Term:
        tok = self.next()
        if tok.kind == "quoted":
            return const(tok.text)
        if tok.kind != "ident":
            raise self.error(f"expected a term, found {tok.text!r}", tok)
        word = tok.text
        if word.startswith(ANON_MARKER):
            return anon(word[len(ANON_MARKER) :])
        if word.startswith(SKOLEM_MARKER):
            return skolem(word[len(SKOLEM_MARKER) :])
        if word.startswith(FROZEN_MARKER):
            return Term(FROZEN, word[len(FROZEN_MARKER) :])
        if word[0] == "_":
            raise self.error(f"identifier {word!r} may not start with '_'", tok)
        if word[0].isupper():
            return const(word)
        if not variables_ok:
            raise self.error(f"variable {word!r} not allowed here", tok)
        return var(word)

    def _register_arity(self, name: str, arity: int, tok: _Token) -> None:
        known = self.arities.get(name)
        if known is None:
            self.arities[name] = arity
        elif known != arity:
            raise self.error(
                f"predicate {name!r} used with arity {arity}, previously {known}", tok
            )

    def atom(self, ground: bool = False) -> Atom:
        tok = self.peek()
        after = self.tokens[self.pos + 1] if self.pos + 1 < len(self.tokens) else None
        is_bare_ident = (
            tok.kind == "ident" and tok.text[0].isalpha()
        )
        if is_bare_ident and after is not None and after.kind == "punct" and after.text == "(":
            # predicate with arguments; predicate names may use either case
            name = self.next().text
            args: list[Term] = []
            self.expect("punct", "(")
            if not (self.peek().kind == "punct" and self.peek().text == ")"):
                args.append(self.term(variables_ok=not ground))
                while self.peek().kind == "punct" and self.peek().text == ",":
                    self.next()
                    args.append(self.term(variables_ok=not ground))
            self.expect("punct", ")")
            if len(args) > 2:
                raise self.error(f"predicate {name!r} has arity {len(args)} > 2", tok)
            self._register_arity(name, len(args), tok)
            return Atom(name, tuple(args))
        first = self.term(variables_ok=not ground)
        if self.peek().kind == "punct" and self.peek().text == "~":
            self.next()
            second = self.term(variables_ok=not ground)
            return Atom(EQ, (first, second))
        # otherwise `first` must be a bare propositional predicate
        if tok.kind != "ident" or first.kind != CONST or not first.name[0].isalpha():
            raise self.error("expected a predicate", tok)
        self._register_arity(first.name, 0, tok)
        return Atom(first.name, ())

    def atom_list(self, ground: bool = False) -> list[Atom]:
        atoms = [self.atom(ground=ground)]
        while self.peek().kind == "punct" and self.peek().text == ",":
            self.next()
            atoms.append(self.atom(ground=ground))
        return atoms

    # -- statements ---------------------------------------------------------

    def rule(self) -> list[Rule]:
        tok = self.peek()
        body = self.atom_list()
        self.expect("arrow")
        exist: list[Term] = []
        if self.peek().kind == "ident" and self.peek().text == "exists":
            self.next()
            exist.append(self.term())
            while self.peek().kind == "punct" and self.peek().text == ",":
                self.next()
                exist.append(self.term())
            self.expect("punct", ".")
            head = self.atom_list()
            return [self._existential_rule(body, head, exist, tok)]
        head = self.atom_list()
        body_vars = {t for a in body for t in a.variables()}
        rules = []
        for h in head:
            for t in h.variables():
                if t not in body_vars:
                    raise self.error(f"unsafe rule: head variable {t.name} not in body", tok)
            rules.append(Rule(tuple(body), (h,)))
        return rules

    def _existential_rule(
        self, body: list[Atom], head: list[Atom], exist: list[Term], tok: _Token
    ) -> Rule:
        # Only the qualified-existential shape A(x) -> exists y. R(x,y), B(y)
        # is accepted; anything else is a syntax error.
        if (
            len(exist) != 1
            or len(body) != 1
            or body[0].arity != 1
            or len(head) != 2
            or not all(t.is_variable for t in exist)
        ):
            raise self.error("existential heads must have the shape: A(x) -> exists y. R(x,y), B(y)", tok)
        y = exist[0]
        x = body[0].args[0]
        if not x.is_variable:
            raise self.error("the body of an existential rule must be A(x) with x a variable", tok)
        role, filler = head
        if role.arity == 1 and filler.arity == 2:
            role, filler = filler, role
        if role.args != (x, y) or filler.args != (y,):
            raise self.error("existential heads must have the shape: A(x) -> exists y. R(x,y), B(y)", tok)
        return Rule(tuple(body), (role, filler), frozenset(exist))

    def named_query(self) -> tuple[str, ConjunctiveQuery]:
        tok = self.peek()
        name_tok = self.expect("ident")
        name = name_tok.text
        free: list[Term] = []
        self.expect("punct", "(")
        if not (self.peek().kind == "punct" and self.peek().text == ")"):
            free.append(self.term())
            while self.peek().kind == "punct" and self.peek().text == ",":
                self.next()
                free.append(self.term())
        self.expect("punct", ")")
        self.expect("from")
        if self.peek().kind == "punct" and self.peek().text == ".":
            raise self.error("empty query body", tok)
        body = self.atom_list()
        for t in free:
            if not t.is_variable:
                raise self.error(f"free term {t.name!r} is not a variable", name_tok)
        try:
            q = ConjunctiveQuery(tuple(free), tuple(body))
        except ValueError as exc:
            raise self.error(str(exc), name_tok)
        return name, q

    def program(self) -> Program:
        prog = Program()
        while self.peek().kind != "eof":
            tok = self.expect("ident")
            keyword = tok.text
            if keyword == "rule":
                self._colon()
                prog.rules.extend(self.rule())
            elif keyword == "fact":
                self._colon()
                fact = self.atom(ground=True)
                prog.facts = prog.facts.union([fact])
            elif keyword == "policy":
                self._colon()
                if prog.policy is not None:
                    raise self.error("a program may declare at most one policy", tok)
                _, prog.policy = self.named_query()
            elif keyword == "query":
                self._colon()
                prog.queries.append(self.named_query())
            elif keyword == "option":
                self._colon()
                key = self.expect("ident").text
                self.expect("punct", "=")
                value_tok = self.next()
                if value_tok.kind not in ("ident", "quoted"):
                    raise self.error("expected an option value", value_tok)
                prog.options[key] = value_tok.text
            else:
                raise self.error(f"unknown statement {keyword!r}", tok)
            self.expect("punct", ".")
        return prog

    def _colon(self) -> None:
        self.expect("punct", ":")


def parse_program(text: str) -> Program:
    parser = _Parser(text)
    return parser.program()


def parse_query(text: str) -> ConjunctiveQuery:
    """Parse a single ``Q(x,...) :- body`` query; the trailing dot is optional."""
    parser = _Parser(text)
    _, q = parser.named_query()
    if parser.peek().kind == "punct" and parser.peek().text == ".":
        parser.next()
    if parser.peek().kind != "eof":
        tok = parser.peek()
        raise TextSyntaxError(f"trailing input {tok.text!r}", tok.line, tok.column)
    return q


# ---------------------------------------------------------------------------
# Serialization.
# ---------------------------------------------------------------------------

_IDENT_OK = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_")


def term_text(t: Term) -> str:
    if t.kind == ANON:
        return ANON_MARKER + t.name
    if t.kind == SKOLEM:
        return SKOLEM_MARKER + t.name
    if t.kind == FROZEN:
        return FROZEN_MARKER + t.name
    if t.kind == CONST:
        if t.name and t.name[0].isupper() and set(t.name) <= _IDENT_OK:
            return t.name
        return f'"{t.name}"'
    return t.name  # variable


def atom_text(a: Atom) -> str:
    if a.predicate == EQ:
        return f"{term_text(a.args[0])} ~ {term_text(a.args[1])}"
    if not a.args:
        return a.predicate
    return f"{a.predicate}({', '.join(term_text(t) for t in a.args)})"


def rule_text(r: Rule) -> str:
    body = ", ".join(atom_text(a) for a in r.body)
    head = ", ".join(atom_text(a) for a in r.head)
    if r.exist_vars:
        names = ", ".join(sorted(t.name for t in r.exist_vars))
        return f"{body} -> exists {names}. {head}"
    return f"{body} -> {head}"


def query_text(q: ConjunctiveQuery, name: str = "Q") -> str:
    head = ", ".join(t.name for t in q.free)
    body = ", ".join(atom_text(a) for a in q.body)
    return f"{name}({head}) :- {body}"


def bcq_text(q: ConjunctiveQuery) -> str:
    """Boolean CQ in formula style: ``exists y. Likes(John, y)``."""
    body = ", ".join(atom_text(a) for a in q.body)
    seen: list[str] = []
    for name in (t.name for a in q.body for t in a.args if t.is_variable):
        if name not in seen:
            seen.append(name)
    if seen:
        return f"exists {', '.join(seen)}. {body}"
    return body


def union_text(disjuncts: Sequence[ConjunctiveQuery]) -> str:
    """Disjunction of Boolean CQs; the empty disjunction is ``false``."""
    if not disjuncts:
        return "false"
    return " | ".join(bcq_text(q) for q in disjuncts)


def sorted_facts(facts: Iterable[Atom]) -> list[Atom]:
    return sorted(facts, key=lambda f: (f.predicate, tuple(term_text(t) for t in f.args)))


def dataset_text(ds: Dataset | Iterable[Atom], user_only: bool = False) -> str:
    facts = ds.facts if isinstance(ds, Dataset) else frozenset(ds)
    if user_only:
        facts = frozenset(f for f in facts if not is_internal_predicate(f.predicate))
    return "\n".join(f"fact: {atom_text(f)}." for f in sorted_facts(facts))


def program_text(prog: Program) -> str:
    lines: list[str] = []
    for key in sorted(prog.options):
        lines.append(f"option: {key} = {prog.options[key]}.")
    for r in prog.rules:
        lines.append(f"rule: {rule_text(r)}.")
    for f in sorted_facts(prog.facts):
        lines.append(f"fact: {atom_text(f)}.")
    if prog.policy is not None:
        lines.append(f"policy: {query_text(prog.policy, 'P')}.")
    for name, q in prog.queries:
        lines.append(f"query: {query_text(q, name)}.")
    return "\n".join(lines) + "\n"


def serialize(value) -> str:
    """Render a Program, Dataset, UnionQuery, CQ or answer set as text."""
    if isinstance(value, Program):
        return program_text(value)
    if isinstance(value, Dataset):
        return dataset_text(value)
    if isinstance(value, UnionQuery):
        return union_text(value.disjuncts)
    if isinstance(value, ConjunctiveQuery):
        return query_text(value) if value.free else bcq_text(value)
    if isinstance(value, (set, frozenset, list, tuple)):
        return answers_json(value)
    raise TypeError(f"cannot serialize {type(value).__name__}")


# ---------------------------------------------------------------------------
# JSON emission.
# ---------------------------------------------------------------------------


def answer_rows(answers: Iterable[tuple[Term, ...]]) -> list[list[str]]:
    return sorted([term_text(t) for t in row] for row in answers)


def answers_json(answers: Iterable[tuple[Term, ...]]) -> str:
    return json.dumps({"answers": answer_rows(answers)})


def atom_to_json(a: Atom) -> dict:
    return {
        "predicate": a.predicate,
        "args": [term_text(t) if t.is_constant else {"var": t.name} for t in a.args],
    }


def _term_from_json(value) -> Term:
    if isinstance(value, dict):
        return var(value["var"])
    return _parse_constant_text(value)


def _parse_constant_text(text: str) -> Term:
    if text.startswith(ANON_MARKER):
        return anon(text[len(ANON_MARKER) :])
    if text.startswith(SKOLEM_MARKER):
        return skolem(text[len(SKOLEM_MARKER) :])
    if text.startswith(FROZEN_MARKER):
        return Term(FROZEN, text[len(FROZEN_MARKER) :])
    return const(text)


def atom_from_json(data: dict) -> Atom:
    return Atom(data["predicate"], tuple(_term_from_json(v) for v in data["args"]))


def bcq_to_json(q: ConjunctiveQuery) -> dict:
    return {"atoms": [atom_to_json(a) for a in q.body], "text": bcq_text(q)}


def bcq_from_json(data: dict) -> ConjunctiveQuery:
    return ConjunctiveQuery((), tuple(atom_from_json(a) for a in data["atoms"]))
