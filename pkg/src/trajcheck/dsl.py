"""Safety-rule language: lexer, parser, AST, validation and printer.

A model declares discrete state variables, actions (each with a
precondition and the kind of motion constraint it emits), mutual-exclusion
sets among actions, and prioritized rules::

    # comment
    statevar gap { safe, unsafe }
    action brake { pre: true; kind: MIN_BRAKE }
    action swerve { pre: not gap == safe; kind: NONE }
    mutex { brake, swerve }
    rule keep_distance priority 1 severity hard:
        when gap == unsafe require brake or swerve

Conditions combine ``var == value`` (and the sugar ``var != value``) with
``not``, ``and``, ``or`` and parentheses; ``not`` binds tightest, ``or``
loosest. :func:`parse` raises :class:`RuleModelError` carrying every
diagnostic with its line and column.
"""
from __future__ import annotations

import enum
import hashlib
import re
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

from .monitor import StateVariableCatalog


class ConstraintKind(enum.IntEnum):
    MIN_BRAKE = 0
    MAX_ACCEL = 1
    MAX_LAT_SPEED = 2
    MIN_GAP = 3
    NONE = 4

    @property
    def bit(self) -> int:
        return 0 if self is ConstraintKind.NONE else 1 << int(self)


#: The four kinds that carry a numeric bound, in bit order.
BOUNDED_KINDS = (ConstraintKind.MIN_BRAKE, ConstraintKind.MAX_ACCEL,
                 ConstraintKind.MAX_LAT_SPEED, ConstraintKind.MIN_GAP)

SEVERITIES = ("hard", "advisory")


@dataclass(frozen=True)
class Span:
    line: int
    col: int


@dataclass(frozen=True)
class Diagnostic:
    line: int
    col: int
    message: str

    def __str__(self) -> str:
        return f"{self.line}:{self.col}: {self.message}"


class RuleModelError(ValueError):
    def __init__(self, diagnostics: Sequence[Diagnostic]):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))


# --------------------------------------------------------------------- AST

@dataclass(frozen=True)
class Const:
    value: bool


@dataclass(frozen=True)
class Atom:
    var: str
    value: str
    var_span: Optional[Span] = field(default=None, compare=False, repr=False)
    value_span: Optional[Span] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Not:
    operand: "Condition"


@dataclass(frozen=True)
class And:
    operands: Tuple["Condition", ...]


@dataclass(frozen=True)
class Or:
    operands: Tuple["Condition", ...]


Condition = Union[Const, Atom, Not, And, Or]


@dataclass(frozen=True)
class Action:
    name: str
    precondition: Condition
    kind: ConstraintKind
    span: Optional[Span] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Mutex:
    actions: Tuple[str, ...]
    spans: Tuple[Span, ...] = field(default=(), compare=False, repr=False)


@dataclass(frozen=True)
class Rule:
    name: str
    priority: int
    severity: str
    condition: Condition
    requirement: Tuple[str, ...]
    span: Optional[Span] = field(default=None, compare=False, repr=False)
    requirement_spans: Tuple[Span, ...] = field(default=(), compare=False, repr=False)

    @property
    def hard(self) -> bool:
        return self.severity == "hard"


@dataclass(frozen=True)
class RuleModel:
    catalog: StateVariableCatalog
    actions: Tuple[Action, ...] = ()
    mutexes: Tuple[Mutex, ...] = ()
    rules: Tuple[Rule, ...] = ()

    def action(self, name: str) -> Action:
        for a in self.actions:
            if a.name == name:
                return a
        raise KeyError(name)

    def digest(self) -> bytes:
        return hashlib.sha256(print_model(self).encode("utf-8")).digest()


def atoms(cond: Condition) -> Iterator[Atom]:
    if isinstance(cond, Atom):
        yield cond
    elif isinstance(cond, Not):
        yield from atoms(cond.operand)
    elif isinstance(cond, (And, Or)):
        for op in cond.operands:
            yield from atoms(op)


def compile_condition(cond: Condition, catalog: StateVariableCatalog
                      ) -> Callable[[Sequence[int]], bool]:
    """Turn a condition into a predicate over catalog value-index tuples."""
    if isinstance(cond, Const):
        value = cond.value
        return lambda idx: value
    if isinstance(cond, Atom):
        pos = catalog.position(cond.var)
        want = catalog.domain(cond.var).index(cond.value)
        return lambda idx: idx[pos] == want
    if isinstance(cond, Not):
        inner = compile_condition(cond.operand, catalog)
        return lambda idx: not inner(idx)
    parts = [compile_condition(op, catalog) for op in cond.operands]
    if isinstance(cond, And):
        return lambda idx: all(p(idx) for p in parts)
    return lambda idx: any(p(idx) for p in parts)


def evaluate_condition(cond: Condition, values: Dict[str, str]) -> bool:
    """Evaluate against a ``{variable: value}`` mapping."""
    if isinstance(cond, Const):
        return cond.value
    if isinstance(cond, Atom):
        return values[cond.var] == cond.value
    if isinstance(cond, Not):
        return not evaluate_condition(cond.operand, values)
    if isinstance(cond, And):
        return all(evaluate_condition(op, values) for op in cond.operands)
    return any(evaluate_condition(op, values) for op in cond.operands)


# ------------------------------------------------------------------- lexer

KEYWORDS = frozenset({
    "statevar", "action", "mutex", "rule", "when", "require", "priority",
    "severity", "pre", "kind", "and", "or", "not", "true", "false",
})

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<int>[0-9]+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>==|!=|[{}(),:;])
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str  # "ident", "int", "kw", "op", "eof"
    text: str
    line: int
    col: int

    @property
    def span(self) -> Span:
        return Span(self.line, self.col)

    def describe(self) -> str:
        return "end of input" if self.kind == "eof" else repr(self.text)


def tokenize(source: str) -> List[Token]:
    tokens: List[Token] = []
    line, line_start, pos = 1, 0, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        col = pos - line_start + 1
        if m is None:
            raise RuleModelError([Diagnostic(line, col,
                                             f"lexical error: unexpected character {source[pos]!r}")])
        kind = m.lastgroup
        text = m.group()
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind == "ident":
            tokens.append(Token("kw" if text in KEYWORDS else "ident", text, line, col))
        elif kind in ("int", "op"):
            tokens.append(Token(kind, text, line, col))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


# ------------------------------------------------------------------ parser

class _SyntaxError(Exception):
    def __init__(self, token: Token, message: str):
        self.diagnostic = Diagnostic(token.line, token.col, message)


@dataclass
class _RawModel:
    statevars: List[Tuple[Token, List[Token]]] = field(default_factory=list)
    actions: List[Action] = field(default_factory=list)
    action_tokens: List[Token] = field(default_factory=list)
    kind_tokens: List[Token] = field(default_factory=list)
    mutexes: List[Mutex] = field(default_factory=list)
    mutex_tokens: List[Token] = field(default_factory=list)
    rules: List[Rule] = field(default_factory=list)
    rule_tokens: List[Tuple[Token, Token, Token]] = field(default_factory=list)


class _Parser:
    def __init__(self, tokens: List[Token]):
        self.tokens = tokens
        self.pos = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def at(self, kind: str, text: Optional[str] = None) -> bool:
        tok = self.tok
        return tok.kind == kind and (text is None or tok.text == text)

    def expect(self, kind: str, text: Optional[str] = None, what: Optional[str] = None) -> Token:
        if not self.at(kind, text):
            wanted = what or (repr(text) if text else kind)
            raise _SyntaxError(self.tok, f"syntax error: expected {wanted}, found {self.tok.describe()}")
        return self.advance()

    def ident(self, what: str) -> Token:
        return self.expect("ident", what=what)

    def parse(self) -> _RawModel:
        raw = _RawModel()
        while not self.at("eof"):
            tok = self.tok
            if self.at("kw", "statevar"):
                self.statevar(raw)
            elif self.at("kw", "action"):
                self.action(raw)
            elif self.at("kw", "mutex"):
                self.mutex(raw)
            elif self.at("kw", "rule"):
                self.rule(raw)
            else:
                raise _SyntaxError(tok, "syntax error: expected 'statevar', 'action', "
                                        f"'mutex' or 'rule', found {tok.describe()}")
        return raw

    def statevar(self, raw: _RawModel) -> None:
        self.advance()
        name = self.ident("variable name")
        self.expect("op", "{")
        values = [self.ident("value name")]
        while self.at("op", ","):
            self.advance()
            values.append(self.ident("value name"))
        self.expect("op", "}")
        raw.statevars.append((name, values))

    def action(self, raw: _RawModel) -> None:
        self.advance()
        name = self.ident("action name")
        self.expect("op", "{")
        self.expect("kw", "pre")
        self.expect("op", ":")
        pre = self.condition()
        self.expect("op", ";")
        self.expect("kw", "kind")
        self.expect("op", ":")
        kind_tok = self.ident("constraint kind")
        if self.at("op", ";"):
            self.advance()
        self.expect("op", "}")
        kind = ConstraintKind.__members__.get(kind_tok.text, ConstraintKind.NONE)
        raw.actions.append(Action(name.text, pre, kind, name.span))
        raw.action_tokens.append(name)
        raw.kind_tokens.append(kind_tok)

    def mutex(self, raw: _RawModel) -> None:
        start = self.advance()
        self.expect("op", "{")
        names = [self.ident("action name")]
        while self.at("op", ","):
            self.advance()
            names.append(self.ident("action name"))
        self.expect("op", "}")
        raw.mutexes.append(Mutex(tuple(t.text for t in names), tuple(t.span for t in names)))
        raw.mutex_tokens.append(start)

    def rule(self, raw: _RawModel) -> None:
        self.advance()
        name = self.ident("rule name")
        self.expect("kw", "priority")
        prio_tok = self.expect("int", what="priority number")
        self.expect("kw", "severity")
        sev_tok = self.ident("severity ('hard' or 'advisory')")
        self.expect("op", ":")
        self.expect("kw", "when")
        cond = self.condition()
        req_tok = self.expect("kw", "require")
        if not self.at("ident"):
            raise _SyntaxError(self.tok if self.tok.kind != "eof" else req_tok,
                               "empty requirement: expected at least one action name")
        names = [self.advance()]
        while self.at("kw", "or"):
            self.advance()
            names.append(self.ident("action name"))
        raw.rules.append(Rule(name.text, int(prio_tok.text), sev_tok.text, cond,
                              tuple(t.text for t in names), name.span,
                              tuple(t.span for t in names)))
        raw.rule_tokens.append((name, prio_tok, sev_tok))

    def condition(self) -> Condition:
        first = self.conjunction()
        if not self.at("kw", "or"):
            return first
        parts = [first]
        while self.at("kw", "or"):
            self.advance()
            parts.append(self.conjunction())
        return Or(tuple(parts))

    def conjunction(self) -> Condition:
        first = self.unary()
        if not self.at("kw", "and"):
            return first
        parts = [first]
        while self.at("kw", "and"):
            self.advance()
            parts.append(self.unary())
        return And(tuple(parts))

    def unary(self) -> Condition:
        if self.at("kw", "not"):
            self.advance()
            return Not(self.unary())
        if self.at("op", "("):
            self.advance()
            inner = self.condition()
            self.expect("op", ")")
            return inner
        if self.at("kw", "true") or self.at("kw", "false"):
            return Const(self.advance().text == "true")
        var = self.ident("variable name, 'not', '(' or a boolean")
        op = self.tok
        if not (self.at("op", "==") or self.at("op", "!=")):
            raise _SyntaxError(op, f"syntax error: expected '==' or '!=', found {op.describe()}")
        self.advance()
        value = self.ident("value name")
        atom = Atom(var.text, value.text, var.span, value.span)
        return Not(atom) if op.text == "!=" else atom


# -------------------------------------------------------------- validation

def _validate(raw: _RawModel) -> Tuple[RuleModel, List[Diagnostic]]:
    diags: List[Diagnostic] = []

    def report(span: Optional[Span], message: str) -> None:
        span = span or Span(0, 0)
        diags.append(Diagnostic(span.line, span.col, message))

    variables: List[Tuple[str, Tuple[str, ...]]] = []
    seen_vars: Dict[str, Tuple[str, ...]] = {}
    for name_tok, value_toks in raw.statevars:
        if name_tok.text in seen_vars:
            report(name_tok.span, f"duplicate name: state variable {name_tok.text!r}")
            continue
        values: List[str] = []
        for vt in value_toks:
            if vt.text in values:
                report(vt.span, f"duplicate name: value {vt.text!r} in {name_tok.text!r}")
            else:
                values.append(vt.text)
        if len(values) < 2:
            report(name_tok.span, f"state variable {name_tok.text!r} needs at least two values")
            continue
        seen_vars[name_tok.text] = tuple(values)
        variables.append((name_tok.text, tuple(values)))
    catalog = StateVariableCatalog(tuple(variables))

    def check_condition(cond: Condition) -> None:
        for atom in atoms(cond):
            if atom.var not in seen_vars:
                report(atom.var_span, f"unknown variable {atom.var!r}")
            elif atom.value not in seen_vars[atom.var]:
                report(atom.value_span, f"unknown value {atom.value!r} for variable {atom.var!r}")

    action_names: Dict[str, Action] = {}
    for action, name_tok, kind_tok in zip(raw.actions, raw.action_tokens, raw.kind_tokens):
        if action.name in action_names:
            report(name_tok.span, f"duplicate name: action {action.name!r}")
            continue
        if kind_tok.text not in ConstraintKind.__members__:
            report(kind_tok.span, f"unknown constraint kind {kind_tok.text!r}")
        check_condition(action.precondition)
        action_names[action.name] = action

    for mutex, start in zip(raw.mutexes, raw.mutex_tokens):
        for name, span in zip(mutex.actions, mutex.spans):
            if name not in action_names:
                report(span, f"unknown action {name!r}")
        if len(set(mutex.actions)) < 2:
            report(start.span, "mutex needs at least two distinct actions")

    rule_names: Dict[str, Rule] = {}
    for rule, (name_tok, prio_tok, sev_tok) in zip(raw.rules, raw.rule_tokens):
        if rule.name in rule_names:
            report(name_tok.span, f"duplicate name: rule {rule.name!r}")
        rule_names.setdefault(rule.name, rule)
        if rule.priority < 1:
            report(prio_tok.span, "priority must be a positive integer")
        if rule.severity not in SEVERITIES:
            report(sev_tok.span, f"unknown severity {rule.severity!r}")
        check_condition(rule.condition)
        for name, span in zip(rule.requirement, rule.requirement_spans):
            if name not in action_names:
                report(span, f"unknown action {name!r}")

    model = RuleModel(catalog, tuple(raw.actions), tuple(raw.mutexes), tuple(raw.rules))
    return model, diags


def parse(source: str) -> RuleModel:
    """Parse and validate ``source``; raise :class:`RuleModelError` on any problem."""
    tokens = tokenize(source)
    try:
        raw = _Parser(tokens).parse()
    except _SyntaxError as exc:
        raise RuleModelError([exc.diagnostic]) from None
    model, diags = _validate(raw)
    if diags:
        raise RuleModelError(diags)
    return model


def parse_file(path) -> RuleModel:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())


# ----------------------------------------------------------------- printer

def print_condition(cond: Condition) -> str:
    if isinstance(cond, Const):
        return "true" if cond.value else "false"
    if isinstance(cond, Atom):
        return f"{cond.var} == {cond.value}"
    if isinstance(cond, Not):
        inner = cond.operand
        text = print_condition(inner)
        return f"not ({text})" if isinstance(inner, (And, Or)) else f"not {text}"
    joiner = " and " if isinstance(cond, And) else " or "
    parts = []
    for op in cond.operands:
        text = print_condition(op)
        # keep nested n-ary nodes of either kind intact on re-parse
        if isinstance(op, (And, Or)):
            text = f"({text})"
        parts.append(text)
    return joiner.join(parts)


def print_model(model: RuleModel) -> str:
    sections: List[List[str]] = []
    if len(model.catalog):
        sections.append([f"statevar {name} {{ {', '.join(values)} }}"
                         for name, values in model.catalog])
    if model.actions:
        sections.append([f"action {a.name} {{ pre: {print_condition(a.precondition)}; "
                         f"kind: {a.kind.name} }}" for a in model.actions])
    if model.mutexes:
        sections.append([f"mutex {{ {', '.join(m.actions)} }}" for m in model.mutexes])
    if model.rules:
        sections.append([f"rule {r.name} priority {r.priority} severity {r.severity}: "
                         f"when {print_condition(r.condition)} require {' or '.join(r.requirement)}"
                         for r in model.rules])
    if not sections:
        return ""
    return "\n\n".join("\n".join(lines) for lines in sections) + "\n"
