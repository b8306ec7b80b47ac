"""Reader for domain and problem files in an S-expression PDDL-like syntax.

The grammar (documented in docs/language.md) is a reconstruction: it follows
the PDDL 3.1 surface style with numeric fluents, autonomous processes whose
rates are written ``(increase (f ...) (* #t EXPR))``, CNF global constraints,
and a ``(:bounds ...)`` section carrying the simulation configuration.
Keywords are case-insensitive, symbols case-preserving.  Every diagnostic
carries a 1-based file/line/column span.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import CnfError, ModelError, ParseError, SourceSpan, TypeCheckError
from .model import Action, FluentDecl, Process, SimConfig, Task
from .terms import (
    CLOCK_FLUENT,
    CLOCK_VAR,
    TRUE,
    And,
    Arith,
    Atom,
    Formula,
    Not,
    NumConst,
    ObjConst,
    Or,
    StateVar,
    Term,
    Trig,
    Truth,
)

KNOWN_REQUIREMENTS = {
    ":strips", ":typing", ":fluents", ":numeric-fluents", ":object-fluents",
    ":time", ":processes", ":continuous-effects", ":negative-preconditions",
    ":disjunctive-preconditions", ":equality", ":constraints", ":adl",
}

_NUM_RE = re.compile(r"[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?\Z")
_ARITH_HEADS = {"+": "+", "-": "-", "*": "*", "/": "/", "^": "pow", "pow": "pow",
                "nthroot": "nthroot"}
_REL_HEADS = {"=", "<", ">", "<=", ">="}


# ---------------------------------------------------------------------------
# S-expressions
# ---------------------------------------------------------------------------

@dataclass
class SSym:
    text: str
    span: SourceSpan

    @property
    def low(self) -> str:
        return self.text.lower()


@dataclass
class SNum:
    value: float
    text: str
    span: SourceSpan


@dataclass
class SList:
    items: list
    span: SourceSpan

    def __len__(self):
        return len(self.items)

    def __getitem__(self, i):
        return self.items[i]


def tokenize(text: str, filename: str) -> list[tuple[str, str, SourceSpan]]:
    tokens = []
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            line += 1
            col = 1
            i += 1
        elif c in " \t\r":
            col += 1
            i += 1
        elif c == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif c in "()":
            tokens.append((c, c, SourceSpan(filename, line, col)))
            col += 1
            i += 1
        else:
            j = i
            while j < n and text[j] not in " \t\r\n();":
                j += 1
            word = text[i:j]
            kind = "num" if _NUM_RE.match(word) else "sym"
            tokens.append((kind, word, SourceSpan(filename, line, col)))
            col += j - i
            i = j
    return tokens


def read_sexprs(text: str, filename: str) -> list:
    tokens = tokenize(text, filename)
    pos = 0

    def read_one():
        nonlocal pos
        if pos >= len(tokens):
            raise ParseError("unexpected end of input",
                             SourceSpan(filename, 1, 1) if not tokens else tokens[-1][2])
        kind, word, span = tokens[pos]
        pos += 1
        if kind == "(":
            items = []
            while True:
                if pos >= len(tokens):
                    raise ParseError("missing closing parenthesis", span)
                if tokens[pos][0] == ")":
                    pos += 1
                    return SList(items, span)
                items.append(read_one())
        if kind == ")":
            raise ParseError("unexpected ')'", span)
        if kind == "num":
            return SNum(float(word), word, span)
        return SSym(word, span)

    out = []
    while pos < len(tokens):
        out.append(read_one())
    return out


def sexpr_to_str(node) -> str:
    if isinstance(node, SSym):
        return node.text
    if isinstance(node, SNum):
        return node.text
    return "(" + " ".join(sexpr_to_str(i) for i in node.items) + ")"


def _head(node) -> str | None:
    if isinstance(node, SList) and node.items and isinstance(node[0], SSym):
        return node[0].low
    return None


def _as_sym(node, what: str) -> SSym:
    if not isinstance(node, SSym):
        raise ParseError(f"expected {what}", _span(node))
    return node


def _span(node) -> SourceSpan:
    return node.span


# ---------------------------------------------------------------------------
# Definitions
# ---------------------------------------------------------------------------

@dataclass
class OperatorSchema:
    name: str
    params: list[tuple[str, str]]          # (?var, type)
    precondition: object | None            # raw SNode
    effect: object                         # raw SNode
    span: SourceSpan


@dataclass
class DomainDef:
    name: str
    requirements: list[str] = field(default_factory=list)
    types: list[str] = field(default_factory=list)
    constants: dict[str, list[str]] = field(default_factory=dict)
    functions: list[FluentDecl] = field(default_factory=list)
    actions: list[OperatorSchema] = field(default_factory=list)
    processes: list[OperatorSchema] = field(default_factory=list)


@dataclass
class ProblemDef:
    name: str
    domain_name: str
    objects: dict[str, list[str]] = field(default_factory=dict)
    init: list[tuple[StateVar, object]] = field(default_factory=list)
    goal_node: object | None = None
    constraints_node: object | None = None
    bounds: dict[str, float] = field(default_factory=dict)


def _parse_typed_names(items: Sequence, what: str) -> list[tuple[str, str]]:
    """Parse ``a b - T c - U`` lists into (name, type) pairs."""
    out: list[tuple[str, str]] = []
    pending: list[SSym] = []
    i = 0
    while i < len(items):
        node = _as_sym(items[i], f"name in {what}")
        if node.text == "-":
            if not pending:
                raise ParseError(f"dangling '-' in {what}", node.span)
            if i + 1 >= len(items):
                raise ParseError(f"missing type after '-' in {what}", node.span)
            tnode = _as_sym(items[i + 1], f"type in {what}")
            for p in pending:
                out.append((p.text, tnode.text))
            pending = []
            i += 2
        else:
            pending.append(node)
            i += 1
    if pending:
        raise ParseError(f"names without a type in {what}: "
                         + " ".join(p.text for p in pending), pending[0].span)
    return out


def parse_domain(text: str, filename: str = "<domain>") -> DomainDef:
    """Parse a domain file into schemas; grounding happens at problem load."""
    forms = read_sexprs(text, filename)
    if len(forms) != 1 or _head(forms[0]) != "define":
        raise ParseError("expected a single (define (domain ...) ...) form",
                         forms[0].span if forms else SourceSpan(filename, 1, 1))
    top = forms[0]
    if len(top) < 2 or _head(top[1]) != "domain" or len(top[1]) != 2:
        raise ParseError("expected (domain NAME)", top.span)
    dom = DomainDef(name=_as_sym(top[1][1], "domain name").text)

    for section in top.items[2:]:
        head = _head(section)
        if head is None:
            raise ParseError("expected a (:section ...) list", _span(section))
        if head == ":requirements":
            for r in section.items[1:]:
                req = _as_sym(r, "requirement").low
                if req not in KNOWN_REQUIREMENTS:
                    raise ParseError(f"unsupported requirement {req}", r.span)
                dom.requirements.append(req)
        elif head == ":types":
            for tnode in section.items[1:]:
                t = _as_sym(tnode, "type name")
                if t.text == "-":
                    raise ParseError("type inheritance is not supported", t.span)
                dom.types.append(t.text)
        elif head == ":constants":
            for name, tname in _parse_typed_names(section.items[1:], ":constants"):
                dom.constants.setdefault(tname, []).append(name)
        elif head == ":functions":
            _parse_functions(section, dom)
        elif head in (":action", ":process"):
            schema = _parse_operator(section, head)
            (dom.actions if head == ":action" else dom.processes).append(schema)
        elif head == ":predicates":
            raise ParseError(
                "predicates are not supported; model booleans as object-typed "
                "fluents over a two-constant type", _span(section))
        else:
            raise ParseError(f"unknown domain section {head}", _span(section))
    return dom


def _parse_functions(section: SList, dom: DomainDef) -> None:
    items = section.items[1:]
    pending: list[tuple[SList, str, list[tuple[str, str]]]] = []
    i = 0
    while i < len(items):
        node = items[i]
        if isinstance(node, SSym) and node.text == "-":
            if not pending or i + 1 >= len(items):
                raise ParseError("misplaced '-' in :functions", node.span)
            tnode = _as_sym(items[i + 1], "value type")
            vt = _value_type(tnode)
            for decl_node, name, params in pending:
                dom.functions.append(
                    FluentDecl(name, tuple(t for _, t in params), vt))
            pending = []
            i += 2
            continue
        if not isinstance(node, SList) or not node.items:
            raise ParseError("expected (fluent ?arg - T ...) in :functions",
                             _span(node))
        name = _as_sym(node[0], "fluent name").text
        if name.lower() == CLOCK_FLUENT:
            raise ParseError(f"fluent name {CLOCK_FLUENT!r} is reserved for the clock",
                             node[0].span)
        params = _parse_typed_names(node.items[1:], f"fluent {name}") if len(node) > 1 else []
        for pname, _ in params:
            if not pname.startswith("?"):
                raise ParseError(f"fluent argument {pname!r} must be a ?variable",
                                 node.span)
        pending.append((node, name, params))
        i += 1
    # trailing declarations default to number
    for decl_node, name, params in pending:
        dom.functions.append(FluentDecl(name, tuple(t for _, t in params), "real"))


def _value_type(tnode: SSym) -> str:
    if tnode.low == "number":
        return "real"
    if tnode.low in ("int", "integer"):
        return "int"
    return tnode.text


def _parse_operator(section: SList, head: str) -> OperatorSchema:
    if len(section) < 2 or not isinstance(section[1], SSym):
        raise ParseError(f"expected {head} NAME ...", section.span)
    name = section[1].text
    params: list[tuple[str, str]] = []
    precondition = None
    effect = None
    i = 2
    while i < len(section.items):
        key = _as_sym(section[i], "operator keyword").low
        if i + 1 >= len(section.items):
            raise ParseError(f"missing value after {key}", section[i].span)
        value = section[i + 1]
        if key == ":parameters":
            if not isinstance(value, SList):
                raise ParseError("expected a parameter list", _span(value))
            params = _parse_typed_names(value.items, ":parameters")
            for pname, _ in params:
                if not pname.startswith("?"):
                    raise ParseError(f"parameter {pname!r} must start with '?'",
                                     value.span)
        elif key == ":precondition":
            precondition = value
        elif key == ":effect":
            effect = value
        else:
            raise ParseError(f"unknown operator keyword {key}", section[i].span)
        i += 2
    if effect is None:
        raise ParseError(f"{head} {name} has no :effect", section.span)
    return OperatorSchema(name, params, precondition, effect, section.span)


def parse_problem_def(text: str, filename: str = "<problem>") -> ProblemDef:
    forms = read_sexprs(text, filename)
    if len(forms) != 1 or _head(forms[0]) != "define":
        raise ParseError("expected a single (define (problem ...) ...) form",
                         forms[0].span if forms else SourceSpan(filename, 1, 1))
    top = forms[0]
    if len(top) < 2 or _head(top[1]) != "problem" or len(top[1]) != 2:
        raise ParseError("expected (problem NAME)", top.span)
    prob = ProblemDef(name=_as_sym(top[1][1], "problem name").text, domain_name="")

    for section in top.items[2:]:
        head = _head(section)
        if head == ":domain":
            prob.domain_name = _as_sym(section[1], "domain name").text
        elif head == ":objects":
            for name, tname in _parse_typed_names(section.items[1:], ":objects"):
                prob.objects.setdefault(tname, []).append(name)
        elif head == ":init":
            for entry in section.items[1:]:
                prob.init.append(_parse_init_entry(entry))
        elif head == ":goal":
            prob.goal_node = section[1] if len(section) > 1 else None
        elif head == ":constraints":
            prob.constraints_node = section[1] if len(section) > 1 else None
        elif head == ":bounds":
            _parse_bounds(section, prob)
        elif head == ":metric":
            _check_metric(section)
        else:
            raise ParseError(f"unknown problem section {head}",
                             _span(section))
    if not prob.domain_name:
        raise ParseError("problem lacks a (:domain NAME) section", top.span)
    if prob.goal_node is None:
        raise ParseError("problem lacks a (:goal ...) section", top.span)
    return prob


def _parse_init_entry(entry) -> tuple[StateVar, object]:
    if _head(entry) != "=" or len(entry) != 3:
        raise ParseError("init entries must be (= (fluent args...) value)",
                         _span(entry))
    target, value = entry[1], entry[2]
    if not isinstance(target, SList) or not target.items:
        raise ParseError("init target must be (fluent args...)", _span(target))
    fname = _as_sym(target[0], "fluent name").text
    args = tuple(_as_sym(a, "fluent argument").text for a in target.items[1:])
    if isinstance(value, SNum):
        return StateVar(fname, args), value.value
    return StateVar(fname, args), _as_sym(value, "init value").text


def _parse_bounds(section: SList, prob: ProblemDef) -> None:
    keys = {
        ":delta-max": "delta_max",
        ":delta-min": "delta_min",
        ":delta-z": "delta_z",
        ":delta-h-factor": "delta_h_factor",
        ":epsilon": "fixpoint_epsilon",
        ":max-fixpoint-iters": "max_fixpoint_iters",
    }
    items = section.items[1:]
    if len(items) % 2 != 0:
        raise ParseError(":bounds takes :key value pairs", section.span)
    for k, v in zip(items[::2], items[1::2]):
        key = _as_sym(k, "bounds key").low
        if key not in keys:
            raise ParseError(f"unknown bounds key {key}", k.span)
        if not isinstance(v, SNum):
            raise ParseError(f"bounds value for {key} must be numeric", _span(v))
        prob.bounds[keys[key]] = v.value


def _check_metric(section: SList) -> None:
    ok = (len(section) == 3 and isinstance(section[1], SSym)
          and section[1].low == "minimize" and _head(section[2]) == "total-time")
    if not ok:
        raise ParseError("only (:metric minimize (total-time)) is supported",
                         section.span)


# ---------------------------------------------------------------------------
# Grounding and task construction
# ---------------------------------------------------------------------------

class _Builder:
    """Builds ground terms/formulas from raw nodes under a parameter binding."""

    def __init__(self, domain: DomainDef, objects: Mapping[str, Sequence[str]]):
        self.domain = domain
        self.objects = {t: list(ns) for t, ns in objects.items()}
        self.object_type: dict[str, str] = {}
        for t, names in self.objects.items():
            for n in names:
                self.object_type[n] = t
        self.fluents = {f.name: f for f in domain.functions}

    # -- typing ---------------------------------------------------------------

    def type_of(self, term: Term, span: SourceSpan) -> str:
        if isinstance(term, NumConst):
            return "num"
        if isinstance(term, ObjConst):
            t = self.object_type.get(term.name)
            if t is None:
                raise TypeCheckError(f"unknown constant {term.name!r}", span)
            return t
        if isinstance(term, StateVar):
            if term == CLOCK_VAR:
                return "num"
            decl = self.fluents[term.fluent]
            return "num" if decl.value_type in ("real", "int") else decl.value_type
        return "num"

    # -- terms ----------------------------------------------------------------

    def term(self, node, env: Mapping[str, str]) -> Term:
        if isinstance(node, SNum):
            return NumConst(node.value)
        if isinstance(node, SSym):
            if node.text.startswith("?"):
                if node.text not in env:
                    raise ParseError(f"unbound parameter {node.text}", node.span)
                return ObjConst(env[node.text])
            if node.text == "#t":
                raise ParseError("#t may only appear in process rates "
                                 "(* #t EXPR)", node.span)
            if node.text in self.object_type:
                return ObjConst(node.text)
            raise ParseError(f"unknown constant {node.text!r}", node.span)
        if not isinstance(node, SList) or not node.items:
            raise ParseError("expected a term", _span(node))
        head = _as_sym(node[0], "term head")
        if head.low in _ARITH_HEADS:
            op = _ARITH_HEADS[head.low]
            operands = tuple(self.term(o, env) for o in node.items[1:])
            if op == "pow" and len(operands) != 2:
                raise ParseError("pow takes exactly 2 operands", node.span)
            if op == "nthroot" and len(operands) != 2:
                raise ParseError("nthroot takes exactly 2 operands (value, degree)",
                                 node.span)
            if not operands:
                raise ParseError(f"{head.text} needs operands", node.span)
            if op == "/" and len(operands) < 2:
                raise ParseError("/ takes at least 2 operands", node.span)
            self._require_numeric(operands, node)
            return Arith(op, operands)
        if head.low == "sqrt":
            if len(node) != 2:
                raise ParseError("sqrt takes 1 operand", node.span)
            operand = self.term(node[1], env)
            self._require_numeric((operand,), node)
            return Arith("nthroot", (operand, NumConst(2.0)))
        if head.low in ("sin", "cos", "tan"):
            if len(node) != 2:
                raise ParseError(f"{head.low} takes 1 operand", node.span)
            operand = self.term(node[1], env)
            self._require_numeric((operand,), node)
            return Trig(head.low, operand)
        return self.state_var(node, env)

    def _require_numeric(self, operands: Iterable[Term], node) -> None:
        for o in operands:
            if self.type_of(o, _span(node)) != "num":
                raise TypeCheckError(
                    f"object-typed operand in arithmetic: {o}", _span(node))

    def state_var(self, node: SList, env: Mapping[str, str]) -> StateVar:
        fname = _as_sym(node[0], "fluent name").text
        if fname.lower() == CLOCK_FLUENT and fname not in self.fluents:
            if len(node) != 1:
                raise ParseError("the clock (t) takes no arguments", node.span)
            return CLOCK_VAR
        decl = self.fluents.get(fname)
        if decl is None:
            raise ParseError(f"unknown fluent {fname!r}", node[0].span)
        args = []
        for a in node.items[1:]:
            sym = _as_sym(a, "fluent argument")
            name = env.get(sym.text, sym.text) if sym.text.startswith("?") else sym.text
            if sym.text.startswith("?") and sym.text not in env:
                raise ParseError(f"unbound parameter {sym.text}", sym.span)
            args.append(name)
        if len(args) != len(decl.arg_types):
            raise TypeCheckError(
                f"fluent {fname!r} takes {len(decl.arg_types)} arguments, got {len(args)}",
                node.span)
        for arg, t in zip(args, decl.arg_types):
            if self.object_type.get(arg) != t:
                raise TypeCheckError(f"argument {arg!r} is not of type {t!r}", node.span)
        return StateVar(fname, tuple(args))

    # -- formulas ---------------------------------------------------------------

    def formula(self, node, env: Mapping[str, str]) -> Formula:
        if node is None:
            return TRUE
        if isinstance(node, SSym) and node.low in ("true", "false"):
            return TRUE if node.low == "true" else Truth(False)
        if not isinstance(node, SList):
            raise ParseError("expected a formula", _span(node))
        if not node.items:
            return TRUE
        head = _as_sym(node[0], "formula head").low
        if head == "and":
            return And(tuple(self.formula(p, env) for p in node.items[1:])) \
                if len(node) > 1 else TRUE
        if head == "or":
            if len(node) == 1:
                return Truth(False)
            return Or(tuple(self.formula(p, env) for p in node.items[1:]))
        if head == "not":
            if len(node) != 2:
                raise ParseError("not takes 1 operand", node.span)
            return Not(self.formula(node[1], env))
        if head in _REL_HEADS:
            if len(node) != 3:
                raise ParseError(f"{head} takes 2 operands", node.span)
            lhs = self.term(node[1], env)
            rhs = self.term(node[2], env)
            tl = self.type_of(lhs, _span(node[1]))
            tr = self.type_of(rhs, _span(node[2]))
            if tl != tr:
                raise TypeCheckError(f"atom compares {tl} with {tr}", node.span)
            if tl != "num" and head != "=":
                raise TypeCheckError("ordering requires numeric terms", node.span)
            return Atom(lhs, head, rhs)
        raise ParseError(f"unknown formula head {head!r}", node.span)

    # -- effects ----------------------------------------------------------------

    def action_effects(self, node, env) -> tuple[tuple[StateVar, Term], ...]:
        out: list[tuple[StateVar, Term]] = []
        for e in self._effect_items(node):
            head = _head(e)
            if head not in ("assign", "increase", "decrease") or len(e) != 3:
                raise ParseError(
                    "action effects must be (assign|increase|decrease (f ...) EXPR)",
                    _span(e))
            target = self.state_var(e[1], env)
            if target == CLOCK_VAR:
                raise ParseError("the clock cannot be assigned", _span(e))
            rhs = self.term(e[2], env)
            t_target = ("num" if self.fluents[target.fluent].value_type in ("real", "int")
                        else self.fluents[target.fluent].value_type)
            t_rhs = self.type_of(rhs, _span(e[2]))
            if head in ("increase", "decrease"):
                if t_target != "num" or t_rhs != "num":
                    raise TypeCheckError(f"{head} requires numeric terms", _span(e))
                rhs = Arith("+" if head == "increase" else "-", (target, rhs))
            elif t_target != t_rhs:
                raise TypeCheckError(
                    f"assign of {t_rhs}-typed value to {t_target}-typed {target}",
                    _span(e))
            out.append((target, rhs))
        return tuple(out)

    def process_effects(self, node, env) -> tuple[tuple[StateVar, Term], ...]:
        out: list[tuple[StateVar, Term]] = []
        for e in self._effect_items(node):
            head = _head(e)
            if head not in ("increase", "decrease") or len(e) != 3:
                raise ParseError(
                    "process effects must be (increase|decrease (f ...) (* #t EXPR))",
                    _span(e))
            target = self.state_var(e[1], env)
            if target == CLOCK_VAR:
                raise ParseError("the clock advances implicitly", _span(e))
            if self.fluents[target.fluent].value_type != "real":
                raise TypeCheckError(
                    f"process target {target} must be real-valued", _span(e[1]))
            rate = self._rate(e[2], env)
            if head == "decrease":
                rate = Arith("-", (rate,))
            out.append((target, rate))
        return tuple(out)

    def _rate(self, node, env) -> Term:
        bad = ParseError("process rates must match (* #t EXPR) or (* EXPR #t)",
                         _span(node))
        if not isinstance(node, SList) or len(node) != 3 or _head(node) != "*":
            raise bad
        a, b = node[1], node[2]
        if isinstance(a, SSym) and a.low == "#t":
            expr = b
        elif isinstance(b, SSym) and b.low == "#t":
            expr = a
        else:
            raise bad
        rate = self.term(expr, env)
        if self.type_of(rate, _span(expr)) != "num":
            raise TypeCheckError("process rate must be numeric", _span(expr))
        return rate

    @staticmethod
    def _effect_items(node) -> list:
        if _head(node) == "and":
            return node.items[1:]
        return [node]


def _bindings(params: list[tuple[str, str]], objects: Mapping[str, Sequence[str]],
              span: SourceSpan) -> Iterable[dict[str, str]]:
    if not params:
        return [{}]
    pools = []
    for pname, ptype in params:
        if ptype not in objects:
            raise ParseError(f"unknown parameter type {ptype!r}", span)
        pools.append([(pname, obj) for obj in objects[ptype]])
    out: list[dict[str, str]] = [{}]
    for pool in pools:
        out = [dict(env, **{k: v}) for env in out for k, v in pool]
    return out


def _ground_name(name: str, params: list[tuple[str, str]], env: Mapping[str, str]) -> str:
    if not params:
        return name
    return name + " " + " ".join(env[p] for p, _ in params)


def build_task(domain: DomainDef, prob: ProblemDef,
               config_overrides: Mapping[str, object] | None = None) -> Task:
    """Ground the schemas over the object pools and assemble the task."""
    objects: dict[str, list[str]] = {t: [] for t in domain.types}
    for t, names in domain.constants.items():
        if t not in objects:
            raise ParseError(f"constants use undeclared type {t!r}")
        objects[t].extend(names)
    for t, names in prob.objects.items():
        if t not in objects:
            raise ParseError(f"objects use undeclared type {t!r}")
        objects[t].extend(names)

    builder = _Builder(domain, objects)

    actions: list[Action] = []
    for schema in domain.actions:
        for env in _bindings(schema.params, objects, schema.span):
            actions.append(Action(
                name=_ground_name(schema.name, schema.params, env),
                precondition=builder.formula(schema.precondition, env),
                effects=builder.action_effects(schema.effect, env),
            ))
    processes: list[Process] = []
    for schema in domain.processes:
        for env in _bindings(schema.params, objects, schema.span):
            processes.append(Process(
                name=_ground_name(schema.name, schema.params, env),
                condition=builder.formula(schema.precondition, env),
                effects=builder.process_effects(schema.effect, env),
            ))

    goal = builder.formula(prob.goal_node, {})
    constraints = _build_cnf(builder, prob.constraints_node)

    init_values: dict[StateVar, object] = {}
    for var, value in prob.init:
        decl = builder.fluents.get(var.fluent)
        if decl is None:
            raise ParseError(f"init assigns unknown fluent {var.fluent!r}")
        if var in init_values:
            raise ParseError(f"duplicate init value for {var}")
        if decl.value_type in ("real", "int"):
            if isinstance(value, str):
                raise TypeCheckError(f"init value for numeric {var} must be a number")
        else:
            if not isinstance(value, str):
                raise TypeCheckError(f"init value for {var} must be an object constant")
        init_values[var] = value

    settings: dict[str, object] = dict(prob.bounds)
    if config_overrides:
        settings.update({k: v for k, v in config_overrides.items() if v is not None})
    if "delta_max" not in settings:
        raise ParseError("delta-max is required: set (:bounds :delta-max X) "
                         "in the problem or pass --delta-max")
    try:
        config = SimConfig(**settings)  # type: ignore[arg-type]
        return Task(domain.functions, objects, init_values, actions, processes,
                    goal, constraints, config)
    except ModelError as e:
        raise ParseError(str(e)) from e


def _build_cnf(builder: _Builder, node) -> list[Formula]:
    """Parse :constraints into clause formulas, enforcing CNF shape."""
    if node is None:
        return []
    if _head(node) == "and":
        clause_nodes = node.items[1:]
    else:
        clause_nodes = [node]
    clauses: list[Formula] = []
    for cn in clause_nodes:
        head = _head(cn)
        if head == "or":
            lits = tuple(_cnf_literal(builder, l) for l in cn.items[1:])
            if not lits:
                raise CnfError("empty disjunction in :constraints", _span(cn))
            clauses.append(Or(lits) if len(lits) > 1 else lits[0])
        else:
            clauses.append(_cnf_literal(builder, cn))
    return clauses


def _cnf_literal(builder: _Builder, node) -> Formula:
    head = _head(node)
    if head == "not":
        if len(node) != 2 or _head(node[1]) not in _REL_HEADS:
            raise CnfError("constraint literals must be (not ATOM) or ATOM",
                           _span(node))
        inner = builder.formula(node[1], {})
        assert isinstance(inner, Atom)
        return Not(inner)
    if head in _REL_HEADS:
        f = builder.formula(node, {})
        assert isinstance(f, Atom)
        return f
    raise CnfError(
        "constraints must be a CNF: (and (or ATOM...) ...) over relational atoms",
        _span(node))


def parse_problem(text: str, domain: DomainDef, filename: str = "<problem>",
                  config_overrides: Mapping[str, object] | None = None) -> Task:
    """Parse a problem file against a parsed domain and build the ground task."""
    prob = parse_problem_def(text, filename)
    if prob.domain_name != domain.name:
        raise ParseError(
            f"problem references domain {prob.domain_name!r}, got {domain.name!r}")
    task = build_task(domain, prob, config_overrides)
    task.domain_def = domain  # type: ignore[attr-defined]
    task.problem_def = prob  # type: ignore[attr-defined]
    return task


# ---------------------------------------------------------------------------
# Writing (round-trip support)
# ---------------------------------------------------------------------------

def _fmt_num(v: float) -> str:
    return repr(float(v))


def term_to_sexpr(term: Term) -> str:
    if isinstance(term, NumConst):
        return _fmt_num(term.value)
    if isinstance(term, ObjConst):
        return term.name
    if isinstance(term, StateVar):
        return "(" + " ".join((term.fluent,) + term.args) + ")"
    if isinstance(term, Trig):
        return f"({term.op} {term_to_sexpr(term.operand)})"
    assert isinstance(term, Arith)
    return "(" + " ".join([term.op] + [term_to_sexpr(o) for o in term.operands]) + ")"


def formula_to_sexpr(formula: Formula) -> str:
    if isinstance(formula, Truth):
        return "(and)" if formula.value else "(or)"
    if isinstance(formula, Atom):
        return f"({formula.rel} {term_to_sexpr(formula.lhs)} {term_to_sexpr(formula.rhs)})"
    if isinstance(formula, Not):
        return f"(not {formula_to_sexpr(formula.inner)})"
    if isinstance(formula, And):
        return "(and " + " ".join(formula_to_sexpr(p) for p in formula.parts) + ")"
    assert isinstance(formula, Or)
    return "(or " + " ".join(formula_to_sexpr(p) for p in formula.parts) + ")"


def write_domain(dom: DomainDef) -> str:
    lines = [f"(define (domain {dom.name})"]
    if dom.requirements:
        lines.append("  (:requirements " + " ".join(dom.requirements) + ")")
    if dom.types:
        lines.append("  (:types " + " ".join(dom.types) + ")")
    if dom.constants:
        parts = [" ".join(names) + " - " + t for t, names in dom.constants.items()]
        lines.append("  (:constants " + " ".join(parts) + ")")
    if dom.functions:
        decls = []
        for f in dom.functions:
            args = " ".join(f"?a{i} - {t}" for i, t in enumerate(f.arg_types))
            inner = f.name if not args else f"{f.name} {args}"
            vt = {"real": "number", "int": "int"}.get(f.value_type, f.value_type)
            decls.append(f"({inner}) - {vt}")
        lines.append("  (:functions " + " ".join(decls) + ")")
    for kind, schemas in ((":action", dom.actions), (":process", dom.processes)):
        for s in schemas:
            lines.append(f"  ({kind} {s.name}")
            if s.params:
                plist = " ".join(f"{p} - {t}" for p, t in s.params)
                lines.append(f"    :parameters ({plist})")
            if s.precondition is not None:
                lines.append("    :precondition " + sexpr_to_str(s.precondition))
            lines.append("    :effect " + sexpr_to_str(s.effect) + ")")
    lines.append(")")
    return "\n".join(lines) + "\n"


def write_problem(prob: ProblemDef) -> str:
    lines = [f"(define (problem {prob.name})", f"  (:domain {prob.domain_name})"]
    if prob.objects:
        parts = [" ".join(names) + " - " + t for t, names in prob.objects.items()]
        lines.append("  (:objects " + " ".join(parts) + ")")
    if prob.init:
        entries = []
        for var, value in prob.init:
            target = "(" + " ".join((var.fluent,) + var.args) + ")"
            val = value if isinstance(value, str) else _fmt_num(value)  # type: ignore[arg-type]
            entries.append(f"(= {target} {val})")
        lines.append("  (:init " + " ".join(entries) + ")")
    if prob.goal_node is not None:
        lines.append("  (:goal " + sexpr_to_str(prob.goal_node) + ")")
    if prob.constraints_node is not None:
        lines.append("  (:constraints " + sexpr_to_str(prob.constraints_node) + ")")
    if prob.bounds:
        names = {
            "delta_max": ":delta-max", "delta_min": ":delta-min",
            "delta_z": ":delta-z", "delta_h_factor": ":delta-h-factor",
            "fixpoint_epsilon": ":epsilon", "max_fixpoint_iters": ":max-fixpoint-iters",
        }
        kv = " ".join(f"{names[k]} {_fmt_num(v)}" for k, v in prob.bounds.items())
        lines.append("  (:bounds " + kv + ")")
    lines.append(")")
    return "\n".join(lines) + "\n"
