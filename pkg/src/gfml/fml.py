"""Reading and writing controllers in the FML XML dialect.

The accepted dialect is the Mamdani/trapezoid subset: ``FuzzyController``
holding one ``KnowledgeBase`` of ``FuzzyVariable``/``FuzzyTerm``/
``TrapezoidShape`` elements and one ``RuleBase`` of ``Rule`` elements with
``Antecedent``/``Consequent`` clauses. Anything outside it is rejected with a
located diagnostic. docs/fml-schema.md has the full element reference.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from xml.parsers import expat
from xml.sax.saxutils import escape, quoteattr

from .files import atomic_write_text
from .model import (
    Clause,
    FuzzyController,
    FuzzyTerm,
    FuzzyVariable,
    HEDGES,
    Rule,
    RuleBaseSettings,
    TrapezoidShape,
    Violation,
    validate_controller,
)
from .numfmt import format_number


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" or "warning"
    line: int
    column: int
    message: str
    source: str = "<string>"

    def __str__(self):
        return f"{self.source}:{self.line}:{self.column}: {self.severity}: {self.message}"


class FmlError(ValueError):
    """Document rejected; ``diagnostics`` lists every problem found."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))


class InvalidControllerError(ValueError):
    def __init__(self, violations: list[Violation]):
        self.violations = list(violations)
        super().__init__("controller is invalid:\n" + "\n".join(f"  {v}" for v in self.violations))


@dataclass
class _Node:
    tag: str
    attrib: dict
    line: int
    column: int
    children: list = field(default_factory=list)
    text: str = ""


def _build_tree(text: str, source: str) -> _Node:
    parser = expat.ParserCreate()
    stack: list[_Node] = []
    root: list[_Node] = []

    def start(tag, attrib):
        node = _Node(tag, attrib, parser.CurrentLineNumber, parser.CurrentColumnNumber + 1)
        if stack:
            stack[-1].children.append(node)
        else:
            root.append(node)
        stack.append(node)

    def end(tag):
        stack.pop()

    def chars(data):
        if stack:
            stack[-1].text += data

    parser.StartElementHandler = start
    parser.EndElementHandler = end
    parser.CharacterDataHandler = chars
    try:
        parser.Parse(text, True)
    except expat.ExpatError as exc:
        raise FmlError([Diagnostic(
            "error", exc.lineno, exc.offset + 1, f"malformed XML: {expat.ErrorString(exc.code)}", source
        )]) from None
    return root[0]


# element -> (required attributes, optional attributes with defaults)
_ATTRS = {
    "FuzzyController": ((), {"ip": "localhost", "name": ""}),
    "KnowledgeBase": ((), {}),
    "FuzzyVariable": (("domainleft", "domainright", "name", "type"), {"scale": ""}),
    "FuzzyTerm": (("name",), {"hedge": "Normal"}),
    "TrapezoidShape": (("Param1", "Param2", "Param3", "Param4"), {}),
    "RuleBase": ((), {
        "activationMethod": "MIN", "andMethod": "MIN", "orMethod": "MAX",
        "name": "RuleBase1", "type": "mamdani",
    }),
    "Rule": (("name",), {"connector": "and", "weight": "1", "operator": "MIN"}),
    "Antecedent": ((), {}),
    "Consequent": ((), {}),
    "Clause": ((), {}),
    "Variable": ((), {}),
    "Term": ((), {}),
}


class _Reader:
    def __init__(self, source: str):
        self.source = source
        self.diagnostics: list[Diagnostic] = []
        self.locations: dict[tuple, tuple[int, int]] = {}

    def error(self, node: _Node, message: str):
        self.diagnostics.append(Diagnostic("error", node.line, node.column, message, self.source))

    def attrs(self, node: _Node) -> dict:
        required, optional = _ATTRS[node.tag]
        for key in node.attrib:
            if key not in required and key not in optional:
                self.error(node, f"unknown attribute {key!r} on <{node.tag}>")
        out = dict(optional)
        for key in required:
            if key not in node.attrib:
                self.error(node, f"<{node.tag}> is missing required attribute {key!r}")
                out[key] = None
        out.update({k: v for k, v in node.attrib.items() if k in out or k in required})
        return out

    def number(self, node: _Node, key: str, value):
        if value is None:
            return float("nan")
        try:
            return float(value.strip())
        except ValueError:
            self.error(node, f"attribute {key}={value!r} on <{node.tag}> is not a number")
            return float("nan")

    def children(self, node: _Node, allowed: tuple[str, ...]) -> list[_Node]:
        if node.text.strip():
            self.error(node, f"unexpected text inside <{node.tag}>")
        kept = []
        for child in node.children:
            if child.tag not in allowed:
                self.error(child, f"unexpected element <{child.tag}> inside <{node.tag}>")
            else:
                kept.append(child)
        return kept

    def exactly_one(self, node: _Node, tag: str, found: list[_Node]):
        matches = [c for c in found if c.tag == tag]
        if len(matches) != 1:
            self.error(node, f"<{node.tag}> must contain exactly one <{tag}>, found {len(matches)}")
        return matches[0] if matches else None

    def leaf_text(self, node: _Node) -> str:
        if node.children:
            self.error(node.children[0], f"<{node.tag}> must contain only text")
        self.attrs(node)
        value = node.text.strip()
        if not value:
            self.error(node, f"<{node.tag}> is empty")
        return value

    # -- elements --

    def controller(self, root: _Node) -> FuzzyController | None:
        if root.tag != "FuzzyController":
            self.error(root, f"root element must be <FuzzyController>, not <{root.tag}>")
            return None
        a = self.attrs(root)
        kids = self.children(root, ("KnowledgeBase", "RuleBase"))
        kb_node = self.exactly_one(root, "KnowledgeBase", kids)
        rb_node = self.exactly_one(root, "RuleBase", kids)
        if kb_node is not None and rb_node is not None and kids.index(kb_node) > kids.index(rb_node):
            self.error(rb_node, "<RuleBase> must follow <KnowledgeBase>")
        variables = self.knowledge_base(kb_node) if kb_node is not None else ()
        settings, rules = self.rule_base(rb_node) if rb_node is not None else (RuleBaseSettings(), ())
        self.locations[("controller",)] = (root.line, root.column)
        return FuzzyController(variables, rules, settings, name=a["name"], ip=a["ip"])

    def knowledge_base(self, node: _Node):
        self.attrs(node)
        return tuple(self.variable(c) for c in self.children(node, ("FuzzyVariable",)))

    def variable(self, node: _Node) -> FuzzyVariable:
        a = self.attrs(node)
        lo = self.number(node, "domainleft", a["domainleft"])
        hi = self.number(node, "domainright", a["domainright"])
        kind = a["type"]
        if kind is not None and kind not in ("input", "output"):
            self.error(node, f"FuzzyVariable type must be 'input' or 'output', not {kind!r}")
        name = a["name"] or ""
        self.locations[("variable", name)] = (node.line, node.column)
        terms = tuple(self.term(c, name) for c in self.children(node, ("FuzzyTerm",)))
        return FuzzyVariable(name, kind or "", lo, hi, terms, scale=a["scale"])

    def term(self, node: _Node, var_name: str) -> FuzzyTerm:
        a = self.attrs(node)
        if a["hedge"] not in HEDGES:
            self.error(node, f"unsupported hedge {a['hedge']!r} (supported: {', '.join(HEDGES)})")
        name = a["name"] or ""
        self.locations[("term", var_name, name)] = (node.line, node.column)
        kids = self.children(node, ("TrapezoidShape",))
        shape_node = self.exactly_one(node, "TrapezoidShape", kids)
        if shape_node is None:
            shape = TrapezoidShape(*([float("nan")] * 4))
        else:
            sa = self.attrs(shape_node)
            self.children(shape_node, ())
            shape = TrapezoidShape(*(self.number(shape_node, k, sa[k]) for k in ("Param1", "Param2", "Param3", "Param4")))
        return FuzzyTerm(name, shape, a["hedge"])

    def rule_base(self, node: _Node):
        a = self.attrs(node)
        settings = RuleBaseSettings(
            name=a["name"],
            activation_method=a["activationMethod"],
            and_method=a["andMethod"],
            or_method=a["orMethod"],
            inference_type=a["type"],
        )
        if (settings.activation_method, settings.and_method, settings.or_method, settings.inference_type) != (
            "MIN", "MIN", "MAX", "mamdani"
        ):
            self.error(node, "only mamdani rule bases with activationMethod=MIN, andMethod=MIN, orMethod=MAX are supported")
        rules = tuple(self.rule(c) for c in self.children(node, ("Rule",)))
        return settings, rules

    def rule(self, node: _Node) -> Rule:
        a = self.attrs(node)
        name = a["name"] or ""
        self.locations[("rule", name)] = (node.line, node.column)
        weight = self.number(node, "weight", a["weight"])
        kids = self.children(node, ("Antecedent", "Consequent"))
        ante = self.exactly_one(node, "Antecedent", kids)
        cons = self.exactly_one(node, "Consequent", kids)
        antecedent = self.clauses(ante) if ante is not None else ()
        consequent = self.clauses(cons) if cons is not None else ()
        if cons is not None and len(consequent) != 1:
            self.error(cons, f"<Consequent> must hold exactly one <Clause>, found {len(consequent)}")
        if ante is not None and not antecedent:
            self.error(ante, "<Antecedent> has no <Clause>")
        return Rule(
            name, antecedent, consequent[0] if consequent else Clause("", ""),
            connector=a["connector"], operator=a["operator"], weight=weight,
        )

    def clauses(self, node: _Node) -> tuple[Clause, ...]:
        self.attrs(node)
        out = []
        for c in self.children(node, ("Clause",)):
            self.attrs(c)
            kids = self.children(c, ("Variable", "Term"))
            var = self.exactly_one(c, "Variable", kids)
            term = self.exactly_one(c, "Term", kids)
            out.append(Clause(
                self.leaf_text(var) if var is not None else "",
                self.leaf_text(term) if term is not None else "",
            ))
        return tuple(out)


def parse_fml(text: str, source: str = "<string>") -> FuzzyController:
    """Parse an FML document into a validated controller.

    Raises :class:`FmlError` carrying every diagnostic when the document is
    malformed, outside the supported dialect, or semantically invalid.
    """
    root = _build_tree(text, source)
    reader = _Reader(source)
    fc = reader.controller(root)
    if reader.diagnostics:
        raise FmlError(reader.diagnostics)
    violations = validate_controller(fc)
    if violations:
        fallback = reader.locations[("controller",)]
        raise FmlError([
            Diagnostic("error", *reader.locations.get(v.ref, fallback), str(v), source)
            for v in violations
        ])
    return fc


def read_fml(path: str | Path) -> FuzzyController:
    path = Path(path)
    return parse_fml(path.read_text(encoding="utf-8"), str(path))


def _attrs(pairs) -> str:
    return " ".join(f"{k}={quoteattr(v)}" for k, v in pairs)


def serialize_fml(fc: FuzzyController) -> str:
    """Canonical FML text for a valid controller.

    Element order follows the controller, attribute order is fixed, and
    numbers use the shortest round-trip decimal, so equal controllers always
    serialize to identical bytes.
    """
    violations = validate_controller(fc)
    if violations:
        raise InvalidControllerError(violations)
    lines = ['<?xml version="1.0" ?>']
    emit = lines.append
    emit(f"<FuzzyController {_attrs([('ip', fc.ip), ('name', fc.name)])}>")
    emit("  <KnowledgeBase>")
    for var in fc.variables:
        emit("    <FuzzyVariable " + _attrs([
            ("domainleft", format_number(var.domain_left)),
            ("domainright", format_number(var.domain_right)),
            ("name", var.name),
            ("scale", var.scale),
            ("type", var.kind),
        ]) + ">")
        for term in var.terms:
            emit(f"      <FuzzyTerm {_attrs([('name', term.name), ('hedge', term.hedge)])}>")
            params = [(f"Param{i}", format_number(p)) for i, p in enumerate(term.shape.params, start=1)]
            emit(f"        <TrapezoidShape {_attrs(params)} />")
            emit("      </FuzzyTerm>")
        emit("    </FuzzyVariable>")
    emit("  </KnowledgeBase>")
    s = fc.settings
    emit("  <RuleBase " + _attrs([
        ("activationMethod", s.activation_method),
        ("andMethod", s.and_method),
        ("orMethod", s.or_method),
        ("name", s.name),
        ("type", s.inference_type),
    ]) + ">")
    for rule in fc.rules:
        emit("    <Rule " + _attrs([
            ("name", rule.name),
            ("connector", rule.connector),
            ("weight", format_number(rule.weight)),
            ("operator", rule.operator),
        ]) + ">")
        for tag, clauses in (("Antecedent", rule.antecedent), ("Consequent", (rule.consequent,))):
            emit(f"      <{tag}>")
            for c in clauses:
                emit("        <Clause>")
                emit(f"          <Variable>{escape(c.variable)}</Variable>")
                emit(f"          <Term>{escape(c.term)}</Term>")
                emit("        </Clause>")
            emit(f"      </{tag}>")
        emit("    </Rule>")
    emit("  </RuleBase>")
    emit("</FuzzyController>")
    return "\n".join(lines) + "\n"


def write_fml(path: str | Path, fc: FuzzyController) -> None:
    atomic_write_text(path, serialize_fml(fc))
