"""Fuzzy controller data model: trapezoids, variables, rules and validation.

All types are frozen dataclasses holding tuples, so a controller can be shared
freely between threads and used as a dictionary key.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

HEDGES = ("Normal",)
INPUT_NAMES = ("DBSN", "DWSN", "DBWR", "DWWR", "DBTMR", "DWTMR")
OUTPUT_NAME = "EWR"


class SchemaError(ValueError):
    """Raised when a controller cannot be built from the given pieces."""


@dataclass(frozen=True)
class TrapezoidShape:
    p1: float
    p2: float
    p3: float
    p4: float

    def __post_init__(self):
        for name in ("p1", "p2", "p3", "p4"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def params(self) -> tuple[float, float, float, float]:
        return (self.p1, self.p2, self.p3, self.p4)

    def __call__(self, x: float) -> float:
        return membership(self, x)


def membership(shape: TrapezoidShape, x: float) -> float:
    """Degree of ``x`` in a trapezoid.

    Degenerate shoulders (p1 == p2 or p3 == p4) are allowed; the shared
    abscissa takes the plateau value 1.
    """
    a, b, c, d = shape.p1, shape.p2, shape.p3, shape.p4
    if x < a or x > d:
        return 0.0
    if x < b:
        return (x - a) / (b - a)
    if x <= c:
        return 1.0
    return (d - x) / (d - c)


def membership_array(shape: TrapezoidShape, xs: np.ndarray) -> np.ndarray:
    """Vectorised :func:`membership`, bit-identical to the scalar version."""
    a, b, c, d = shape.params
    xs = np.asarray(xs, dtype=float)
    out = np.zeros_like(xs)
    rising = (xs >= a) & (xs < b)
    plateau = (xs >= b) & (xs <= c)
    falling = (xs > c) & (xs <= d)
    out[rising] = (xs[rising] - a) / (b - a)
    out[plateau] = 1.0
    out[falling] = (d - xs[falling]) / (d - c)
    return out


@dataclass(frozen=True)
class FuzzyTerm:
    name: str
    shape: TrapezoidShape
    hedge: str = "Normal"


@dataclass(frozen=True)
class FuzzyVariable:
    name: str
    kind: str  # "input" or "output"
    domain_left: float
    domain_right: float
    terms: tuple[FuzzyTerm, ...]
    scale: str = ""

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "domain_left", float(self.domain_left))
        object.__setattr__(self, "domain_right", float(self.domain_right))

    @property
    def term_names(self) -> tuple[str, ...]:
        return tuple(t.name for t in self.terms)

    @property
    def width(self) -> float:
        return self.domain_right - self.domain_left

    def term(self, name: str) -> FuzzyTerm:
        for t in self.terms:
            if t.name == name:
                return t
        raise KeyError(f"variable {self.name!r} has no term {name!r}")

    def clamp(self, x: float) -> float:
        return min(max(x, self.domain_left), self.domain_right)


@dataclass(frozen=True)
class Clause:
    variable: str
    term: str


@dataclass(frozen=True)
class Rule:
    name: str
    antecedent: tuple[Clause, ...]
    consequent: Clause
    connector: str = "and"
    operator: str = "MIN"
    weight: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "antecedent", tuple(self.antecedent))
        object.__setattr__(self, "weight", float(self.weight))


@dataclass(frozen=True)
class RuleBaseSettings:
    name: str = "RuleBase1"
    activation_method: str = "MIN"
    and_method: str = "MIN"
    or_method: str = "MAX"
    inference_type: str = "mamdani"


@dataclass(frozen=True)
class FuzzyController:
    variables: tuple[FuzzyVariable, ...]
    rules: tuple[Rule, ...]
    settings: RuleBaseSettings = field(default_factory=RuleBaseSettings)
    name: str = ""
    ip: str = "localhost"

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "rules", tuple(self.rules))

    def variable(self, name: str) -> FuzzyVariable:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(f"no variable named {name!r}")

    @property
    def inputs(self) -> tuple[FuzzyVariable, ...]:
        return tuple(v for v in self.variables if v.kind == "input")

    @property
    def output(self) -> FuzzyVariable:
        outs = [v for v in self.variables if v.kind == "output"]
        if len(outs) != 1:
            raise SchemaError(f"expected exactly one output variable, found {len(outs)}")
        return outs[0]

    @property
    def term_count(self) -> int:
        return sum(len(v.terms) for v in self.variables)

    def replace_rules(self, rules: Iterable[Rule]) -> "FuzzyController":
        return FuzzyController(self.variables, tuple(rules), self.settings, self.name, self.ip)


# ---------------------------------------------------------------------------
# Master knowledge base and rule grid


def _variable(name, kind, lo, hi, terms):
    return FuzzyVariable(
        name, kind, lo, hi,
        tuple(FuzzyTerm(tname, TrapezoidShape(*params)) for tname, params in terms),
    )


_SIM_TERMS = [("Low", (0, 0, 0.4, 0.6)), ("High", (0.4, 0.6, 1, 1))]
_WIN_TERMS = [("Low", (0, 0, 0.3, 0.4)), ("Medium", (0.3, 0.4, 0.6, 0.7)), ("High", (0.6, 0.7, 1, 1))]
_TOP_TERMS = [("Low", (-1, -1, -0.2, 0.2)), ("High", (-0.2, 0.2, 1, 1))]
_OUT_TERMS = [
    ("Low", (0, 0, 0.2, 0.3)),
    ("Medium_Low", (0.2, 0.3, 0.4, 0.55)),
    ("Medium_High", (0.4, 0.55, 0.7, 0.8)),
    ("High", (0.7, 0.8, 1, 1)),
]


def build_master_knowledge_base() -> tuple[FuzzyVariable, ...]:
    """The six Darkforest inputs and the ELF win-rate output, with their
    reference trapezoids."""
    return (
        _variable("DBSN", "input", 0, 1, _SIM_TERMS),
        _variable("DWSN", "input", 0, 1, _SIM_TERMS),
        _variable("DBWR", "input", 0, 1, _WIN_TERMS),
        _variable("DWWR", "input", 0, 1, _WIN_TERMS),
        _variable("DBTMR", "input", -1, 1, _TOP_TERMS),
        _variable("DWTMR", "input", -1, 1, _TOP_TERMS),
        _variable(OUTPUT_NAME, "output", 0, 1, _OUT_TERMS),
    )


_WIN_LEVEL = {"Low": 0, "Medium": 1, "High": 2}
_TOP_LEVEL = {"Low": 0, "High": 1}
_OUT_BY_RANK = ("Low", "Medium_Low", "Medium_High", "High")


def _black_rank(own_wr: str, opp_wr: str, own_top: str, opp_top: str) -> int:
    own, opp = _WIN_LEVEL[own_wr], _WIN_LEVEL[opp_wr]
    if own == opp:
        if own == 2:
            return 3
        if own == 0:
            return 0
        # Medium vs Medium: top-move rates decide, ties lean to the mover
        return 2 if _TOP_LEVEL[own_top] >= _TOP_LEVEL[opp_top] else 1
    diff = own - opp
    if diff == 2:
        return 3
    if diff == -2:
        return 0
    return 2 if diff == 1 else 1


def default_consequent(combo: Mapping[str, str], side: str = "black") -> str:
    """Shipped consequent map for the 144-rule grid.

    Only the win-rate pair and top-move pair matter; simulation numbers never
    change the consequent. ``side="white"`` mirrors the roles of black and
    white so the output reads as White's win rate. See docs/rule-base.md.
    """
    if side == "black":
        rank = _black_rank(combo["DBWR"], combo["DWWR"], combo["DBTMR"], combo["DWTMR"])
    elif side == "white":
        rank = _black_rank(combo["DWWR"], combo["DBWR"], combo["DWTMR"], combo["DBTMR"])
    else:
        raise ValueError(f"side must be 'black' or 'white', got {side!r}")
    return _OUT_BY_RANK[rank]


ConsequentFn = Callable[[Mapping[str, str]], str]


def build_full_grid_rule_base(
    kb: Sequence[FuzzyVariable], consequent_fn: ConsequentFn | None = None
) -> tuple[Rule, ...]:
    """One rule per combination of input terms.

    Combinations are enumerated with the first input variable outermost and
    the last innermost, each over its terms in declaration order. Rules are
    named Rule1..RuleN in that order.
    """
    if consequent_fn is None:
        consequent_fn = default_consequent
    inputs = [v for v in kb if v.kind == "input"]
    outputs = [v for v in kb if v.kind == "output"]
    if len(outputs) != 1:
        raise SchemaError(f"expected exactly one output variable, found {len(outputs)}")
    out = outputs[0]
    rules = []
    for i, terms in enumerate(itertools.product(*(v.term_names for v in inputs)), start=1):
        combo = {v.name: t for v, t in zip(inputs, terms)}
        cons = consequent_fn(combo)
        if cons not in out.term_names:
            raise SchemaError(f"consequent {cons!r} for {combo} is not a term of {out.name}")
        rules.append(Rule(
            f"Rule{i}",
            tuple(Clause(v, t) for v, t in combo.items()),
            Clause(out.name, cons),
        ))
    return tuple(rules)


def load_consequent_table(path: str | Path) -> ConsequentFn:
    """Read a consequent override table.

    The CSV header names every input variable plus the output variable
    (case-insensitive); each row gives one antecedent combination and its
    consequent term.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise SchemaError(f"{path}: empty consequent table")
    header = [h.strip().upper() for h in rows[0]]
    table: dict[frozenset, str] = {}
    out_col = None
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise SchemaError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
        cells = dict(zip(header, (c.strip() for c in row)))
        if out_col is None:
            candidates = [h for h in header if h not in INPUT_NAMES]
            if len(candidates) != 1:
                raise SchemaError(f"{path}: cannot tell which column is the output: {candidates}")
            out_col = candidates[0]
        key = frozenset((k, v) for k, v in cells.items() if k != out_col)
        if key in table:
            raise SchemaError(f"{path}:{lineno}: duplicate antecedent combination")
        table[key] = cells[out_col]

    def lookup(combo: Mapping[str, str]) -> str:
        key = frozenset((k.upper(), v) for k, v in combo.items())
        try:
            return table[key]
        except KeyError:
            raise SchemaError(f"consequent table {path} has no row for {dict(combo)}") from None

    return lookup


def master_controller(side: str = "black", consequent_fn: ConsequentFn | None = None) -> FuzzyController:
    kb = build_master_knowledge_base()
    if consequent_fn is None:
        consequent_fn = lambda combo: default_consequent(combo, side)  # noqa: E731
    return FuzzyController(kb, build_full_grid_rule_base(kb, consequent_fn))


# ---------------------------------------------------------------------------
# Validation


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str
    # ("variable", name), ("term", variable, term), ("rule", name) or ("controller",)
    ref: tuple = ("controller",)

    def __str__(self):
        return f"{self.kind}: {self.message}"


def _check_number(v) -> bool:
    return isinstance(v, float) and math.isfinite(v)


def validate_controller(fc: FuzzyController) -> list[Violation]:
    """Every structural problem in ``fc``; an empty list means valid."""
    out: list[Violation] = []
    s = fc.settings
    if (s.activation_method, s.and_method, s.or_method, s.inference_type) != ("MIN", "MIN", "MAX", "mamdani"):
        out.append(Violation(
            "settings",
            "rule base must be mamdani with activationMethod=MIN, andMethod=MIN, orMethod=MAX",
        ))

    by_name: dict[str, FuzzyVariable] = {}
    for var in fc.variables:
        vref = ("variable", var.name)
        if var.name in by_name:
            out.append(Violation("duplicate-variable", f"variable {var.name!r} declared twice", vref))
            continue
        by_name[var.name] = var
        if var.kind not in ("input", "output"):
            out.append(Violation("variable-kind", f"variable {var.name!r} has type {var.kind!r}", vref))
        lo, hi = var.domain_left, var.domain_right
        if not (_check_number(lo) and _check_number(hi) and lo < hi):
            out.append(Violation("domain", f"variable {var.name!r} domain [{lo}, {hi}] is empty or not finite", vref))
        if not var.terms:
            out.append(Violation("no-terms", f"variable {var.name!r} has no terms", vref))
        seen_terms = set()
        for term in var.terms:
            tref = ("term", var.name, term.name)
            if term.name in seen_terms:
                out.append(Violation("duplicate-term", f"term {var.name}.{term.name} declared twice", tref))
            seen_terms.add(term.name)
            if term.hedge not in HEDGES:
                out.append(Violation("hedge", f"term {var.name}.{term.name} has unsupported hedge {term.hedge!r}", tref))
            p = term.shape.params
            if not all(_check_number(x) for x in p):
                out.append(Violation("shape", f"term {var.name}.{term.name} has non-finite parameters {list(p)}", tref))
                continue
            if not (p[0] <= p[1] <= p[2] <= p[3]):
                out.append(Violation("ordering", f"term {var.name}.{term.name} parameters {list(p)} are not ordered", tref))
            if min(p) < lo or max(p) > hi:
                out.append(Violation(
                    "out-of-domain",
                    f"term {var.name}.{term.name} parameters {list(p)} leave domain [{lo}, {hi}]",
                    tref,
                ))

    outputs = [v for v in by_name.values() if v.kind == "output"]
    if not outputs:
        out.append(Violation("missing-output", "controller has no output variable"))
    elif len(outputs) > 1:
        out.append(Violation("multiple-outputs", f"controller has {len(outputs)} output variables"))

    def check_clause(rule, clause, want_kind, rref):
        var = by_name.get(clause.variable)
        if var is None:
            out.append(Violation("dangling-reference", f"{rule.name} references unknown variable {clause.variable!r}", rref))
            return False
        if clause.term not in var.term_names:
            out.append(Violation(
                "dangling-reference", f"{rule.name} references unknown term {clause.variable}.{clause.term}", rref))
            return False
        if var.kind != want_kind:
            out.append(Violation(
                "clause-kind", f"{rule.name} uses {var.kind} variable {var.name!r} where an {want_kind} is required", rref))
            return False
        return True

    seen_rules = set()
    seen_antecedents: dict[frozenset, str] = {}
    for rule in fc.rules:
        rref = ("rule", rule.name)
        if rule.name in seen_rules:
            out.append(Violation("duplicate-rule-name", f"rule name {rule.name!r} used twice", rref))
        seen_rules.add(rule.name)
        if (rule.connector, rule.operator) not in (("and", "MIN"), ("or", "MAX")):
            out.append(Violation(
                "connector", f"{rule.name} pairs connector {rule.connector!r} with operator {rule.operator!r}", rref))
        if not (_check_number(rule.weight) and 0.0 <= rule.weight <= 1.0):
            out.append(Violation("weight", f"{rule.name} weight {rule.weight} is outside [0, 1]", rref))
        if not rule.antecedent:
            out.append(Violation("empty-antecedent", f"{rule.name} has no antecedent clauses", rref))
        ok = all([check_clause(rule, c, "input", rref) for c in rule.antecedent])
        check_clause(rule, rule.consequent, "output", rref)
        if ok and rule.antecedent:
            key = frozenset((c.variable, c.term) for c in rule.antecedent)
            key = (rule.connector, key)
            if key in seen_antecedents:
                out.append(Violation(
                    "duplicate-antecedent",
                    f"{rule.name} repeats the antecedent of {seen_antecedents[key]}",
                    rref,
                ))
            else:
                seen_antecedents[key] = rule.name
    return out
