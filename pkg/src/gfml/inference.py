"""Mamdani inference with MIN activation, MAX aggregation and a sampled
centroid defuzzifier.

:func:`infer` is the readable reference path. :func:`predict_batch` and
:class:`CompiledController` run the same computation through a compiled
kernel and are what training uses; the two agree to rounding error.
"""
from __future__ import annotations

import os
import warnings
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

import numba
import numpy as np

from .model import FuzzyController, FuzzyVariable, Rule, membership, membership_array

DEFAULT_SAMPLES = 1000


class InferenceError(ValueError):
    pass


def fuzzify(variable: FuzzyVariable, x: float) -> dict[str, float]:
    """Degree of every term of ``variable`` at ``x`` (clamped to the domain)."""
    x = variable.clamp(float(x))
    return {t.name: membership(t.shape, x) for t in variable.terms}


def rule_strength(rule: Rule, degrees: Mapping[str, Mapping[str, float]]) -> float:
    values = []
    for clause in rule.antecedent:
        try:
            values.append(degrees[clause.variable][clause.term])
        except KeyError:
            raise InferenceError(
                f"{rule.name}: clause {clause.variable}.{clause.term} does not resolve"
            ) from None
    if not values:
        raise InferenceError(f"{rule.name}: empty antecedent")
    combined = max(values) if rule.connector == "or" else min(values)
    return combined * rule.weight


@dataclass(frozen=True, eq=False)
class AggregatedOutput:
    xs: np.ndarray  # N + 1 equally spaced abscissae spanning the output domain
    degrees: np.ndarray

    @property
    def samples(self) -> int:
        return len(self.xs) - 1


def output_grid(variable: FuzzyVariable, samples: int = DEFAULT_SAMPLES) -> np.ndarray:
    if samples < 1:
        raise ValueError("samples must be a positive integer")
    return np.linspace(variable.domain_left, variable.domain_right, samples + 1)


def aggregate(controller: FuzzyController, strengths: Sequence[float], samples: int = DEFAULT_SAMPLES) -> AggregatedOutput:
    """Clip each rule's consequent at its strength and take the pointwise max."""
    if len(strengths) != len(controller.rules):
        raise ValueError(f"got {len(strengths)} strengths for {len(controller.rules)} rules")
    out_var = controller.output
    xs = output_grid(out_var, samples)
    curves = {t.name: membership_array(t.shape, xs) for t in out_var.terms}
    agg = np.zeros_like(xs)
    for rule, s in zip(controller.rules, strengths):
        if s > 0.0:
            np.maximum(agg, np.minimum(curves[rule.consequent.term], s), out=agg)
    return AggregatedOutput(xs, agg)


class Centroid(NamedTuple):
    value: float
    no_rule_fired: bool


def _trapezoid_weights(n_points: int) -> np.ndarray:
    w = np.ones(n_points)
    w[0] = w[-1] = 0.5
    return w


def defuzzify_centroid(agg: AggregatedOutput) -> Centroid:
    """Centroid of the sampled curve.

    End samples carry half weight (trapezoid rule), so the result converges
    to the continuous centroid at O(h**2) instead of O(h). An all-zero curve
    yields the domain midpoint with ``no_rule_fired`` set.
    """
    w = _trapezoid_weights(len(agg.xs)) * agg.degrees
    den = float(np.sum(w))
    if den <= 0.0:
        return Centroid(0.5 * (float(agg.xs[0]) + float(agg.xs[-1])), True)
    return Centroid(float(np.dot(w, agg.xs)) / den, False)


@dataclass(frozen=True)
class InferenceResult:
    output: float
    fired_rules: int
    clamped: tuple[str, ...] = ()
    no_rule_fired: bool = False

    @property
    def flags(self) -> tuple[str, ...]:
        out = tuple(f"clamped:{name}" for name in self.clamped)
        return out + (("no-rule-fired",) if self.no_rule_fired else ())


def infer(controller: FuzzyController, inputs: Mapping[str, float], samples: int = DEFAULT_SAMPLES) -> InferenceResult:
    degrees = {}
    clamped = []
    for var in controller.inputs:
        if var.name not in inputs:
            raise InferenceError(f"missing input variable {var.name!r}")
        x = float(inputs[var.name])
        if var.clamp(x) != x:
            clamped.append(var.name)
        degrees[var.name] = fuzzify(var, x)
    strengths = [rule_strength(r, degrees) for r in controller.rules]
    centroid = defuzzify_centroid(aggregate(controller, strengths, samples))
    return InferenceResult(
        centroid.value,
        sum(1 for s in strengths if s > 0.0),
        tuple(clamped),
        centroid.no_rule_fired,
    )


# ---------------------------------------------------------------------------
# Compiled batch path


def set_threads_from_env() -> None:
    """Honour ``GFML_THREADS`` as a cap on numba's worker threads."""
    value = os.environ.get("GFML_THREADS")
    if value:
        try:
            n = int(value)
        except ValueError:
            raise ValueError(f"GFML_THREADS must be a positive integer, got {value!r}") from None
        with warnings.catch_warnings():
            # starting the thread pool may complain about optional threading layers
            warnings.simplefilter("ignore", numba.NumbaWarning)
            numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))


@numba.njit(cache=True)
def _trap(a, b, c, d, x):
    if x < a or x > d:
        return 0.0
    if x < b:
        return (x - a) / (b - a)
    if x <= c:
        return 1.0
    return (d - x) / (d - c)


@numba.njit(cache=True)
def _centroid_one(X, k, params, in_rows, in_cols, rule_terms, rule_len, rule_or, rule_weight,
                  rule_cons, mu, first, last, wx, w, mid, deg, s, agg):
    T = in_rows.shape[0]
    To = mu.shape[0]
    for t in range(T):
        p = params[in_rows[t]]
        deg[t] = _trap(p[0], p[1], p[2], p[3], X[k, in_cols[t]])
    for t in range(To):
        s[t] = 0.0
    for r in range(rule_terms.shape[0]):
        n = rule_len[r]
        if rule_or[r]:
            m = 0.0
            for j in range(n):
                v = deg[rule_terms[r, j]]
                if v > m:
                    m = v
        else:
            m = 1.0
            for j in range(n):
                v = deg[rule_terms[r, j]]
                if v < m:
                    m = v
                    if m <= 0.0:
                        break
        m = m * rule_weight[r]
        c = rule_cons[r]
        if m > s[c]:
            s[c] = m
    i0 = agg.shape[0]
    i1 = 0
    for t in range(To):
        if s[t] > 0.0 and last[t] >= first[t]:
            if first[t] < i0:
                i0 = first[t]
            if last[t] + 1 > i1:
                i1 = last[t] + 1
    if i0 >= i1:
        return mid, 0.0
    agg[i0:i1] = 0.0
    for t in range(To):
        st = s[t]
        if st <= 0.0:
            continue
        for i in range(first[t], last[t] + 1):
            v = mu[t, i]
            if st < v:
                v = st
            if v > agg[i]:
                agg[i] = v
    # four independent partial sums; fixed order keeps results reproducible
    n0 = n1 = n2 = n3 = 0.0
    d0 = d1 = d2 = d3 = 0.0
    i = i0
    while i + 4 <= i1:
        n0 += wx[i] * agg[i]
        n1 += wx[i + 1] * agg[i + 1]
        n2 += wx[i + 2] * agg[i + 2]
        n3 += wx[i + 3] * agg[i + 3]
        d0 += w[i] * agg[i]
        d1 += w[i + 1] * agg[i + 1]
        d2 += w[i + 2] * agg[i + 2]
        d3 += w[i + 3] * agg[i + 3]
        i += 4
    while i < i1:
        n0 += wx[i] * agg[i]
        d0 += w[i] * agg[i]
        i += 1
    den = (d0 + d1) + (d2 + d3)
    if den <= 0.0:
        return mid, 0.0
    return ((n0 + n1) + (n2 + n3)) / den, den


@numba.njit(cache=True)
def _out_curves(params, out_rows, xs):
    To = out_rows.shape[0]
    n = xs.shape[0]
    mu = np.zeros((To, n))
    first = np.full(To, n, np.int64)
    last = np.full(To, -1, np.int64)
    for t in range(To):
        p = params[out_rows[t]]
        for i in range(n):
            v = _trap(p[0], p[1], p[2], p[3], xs[i])
            mu[t, i] = v
            if v > 0.0:
                if first[t] == n:
                    first[t] = i
                last[t] = i
    return mu, first, last


@numba.njit(cache=True)
def _batch(X, params, in_rows, in_cols, out_rows, rule_terms, rule_len, rule_or, rule_weight,
           rule_cons, xs, mid):
    S = X.shape[0]
    mu, first, last = _out_curves(params, out_rows, xs)
    n = xs.shape[0]
    w = np.ones(n)
    w[0] = 0.5
    w[n - 1] = 0.5
    wx = w * xs
    deg = np.empty(in_rows.shape[0])
    s = np.empty(out_rows.shape[0])
    agg = np.zeros(n)
    out = np.empty(S)
    fired = np.empty(S, np.bool_)
    for k in range(S):
        value, den = _centroid_one(X, k, params, in_rows, in_cols, rule_terms, rule_len, rule_or,
                                   rule_weight, rule_cons, mu, first, last, wx, w, mid, deg, s, agg)
        out[k] = value
        fired[k] = den > 0.0
    return out, fired


class CompiledController:
    """Array form of a controller for fast repeated evaluation.

    The trapezoid parameters live in a ``(term_count, 4)`` matrix ordered by
    variable then term, the same layout the genetic tuner uses, so a tuner can
    evaluate candidate parameter sets and consequents without rebuilding
    controller objects.
    """

    def __init__(self, controller: FuzzyController, input_names: Sequence[str] | None = None):
        self.controller = controller
        inputs = controller.inputs
        if input_names is None:
            input_names = [v.name for v in inputs]
        self.input_names = tuple(input_names)
        col = {name: i for i, name in enumerate(self.input_names)}
        missing = [v.name for v in inputs if v.name not in col]
        if missing:
            raise InferenceError(f"missing input variable(s): {', '.join(missing)}")

        row = 0
        term_row: dict[tuple[str, str], int] = {}
        params = []
        for var in controller.variables:
            for term in var.terms:
                term_row[(var.name, term.name)] = row
                params.append(term.shape.params)
                row += 1
        self.params = np.array(params, dtype=float).reshape(-1, 4)

        in_rows, in_cols, in_index = [], [], {}
        for var in inputs:
            for term in var.terms:
                in_index[(var.name, term.name)] = len(in_rows)
                in_rows.append(term_row[(var.name, term.name)])
                in_cols.append(col[var.name])
        self.in_rows = np.array(in_rows, dtype=np.int64)
        self.in_cols = np.array(in_cols, dtype=np.int64)

        out_var = controller.output
        self.output_variable = out_var
        self.out_rows = np.array([term_row[(out_var.name, t)] for t in out_var.term_names], dtype=np.int64)
        out_index = {t: i for i, t in enumerate(out_var.term_names)}

        width = max((len(r.antecedent) for r in controller.rules), default=1)
        n_rules = len(controller.rules)
        self.rule_terms = np.zeros((n_rules, max(width, 1)), dtype=np.int64)
        self.rule_len = np.zeros(n_rules, dtype=np.int64)
        self.rule_or = np.zeros(n_rules, dtype=np.bool_)
        self.rule_weight = np.ones(n_rules)
        self.rule_cons = np.zeros(n_rules, dtype=np.int64)
        for r, rule in enumerate(controller.rules):
            try:
                for j, c in enumerate(rule.antecedent):
                    self.rule_terms[r, j] = in_index[(c.variable, c.term)]
                self.rule_cons[r] = out_index[rule.consequent.term]
            except KeyError:
                raise InferenceError(f"{rule.name}: a clause does not resolve") from None
            self.rule_len[r] = len(rule.antecedent)
            self.rule_or[r] = rule.connector == "or"
            self.rule_weight[r] = rule.weight

        # columns the controller does not use are passed through unclamped
        by_name = {v.name: v for v in inputs}
        self._lo = np.array([by_name[n].domain_left if n in by_name else -np.inf for n in self.input_names])
        self._hi = np.array([by_name[n].domain_right if n in by_name else np.inf for n in self.input_names])

    def clamp(self, X: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(X, dtype=float), self._lo, self._hi)

    def predict(self, X: np.ndarray, samples: int = DEFAULT_SAMPLES, params: np.ndarray | None = None,
                consequents: np.ndarray | None = None, return_fired: bool = False):
        """Crisp outputs for each row of ``X`` (columns in ``input_names`` order)."""
        if samples < 1:
            raise ValueError("samples must be a positive integer")
        X = self.clamp(np.atleast_2d(X))
        P = self.params if params is None else np.ascontiguousarray(np.asarray(params, dtype=float).reshape(-1, 4))
        cons = self.rule_cons if consequents is None else np.ascontiguousarray(consequents, dtype=np.int64)
        lo = self.output_variable.domain_left
        hi = self.output_variable.domain_right
        xs = np.linspace(lo, hi, samples + 1)
        out, fired = _batch(np.ascontiguousarray(X), P, self.in_rows, self.in_cols, self.out_rows,
                            self.rule_terms, self.rule_len, self.rule_or, self.rule_weight, cons,
                            xs, 0.5 * (lo + hi))
        return (out, fired) if return_fired else out


def predict_batch(controller: FuzzyController, X: np.ndarray, input_names: Sequence[str] | None = None,
                  samples: int = DEFAULT_SAMPLES) -> np.ndarray:
    return CompiledController(controller, input_names).predict(X, samples)
