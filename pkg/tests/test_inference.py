import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gfml.inference import (
    AggregatedOutput,
    CompiledController,
    InferenceError,
    aggregate,
    defuzzify_centroid,
    fuzzify,
    infer,
    predict_batch,
    rule_strength,
)
from gfml.model import INPUT_NAMES, Clause, Rule

import oracles

ALL_HIGH = {"DBSN": 0.8, "DWSN": 0.8, "DBWR": 0.85, "DWWR": 0.85, "DBTMR": 0.6, "DWTMR": 0.6}
HIGH_CENTROID = oracles.trapezoid_centroid((0.7, 0.8, 1, 1))


def random_inputs(rng):
    return {
        n: float(rng.uniform(-1, 1) if n.endswith("TMR") else rng.uniform(0, 1))
        for n in INPUT_NAMES
    }


class TestFuzzify:
    def test_overlap(self, master):
        got = fuzzify(master.variable("DBWR"), 0.35)
        assert got == pytest.approx({"Low": 0.5, "Medium": 0.5, "High": 0.0}, abs=1e-12)

    def test_plateau(self, master):
        assert fuzzify(master.variable("DBSN"), 0.0) == {"Low": 1.0, "High": 0.0}

    def test_clamps(self, master):
        assert fuzzify(master.variable("DBTMR"), 1.2) == {"Low": 0.0, "High": 1.0}


class TestRuleStrength:
    def _degrees(self, values):
        return {f"V{i}": {"t": v} for i, v in enumerate(values)}

    def _rule(self, n, connector="and", weight=1.0):
        op = "MAX" if connector == "or" else "MIN"
        return Rule("R", tuple(Clause(f"V{i}", "t") for i in range(n)), Clause("Y", "t"), connector, op, weight)

    def test_and_min(self):
        assert rule_strength(self._rule(6), self._degrees([0.5, 1, 1, 1, 1, 1])) == 0.5

    def test_or_max(self):
        assert rule_strength(self._rule(2, "or"), self._degrees([0.2, 0.7])) == 0.7

    def test_zero_weight(self):
        assert rule_strength(self._rule(2, weight=0.0), self._degrees([0.9, 0.8])) == 0.0

    def test_weight_is_multiplicative(self):
        assert rule_strength(self._rule(2, weight=0.5), self._degrees([0.9, 0.8])) == pytest.approx(0.4)

    def test_dangling_clause_names_rule(self):
        rule = Rule("Rule7", (Clause("Nope", "t"),), Clause("Y", "t"))
        with pytest.raises(InferenceError, match="Rule7"):
            rule_strength(rule, {})


class TestAggregate:
    def test_all_zero(self, master):
        agg = aggregate(master, [0.0] * 144)
        assert not agg.degrees.any()
        assert agg.samples == 1000

    def test_single_rule_equals_consequent(self, master):
        idx = 143
        strengths = [0.0] * 144
        strengths[idx] = 1.0
        agg = aggregate(master, strengths, 200)
        term = master.output.term(master.rules[idx].consequent.term)
        assert np.allclose(agg.degrees, oracles.trapezoid(term.shape.params, agg.xs))

    def test_disjoint_consequents(self, master):
        low = next(i for i, r in enumerate(master.rules) if r.consequent.term == "Low")
        high = next(i for i, r in enumerate(master.rules) if r.consequent.term == "High")
        strengths = [0.0] * 144
        strengths[low], strengths[high] = 0.3, 0.6
        agg = aggregate(master, strengths, 500)
        out = master.output
        expect = np.maximum(
            np.minimum(0.3, oracles.trapezoid(out.term("Low").shape.params, agg.xs)),
            np.minimum(0.6, oracles.trapezoid(out.term("High").shape.params, agg.xs)),
        )
        assert np.allclose(agg.degrees, expect)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0, 1), min_size=144, max_size=144))
    def test_clipping_never_exceeds_strength(self, strengths):
        from gfml.model import master_controller

        fc = master_controller()
        agg = aggregate(fc, strengths, 100)
        assert agg.degrees.max(initial=0.0) <= max(strengths) + 1e-15

    def test_strength_count_checked(self, master):
        with pytest.raises(ValueError):
            aggregate(master, [1.0])


class TestDefuzzify:
    def test_high_term_centroid(self):
        assert HIGH_CENTROID == pytest.approx(0.873333, abs=1e-6)
        xs = np.linspace(0, 1, 1001)
        got = defuzzify_centroid(AggregatedOutput(xs, oracles.trapezoid((0.7, 0.8, 1, 1), xs)))
        assert got.value == pytest.approx(HIGH_CENTROID, abs=1e-5)
        assert not got.no_rule_fired

    def test_symmetric(self):
        xs = np.linspace(0, 1, 1001)
        got = defuzzify_centroid(AggregatedOutput(xs, oracles.trapezoid((0.1, 0.3, 0.7, 0.9), xs)))
        assert got.value == pytest.approx(0.5, abs=1e-12)

    def test_all_zero(self):
        xs = np.linspace(0, 1, 11)
        got = defuzzify_centroid(AggregatedOutput(xs, np.zeros(11)))
        assert got == (0.5, True)

    @pytest.mark.parametrize("params", [(0, 0, 0.2, 0.3), (0.2, 0.3, 0.4, 0.55), (0.4, 0.55, 0.7, 0.8), (0.05, 0.5, 0.5, 0.6)])
    def test_closed_form(self, params):
        xs = np.linspace(0, 1, 1001)
        got = defuzzify_centroid(AggregatedOutput(xs, oracles.trapezoid(params, xs))).value
        assert got == pytest.approx(oracles.trapezoid_centroid(params), abs=1e-5)


class TestInfer:
    def test_all_high_plateau(self, master):
        res = infer(master, ALL_HIGH)
        assert res.fired_rules == 1
        assert res.output == pytest.approx(HIGH_CENTROID, abs=1e-3)
        assert res.flags == ()

    def test_single_rule_reduction(self, master):
        # every input on its Low plateau
        res = infer(master, {"DBSN": 0.1, "DWSN": 0.1, "DBWR": 0.1, "DWWR": 0.1, "DBTMR": -0.8, "DWTMR": -0.8})
        assert res.fired_rules == 1
        assert master.rules[0].consequent.term == "Low"
        assert res.output == pytest.approx(oracles.trapezoid_centroid((0, 0, 0.2, 0.3)), abs=1e-5)

    def test_missing_input(self, master):
        inputs = dict(ALL_HIGH)
        del inputs["DWTMR"]
        with pytest.raises(InferenceError, match="DWTMR"):
            infer(master, inputs)

    def test_clamp_flag(self, master):
        res = infer(master, dict(ALL_HIGH, DBTMR=1.2))
        assert res.flags == ("clamped:DBTMR",)
        assert res.output == infer(master, ALL_HIGH).output

    def test_no_rule_fired(self):
        from gfml.model import FuzzyController, FuzzyTerm, FuzzyVariable, TrapezoidShape

        a = FuzzyVariable("A", "input", 0, 1, (FuzzyTerm("t", TrapezoidShape(0, 0, 0.2, 0.3)),))
        y = FuzzyVariable("Y", "output", 0, 2, (FuzzyTerm("t", TrapezoidShape(0, 0, 1, 2)),))
        fc = FuzzyController((a, y), (Rule("R", (Clause("A", "t"),), Clause("Y", "t")),))
        res = infer(fc, {"A": 0.9})
        assert res.output == 1.0 and res.no_rule_fired and "no-rule-fired" in res.flags

    def test_oracle_agreement(self, master):
        variables, rules = oracles.controller_tables(master)
        rng = np.random.default_rng(7)
        for _ in range(20):
            inputs = random_inputs(rng)
            assert infer(master, inputs).output == pytest.approx(
                oracles.mamdani_bruteforce(variables, rules, inputs), abs=1e-4
            )

    def test_random_controllers_agree_with_oracle(self):
        rng = np.random.default_rng(99)
        for _ in range(15):
            fc = oracles.random_controller(rng)
            variables, rules = oracles.controller_tables(fc)
            inputs = {v.name: float(rng.uniform(v.domain_left - 1, v.domain_right + 1)) for v in fc.inputs}
            assert infer(fc, inputs).output == pytest.approx(
                oracles.mamdani_bruteforce(variables, rules, inputs, n=200000),
                abs=1e-4 * fc.output.width,
            )

    def test_range_and_determinism(self, master):
        rng = np.random.default_rng(3)
        for _ in range(100):
            inputs = random_inputs(rng)
            a, b = infer(master, inputs).output, infer(master, inputs).output
            assert a == b
            assert 0.0 <= a <= 1.0

    def test_monotone_in_black_win_rate(self, master):
        # plateau points only: inside a transition band the clipped
        # consequents can pull the centroid back by a few thousandths
        plateaus = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]
        for dbsn in (0.1, 0.9):
            for dwwr in (0.1, 0.5, 0.9):
                for tmr in (-0.8, 0.8):
                    base = {"DBSN": dbsn, "DWSN": 0.9, "DWWR": dwwr, "DBTMR": tmr, "DWTMR": -tmr}
                    outs = [infer(master, dict(base, DBWR=x)).output for x in plateaus]
                    assert all(b >= a - 1e-12 for a, b in zip(outs, outs[1:]))


class TestCompiled:
    def test_matches_reference(self, master):
        rng = np.random.default_rng(11)
        rows = [random_inputs(rng) for _ in range(200)]
        X = np.array([[r[n] for n in INPUT_NAMES] for r in rows])
        got = CompiledController(master).predict(X)
        ref = np.array([infer(master, r).output for r in rows])
        assert np.max(np.abs(got - ref)) < 1e-12

    def test_random_controllers(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            fc = oracles.random_controller(rng)
            names = [v.name for v in fc.inputs]
            rows = [{v.name: float(rng.uniform(v.domain_left - 1, v.domain_right + 1)) for v in fc.inputs} for _ in range(20)]
            X = np.array([[r[n] for n in names] for r in rows])
            got, fired = CompiledController(fc).predict(X, 300, return_fired=True)
            for r, g, f in zip(rows, got, fired):
                ref = infer(fc, r, 300)
                assert g == pytest.approx(ref.output, abs=1e-12)
                assert f == (ref.fired_rules > 0)

    def test_column_order(self, master):
        names = list(reversed(INPUT_NAMES))
        X = np.array([[ALL_HIGH[n] for n in names]])
        assert predict_batch(master, X, names)[0] == pytest.approx(infer(master, ALL_HIGH).output, abs=1e-12)

    def test_missing_column(self, master):
        with pytest.raises(InferenceError, match="DWTMR"):
            CompiledController(master, INPUT_NAMES[:5])

    def test_params_override(self, master):
        cc = CompiledController(master)
        X = np.array([[ALL_HIGH[n] for n in INPUT_NAMES]])
        params = cc.params.copy()
        params[-1] = (0.5, 0.5, 0.5, 0.5)
        assert cc.predict(X, params=params)[0] == pytest.approx(0.5, abs=1e-12)
        assert cc.predict(X)[0] == pytest.approx(HIGH_CENTROID, abs=1e-3)
