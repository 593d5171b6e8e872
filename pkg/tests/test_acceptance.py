"""Acceptance criteria, one test each.

Every test reports through the ``criterion`` fixture, so the terminal summary
ends with one PASS/FAIL line per criterion.
"""
import csv
import json
import time

import numpy as np
import pytest

from gfml.cli import main
from gfml.dataset import TRAIN_GAMES, normalize_simulations, split_by_game
from gfml.fml import parse_fml, serialize_fml
from gfml.inference import infer
from gfml.model import (
    INPUT_NAMES,
    build_full_grid_rule_base,
    build_master_knowledge_base,
    master_controller,
)
from gfml.rollout import rollout
from gfml.synthetic import generate_synthetic
from gfml.tictactoe import EMPTY_BOARD, TicTacToeMinimax, ttt_minimax_suggest
from gfml.tuner import EvolutionConfig

import oracles

MASTER_TERMS = [
    ("DBSN", "Low", (0, 0, 0.4, 0.6)), ("DBSN", "High", (0.4, 0.6, 1, 1)),
    ("DWSN", "Low", (0, 0, 0.4, 0.6)), ("DWSN", "High", (0.4, 0.6, 1, 1)),
    ("DBWR", "Low", (0, 0, 0.3, 0.4)), ("DBWR", "Medium", (0.3, 0.4, 0.6, 0.7)), ("DBWR", "High", (0.6, 0.7, 1, 1)),
    ("DWWR", "Low", (0, 0, 0.3, 0.4)), ("DWWR", "Medium", (0.3, 0.4, 0.6, 0.7)), ("DWWR", "High", (0.6, 0.7, 1, 1)),
    ("DBTMR", "Low", (-1, -1, -0.2, 0.2)), ("DBTMR", "High", (-0.2, 0.2, 1, 1)),
    ("DWTMR", "Low", (-1, -1, -0.2, 0.2)), ("DWTMR", "High", (-0.2, 0.2, 1, 1)),
    ("EWR", "Low", (0, 0, 0.2, 0.3)), ("EWR", "Medium_Low", (0.2, 0.3, 0.4, 0.55)),
    ("EWR", "Medium_High", (0.4, 0.55, 0.7, 0.8)), ("EWR", "High", (0.7, 0.8, 1, 1)),
]

# synthetic recovery setup
RECOVERY = dict(total=500, games=60, data_seed=11, perturb=0.1, perturb_seed=7,
                population=50, generations=2000, ga_seed=42)


def test_master_terms_fidelity(criterion):
    t0 = time.perf_counter()
    kb = {v.name: v for v in build_master_knowledge_base()}
    checks = [kb[var].term(term).shape.params[i] == params[i] for var, term, params in MASTER_TERMS for i in range(4)]
    elapsed = time.perf_counter() - t0
    criterion("master-terms-fidelity", len(checks) == 72 and all(checks) and sum(len(v.terms) for v in kb.values()) == 18
              and elapsed < 1.0, f"{sum(checks)}/72 parameters equal, {elapsed:.3f}s")


def test_rule_grid(criterion):
    t0 = time.perf_counter()
    rules = build_full_grid_rule_base(build_master_knowledge_base())
    keys = {frozenset((c.variable, c.term) for c in r.antecedent) for r in rules}
    all_high = [r for r in rules if all(c.term == "High" for c in r.antecedent)]
    low_wr = [r for r in rules
              if {c.variable: c.term for c in r.antecedent}["DBWR"] == "Low"
              and {c.variable: c.term for c in r.antecedent}["DWWR"] == "Low"]
    elapsed = time.perf_counter() - t0
    ok = (len(rules) == 144 and len(keys) == 144
          and [r.consequent.term for r in all_high] == ["High"]
          and low_wr and all(r.consequent.term == "Low" for r in low_wr)
          and elapsed < 1.0)
    criterion("rule-grid", ok, f"{len(rules)} rules, {len(keys)} distinct antecedents, {elapsed:.3f}s")


def test_fml_round_trip(criterion):
    t0 = time.perf_counter()
    master = master_controller()
    text = serialize_fml(master)
    ok = parse_fml(text) == master and serialize_fml(parse_fml(text)) == text == serialize_fml(master_controller())
    rng = np.random.default_rng(1855)
    failures = 0
    for _ in range(100):
        fc = oracles.random_controller(rng)
        doc = serialize_fml(fc)
        if parse_fml(doc) != fc or serialize_fml(fc) != doc:
            failures += 1
    elapsed = time.perf_counter() - t0
    criterion("fml-round-trip", ok and failures == 0 and elapsed < 5.0,
              f"master ok={ok}, {100 - failures}/100 random controllers, {elapsed:.2f}s")


def test_inference_oracle(criterion):
    t0 = time.perf_counter()
    master = master_controller()
    variables, rules = oracles.controller_tables(master)
    rng = np.random.default_rng(20)
    worst = 0.0
    for _ in range(20):
        x = {n: float(rng.uniform(-1, 1) if n.endswith("TMR") else rng.uniform(0, 1)) for n in INPUT_NAMES}
        worst = max(worst, abs(infer(master, x, 1000).output - oracles.mamdani_bruteforce(variables, rules, x, 10**6)))
    plateau = infer(master, {"DBSN": 0.8, "DWSN": 0.8, "DBWR": 0.85, "DWWR": 0.85, "DBTMR": 0.6, "DWTMR": 0.6}).output
    closed = oracles.trapezoid_centroid((0.7, 0.8, 1, 1))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-4 and abs(plateau - 0.87333) <= 1e-3 and abs(closed - 0.87333) <= 1e-5 and elapsed < 10.0
    criterion("inference-oracle", ok,
              f"max |N=1000 - N=1e6| = {worst:.2e}, plateau {plateau:.5f} (closed form {closed:.5f}), {elapsed:.2f}s")


def test_reference_defaults(criterion):
    cfg = EvolutionConfig()
    ds = generate_synthetic(master_controller(), total=120, games=60, seed=0, samples=100)
    train, test = split_by_game(ds)
    ok = ((cfg.crossover_rate, cfg.mutation_rate, cfg.generations) == (0.9, 0.1, 10000)
          and TRAIN_GAMES == 45
          and set(train.games) == set(range(1, 46)) and set(test.games) == set(range(46, 61)))
    criterion("reference-defaults", ok,
              f"crossover {cfg.crossover_rate}, mutation {cfg.mutation_rate}, generations {cfg.generations}, "
              f"train games 1..{max(train.games)}, test games {min(test.games)}..{max(test.games)}")


def _train_once(tmp_path, data, tag):
    out = tmp_path / f"{tag}.fml"
    history = tmp_path / f"{tag}.csv"
    t0 = time.perf_counter()
    code = main(["train", "--data", str(data), "--side", "black",
                 "--population", str(RECOVERY["population"]), "--generations", str(RECOVERY["generations"]),
                 "--seed", str(RECOVERY["ga_seed"]), "--out", str(out), "--history", str(history)])
    elapsed = time.perf_counter() - t0
    assert code == 0
    manifest = json.loads((tmp_path / f"{tag}.fml.manifest.json").read_text())
    with open(history, newline="") as fh:
        best = [float(row["best_mse"]) for row in csv.DictReader(fh)]
    return out.read_bytes(), history.read_bytes(), best, manifest["results"], elapsed


@pytest.mark.slow
def test_synthetic_recovery(criterion, tmp_path):
    data = tmp_path / "synthetic.csv"
    assert main(["gen-synthetic", "--total", str(RECOVERY["total"]), "--games", str(RECOVERY["games"]),
                 "--seed", str(RECOVERY["data_seed"]), "--perturb", str(RECOVERY["perturb"]),
                 "--perturb-seed", str(RECOVERY["perturb_seed"]), "--out", str(data)]) == 0
    fml_a, hist_a, best, results, elapsed_a = _train_once(tmp_path, data, "a")
    fml_b, hist_b, _, _, elapsed_b = _train_once(tmp_path, data, "b")

    gen0, final, test = best[0], results["train_mse"], results["test_mse"]
    ratio = final / gen0
    nonincreasing = all(b <= a for a, b in zip(best, best[1:]))
    identical = fml_a == fml_b and hist_a == hist_b
    ok = (ratio <= 0.25 and nonincreasing and test <= 2.0 * final and identical
          and max(elapsed_a, elapsed_b) < 300 and len(best) == RECOVERY["generations"] + 1)
    criterion("synthetic-recovery", ok,
              f"gen0 {gen0:.3e} -> final {final:.3e} ({ratio:.1%}), test {test:.3e} ({test / final:.2f}x train), "
              f"nonincreasing={nonincreasing}, identical={identical}, {elapsed_a:.0f}s/{elapsed_b:.0f}s per run")


def test_dataset_conservation(criterion):
    master = master_controller()
    problems = []
    for seed in range(10):
        total = 100 + 37 * seed
        ds = generate_synthetic(master, total=total, games=60, seed=seed, samples=100)
        train, test = split_by_game(ds)
        if len(train) + len(test) != len(ds) or set(train.games) != set(range(1, 46)):
            problems.append(f"seed {seed}: split")
    rng = np.random.default_rng(3)
    for _ in range(200):
        counts = rng.integers(1, 10**6, rng.integers(1, 300)).tolist()
        k = int(rng.integers(2, 1000))
        base = normalize_simulations(counts)
        scaled = normalize_simulations([c * k for c in counts])
        if max(base) != 1.0 or not np.allclose(base, scaled, rtol=1e-12, atol=0):
            problems.append(f"normalization {counts[:3]}...")
    criterion("dataset-conservation", not problems,
              "10 synthetic datasets, 200 normalization cases" + (f"; {problems[:3]}" if problems else ""))


def test_rollout_minimax(criterion):
    t0 = time.perf_counter()
    memo = {}
    states = oracles.ttt_reachable()
    mismatches = 0
    scored = 0
    for cells in states:
        if oracles.ttt_winner(cells) or all(cells):
            continue
        board = oracles.cells_to_board(cells)
        player = "X" if board.count("X") == board.count("O") else "O"
        other = "O" if player == "X" else "X"
        expected = {i + 1: -oracles.ttt_value(cells[:i] + (player,) + cells[i + 1:], other, memo)
                    for i in range(9) if not cells[i]}
        if dict(ttt_minimax_suggest(board, 9)) != expected:
            mismatches += 1
        scored += 1
    provider = TicTacToeMinimax()
    trace = rollout(provider, EMPTY_BOARD, 9)
    replay_ok = trace.replay(provider) == [s.state for s in trace.steps] + [trace.final_state]
    again = rollout(provider, EMPTY_BOARD, 9) == trace
    elapsed = time.perf_counter() - t0
    ok = (len(states) <= 5478 and mismatches == 0 and trace.outcome == "draw" and replay_ok and again
          and elapsed < 30.0)
    criterion("rollout-minimax", ok,
              f"{len(states)} reachable states, {scored} scored, {mismatches} mismatches, "
              f"self-play {trace.outcome}, replay ok={replay_ok}, {elapsed:.2f}s")
