"""``gfml`` command line.

Exit codes: 0 success, 1 domain error (bad document, bad data, unknown
game), 2 usage or I/O error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from dataclasses import asdict

import numpy as np

from . import __version__
from .dataset import (
    DatasetError,
    RowError,
    TRAIN_GAMES,
    make_view,
    parse_raw_counts_csv,
    parse_records_csv,
    split_by_game,
    write_records_csv,
)
from .files import atomic_write_text, sha256_of
from .fml import FmlError, InvalidControllerError, read_fml, write_fml
from .inference import DEFAULT_SAMPLES, CompiledController, InferenceError, infer, set_threads_from_env
from .model import INPUT_NAMES, master_controller
from .numfmt import format_number
from .rollout import ProviderError, rollout
from .synthetic import generate_synthetic
from .tictactoe import EMPTY_BOARD, TicTacToeMinimax, check_board
from .tuner import EvolutionConfig, evolve, fitness, perturb_controller


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


def _load_controller(path):
    return read_fml(path)


def _load_dataset(args):
    if getattr(args, "raw_counts", False):
        return parse_raw_counts_csv(args.data, args.normalization)
    return parse_records_csv(args.data)


def _template(args):
    if args.template:
        return _load_controller(args.template)
    return master_controller(args.side)


def cmd_validate(args) -> int:
    fc = _load_controller(args.fml)
    print(f"{args.fml}: ok ({len(fc.variables)} variables, {fc.term_count} terms, {len(fc.rules)} rules)")
    return 0


def cmd_infer(args) -> int:
    fc = _load_controller(args.fml)
    values = {name: getattr(args, name.lower()) for name in INPUT_NAMES}
    result = infer(fc, values, args.samples)
    for name in result.clamped:
        var = fc.variable(name)
        _err(f"warning: {name}={format_number(values[name])} outside "
             f"[{format_number(var.domain_left)}, {format_number(var.domain_right)}], clamped")
    if result.no_rule_fired:
        _err("warning: no rule fired; output is the domain midpoint")
    flags = ",".join(result.flags) or "-"
    print(f"{fc.output.name}={result.output:.6f} fired_rules={result.fired_rules} flags={flags}")
    return 0


def _config(args) -> EvolutionConfig:
    return EvolutionConfig(
        crossover_rate=args.crossover_rate,
        mutation_rate=args.mutation_rate,
        generations=args.generations,
        population_size=args.population,
        mutation_sigma=args.mutation_sigma,
        tournament_size=args.tournament_size,
        elite_count=args.elite_count,
        seed=args.seed,
        tune_rule_consequents=args.tune_consequents,
        samples=args.samples,
    )


def cmd_train(args) -> int:
    started = time.perf_counter()
    cfg = _config(args)
    ds = _load_dataset(args)
    template = _template(args)
    train, test = split_by_game(ds, args.boundary)
    view = make_view(train, args.side)
    if len(view) == 0:
        raise DatasetError(args.data, [RowError(0, "game_no", f"no records in games 1..{args.boundary}")])

    progress = None
    if args.verbose:
        def progress(gen, best, mean):
            if gen % max(1, cfg.generations // 20) == 0:
                _err(f"generation {gen}: best={best:.6g} mean={mean:.6g}")

    report = evolve(template, view, cfg, progress)
    write_fml(args.out, report.best)
    if args.history:
        report.write_history(args.history)
    test_mse = fitness(report.best, make_view(test, args.side), cfg.samples) if len(test) else None

    manifest = {
        "command": "train",
        "arguments": {k: v for k, v in sorted(vars(args).items()) if k != "func"},
        "config": asdict(cfg),
        "seed": cfg.seed,
        "inputs": {"data": {"path": str(args.data), "sha256": sha256_of(args.data)}},
        "tool_version": __version__,
        "results": {
            "generation0_mse": report.best_history[0],
            "train_mse": report.final_mse,
            "test_mse": test_mse,
            "train_records": len(train),
            "test_records": len(test),
        },
        "wall_clock_seconds": round(time.perf_counter() - started, 3),
    }
    if args.template:
        manifest["inputs"]["template"] = {"path": str(args.template), "sha256": sha256_of(args.template)}
    manifest_path = args.manifest or str(args.out) + ".manifest.json"
    atomic_write_text(manifest_path, json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")

    line = f"train_mse={report.final_mse:.6g}"
    if test_mse is not None:
        line += f" test_mse={test_mse:.6g}"
    print(line)
    return 0


def cmd_evaluate(args) -> int:
    fc = _load_controller(args.fml)
    ds = _load_dataset(args)
    train, test = split_by_game(ds, args.boundary)
    rows = []
    for name, part in (("train", train), ("test", test), ("all", ds)):
        view = make_view(part, args.side)
        mse = fitness(fc, view, args.samples) if len(view) else float("nan")
        rows.append((name, len(view), mse))
    if args.csv:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["split", "records", "mse"])
        for name, n, mse in rows:
            w.writerow([name, n, format_number(mse)])
        sys.stdout.write(buf.getvalue())
    else:
        print(f"{'split':<6} {'records':>8} {'mse':>12}")
        for name, n, mse in rows:
            print(f"{name:<6} {n:>8} {mse:>12.6g}")
    return 0


def cmd_curves(args) -> int:
    fc = _load_controller(args.fml)
    ds = _load_dataset(args)
    records = ds.game(args.game)
    if not records:
        _err(f"error: game {args.game} is not in {args.data}")
        return 1
    X = np.array([[r.inputs()[n] for n in INPUT_NAMES] for r in records])
    pred = CompiledController(fc, INPUT_NAMES).predict(X, args.samples)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["move_no", "predicted", "desired", "darkforest"])
    for r, p in zip(records, pred):
        dark = r.dbwr if args.side == "black" else r.dwwr
        w.writerow([r.move_no, format_number(p), format_number(r.target(args.side)), format_number(dark)])
    if args.out:
        atomic_write_text(args.out, buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return 0


def cmd_gen_synthetic(args) -> int:
    black = _load_controller(args.fml) if args.fml else master_controller("black")
    white = _load_controller(args.white_fml) if args.white_fml else None
    if args.perturb > 0:
        black = perturb_controller(black, args.perturb, args.perturb_seed)
        if white is not None:
            white = perturb_controller(white, args.perturb, args.perturb_seed + 1)
    if args.target_out:
        write_fml(args.target_out, black)
    ds = generate_synthetic(black, args.total, args.games, args.seed, args.noise, white, args.samples)
    write_records_csv(args.out, ds.records)
    print(f"wrote {len(ds)} records over {len(ds.games)} games to {args.out}")
    return 0


def cmd_rollout_ttt(args) -> int:
    check_board(args.board)
    provider = TicTacToeMinimax(args.k)
    choice = "top1"
    if args.choices:
        choice = [int(c) for c in args.choices.split(",") if c.strip()]
    trace = rollout(provider, args.board, args.depth, choice)
    text = trace.to_jsonl(provider)
    if args.out:
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    _err(f"stopped: {trace.reason}" + (f" ({trace.outcome})" if trace.outcome else "")
         + f" after {len(trace)} plies; final board {trace.final_state}")
    return 0


def _add_data_args(p):
    p.add_argument("--data", required=True, help="record CSV")
    p.add_argument("--side", choices=("black", "white"), default="black")
    p.add_argument("--boundary", type=int, default=TRAIN_GAMES, help="last training game (default 45)")
    p.add_argument("--raw-counts", action="store_true", help="CSV carries raw simulation counts")
    p.add_argument("--normalization", choices=("per-game", "global"), default="per-game")
    p.add_argument("--samples", type=int, default=DEFAULT_SAMPLES, help="output grid intervals")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gfml", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"gfml {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse and validate an FML file")
    p.add_argument("fml")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("infer", help="run inference on one input vector")
    p.add_argument("fml")
    for name in INPUT_NAMES:
        p.add_argument(f"--{name.lower()}", type=float, required=True)
    p.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)
    p.set_defaults(func=cmd_infer)

    defaults = EvolutionConfig()
    p = sub.add_parser("train", help="tune a controller with the genetic algorithm")
    _add_data_args(p)
    p.add_argument("--template", help="starting FML controller (default: shipped master for --side)")
    p.add_argument("--out", required=True, help="learned FML output path")
    p.add_argument("--history", help="per-generation fitness CSV")
    p.add_argument("--manifest", help="run manifest JSON (default: <out>.manifest.json)")
    p.add_argument("--seed", type=int, default=defaults.seed)
    p.add_argument("--generations", type=int, default=defaults.generations)
    p.add_argument("--population", type=int, default=defaults.population_size)
    p.add_argument("--crossover-rate", type=float, default=defaults.crossover_rate)
    p.add_argument("--mutation-rate", type=float, default=defaults.mutation_rate)
    p.add_argument("--mutation-sigma", type=float, default=defaults.mutation_sigma)
    p.add_argument("--tournament-size", type=int, default=defaults.tournament_size)
    p.add_argument("--elite-count", type=int, default=defaults.elite_count)
    p.add_argument("--tune-consequents", action="store_true")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="train/test/overall MSE of a controller")
    p.add_argument("fml")
    _add_data_args(p)
    p.add_argument("--csv", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("curves", help="per-move predicted/desired/darkforest curves for one game")
    p.add_argument("fml")
    _add_data_args(p)
    p.add_argument("--game", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("gen-synthetic", help="fabricate a labelled dataset from a controller")
    p.add_argument("--fml", help="labelling controller for EBWR (default: shipped black master)")
    p.add_argument("--white-fml", help="labelling controller for EWWR (default: 1 - EBWR)")
    p.add_argument("--total", type=int, default=500)
    p.add_argument("--games", type=int, default=60)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.0, help="label noise standard deviation")
    p.add_argument("--perturb", type=float, default=0.0,
                   help="perturb interior trapezoid parameters by this fraction of the domain width")
    p.add_argument("--perturb-seed", type=int, default=0)
    p.add_argument("--target-out", help="write the labelling controller here")
    p.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("rollout-ttt", help="future-state rollout on tic-tac-toe")
    p.add_argument("--board", default=EMPTY_BOARD, help="9 characters of . X O, row by row")
    p.add_argument("--depth", type=int, default=9)
    p.add_argument("--choices", help="comma-separated suggestion indices per ply (default: top1)")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_rollout_ttt)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        set_threads_from_env()
    except ValueError as exc:
        _err(f"error: {exc}")
        return 2
    try:
        return args.func(args)
    except FmlError as exc:
        for d in exc.diagnostics:
            _err(str(d))
        return 1
    except DatasetError as exc:
        _err(f"error: cannot use dataset {exc.source}")
        for e in exc.errors:
            _err(f"  {e}")
        return 1
    except (InferenceError, InvalidControllerError, ProviderError) as exc:
        _err(f"error: {exc}")
        return 1
    except (ValueError, IndexError) as exc:
        _err(f"error: {exc}")
        return 1
    except OSError as exc:
        _err(f"error: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
