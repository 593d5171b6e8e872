"""Labelled datasets fabricated from a known controller, for oracle tests."""
from __future__ import annotations

import numpy as np

from .dataset import Dataset, GameRecord
from .inference import DEFAULT_SAMPLES, CompiledController
from .model import INPUT_NAMES, FuzzyController


def moves_per_game(total: int, games: int) -> list[int]:
    """Spread ``total`` moves over ``games`` games, earlier games taking the remainder."""
    if games < 1 or total < games:
        raise ValueError("need at least one move per game")
    base, extra = divmod(total, games)
    return [base + (1 if g < extra else 0) for g in range(games)]


def generate_synthetic(
    black: FuzzyController,
    total: int = 500,
    games: int = 60,
    seed: int = 0,
    noise: float = 0.0,
    white: FuzzyController | None = None,
    samples: int = DEFAULT_SAMPLES,
) -> Dataset:
    """Sample inputs uniformly over each variable's domain and label them.

    EBWR comes from ``black``; EWWR from ``white`` when given, otherwise
    ``1 - EBWR``. Optional Gaussian label noise is clipped back into [0, 1].
    """
    rng = np.random.default_rng(seed)
    lo = np.array([black.variable(n).domain_left for n in INPUT_NAMES])
    hi = np.array([black.variable(n).domain_right for n in INPUT_NAMES])
    X = lo + (hi - lo) * rng.random((total, len(INPUT_NAMES)))
    eb = CompiledController(black, INPUT_NAMES).predict(X, samples)
    ew = 1.0 - eb if white is None else CompiledController(white, INPUT_NAMES).predict(X, samples)
    if noise > 0:
        eb = np.clip(eb + noise * rng.standard_normal(total), 0.0, 1.0)
        ew = np.clip(ew + noise * rng.standard_normal(total), 0.0, 1.0)
    records = []
    i = 0
    for g, n in enumerate(moves_per_game(total, games), start=1):
        for m in range(1, n + 1):
            records.append(GameRecord(g, m, *map(float, X[i]), float(eb[i]), float(ew[i])))
            i += 1
    return Dataset(tuple(records), f"synthetic(seed={seed})", "synthetic")
