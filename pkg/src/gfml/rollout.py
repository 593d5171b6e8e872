"""Future-state rollouts over a move-suggestion provider, plus hint timing.

A rollout repeatedly asks the provider for its best few moves, tentatively
picks one, applies it and records what was shown, so a player can see where
a line of play leads before committing to it.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Hashable, Protocol, Sequence

DEFAULT_K = 5


class ProviderError(RuntimeError):
    """The provider broke its contract (e.g. no moves on a live position)."""


class SuggestionProvider(Protocol):
    def suggest(self, state) -> list[tuple[Hashable, float]]:
        """Up to K legal (move, score) pairs, best first."""

    def apply(self, state, move):
        """State after ``move``; must not mutate ``state``."""

    def is_terminal(self, state) -> tuple[bool, Any]:
        """(finished?, outcome or None)."""

    def encode(self, state) -> str:
        """Printable state for trace export."""


@dataclass(frozen=True)
class HintPolicy:
    """Offer a hint once the player has thought for ``threshold`` seconds."""

    threshold: float

    def __post_init__(self):
        if not self.threshold > 0:
            raise ValueError("hint threshold must be positive")


def should_hint(policy: HintPolicy, elapsed: float) -> bool:
    """True once ``elapsed >= threshold`` (the boundary itself counts)."""
    if elapsed < 0:
        raise ValueError("elapsed time cannot be negative")
    return elapsed >= policy.threshold


def should_hint_brain_condition(*_args, **_kwargs) -> bool:
    """Not implemented: no operational definition of a hint-ready mind state."""
    return False


def should_hint_turning_point(*_args, **_kwargs) -> bool:
    """Not implemented: no operational definition of a turning point."""
    return False


@dataclass(frozen=True)
class RolloutStep:
    state: Any
    move: Hashable
    score: float
    alternatives: tuple[tuple[Hashable, float], ...]


@dataclass(frozen=True)
class RolloutTrace:
    start: Any
    steps: tuple[RolloutStep, ...]
    reason: str  # "depth" or "terminal"
    final_state: Any
    outcome: Any = None

    def __len__(self):
        return len(self.steps)

    def replay(self, provider: SuggestionProvider) -> list:
        """States visited when re-applying the recorded moves from the start."""
        states = [self.start]
        for step in self.steps:
            states.append(provider.apply(states[-1], step.move))
        return states

    def to_jsonl(self, provider: SuggestionProvider) -> str:
        encode = getattr(provider, "encode", str)
        lines = []
        for ply, step in enumerate(self.steps, start=1):
            lines.append(json.dumps({
                "ply": ply,
                "state": encode(step.state),
                "move": step.move,
                "score": step.score,
                "alternatives": [[m, s] for m, s in step.alternatives],
            }, sort_keys=True))
        return "".join(line + "\n" for line in lines)


def rollout(provider: SuggestionProvider, start, depth: int, choice: str | Sequence[int] = "top1") -> RolloutTrace:
    """Play up to ``depth`` tentative plies from ``start``.

    ``choice="top1"`` always takes the provider's first suggestion. A sequence
    of indices picks ``suggestions[i]`` at each ply instead, which lets a
    caller explore a what-if branch; once the sequence runs out, play falls
    back to the top suggestion.
    """
    if depth < 1:
        raise ValueError("depth must be at least 1")
    if isinstance(choice, str):
        if choice != "top1":
            raise ValueError(f"unknown choice policy {choice!r}")
        picks: Sequence[int] = ()
    else:
        picks = list(choice)

    state = start
    steps = []
    while True:
        done, outcome = provider.is_terminal(state)
        if done:
            return RolloutTrace(start, tuple(steps), "terminal", state, outcome)
        if len(steps) >= depth:
            return RolloutTrace(start, tuple(steps), "depth", state, None)
        suggestions = list(provider.suggest(state))
        if not suggestions:
            raise ProviderError(f"provider returned no moves for non-terminal state {state!r}")
        ply = len(steps)
        idx = picks[ply] if ply < len(picks) else 0
        if not 0 <= idx < len(suggestions):
            raise IndexError(f"ply {ply + 1}: choice {idx} but only {len(suggestions)} suggestions")
        move, score = suggestions[idx]
        steps.append(RolloutStep(state, move, score, tuple(suggestions)))
        state = provider.apply(state, move)
