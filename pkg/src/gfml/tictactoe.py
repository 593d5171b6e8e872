"""Tic-tac-toe with an exact minimax move suggester.

Boards are 9-character strings read row by row, ``.`` for an empty cell,
``X`` moving first. Moves are cell numbers 1-9.
"""
from __future__ import annotations

from functools import lru_cache

from .rollout import DEFAULT_K

EMPTY_BOARD = "." * 9
LINES = ((0, 1, 2), (3, 4, 5), (6, 7, 8), (0, 3, 6), (1, 4, 7), (2, 5, 8), (0, 4, 8), (2, 4, 6))


def winner(board: str) -> str | None:
    for a, b, c in LINES:
        if board[a] != "." and board[a] == board[b] == board[c]:
            return board[a]
    return None


def to_move(board: str) -> str:
    return "X" if board.count("X") == board.count("O") else "O"


def check_board(board: str) -> None:
    if len(board) != 9 or set(board) - set(".XO"):
        raise ValueError(f"not a tic-tac-toe board: {board!r}")
    x, o = board.count("X"), board.count("O")
    if not (x == o or x == o + 1):
        raise ValueError(f"unreachable piece counts in {board!r}")
    w = winner(board)
    if w == "X" and x != o + 1 or w == "O" and x != o:
        raise ValueError(f"unreachable position {board!r}")
    if w is not None:
        # both sides cannot have completed a line
        other = "O" if w == "X" else "X"
        if any(board[a] == board[b] == board[c] == other for a, b, c in LINES):
            raise ValueError(f"unreachable position {board!r}")


def outcome(board: str) -> str | None:
    """'X', 'O', 'draw', or None while the game is still running."""
    w = winner(board)
    if w:
        return w
    return "draw" if "." not in board else None


def play(board: str, move: int) -> str:
    i = move - 1
    if not 0 <= i < 9 or board[i] != ".":
        raise ValueError(f"illegal move {move} on {board!r}")
    return board[:i] + to_move(board) + board[i + 1:]


@lru_cache(maxsize=None)
def solve(board: str) -> tuple[int, int]:
    """(value, plies to the end) under perfect play, from the mover's view.

    Faster wins and slower losses are preferred.
    """
    if outcome(board) is not None:
        # the previous mover just won, or the board filled up
        return (-1 if winner(board) else 0), 0
    best = None
    for i in range(9):
        if board[i] == ".":
            v, n = solve(play(board, i + 1))
            cand = (-v, n + 1)
            if best is None or _better(cand, best):
                best = cand
    return best


def _rank_key(value: int, plies: int) -> tuple:
    # larger is better: value first, then quick wins / long losses
    return (value, -plies if value > 0 else plies if value < 0 else 0)


def _better(a: tuple[int, int], b: tuple[int, int]) -> bool:
    return _rank_key(*a) > _rank_key(*b)


def ttt_minimax_suggest(board: str, k: int = DEFAULT_K) -> list[tuple[int, int]]:
    """Best ``k`` moves as (cell, value) pairs, value in {+1, 0, -1}.

    Ordered by value, then by how quickly a win (or how slowly a loss)
    arrives, then by ascending cell number.
    """
    check_board(board)
    if outcome(board) is not None:
        raise ValueError(f"no moves to suggest: game over on {board!r}")
    scored = []
    for i in range(9):
        if board[i] == ".":
            v, n = solve(play(board, i + 1))
            value, plies = -v, n + 1
            scored.append((_rank_key(value, plies), i + 1, value))
    scored.sort(key=lambda t: (tuple(-x for x in t[0]), t[1]))
    return [(move, value) for _, move, value in scored[:k]]


class TicTacToeMinimax:
    """Suggestion provider backed by :func:`ttt_minimax_suggest`; stateless
    apart from a shared solve cache, so reentrant calls are safe."""

    def __init__(self, k: int = DEFAULT_K):
        if k < 1:
            raise ValueError("k must be positive")
        self.k = k

    def suggest(self, state: str) -> list[tuple[int, int]]:
        return ttt_minimax_suggest(state, self.k)

    def apply(self, state: str, move: int) -> str:
        return play(state, move)

    def is_terminal(self, state: str):
        result = outcome(state)
        return result is not None, result

    def encode(self, state: str) -> str:
        return state
