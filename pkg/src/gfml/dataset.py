"""Per-move game records: CSV ingestion, simulation-count normalisation,
train/test split by game and black/white training views."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .files import atomic_write_text
from .model import INPUT_NAMES
from .numfmt import format_number

HEADER = ("game_no", "move_no", "dbsn", "dwsn", "dbwr", "dwwr", "dbtmr", "dwtmr", "ebwr", "ewwr")
RAW_HEADER = ("game_no", "move_no", "black_sims", "white_sims", "dbwr", "dwwr", "dbtmr", "dwtmr", "ebwr", "ewwr")
TRAIN_GAMES = 45

_RANGES = {
    "dbsn": (0.0, 1.0), "dwsn": (0.0, 1.0),
    "dbwr": (0.0, 1.0), "dwwr": (0.0, 1.0),
    "dbtmr": (-1.0, 1.0), "dwtmr": (-1.0, 1.0),
    "ebwr": (0.0, 1.0), "ewwr": (0.0, 1.0),
}


@dataclass(frozen=True)
class GameRecord:
    game_no: int
    move_no: int
    dbsn: float
    dwsn: float
    dbwr: float
    dwwr: float
    dbtmr: float
    dwtmr: float
    ebwr: float
    ewwr: float

    def inputs(self) -> dict[str, float]:
        return {name: getattr(self, name.lower()) for name in INPUT_NAMES}

    def target(self, side: str) -> float:
        return self.ebwr if side == "black" else self.ewwr


@dataclass(frozen=True)
class Dataset:
    records: tuple[GameRecord, ...]
    source: str = ""
    normalization: str = "pre-normalized"
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(sorted(self.records, key=lambda r: (r.game_no, r.move_no))))

    def __len__(self):
        return len(self.records)

    def __iter__(self) -> Iterator[GameRecord]:
        return iter(self.records)

    @property
    def games(self) -> tuple[int, ...]:
        return tuple(sorted({r.game_no for r in self.records}))

    def game(self, game_no: int) -> tuple[GameRecord, ...]:
        return tuple(r for r in self.records if r.game_no == game_no)


@dataclass(frozen=True)
class RowError:
    line: int
    column: str | None
    message: str

    def __str__(self):
        where = f"line {self.line}" + (f", column {self.column}" if self.column else "")
        return f"{where}: {self.message}"


class DatasetError(ValueError):
    def __init__(self, source: str, errors: Sequence[RowError]):
        self.source = source
        self.errors = list(errors)
        super().__init__("\n".join(f"{source}: {e}" for e in self.errors))


def normalize_simulations(counts: Sequence[float]) -> list[float]:
    """Divide each simulation count by the largest one, so the max maps to 1."""
    if len(counts) == 0:
        raise ValueError("cannot normalise an empty sequence of simulation counts")
    if any(not (c > 0) for c in counts):
        raise ValueError("simulation counts must be positive")
    top = max(counts)
    return [c / top for c in counts]


def _data_rows(text: str):
    """(line number, cells) for every non-comment, non-blank line."""
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        yield lineno, next(csv.reader([line]))


def _read_table(text: str, source: str, header: tuple[str, ...]):
    rows = _data_rows(text)
    errors: list[RowError] = []
    try:
        lineno, got = next(rows)
    except StopIteration:
        raise DatasetError(source, [RowError(1, None, "missing header")]) from None
    got = tuple(c.strip() for c in got)
    if got != header:
        missing = [h for h in header if h not in got]
        msg = f"header must be {','.join(header)}"
        if missing:
            msg += f"; missing {', '.join(missing)}"
        raise DatasetError(source, [RowError(lineno, None, msg)])

    parsed = []
    seen: dict[tuple[int, int], int] = {}
    for lineno, cells in rows:
        if len(cells) != len(header):
            errors.append(RowError(lineno, None, f"expected {len(header)} cells, got {len(cells)}"))
            continue
        values = {}
        bad = False
        for name, cell in zip(header, cells):
            cell = cell.strip()
            try:
                if name in ("game_no", "move_no"):
                    value = int(cell)
                    if value < 1:
                        errors.append(RowError(lineno, name, f"{name} must be >= 1, got {value}"))
                        bad = True
                else:
                    value = float(cell)
                    if not math.isfinite(value):
                        raise ValueError
            except ValueError:
                errors.append(RowError(lineno, name, f"not a valid number: {cell!r}"))
                bad = True
                continue
            lo_hi = _RANGES.get(name)
            if lo_hi and not (lo_hi[0] <= value <= lo_hi[1]):
                errors.append(RowError(lineno, name, f"{value} outside [{lo_hi[0]:g}, {lo_hi[1]:g}]"))
                bad = True
            values[name] = value
        if bad:
            continue
        key = (values["game_no"], values["move_no"])
        if key in seen:
            errors.append(RowError(lineno, None, f"duplicate (game_no, move_no) {key}, first on line {seen[key]}"))
            continue
        seen[key] = lineno
        parsed.append((lineno, values))
    if errors:
        raise DatasetError(source, errors)
    return parsed


def parse_records_text(text: str, source: str = "<string>") -> Dataset:
    parsed = _read_table(text, source, HEADER)
    records = [GameRecord(**values) for _, values in parsed]
    warnings = () if records else (f"{source}: no data rows",)
    return Dataset(tuple(records), source, "pre-normalized", warnings)


def parse_records_csv(path: str | Path) -> Dataset:
    """Load a normalised record CSV; all rows must be valid or nothing loads."""
    path = Path(path)
    return parse_records_text(path.read_text(encoding="utf-8"), str(path))


def parse_raw_counts_csv(path: str | Path, mode: str = "per-game") -> Dataset:
    """Load records whose simulation columns are raw counts and normalise them.

    ``mode="per-game"`` divides by each game's largest count per side;
    ``mode="global"`` divides by the largest count in the whole file.
    """
    if mode not in ("per-game", "global"):
        raise ValueError(f"unknown normalization mode {mode!r}")
    path = Path(path)
    source = str(path)
    parsed = _read_table(path.read_text(encoding="utf-8"), source, RAW_HEADER)
    errors = [
        RowError(lineno, col, f"simulation count must be positive, got {values[col]}")
        for lineno, values in parsed
        for col in ("black_sims", "white_sims")
        if values[col] <= 0
    ]
    if errors:
        raise DatasetError(source, errors)

    groups: dict[object, list[int]] = {}
    for i, (_, values) in enumerate(parsed):
        groups.setdefault(values["game_no"] if mode == "per-game" else None, []).append(i)
    norm = [dict(v) for _, v in parsed]
    for idx in groups.values():
        for raw, out in (("black_sims", "dbsn"), ("white_sims", "dwsn")):
            scaled = normalize_simulations([parsed[i][1][raw] for i in idx])
            for i, value in zip(idx, scaled):
                norm[i][out] = value
    records = [
        GameRecord(**{k: v for k, v in values.items() if k not in ("black_sims", "white_sims")})
        for values in norm
    ]
    warnings = () if records else (f"{source}: no data rows",)
    return Dataset(tuple(records), source, f"{mode}-max", warnings)


def records_to_csv(records: Sequence[GameRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HEADER)
    for r in records:
        writer.writerow([r.game_no, r.move_no] + [format_number(getattr(r, f.name)) for f in fields(r)[2:]])
    return buf.getvalue()


def write_records_csv(path: str | Path, records: Sequence[GameRecord]) -> None:
    atomic_write_text(path, records_to_csv(records))


def split_by_game(ds: Dataset, boundary: int = TRAIN_GAMES) -> tuple[Dataset, Dataset]:
    """Games 1..boundary train, the rest test."""
    train = tuple(r for r in ds.records if r.game_no <= boundary)
    test = tuple(r for r in ds.records if r.game_no > boundary)
    return (
        Dataset(train, ds.source, ds.normalization),
        Dataset(test, ds.source, ds.normalization),
    )


@dataclass(frozen=True, eq=False)
class TrainingView:
    side: str
    X: np.ndarray  # one row per record, columns in INPUT_NAMES order
    y: np.ndarray
    input_names: tuple[str, ...] = INPUT_NAMES

    def __len__(self):
        return len(self.y)

    def pairs(self) -> Iterator[tuple[dict[str, float], float]]:
        for row, target in zip(self.X, self.y):
            yield dict(zip(self.input_names, map(float, row))), float(target)


def make_view(ds: Dataset, side: str) -> TrainingView:
    if side not in ("black", "white"):
        raise ValueError(f"side must be 'black' or 'white', got {side!r}")
    cols = [name.lower() for name in INPUT_NAMES]
    X = np.array([[getattr(r, c) for c in cols] for r in ds.records], dtype=float).reshape(-1, len(cols))
    y = np.array([r.target(side) for r in ds.records], dtype=float)
    return TrainingView(side, X, y)
