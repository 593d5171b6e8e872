"""Genetic fuzzy markup language toolkit: FML controllers, Mamdani
inference, GA tuning against win-rate data, and future-state rollouts."""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    Clause,
    FuzzyController,
    FuzzyTerm,
    FuzzyVariable,
    Rule,
    RuleBaseSettings,
    TrapezoidShape,
    build_full_grid_rule_base,
    build_master_knowledge_base,
    master_controller,
    membership,
    validate_controller,
)
from .fml import parse_fml, read_fml, serialize_fml, write_fml  # noqa: E402
from .inference import infer  # noqa: E402
