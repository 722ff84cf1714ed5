"""The closed 20-symbol vocabulary of belief values.

Two families: the ten Schwartz basic values and the ten Moral Foundations
poles. Symbols are lowercase snake_case and double as belief-node ids.
"""

from __future__ import annotations

import re

SCHWARTZ_VALUES = (
    "conformity",
    "tradition",
    "security",
    "power",
    "achievement",
    "hedonism",
    "stimulation",
    "self_direction",
    "universalism",
    "benevolence",
)

MORAL_FOUNDATION_POLES = (
    "care",
    "harm",
    "fairness",
    "cheating",
    "loyalty",
    "betrayal",
    "authority",
    "subversion",
    "purity",
    "degradation",
)

# Canonical order: Schwartz block then MFT block. Belief-node indexing,
# seeded initialization, and serialization all key off this tuple.
BELIEF_VOCABULARY = SCHWARTZ_VALUES + MORAL_FOUNDATION_POLES

BELIEF_INDEX = {name: i for i, name in enumerate(BELIEF_VOCABULARY)}

_NON_ALNUM = re.compile(r"[^a-z0-9]+")


def normalize_belief_token(token: str) -> str:
    """Normalize a free-form token to vocabulary form ("Self-Direction" -> "self_direction")."""
    return _NON_ALNUM.sub("_", token.strip().lower()).strip("_")


def is_belief(symbol: str) -> bool:
    return symbol in BELIEF_INDEX


def belief_family(symbol: str) -> str:
    """Return "schwartz" or "moral" for a vocabulary symbol."""
    if symbol in SCHWARTZ_VALUES:
        return "schwartz"
    if symbol in MORAL_FOUNDATION_POLES:
        return "moral"
    raise KeyError(f"unknown belief symbol: {symbol!r}")
