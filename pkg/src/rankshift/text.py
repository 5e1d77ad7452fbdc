"""Tokenization and seed helpers shared by every module.

One tokenizer is used for content scoring, n-gram perplexity and the shadow
relaxation so that the three never drift apart.
"""

from __future__ import annotations

import re

_TOKEN_RE = re.compile(r"[^\W_]+")
_MASK64 = (1 << 64) - 1


def tokenize(text: str) -> list[str]:
    """Lowercase and split on every non-alphanumeric character."""
    return _TOKEN_RE.findall(text.lower())


def token_set(text: str) -> frozenset[str]:
    return frozenset(tokenize(text))


def word_count(text: str) -> int:
    """Whitespace-delimited word count."""
    return len(text.split())


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(*parts: int) -> int:
    """Fold integer parts into one 64-bit seed with splitmix64.

    ``derive_seed(master, set_index, strategy_index, trial)`` gives each trial
    its own stream regardless of the order in which trials are executed.
    """
    state = 0
    for part in parts:
        state = splitmix64(state ^ (int(part) & _MASK64))
    return state
