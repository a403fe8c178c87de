"""Pluggable token counting.

The model budget (4097 tokens) has to be enforced before any call, so every
run is configured with a named tokenizer backend. The backend name is
recorded in the run manifest so counts are auditable.
"""

import math
from typing import Callable, Dict

from .errors import ConfigError

TokenCounter = Callable[[str], int]

APPROX_CHARS_PER_TOKEN = 4


def approx_count(text: str) -> int:
    """Documented approximation: ceil(character count / 4), 0 for empty."""
    if not text:
        return 0
    return math.ceil(len(text) / APPROX_CHARS_PER_TOKEN)


def _tiktoken_counter(model_name: str = "gpt-3.5-turbo") -> TokenCounter:
    try:
        import tiktoken
    except ImportError as exc:
        raise ConfigError(
            "tokenizer backend 'tiktoken' requested but tiktoken is not installed"
        ) from exc
    enc = tiktoken.encoding_for_model(model_name)
    return lambda text: len(enc.encode(text))


_BACKENDS: Dict[str, Callable[[], TokenCounter]] = {
    "approx": lambda: approx_count,
    "tiktoken": _tiktoken_counter,
}


def get_tokenizer(backend: str = "approx") -> TokenCounter:
    if backend not in _BACKENDS:
        raise ConfigError(f"unknown tokenizer backend: {backend!r}")
    return _BACKENDS[backend]()
