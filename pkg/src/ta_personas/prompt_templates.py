"""Prompt templates live as text files with named {placeholders} so they can
be reported verbatim in a methods section. Digests of the templates go into
the run manifest config snapshot."""

import hashlib
from importlib import resources

TEMPLATE_NAMES = ("challenge_coding", "need_coding", "grouping", "persona")


def load_template(name: str) -> str:
    if name not in TEMPLATE_NAMES:
        raise KeyError(f"unknown prompt template: {name}")
    return (
        resources.files("ta_personas.prompts").joinpath(f"{name}.txt").read_text("utf-8")
    )


def render_template(name: str, **values: str) -> str:
    return load_template(name).format(**values)


def template_digests() -> dict:
    return {
        name: hashlib.sha256(load_template(name).encode("utf-8")).hexdigest()
        for name in TEMPLATE_NAMES
    }
