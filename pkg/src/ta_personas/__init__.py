"""LLM-assisted inductive thematic analysis of interview transcripts with
persona generation and full provenance tracking."""

__version__ = "0.1.0"
