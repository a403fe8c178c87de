"""Transcript ingestion: load plain-text interviews, clean them, and split
each document into chunks that fit the model's token budget.

Chunk boundaries are paragraph-first with a sentence fallback, so speaker
turns survive intact. Each chunk keeps its trailing separators, which makes
plain concatenation of the chunks reproduce the cleaned document exactly.
"""

import re
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

from .errors import ChunkOverflow, CorpusEmpty, IoError
from .tokenizers import TokenCounter

# printable basic-Latin plus common typographic punctuation
_DEFAULT_ALLOWED_EXTRA = "‘’“”–—…«»°éè"


@dataclass(frozen=True)
class CleaningPolicy:
    allowed_chars: str = string.printable + _DEFAULT_ALLOWED_EXTRA


@dataclass(frozen=True)
class ChunkPolicy:
    chunk_min: int = 700
    chunk_max: int = 1600
    model_context_limit: int = 4097

    def __post_init__(self):
        if not (self.chunk_min < self.chunk_max < self.model_context_limit):
            raise ValueError(
                "require chunk_min < chunk_max < model_context_limit, got "
                f"{self.chunk_min}/{self.chunk_max}/{self.model_context_limit}"
            )


@dataclass(frozen=True)
class Document:
    doc_id: str
    source_path: str
    raw_text: str
    cleaned_text: str

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "source_path": self.source_path,
            "raw_text": self.raw_text,
            "cleaned_text": self.cleaned_text,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Document":
        return cls(d["doc_id"], d["source_path"], d["raw_text"], d["cleaned_text"])


@dataclass(frozen=True)
class InterviewChunk:
    chunk_id: str
    doc_id: str
    ordinal: int
    text: str
    token_count: int

    def to_dict(self) -> dict:
        return {
            "chunk_id": self.chunk_id,
            "doc_id": self.doc_id,
            "ordinal": self.ordinal,
            "text": self.text,
            "token_count": self.token_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InterviewChunk":
        return cls(d["chunk_id"], d["doc_id"], d["ordinal"], d["text"], d["token_count"])


def clean_text(raw: str, policy: Optional[CleaningPolicy] = None) -> str:
    """Drop disallowed characters, collapse whitespace runs within lines,
    and normalize paragraph breaks to exactly one blank line. Idempotent."""
    policy = policy or CleaningPolicy()
    allowed = set(policy.allowed_chars)
    kept = "".join(ch for ch in raw if ch in allowed or ch == "\n")

    lines = []
    for line in kept.split("\n"):
        lines.append(re.sub(r"[ \t\x0b\x0c\r]+", " ", line).strip())
    text = "\n".join(lines)
    text = re.sub(r"\n{3,}", "\n\n", text)
    return text.strip()


def load_corpus(directory, cleaning: Optional[CleaningPolicy] = None) -> List[Document]:
    """One Document per plain-text file, sorted by doc_id (the file stem)."""
    root = Path(directory)
    if not root.is_dir():
        raise IoError(f"not a directory: {root}")
    paths = sorted(p for p in root.iterdir() if p.is_file() and p.suffix == ".txt")
    if not paths:
        raise CorpusEmpty(f"no .txt files in {root}")
    docs = []
    for path in paths:
        try:
            raw = path.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            raise IoError(f"cannot read {path}: {exc}") from exc
        docs.append(
            Document(
                doc_id=path.stem,
                source_path=str(path),
                raw_text=raw,
                cleaned_text=clean_text(raw, cleaning),
            )
        )
    docs.sort(key=lambda d: d.doc_id)
    return docs


_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")


def _segments(text: str, sep: str) -> List[str]:
    """Split on sep, re-attaching the separator to the preceding piece so
    that plain concatenation of the segments reproduces the input."""
    parts = text.split(sep)
    return [p + sep for p in parts[:-1]] + [parts[-1]]


def _split_sentences(paragraph: str) -> List[str]:
    out = []
    pos = 0
    for m in _SENTENCE_SPLIT.finditer(paragraph):
        out.append(paragraph[pos : m.end()])
        pos = m.end()
    if pos < len(paragraph):
        out.append(paragraph[pos:])
    return out or [paragraph]


def chunk_document(
    doc: Document, policy: ChunkPolicy, tokenizer: TokenCounter
) -> List[InterviewChunk]:
    """Greedy paragraph accumulation up to chunk_max tokens; an oversized
    paragraph is split at sentence boundaries. A single sentence over the
    budget raises ChunkOverflow rather than truncating."""
    text = doc.cleaned_text
    if not text:
        raise ValueError(f"document {doc.doc_id} has empty cleaned_text")

    pieces: List[str] = []
    for para in _segments(text, "\n\n"):
        if tokenizer(para) <= policy.chunk_max:
            pieces.append(para)
            continue
        for sent in _split_sentences(para):
            if tokenizer(sent) > policy.chunk_max:
                offset = text.index(sent)
                raise ChunkOverflow(
                    f"sentence of {tokenizer(sent)} tokens exceeds chunk_max="
                    f"{policy.chunk_max} in document {doc.doc_id} at offset {offset}"
                )
            pieces.append(sent)

    texts: List[str] = []
    current = ""
    for piece in pieces:
        candidate = current + piece
        if current and tokenizer(candidate) > policy.chunk_max:
            texts.append(current)
            current = piece
        else:
            current = candidate
    if current:
        texts.append(current)

    # A trailing chunk below chunk_min folds into its predecessor when the
    # combined chunk still fits; otherwise it stays (short-document case).
    if len(texts) >= 2 and tokenizer(texts[-1]) < policy.chunk_min:
        if tokenizer(texts[-2] + texts[-1]) <= policy.chunk_max:
            texts[-2:] = [texts[-2] + texts[-1]]

    return [
        InterviewChunk(
            chunk_id=f"{doc.doc_id}:{i:03d}",
            doc_id=doc.doc_id,
            ordinal=i,
            text=t,
            token_count=tokenizer(t),
        )
        for i, t in enumerate(texts)
    ]


def chunk_corpus(
    docs: List[Document], policy: ChunkPolicy, tokenizer: TokenCounter
) -> List[InterviewChunk]:
    chunks: List[InterviewChunk] = []
    for doc in docs:
        chunks.extend(chunk_document(doc, policy, tokenizer))
    return chunks
