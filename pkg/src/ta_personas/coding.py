"""Phase 2: render coding prompts per chunk, parse model responses into
codes, assemble codebooks, and reduce them by merging near-duplicate names.
"""

import enum
import json
import logging
import re
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from .corpus import InterviewChunk
from .errors import DimensionMismatch, EmptyCodebook, ParseError, TokenBudgetExceeded
from .llm_gateway import Completion, PromptRequest, PurposeTag
from .prompt_templates import render_template
from .tokenizers import TokenCounter, approx_count

logger = logging.getLogger(__name__)


class Dimension(str, enum.Enum):
    CHALLENGE = "challenge"
    NEED = "need"


# per-chunk counts the coding prompts ask for
CODES_PER_CHUNK = {Dimension.CHALLENGE: 2, Dimension.NEED: 3}

_CODING_TEMPLATE = {Dimension.CHALLENGE: "challenge_coding", Dimension.NEED: "need_coding"}
_CODING_TAG = {
    Dimension.CHALLENGE: PurposeTag.CODE_CHALLENGES,
    Dimension.NEED: PurposeTag.CODE_NEEDS,
}
_RESPONSE_KEY = {Dimension.CHALLENGE: "challenges", Dimension.NEED: "needs"}


@dataclass(frozen=True)
class Code:
    code_id: str
    dimension: Dimension
    name: str
    description: str
    quote: str
    source_chunk_id: str
    merged_from: Tuple[str, ...] = ()
    quote_verified: Optional[bool] = None

    def to_dict(self) -> dict:
        return {
            "code_id": self.code_id,
            "dimension": self.dimension.value,
            "name": self.name,
            "description": self.description,
            "quote": self.quote,
            "source_chunk_id": self.source_chunk_id,
            "merged_from": list(self.merged_from),
            "quote_verified": self.quote_verified,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Code":
        return cls(
            code_id=d["code_id"],
            dimension=Dimension(d["dimension"]),
            name=d["name"],
            description=d["description"],
            quote=d["quote"],
            source_chunk_id=d["source_chunk_id"],
            merged_from=tuple(d.get("merged_from", [])),
            quote_verified=d.get("quote_verified"),
        )


@dataclass(frozen=True)
class Codebook:
    dimension: Dimension
    codes: Tuple[Code, ...]
    stage: str  # raw | reduced
    provenance: str = ""

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension.value,
            "stage": self.stage,
            "codes": [c.to_dict() for c in self.codes],
        }

    @classmethod
    def from_dict(cls, d: dict, provenance: str = "") -> "Codebook":
        return cls(
            dimension=Dimension(d["dimension"]),
            codes=tuple(Code.from_dict(c) for c in d["codes"]),
            stage=d["stage"],
            provenance=provenance,
        )


@dataclass(frozen=True)
class MergeMap:
    """Raw code id -> reduced code id, total over the raw codebook."""

    mapping: Dict[str, str]

    def ancestors(self, reduced_code_id: str) -> List[str]:
        return [raw for raw, red in self.mapping.items() if red == reduced_code_id]

    def to_dict(self) -> dict:
        return dict(self.mapping)

    @classmethod
    def from_dict(cls, d: dict) -> "MergeMap":
        return cls(mapping=dict(d))


def render_code_prompt(
    chunk: InterviewChunk,
    dimension: Dimension,
    model_name: str = "gpt-3.5-turbo",
    max_response_tokens: int = 700,
    tokenizer: TokenCounter = approx_count,
    context_limit: int = 4097,
) -> PromptRequest:
    """Phase-2 prompts run at temperature 0."""
    prompt_text = render_template(_CODING_TEMPLATE[dimension], text=chunk.text)
    if tokenizer(prompt_text) + max_response_tokens > context_limit:
        raise TokenBudgetExceeded(
            f"coding prompt for chunk {chunk.chunk_id} exceeds context limit"
        )
    return PromptRequest(
        prompt_text=prompt_text,
        temperature=0.0,
        max_response_tokens=max_response_tokens,
        model_name=model_name,
        purpose_tag=_CODING_TAG[dimension],
    )


_FENCE = re.compile(r"```(?:json)?\s*(.*?)```", re.DOTALL)


def extract_json_object(text: str) -> dict:
    """Tolerant extraction: try fenced blocks, the whole text, then the
    outermost brace span. Raises ParseError with the raw text preserved."""
    candidates = [m.strip() for m in _FENCE.findall(text)]
    candidates.append(text.strip())
    start, end = text.find("{"), text.rfind("}")
    if 0 <= start < end:
        candidates.append(text[start : end + 1])
    for cand in candidates:
        try:
            obj = json.loads(cand)
        except (json.JSONDecodeError, ValueError):
            continue
        if isinstance(obj, dict):
            return obj
    raise ParseError("no JSON object found in response", raw_response=text)


def _lookup_key(obj: dict, base: str):
    """Case-insensitive lookup tolerating singular/plural variants."""
    wanted = {base, base.rstrip("s"), base + "s"}
    for key, value in obj.items():
        if key.strip().lower() in wanted:
            return value
    return None


def _entry_field(entry: dict, names: Tuple[str, ...]) -> str:
    for key, value in entry.items():
        if key.strip().lower() in names:
            if isinstance(value, list):
                value = value[0] if value else ""
            return str(value).strip()
    return ""


def normalize_quote_text(text: str) -> str:
    text = text.lower()
    text = re.sub(r"[^\w\s]", " ", text)
    return re.sub(r"\s+", " ", text).strip()


def extract_codes(
    completion: Completion,
    dimension: Dimension,
    chunk_id: str,
    chunk_text: Optional[str] = None,
) -> List[Code]:
    obj = extract_json_object(completion.response_text)
    entries = _lookup_key(obj, _RESPONSE_KEY[dimension])
    if entries is None:
        raise ParseError(
            f"response has no '{_RESPONSE_KEY[dimension].title()}' key",
            raw_response=completion.response_text,
        )
    if isinstance(entries, dict):
        entries = [entries]
    if not isinstance(entries, list):
        raise ParseError(
            "entries are neither a list nor an object",
            raw_response=completion.response_text,
        )

    limit = CODES_PER_CHUNK[dimension]
    if len(entries) > limit:
        logger.warning(
            "OverCount: %d %s codes from chunk %s (limit %d); keeping all",
            len(entries), dimension.value, chunk_id, limit,
        )

    norm_chunk = normalize_quote_text(chunk_text) if chunk_text else None
    codes = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict):
            continue
        name = _entry_field(entry, ("name", "challenge", "need", "title"))
        description = _entry_field(entry, ("description", "summary"))
        quote = _entry_field(entry, ("quote", "quotes"))
        verified = None
        if norm_chunk is not None and quote:
            verified = normalize_quote_text(quote) in norm_chunk
            if not verified:
                logger.warning(
                    "QuoteUnverified: quote for code %d of chunk %s not found in chunk",
                    i, chunk_id,
                )
        codes.append(
            Code(
                code_id=f"{dimension.value}:{chunk_id}:{i}",
                dimension=dimension,
                name=name,
                description=description,
                quote=quote,
                source_chunk_id=chunk_id,
                quote_verified=verified,
            )
        )
    if not codes:
        raise ParseError(
            "no code entries parsed from response",
            raw_response=completion.response_text,
        )
    return codes


def build_codebook(
    codes: List[Code], dimension: Dimension, provenance: str = ""
) -> Codebook:
    for code in codes:
        if code.dimension != dimension:
            raise DimensionMismatch(
                f"code {code.code_id} is {code.dimension.value}, expected {dimension.value}"
            )
    indexed = list(enumerate(codes))
    indexed.sort(key=lambda pair: (pair[1].source_chunk_id, pair[0]))
    return Codebook(
        dimension=dimension,
        codes=tuple(code for _, code in indexed),
        stage="raw",
        provenance=provenance,
    )


def normalize_name(name: str) -> str:
    name = name.lower().strip()
    name = re.sub(r"\s+", " ", name)
    return name.rstrip(".,;:!?")


def _levenshtein(a: str, b: str) -> int:
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def name_similarity(a: str, b: str) -> float:
    na, nb = normalize_name(a), normalize_name(b)
    if na == nb:
        return 1.0
    longest = max(len(na), len(nb))
    if longest == 0:
        return 1.0
    return 1.0 - _levenshtein(na, nb) / longest


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # keep the lower index as root so cluster order is deterministic
            lo, hi = sorted((ra, rb))
            self.parent[hi] = lo


def reduce_codebook(
    cb: Codebook, threshold: float = 0.85
) -> Tuple[Codebook, MergeMap]:
    """Merge codes with identical normalized names or name edit-similarity
    at or above the threshold. Deterministic and idempotent."""
    if not cb.codes:
        raise EmptyCodebook(f"cannot reduce an empty {cb.dimension.value} codebook")

    codes = list(cb.codes)
    uf = _UnionFind(len(codes))
    for i in range(len(codes)):
        for j in range(i + 1, len(codes)):
            if name_similarity(codes[i].name, codes[j].name) >= threshold:
                uf.union(i, j)

    clusters: Dict[int, List[int]] = {}
    for i in range(len(codes)):
        clusters.setdefault(uf.find(i), []).append(i)

    reduced: List[Code] = []
    mapping: Dict[str, str] = {}
    for root in sorted(clusters):
        members = [codes[i] for i in clusters[root]]
        if len(members) == 1:
            kept = members[0]
            reduced.append(kept)
            mapping[kept.code_id] = kept.code_id
            continue
        name = min(m.name for m in members)
        descriptions = []
        for m in members:
            if m.description and m.description not in descriptions:
                descriptions.append(m.description)
        merged_from: List[str] = []
        for m in members:
            merged_from.extend(m.merged_from or (m.code_id,))
        merged = Code(
            code_id=f"{cb.dimension.value}:merged:{len(reduced)}",
            dimension=cb.dimension,
            name=name,
            description="; ".join(descriptions),
            quote=members[0].quote,
            source_chunk_id=members[0].source_chunk_id,
            merged_from=tuple(merged_from),
        )
        reduced.append(merged)
        for m in members:
            mapping[m.code_id] = merged.code_id

    return (
        Codebook(
            dimension=cb.dimension,
            codes=tuple(reduced),
            stage="reduced",
            provenance=cb.provenance,
        ),
        MergeMap(mapping=mapping),
    )
