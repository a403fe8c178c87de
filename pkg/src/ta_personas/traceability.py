"""Map persona elements back to the codes and quotes of the themes they
were generated from. Lexical similarity only: deterministic and auditable.
Unmatched elements are surfaced as possible fabrication."""

import difflib
import re
from dataclasses import dataclass
from typing import List, Optional, Tuple

from .errors import UnknownTheme
from .persona_writer import Persona
from .theming import ExpandedTheme, ThemeBook

QUOTE_REPORT_THRESHOLD = 0.6
ELEMENT_LINK_THRESHOLD = 0.3

_STOPWORDS = {
    "a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "has",
    "have", "in", "is", "it", "its", "of", "on", "or", "out", "that", "the",
    "their", "this", "to", "with",
}


def _normalize(text: str) -> str:
    text = text.lower()
    text = re.sub(r"[^\w\s]", " ", text)
    return re.sub(r"\s+", " ", text).strip()


def _tokens(text: str) -> set:
    return {t for t in _normalize(text).split() if t not in _STOPWORDS}


@dataclass(frozen=True)
class QuoteMatch:
    code_id: str
    theme_id: str
    similarity: float
    matched_span: str

    def to_dict(self) -> dict:
        return {
            "code_id": self.code_id,
            "theme_id": self.theme_id,
            "similarity": self.similarity,
            "matched_span": self.matched_span,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QuoteMatch":
        return cls(d["code_id"], d["theme_id"], d["similarity"], d["matched_span"])


@dataclass(frozen=True)
class ElementLink:
    kind: str  # goal | need | challenge
    text: str
    candidates: Tuple[Tuple[str, float], ...]  # (code_id, similarity), ranked

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "text": self.text,
            "candidates": [list(c) for c in self.candidates],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ElementLink":
        return cls(d["kind"], d["text"], tuple((c[0], c[1]) for c in d["candidates"]))


@dataclass(frozen=True)
class TraceReport:
    persona_ref: str
    quote_match: Optional[QuoteMatch]
    element_links: Tuple[ElementLink, ...]
    unmatched_elements: Tuple[Tuple[str, str], ...]  # (kind, text)
    quote_threshold: float
    link_threshold: float

    def to_dict(self) -> dict:
        return {
            "persona_ref": self.persona_ref,
            "quote_match": self.quote_match.to_dict() if self.quote_match else None,
            "element_links": [e.to_dict() for e in self.element_links],
            "unmatched_elements": [list(u) for u in self.unmatched_elements],
            "quote_threshold": self.quote_threshold,
            "link_threshold": self.link_threshold,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TraceReport":
        return cls(
            persona_ref=d["persona_ref"],
            quote_match=QuoteMatch.from_dict(d["quote_match"]) if d["quote_match"] else None,
            element_links=tuple(ElementLink.from_dict(e) for e in d["element_links"]),
            unmatched_elements=tuple((u[0], u[1]) for u in d["unmatched_elements"]),
            quote_threshold=d["quote_threshold"],
            link_threshold=d["link_threshold"],
        )


def quote_similarity(quote: str, code_quote: str) -> Tuple[float, str]:
    """Fraction of the persona quote covered by matching runs against the
    code quote, on normalized text. An exact substring scores 1.0."""
    nq, nc = _normalize(quote), _normalize(code_quote)
    if not nq or not nc:
        return 0.0, ""
    matcher = difflib.SequenceMatcher(None, nq, nc, autojunk=False)
    blocks = matcher.get_matching_blocks()
    covered = sum(b.size for b in blocks)
    longest = max(blocks, key=lambda b: b.size)
    span = nq[longest.a : longest.a + longest.size]
    return covered / len(nq), span


def locate_quote(quote: str, themes: List[ExpandedTheme]) -> Optional[QuoteMatch]:
    """Best similarity across every code quote of the given themes. When
    several codes carry the same quote text, the last listed one wins."""
    best: Optional[QuoteMatch] = None
    for theme in themes:
        for row in theme.rows:
            sim, span = quote_similarity(quote, row.quote)
            if best is None or sim >= best.similarity:
                best = QuoteMatch(
                    code_id=row.code_id,
                    theme_id=theme.theme_id,
                    similarity=sim,
                    matched_span=span,
                )
    return best


def element_similarity(element: str, theme: ExpandedTheme, row_index: int) -> float:
    """Token overlap between the element and a code's name + description,
    measured against the element's own tokens."""
    etok = _tokens(element)
    if not etok:
        return 0.0
    row = theme.rows[row_index]
    ctok = _tokens(f"{row.name} {row.description}")
    return len(etok & ctok) / len(etok)


def trace_persona(
    p: Persona,
    need_book: ThemeBook,
    challenge_book: ThemeBook,
    persona_ref: str = "",
    quote_threshold: float = QUOTE_REPORT_THRESHOLD,
    link_threshold: float = ELEMENT_LINK_THRESHOLD,
    top_n: int = 5,
) -> TraceReport:
    sel = p.source_selection
    scope: List[ExpandedTheme] = []
    for book, pair in ((need_book, sel.need_pair), (challenge_book, sel.challenge_pair)):
        for tid in pair:
            exp = book.expansion(tid)
            if exp is None:
                raise UnknownTheme(
                    f"selection references theme {tid} not present in the final "
                    f"{book.dimension.value} book"
                )
            if exp.theme_id not in {t.theme_id for t in scope}:
                scope.append(exp)

    quote_match = locate_quote(p.quote, scope) if p.quote else None

    elements = [("goal", p.goal)]
    elements += [("need", n) for n in p.needs]
    elements += [("challenge", c) for c in p.challenges]

    links: List[ElementLink] = []
    unmatched: List[Tuple[str, str]] = []
    for kind, text in elements:
        ranked: List[Tuple[str, float]] = []
        for theme in scope:
            for i in range(len(theme.rows)):
                sim = element_similarity(text, theme, i)
                ranked.append((theme.rows[i].code_id, sim))
        ranked.sort(key=lambda pair: (-pair[1], pair[0]))
        top = [(cid, round(sim, 4)) for cid, sim in ranked[:top_n] if sim >= link_threshold]
        if top:
            links.append(ElementLink(kind=kind, text=text, candidates=tuple(top)))
        else:
            unmatched.append((kind, text))

    return TraceReport(
        persona_ref=persona_ref,
        quote_match=quote_match,
        element_links=tuple(links),
        unmatched_elements=tuple(unmatched),
        quote_threshold=quote_threshold,
        link_threshold=link_threshold,
    )


def render_trace_table(report: TraceReport, p: Persona) -> str:
    """Human-readable review table mirroring the highlight-style comparison
    of persona elements against their source codes."""
    lines = [f"Trace report for persona {p.name or '(unnamed)'}"]
    if report.quote_match:
        qm = report.quote_match
        lines.append(
            f"  quote -> code {qm.code_id} (theme {qm.theme_id}), "
            f"similarity {qm.similarity:.2f}"
        )
        lines.append(f'    matched span: "{qm.matched_span}"')
    else:
        lines.append("  quote -> no match")
    for link in report.element_links:
        lines.append(f"  {link.kind}: {link.text}")
        for cid, sim in link.candidates:
            lines.append(f"    -> {cid} ({sim:.2f})")
    for kind, text in report.unmatched_elements:
        lines.append(f"  UNMATCHED {kind}: {text}")
    return "\n".join(lines)
