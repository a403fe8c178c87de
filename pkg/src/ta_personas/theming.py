"""Phase 3: group a reduced codebook's codes into themes via a single
grouping call. Membership may overlap; codes the model leaves out are
recorded as uncovered, never force-assigned."""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

from .coding import Codebook, Dimension, MergeMap, extract_json_object, _lookup_key
from .errors import LineageGap, ParseError, TokenBudgetExceeded
from .llm_gateway import Completion, PromptRequest, PurposeTag
from .prompt_templates import render_template
from .tokenizers import TokenCounter, approx_count

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Theme:
    theme_id: str
    dimension: Dimension
    name: str
    description: str
    member_code_ids: Tuple[str, ...]

    @property
    def code_count(self) -> int:
        return len(self.member_code_ids)

    @property
    def weak_candidate(self) -> bool:
        return self.code_count == 1

    def to_dict(self) -> dict:
        return {
            "theme_id": self.theme_id,
            "dimension": self.dimension.value,
            "name": self.name,
            "description": self.description,
            "member_code_ids": list(self.member_code_ids),
            "code_count": self.code_count,
            "weak_candidate": self.weak_candidate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Theme":
        return cls(
            theme_id=d["theme_id"],
            dimension=Dimension(d["dimension"]),
            name=d["name"],
            description=d["description"],
            member_code_ids=tuple(d["member_code_ids"]),
        )


@dataclass(frozen=True)
class ExpandedCodeRow:
    code_id: str
    name: str
    description: str
    quote: str

    def to_dict(self) -> dict:
        return {
            "code_id": self.code_id,
            "name": self.name,
            "description": self.description,
            "quote": self.quote,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExpandedCodeRow":
        return cls(d["code_id"], d["name"], d["description"], d["quote"])


@dataclass(frozen=True)
class ExpandedTheme:
    """A theme unfolded to its raw codes with descriptions and quotes."""

    theme_id: str
    dimension: Dimension
    name: str
    description: str
    rows: Tuple[ExpandedCodeRow, ...]

    def to_dict(self) -> dict:
        return {
            "theme_id": self.theme_id,
            "dimension": self.dimension.value,
            "name": self.name,
            "description": self.description,
            "rows": [r.to_dict() for r in self.rows],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExpandedTheme":
        return cls(
            theme_id=d["theme_id"],
            dimension=Dimension(d["dimension"]),
            name=d["name"],
            description=d["description"],
            rows=tuple(ExpandedCodeRow.from_dict(r) for r in d["rows"]),
        )


@dataclass(frozen=True)
class ThemeBook:
    dimension: Dimension
    themes: Tuple[Theme, ...]
    stage: str  # baseline | variant | final
    temperature_used: float
    source_codebook: str = ""  # artifact digest of the reduced codebook
    uncovered_code_ids: Tuple[str, ...] = ()
    expansions: Optional[Tuple[ExpandedTheme, ...]] = None  # final stage only

    def theme(self, theme_id: str) -> Optional[Theme]:
        for t in self.themes:
            if t.theme_id == theme_id:
                return t
        return None

    def expansion(self, theme_id: str) -> Optional[ExpandedTheme]:
        for e in self.expansions or ():
            if e.theme_id == theme_id:
                return e
        return None

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension.value,
            "stage": self.stage,
            "temperature_used": self.temperature_used,
            "source_codebook": self.source_codebook,
            "themes": [t.to_dict() for t in self.themes],
            "uncovered_code_ids": list(self.uncovered_code_ids),
            "expansions": (
                [e.to_dict() for e in self.expansions]
                if self.expansions is not None
                else None
            ),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ThemeBook":
        return cls(
            dimension=Dimension(d["dimension"]),
            themes=tuple(Theme.from_dict(t) for t in d["themes"]),
            stage=d["stage"],
            temperature_used=d["temperature_used"],
            source_codebook=d.get("source_codebook", ""),
            uncovered_code_ids=tuple(d.get("uncovered_code_ids", [])),
            expansions=(
                tuple(ExpandedTheme.from_dict(e) for e in d["expansions"])
                if d.get("expansions") is not None
                else None
            ),
        )


def _topic_list(cb: Codebook, with_descriptions: bool) -> str:
    lines = []
    for i, code in enumerate(cb.codes, 1):
        if with_descriptions and code.description:
            lines.append(f"{i}. {code.name}: {code.description}")
        else:
            lines.append(f"{i}. {code.name}")
    return "\n".join(lines)


def render_grouping_prompt(
    cb: Codebook,
    n_groups: int = 12,
    temperature: float = 0.0,
    model_name: str = "gpt-3.5-turbo",
    max_response_tokens: int = 1500,
    tokenizer: TokenCounter = approx_count,
    context_limit: int = 4097,
    purpose_tag: Optional[PurposeTag] = None,
) -> PromptRequest:
    """Topic numbering is 1-based over cb.codes order; the parser relies on
    exactly that numbering. Falls back to a names-only listing if the
    description-bearing listing overflows the budget."""
    if not cb.codes:
        raise ParseError("cannot group an empty codebook")
    if purpose_tag is None:
        purpose_tag = (
            PurposeTag.GROUP_THEMES if temperature == 0.0 else PurposeTag.VARIABILITY_TEST
        )
    for with_desc in (True, False):
        prompt_text = render_template(
            "grouping",
            n_groups=str(n_groups),
            topic_list=_topic_list(cb, with_desc),
        )
        if tokenizer(prompt_text) + max_response_tokens <= context_limit:
            return PromptRequest(
                prompt_text=prompt_text,
                temperature=temperature,
                max_response_tokens=max_response_tokens,
                model_name=model_name,
                purpose_tag=purpose_tag,
            )
    raise TokenBudgetExceeded(
        f"grouping prompt over {len(cb.codes)} codes exceeds context limit "
        f"{context_limit} even without descriptions"
    )


def parse_theme_groups(
    completion: Completion,
    cb: Codebook,
    n_groups: int,
    stage: str = "baseline",
    temperature: float = 0.0,
    source_codebook: str = "",
) -> ThemeBook:
    obj = extract_json_object(completion.response_text)
    groups = _lookup_key(obj, "groups")
    if groups is None or not isinstance(groups, list) or not groups:
        raise ParseError(
            "no parseable groups in response", raw_response=completion.response_text
        )

    if len(groups) > n_groups:
        logger.warning("model returned %d groups, asked for %d", len(groups), n_groups)
    elif len(groups) < n_groups:
        logger.warning("model returned only %d of %d groups", len(groups), n_groups)

    themes: List[Theme] = []
    covered = set()
    for gi, group in enumerate(groups):
        if not isinstance(group, dict):
            continue
        name = str(_lookup_key(group, "name") or "").strip()
        description = str(_lookup_key(group, "description") or "").strip()
        topics = _lookup_key(group, "topics") or []
        member_ids = []
        for t in topics:
            try:
                number = int(t)
            except (TypeError, ValueError):
                logger.warning("non-numeric topic reference %r dropped", t)
                continue
            if not 1 <= number <= len(cb.codes):
                logger.warning(
                    "topic number %d out of range 1..%d, dropped", number, len(cb.codes)
                )
                continue
            code_id = cb.codes[number - 1].code_id
            if code_id not in member_ids:
                member_ids.append(code_id)
        if not member_ids:
            logger.warning("group %r has no resolvable members, dropped", name)
            continue
        covered.update(member_ids)
        themes.append(
            Theme(
                theme_id=f"{cb.dimension.value}:{stage}:{len(themes) + 1}",
                dimension=cb.dimension,
                name=name,
                description=description,
                member_code_ids=tuple(member_ids),
            )
        )
    if not themes:
        raise ParseError(
            "zero parseable groups in response", raw_response=completion.response_text
        )

    uncovered = tuple(c.code_id for c in cb.codes if c.code_id not in covered)
    if uncovered:
        logger.warning(
            "%d codes not covered by any theme: %s", len(uncovered), ", ".join(uncovered)
        )
    return ThemeBook(
        dimension=cb.dimension,
        themes=tuple(themes),
        stage=stage,
        temperature_used=temperature,
        source_codebook=source_codebook,
        uncovered_code_ids=uncovered,
    )


def expand_theme(theme: Theme, raw_cb: Codebook, merge_map: MergeMap) -> ExpandedTheme:
    """Unfold each reduced member code to all its raw ancestors, mirroring
    the review-table shape (theme -> code rows with description + quote)."""
    raw_by_id = {c.code_id: c for c in raw_cb.codes}
    rows: List[ExpandedCodeRow] = []
    for member_id in theme.member_code_ids:
        ancestor_ids = merge_map.ancestors(member_id)
        if not ancestor_ids:
            raise LineageGap(
                f"code {member_id} of theme {theme.theme_id} is not covered by the merge map"
            )
        for raw_id in ancestor_ids:
            raw = raw_by_id.get(raw_id)
            if raw is None:
                raise LineageGap(
                    f"raw ancestor {raw_id} of code {member_id} missing from raw codebook"
                )
            rows.append(
                ExpandedCodeRow(
                    code_id=raw.code_id,
                    name=raw.name,
                    description=raw.description,
                    quote=raw.quote,
                )
            )
    return ExpandedTheme(
        theme_id=theme.theme_id,
        dimension=theme.dimension,
        name=theme.name,
        description=theme.description,
        rows=tuple(rows),
    )
