"""Phase 4: temperature-perturbed variability tests, mechanical consistency
scoring, and application of the analyst's keep/replace/drop decisions.

Scoring is advisory input to a mandatory human decision; nothing here
replaces a theme automatically."""

import difflib
import logging
import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .coding import Codebook, Dimension, MergeMap
from .errors import (
    DimensionMismatch,
    IncompleteDecision,
    PipelineError,
    UnknownTheme,
)
from .llm_gateway import Gateway, PurposeTag
from .theming import ThemeBook, expand_theme, parse_theme_groups, render_grouping_prompt

logger = logging.getLogger(__name__)

_NAME_STOPWORDS = {"a", "an", "and", "for", "in", "of", "on", "the", "to", "with"}


def name_token_jaccard(a: str, b: str) -> float:
    ta = {t for t in re.findall(r"[a-z0-9]+", a.lower()) if t not in _NAME_STOPWORDS}
    tb = {t for t in re.findall(r"[a-z0-9]+", b.lower()) if t not in _NAME_STOPWORDS}
    if not ta and not tb:
        return 1.0
    if not ta or not tb:
        return 0.0
    return len(ta & tb) / len(ta | tb)


@dataclass(frozen=True)
class ConsistencyRow:
    theme_id: str
    code_count: int
    matches_per_variant: Tuple[Optional[str], ...]
    consistency_score: float
    weak_flag: bool

    def to_dict(self) -> dict:
        return {
            "theme_id": self.theme_id,
            "code_count": self.code_count,
            "matches_per_variant": list(self.matches_per_variant),
            "consistency_score": self.consistency_score,
            "weak_flag": self.weak_flag,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConsistencyRow":
        return cls(
            theme_id=d["theme_id"],
            code_count=d["code_count"],
            matches_per_variant=tuple(d["matches_per_variant"]),
            consistency_score=d["consistency_score"],
            weak_flag=d["weak_flag"],
        )


@dataclass(frozen=True)
class ConsistencyReport:
    dimension: Dimension
    baseline_ref: str
    variant_refs: Tuple[str, ...]
    k: int
    rows: Tuple[ConsistencyRow, ...]
    replacement_candidates: Tuple[dict, ...]
    match_threshold: float
    keep_threshold: float

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension.value,
            "baseline_ref": self.baseline_ref,
            "variant_refs": list(self.variant_refs),
            "k": self.k,
            "rows": [r.to_dict() for r in self.rows],
            "replacement_candidates": list(self.replacement_candidates),
            "match_threshold": self.match_threshold,
            "keep_threshold": self.keep_threshold,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConsistencyReport":
        return cls(
            dimension=Dimension(d["dimension"]),
            baseline_ref=d["baseline_ref"],
            variant_refs=tuple(d["variant_refs"]),
            k=d["k"],
            rows=tuple(ConsistencyRow.from_dict(r) for r in d["rows"]),
            replacement_candidates=tuple(d["replacement_candidates"]),
            match_threshold=d["match_threshold"],
            keep_threshold=d["keep_threshold"],
        )


@dataclass(frozen=True)
class DecisionAction:
    action: str  # keep | replace | drop
    baseline_theme_id: Optional[str] = None
    replacement_variant: Optional[int] = None  # 0-based index into variants
    replacement_theme_id: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "action": self.action,
            "baseline_theme_id": self.baseline_theme_id,
            "replacement_variant": self.replacement_variant,
            "replacement_theme_id": self.replacement_theme_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionAction":
        return cls(
            action=d["action"],
            baseline_theme_id=d.get("baseline_theme_id"),
            replacement_variant=d.get("replacement_variant"),
            replacement_theme_id=d.get("replacement_theme_id"),
        )


@dataclass(frozen=True)
class ReviewDecision:
    dimension: Dimension
    actions: Tuple[DecisionAction, ...]
    analyst_note: str = ""
    decided_by: str = ""

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension.value,
            "actions": [a.to_dict() for a in self.actions],
            "analyst_note": self.analyst_note,
            "decided_by": self.decided_by,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReviewDecision":
        return cls(
            dimension=Dimension(d["dimension"]),
            actions=tuple(DecisionAction.from_dict(a) for a in d["actions"]),
            analyst_note=d.get("analyst_note", ""),
            decided_by=d.get("decided_by", ""),
        )


def run_variability_tests(
    cb: Codebook,
    gateway: Gateway,
    k: int = 3,
    temperature: float = 0.5,
    n_groups: int = 12,
    model_name: str = "gpt-3.5-turbo",
    source_codebook: str = "",
) -> Tuple[List[ThemeBook], int]:
    """k independent grouping runs at the given temperature. Failed runs are
    logged and excluded; the caller sees k_effective via the list length."""
    variants: List[ThemeBook] = []
    for i in range(k):
        try:
            req = render_grouping_prompt(
                cb,
                n_groups=n_groups,
                temperature=temperature,
                model_name=model_name,
                tokenizer=gateway.tokenizer,
                context_limit=gateway.context_limit,
                purpose_tag=PurposeTag.VARIABILITY_TEST,
            )
            completion = gateway.complete(req)
            variants.append(
                parse_theme_groups(
                    completion,
                    cb,
                    n_groups,
                    stage="variant",
                    temperature=temperature,
                    source_codebook=source_codebook,
                )
            )
        except PipelineError as exc:
            logger.warning("variability run %d/%d failed: %s", i + 1, k, exc)
    return variants, len(variants)


def _greedy_match(
    baseline: ThemeBook, variant: ThemeBook, threshold: float
) -> Dict[str, str]:
    """One-to-one greedy best-match, name-token Jaccard with a description
    similarity tiebreak."""
    pairs = []
    for bi, bt in enumerate(baseline.themes):
        for vi, vt in enumerate(variant.themes):
            sim = name_token_jaccard(bt.name, vt.name)
            if sim >= threshold:
                tiebreak = difflib.SequenceMatcher(
                    None, bt.description.lower(), vt.description.lower()
                ).ratio()
                pairs.append((-sim, -tiebreak, bi, vi))
    pairs.sort()
    matched: Dict[str, str] = {}
    used_variant = set()
    for _, _, bi, vi in pairs:
        b_id = baseline.themes[bi].theme_id
        if b_id in matched or vi in used_variant:
            continue
        matched[b_id] = variant.themes[vi].theme_id
        used_variant.add(vi)
    return matched


def score_consistency(
    baseline: ThemeBook,
    variants: List[ThemeBook],
    match_threshold: float = 0.5,
    keep_threshold: float = 0.5,
    baseline_ref: str = "",
    variant_refs: Tuple[str, ...] = (),
) -> ConsistencyReport:
    for book in variants:
        if book.dimension != baseline.dimension:
            raise DimensionMismatch(
                f"variant book is {book.dimension.value}, baseline is "
                f"{baseline.dimension.value}"
            )
    k = len(variants)
    matchings = [_greedy_match(baseline, v, match_threshold) for v in variants]

    rows = []
    for theme in baseline.themes:
        matches = tuple(m.get(theme.theme_id) for m in matchings)
        hits = sum(1 for m in matches if m is not None)
        score = hits / k if k else 0.0
        rows.append(
            ConsistencyRow(
                theme_id=theme.theme_id,
                code_count=theme.code_count,
                matches_per_variant=matches,
                consistency_score=score,
                weak_flag=theme.code_count == 1 and score < keep_threshold,
            )
        )

    # variant themes unmatched to any baseline theme, recurring in >= 2 variants
    unmatched: List[Tuple[int, object]] = []
    for vi, (variant, matching) in enumerate(zip(variants, matchings)):
        taken = set(matching.values())
        for theme in variant.themes:
            if theme.theme_id not in taken:
                unmatched.append((vi, theme))
    candidates: List[dict] = []
    consumed = set()
    for idx, (vi, theme) in enumerate(unmatched):
        if idx in consumed:
            continue
        group_variants = {vi}
        for jdx in range(idx + 1, len(unmatched)):
            if jdx in consumed:
                continue
            vj, other = unmatched[jdx]
            if vj != vi and name_token_jaccard(theme.name, other.name) >= match_threshold:
                group_variants.add(vj)
                consumed.add(jdx)
        if len(group_variants) >= 2:
            candidates.append(
                {
                    "variant": vi,
                    "theme_id": theme.theme_id,
                    "name": theme.name,
                    "description": theme.description,
                    "code_count": theme.code_count,
                    "seen_in_variants": sorted(group_variants),
                }
            )

    return ConsistencyReport(
        dimension=baseline.dimension,
        baseline_ref=baseline_ref,
        variant_refs=tuple(variant_refs) or tuple("" for _ in variants),
        k=k,
        rows=tuple(rows),
        replacement_candidates=tuple(candidates),
        match_threshold=match_threshold,
        keep_threshold=keep_threshold,
    )


def validate_decision(decision: ReviewDecision, baseline: ThemeBook,
                      variants: List[ThemeBook]) -> List[str]:
    """Returns a list of human-readable problems; empty means valid."""
    problems = []
    if decision.dimension != baseline.dimension:
        problems.append(
            f"decision dimension {decision.dimension.value} does not match "
            f"baseline {baseline.dimension.value}"
        )
    seen: Dict[str, int] = {}
    for i, act in enumerate(decision.actions):
        if act.action not in ("keep", "replace", "drop"):
            problems.append(f"action {i}: unknown action {act.action!r}")
            continue
        if not act.baseline_theme_id:
            problems.append(f"action {i}: missing baseline_theme_id")
            continue
        if baseline.theme(act.baseline_theme_id) is None:
            problems.append(f"action {i}: unknown baseline theme {act.baseline_theme_id}")
            continue
        seen[act.baseline_theme_id] = seen.get(act.baseline_theme_id, 0) + 1
        if act.action == "replace":
            if act.replacement_variant is None or not act.replacement_theme_id:
                problems.append(
                    f"action {i}: replace must name a replacement variant and theme"
                )
                continue
            if not 0 <= act.replacement_variant < len(variants):
                problems.append(
                    f"action {i}: variant index {act.replacement_variant} out of range"
                )
                continue
            if variants[act.replacement_variant].theme(act.replacement_theme_id) is None:
                problems.append(
                    f"action {i}: variant {act.replacement_variant} has no theme "
                    f"{act.replacement_theme_id}"
                )
    for theme in baseline.themes:
        count = seen.get(theme.theme_id, 0)
        if count == 0:
            problems.append(f"baseline theme {theme.theme_id} has no action")
        elif count > 1:
            problems.append(f"baseline theme {theme.theme_id} has {count} actions")
    return problems


def apply_decisions(
    baseline: ThemeBook,
    variants: List[ThemeBook],
    decision: ReviewDecision,
    raw_cb: Codebook,
    merge_map: MergeMap,
) -> ThemeBook:
    """Produce the final theme book: kept themes plus replacements, each
    fully expanded to raw codes with descriptions and quotes."""
    problems = validate_decision(decision, baseline, variants)
    if problems:
        dangling = [p for p in problems if "unknown" in p or "has no theme" in p]
        if dangling:
            raise UnknownTheme("; ".join(dangling))
        raise IncompleteDecision("; ".join(problems))

    final_themes: List[object] = []
    for act in decision.actions:
        if act.action == "drop":
            continue
        if act.action == "keep":
            source = baseline.theme(act.baseline_theme_id)
        else:
            source = variants[act.replacement_variant].theme(act.replacement_theme_id)
        final_themes.append(source)

    renumbered = []
    expansions = []
    for i, theme in enumerate(final_themes, 1):
        final = type(theme)(
            theme_id=f"{baseline.dimension.value}:final:{i}",
            dimension=theme.dimension,
            name=theme.name,
            description=theme.description,
            member_code_ids=theme.member_code_ids,
        )
        renumbered.append(final)
        expansions.append(expand_theme(final, raw_cb, merge_map))

    return ThemeBook(
        dimension=baseline.dimension,
        themes=tuple(renumbered),
        stage="final",
        temperature_used=baseline.temperature_used,
        source_codebook=baseline.source_codebook,
        uncovered_code_ids=baseline.uncovered_code_ids,
        expansions=tuple(expansions),
    )
