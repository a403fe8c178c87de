"""Phase 6: select theme tuples, render the persona prompt over the final
theme books, and parse the model's free-text persona into structured form.

The parser is deliberately tolerant: models vary heading names, order, and
formatting between runs, and the raw response is always preserved verbatim.
"""

import enum
import logging
import random
import re
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from .errors import (
    EmptyPairSet,
    EmptyThemeBook,
    ParseError,
    TokenBudgetExceeded,
    UnknownTheme,
)
from .llm_gateway import Completion, PromptRequest, PurposeTag
from .prompt_templates import render_template
from .theming import ExpandedTheme, ThemeBook
from .tokenizers import TokenCounter, approx_count

logger = logging.getLogger(__name__)

YOUNG_BELOW = 35
OLD_ABOVE = 55


class TupleMode(str, enum.Enum):
    UNORDERED_WITH_REPETITION = "unordered_with_repetition"
    UNORDERED_DISTINCT = "unordered_distinct"
    DISJOINT_PAIRING = "disjoint_pairing"
    MANUAL = "manual"


@dataclass(frozen=True)
class TupleSelection:
    need_pair: Tuple[str, str]
    challenge_pair: Tuple[str, str]
    seed: int
    mode: TupleMode

    def to_dict(self) -> dict:
        return {
            "need_pair": list(self.need_pair),
            "challenge_pair": list(self.challenge_pair),
            "seed": self.seed,
            "mode": self.mode.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TupleSelection":
        return cls(
            need_pair=tuple(d["need_pair"]),
            challenge_pair=tuple(d["challenge_pair"]),
            seed=d["seed"],
            mode=TupleMode(d["mode"]),
        )


@dataclass(frozen=True)
class Persona:
    name: str
    age_bracket: str  # young | middle | old | ""
    stated_age: Optional[int]
    country: str
    goal: str
    background: str
    needs: Tuple[str, ...]
    challenges: Tuple[str, ...]
    it_skills: str  # low | medium | high | ""
    attitude_digital: str
    quote: str
    source_selection: TupleSelection
    raw_response: str

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "age_bracket": self.age_bracket,
            "stated_age": self.stated_age,
            "country": self.country,
            "goal": self.goal,
            "background": self.background,
            "needs": list(self.needs),
            "challenges": list(self.challenges),
            "it_skills": self.it_skills,
            "attitude_digital": self.attitude_digital,
            "quote": self.quote,
            "source_selection": self.source_selection.to_dict(),
            "raw_response": self.raw_response,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Persona":
        return cls(
            name=d["name"],
            age_bracket=d["age_bracket"],
            stated_age=d.get("stated_age"),
            country=d["country"],
            goal=d["goal"],
            background=d["background"],
            needs=tuple(d["needs"]),
            challenges=tuple(d["challenges"]),
            it_skills=d["it_skills"],
            attitude_digital=d["attitude_digital"],
            quote=d["quote"],
            source_selection=TupleSelection.from_dict(d["source_selection"]),
            raw_response=d["raw_response"],
        )


@dataclass(frozen=True)
class Finding:
    severity: str  # info | warn | error
    rule: str
    detail: str

    def to_dict(self) -> dict:
        return {"severity": self.severity, "rule": self.rule, "detail": self.detail}


@dataclass(frozen=True)
class ValidationReport:
    findings: Tuple[Finding, ...]

    @property
    def ok(self) -> bool:
        return not any(f.severity == "error" for f in self.findings)

    def to_dict(self) -> dict:
        return {"findings": [f.to_dict() for f in self.findings]}


def enumerate_tuples(book: ThemeBook, mode: TupleMode) -> List[Tuple[str, str]]:
    """Complete, duplicate-free pair enumeration: n(n+1)/2 with repetition,
    n(n-1)/2 distinct."""
    if not book.themes:
        raise EmptyThemeBook(f"{book.dimension.value} theme book has no themes")
    ids = [t.theme_id for t in book.themes]
    if mode == TupleMode.UNORDERED_WITH_REPETITION:
        return [(ids[i], ids[j]) for i in range(len(ids)) for j in range(i, len(ids))]
    if mode == TupleMode.UNORDERED_DISTINCT:
        pairs = [(ids[i], ids[j]) for i in range(len(ids)) for j in range(i + 1, len(ids))]
        if not pairs:
            raise EmptyPairSet("distinct pairing needs at least 2 themes")
        return pairs
    raise ValueError(f"mode {mode.value} is not enumerable")


def _pick_pair(ids: List[str], rng: random.Random, mode: TupleMode) -> Tuple[str, str]:
    if mode == TupleMode.DISJOINT_PAIRING:
        shuffled = ids[:]
        rng.shuffle(shuffled)
        pairs = [
            (shuffled[i], shuffled[i + 1]) for i in range(0, len(shuffled) - 1, 2)
        ]
        if not pairs:
            raise EmptyPairSet("disjoint pairing needs at least 2 themes")
        return pairs[rng.randrange(len(pairs))]
    if mode == TupleMode.UNORDERED_WITH_REPETITION:
        pairs = [(ids[i], ids[j]) for i in range(len(ids)) for j in range(i, len(ids))]
    else:
        pairs = [(ids[i], ids[j]) for i in range(len(ids)) for j in range(i + 1, len(ids))]
        if not pairs:
            raise EmptyPairSet("distinct pairing needs at least 2 themes")
    return pairs[rng.randrange(len(pairs))]


def select_tuples(
    need_book: ThemeBook,
    challenge_book: ThemeBook,
    seed: int,
    mode: TupleMode = TupleMode.UNORDERED_WITH_REPETITION,
    manual_need_pair: Optional[Tuple[str, str]] = None,
    manual_challenge_pair: Optional[Tuple[str, str]] = None,
) -> TupleSelection:
    """Seeded, reproducible tuple selection. Needs are drawn first, then
    challenges, from the same seeded generator."""
    for book in (need_book, challenge_book):
        if not book.themes:
            raise EmptyThemeBook(f"{book.dimension.value} theme book has no themes")

    if mode == TupleMode.MANUAL:
        if manual_need_pair is None or manual_challenge_pair is None:
            raise ValueError("manual mode requires both pairs")
        for tid in manual_need_pair:
            if need_book.theme(tid) is None:
                raise UnknownTheme(f"need theme {tid} not in final need book")
        for tid in manual_challenge_pair:
            if challenge_book.theme(tid) is None:
                raise UnknownTheme(f"challenge theme {tid} not in final challenge book")
        return TupleSelection(
            need_pair=tuple(manual_need_pair),
            challenge_pair=tuple(manual_challenge_pair),
            seed=seed,
            mode=mode,
        )

    rng = random.Random(seed)
    need_pair = _pick_pair([t.theme_id for t in need_book.themes], rng, mode)
    challenge_pair = _pick_pair([t.theme_id for t in challenge_book.themes], rng, mode)
    selection = TupleSelection(
        need_pair=need_pair, challenge_pair=challenge_pair, seed=seed, mode=mode
    )
    if need_pair[0] == need_pair[1] or challenge_pair[0] == challenge_pair[1]:
        logger.info("self-pair tuple selected; persona will draw on a single theme")
    return selection


def _resolve_expanded(book: ThemeBook, pair: Tuple[str, str]) -> List[ExpandedTheme]:
    themes = []
    for tid in pair:
        exp = book.expansion(tid)
        if exp is None:
            raise UnknownTheme(
                f"theme {tid} is not in the final {book.dimension.value} book"
            )
        if exp.theme_id not in {t.theme_id for t in themes}:
            themes.append(exp)
    return themes


def _serialize_theme(theme: ExpandedTheme, with_descriptions: bool) -> str:
    parts = [f"{theme.name}: {theme.description}"]
    seen = set()
    for row in theme.rows:
        if with_descriptions:
            line = f'{row.name} ({row.description}): "{row.quote}"'
        else:
            line = f'{row.name}: "{row.quote}"'
        # identical code material adds nothing to the prompt
        if line not in seen:
            seen.add(line)
            parts.append(line)
    return " ".join(parts)


def render_persona_prompt(
    selection: TupleSelection,
    need_book: ThemeBook,
    challenge_book: ThemeBook,
    temperature: float = 1.0,
    model_name: str = "gpt-3.5-turbo",
    max_response_tokens: int = 900,
    tokenizer: TokenCounter = approx_count,
    context_limit: int = 4097,
) -> PromptRequest:
    """Persona writing runs at temperature 1 by default. If the full theme
    material overflows the budget, code descriptions are dropped before
    giving up."""
    needs = _resolve_expanded(need_book, selection.need_pair)
    challenges = _resolve_expanded(challenge_book, selection.challenge_pair)
    for with_desc in (True, False):
        prompt_text = render_template(
            "persona",
            needs_list="; ".join(_serialize_theme(t, with_desc) for t in needs),
            challenges_list="; ".join(_serialize_theme(t, with_desc) for t in challenges),
        )
        if tokenizer(prompt_text) + max_response_tokens <= context_limit:
            return PromptRequest(
                prompt_text=prompt_text,
                temperature=temperature,
                max_response_tokens=max_response_tokens,
                model_name=model_name,
                purpose_tag=PurposeTag.WRITE_PERSONA,
            )
    raise TokenBudgetExceeded(
        "persona prompt exceeds the context limit even without code descriptions"
    )


# heading -> field, checked in order (quote before goal: "Quote representing
# the goal" must not land in goal)
_HEADINGS = [
    (re.compile(r"^quote\b[^:]*:\s*(.*)$", re.IGNORECASE), "quote"),
    (re.compile(r"^user\s+persona\s*:\s*(.*)$", re.IGNORECASE), "persona_header"),
    (re.compile(r"^persona\s*:\s*(.*)$", re.IGNORECASE), "persona_header"),
    (re.compile(r"^name\s*:\s*(.*)$", re.IGNORECASE), "name"),
    (re.compile(r"^age(\s+bracket)?\s*:\s*(.*)$", re.IGNORECASE), "age"),
    (re.compile(r"^country\s*:\s*(.*)$", re.IGNORECASE), "country"),
    (re.compile(r"^(main\s+)?goal\s*:\s*(.*)$", re.IGNORECASE), "goal"),
    (re.compile(r"^(narrative\s+)?background\s*:\s*(.*)$", re.IGNORECASE), "background"),
    (re.compile(r"^(main\s+)?needs\s*:\s*(.*)$", re.IGNORECASE), "needs"),
    (re.compile(r"^(main\s+)?challenges\s*:\s*(.*)$", re.IGNORECASE), "challenges"),
    (re.compile(r"^it\s+skills\s*:\s*(.*)$", re.IGNORECASE), "it_skills"),
    (re.compile(r"^attitude\b[^:]*:\s*(.*)$", re.IGNORECASE), "attitude"),
]

_LIST_FIELDS = {"needs", "challenges"}
_BULLET = re.compile(r"^[-*•]\s+(.*)$")


def _strip_markup(line: str) -> str:
    line = line.replace("**", "")
    return line.strip()


def _level(text: str) -> str:
    found = re.findall(r"\b(low|medium|high)\b", text.lower())
    return found[-1] if found else ""


def _age_bracket(text: str) -> Tuple[str, Optional[int]]:
    t = text.lower()
    numbers = [int(n) for n in re.findall(r"\d+", t)]
    decade = re.search(r"(\d+)s\b", t)
    stated = numbers[0] if len(numbers) == 1 and not decade else None

    if "young" in t:
        return "young", stated
    if "middle" in t:
        return "middle", stated
    # "old" as a descriptor, not as part of "N years old"
    if re.search(r"\b(senior|elderly|elder)\b", t) or re.search(
        r"(?<!years )(?<!year )\bold\b", t
    ):
        return "old", stated

    age = None
    if decade:
        base = int(decade.group(1))
        if "late" in t:
            age = base + 7
        elif "early" in t:
            age = base + 2
        else:
            age = base + 5
    elif len(numbers) >= 2:
        age = sum(numbers[:2]) / 2
    elif numbers:
        age = numbers[0]

    if age is None:
        return "", stated
    if age < YOUNG_BELOW:
        return "young", stated
    if age > OLD_ABOVE:
        return "old", stated
    return "middle", stated


def _split_name_country(value: str) -> Tuple[str, str]:
    m = re.match(r"^(.*?),\s*from\s+(.*)$", value, re.IGNORECASE)
    if m:
        return m.group(1).strip(), m.group(2).strip()
    return value.strip(), ""


def parse_persona(completion: Completion, selection: TupleSelection) -> Persona:
    raw = completion.response_text
    sections: Dict[str, List[str]] = {}
    items: Dict[str, List[str]] = {"needs": [], "challenges": []}
    current: Optional[str] = None

    for raw_line in raw.splitlines():
        line = _strip_markup(raw_line)
        if not line:
            continue
        bullet = _BULLET.match(line)
        matched = None
        if not bullet:
            for pattern, fieldname in _HEADINGS:
                m = pattern.match(line)
                if m:
                    matched = fieldname
                    inline = m.groups()[-1].strip()
                    sections.setdefault(fieldname, [])
                    if inline:
                        sections[fieldname].append(inline)
                    current = fieldname
                    break
        if matched:
            continue
        if current in _LIST_FIELDS:
            if bullet:
                items[current].append(bullet.group(1).strip())
            continue
        if bullet and current:
            sections.setdefault(current, []).append(bullet.group(1).strip())
        elif current:
            sections.setdefault(current, []).append(line)

    def text_of(fieldname: str, joiner: str = " ") -> str:
        return joiner.join(sections.get(fieldname, [])).strip()

    name, country = "", ""
    if sections.get("name"):
        name, country = _split_name_country(text_of("name"))
    elif sections.get("persona_header"):
        name, country = _split_name_country(text_of("persona_header"))
    if sections.get("country"):
        country = text_of("country")

    age_bracket, stated_age = _age_bracket(text_of("age"))
    goal = text_of("goal")
    background = text_of("background")
    needs = tuple(items["needs"])
    challenges = tuple(items["challenges"])
    quote = text_of("quote").strip('"“” ').strip()

    if not goal and not needs and not challenges:
        raise ParseError("response is not a persona: no goal, needs or challenges",
                         raw_response=raw)

    for fieldname in ("name", "country", "goal", "background"):
        if not (sections.get(fieldname) or (fieldname == "country" and country)):
            logger.warning("persona field %r missing from response", fieldname)

    return Persona(
        name=name,
        age_bracket=age_bracket,
        stated_age=stated_age,
        country=country,
        goal=goal,
        background=background,
        needs=needs,
        challenges=challenges,
        it_skills=_level(text_of("it_skills")),
        attitude_digital=_level(text_of("attitude")),
        quote=quote,
        source_selection=selection,
        raw_response=raw,
    )


def _word_count(text: str) -> int:
    return len(text.split())


def validate_persona(p: Persona, strict: bool = False) -> ValidationReport:
    """Checks the structural limits the persona prompt asks for. Violations
    are warnings by default; strict mode promotes them to errors."""
    severity = "error" if strict else "warn"
    findings: List[Finding] = []

    if _word_count(p.background) > 200:
        findings.append(Finding(severity, "background_word_limit",
                                f"background has {_word_count(p.background)} words (max 200)"))
    if len(p.needs) > 3:
        findings.append(Finding(severity, "need_count",
                                f"{len(p.needs)} needs (max 3)"))
    for i, need in enumerate(p.needs):
        if _word_count(need) > 30:
            findings.append(Finding(severity, "need_word_limit",
                                    f"need {i + 1} has {_word_count(need)} words (max 30)"))
    if len(p.challenges) > 2:
        findings.append(Finding(severity, "challenge_count",
                                f"{len(p.challenges)} challenges (max 2)"))
    for i, challenge in enumerate(p.challenges):
        if _word_count(challenge) > 20:
            findings.append(Finding(severity, "challenge_word_limit",
                                    f"challenge {i + 1} has {_word_count(challenge)} words (max 20)"))
    if not p.goal:
        findings.append(Finding(severity, "goal_presence", "persona has no goal"))
    if p.it_skills not in ("low", "medium", "high"):
        findings.append(Finding(severity, "it_skills_level",
                                f"it_skills {p.it_skills!r} is not low/medium/high"))
    if p.attitude_digital not in ("low", "medium", "high"):
        findings.append(Finding(severity, "attitude_level",
                                f"attitude {p.attitude_digital!r} is not low/medium/high"))
    if not p.country:
        findings.append(Finding(severity, "country_nonempty", "persona has no country"))
    if (p.source_selection.need_pair[0] == p.source_selection.need_pair[1]
            or p.source_selection.challenge_pair[0] == p.source_selection.challenge_pair[1]):
        findings.append(Finding("info", "self_pair_tuple",
                                "persona was built from a theme paired with itself"))
    return ValidationReport(findings=tuple(findings))
