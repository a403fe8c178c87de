import json
from pathlib import Path

import pytest

from ta_personas.theming import ExpandedTheme

FIXTURES = Path(__file__).parent / "fixtures"

SENTENCE = (
    "The farmer described how digital tools support everyday decisions in the field."
)


def write_synthetic_corpus(root: Path) -> Path:
    """14 interview transcripts sized to chunk into exactly 31 pieces under
    the chars/4 token counter with the 700/1600 chunk policy: nine
    two-chunk documents, four three-chunk documents, one short document."""
    root.mkdir(parents=True, exist_ok=True)
    paragraph = " ".join([SENTENCE] * 15)
    for i in range(1, 10):
        (root / f"interview_{i:02d}.txt").write_text(
            "\n\n".join([paragraph] * 10), encoding="utf-8"
        )
    for i in range(10, 14):
        (root / f"interview_{i:02d}.txt").write_text(
            "\n\n".join([paragraph] * 15), encoding="utf-8"
        )
    (root / "interview_14.txt").write_text(
        " ".join([SENTENCE] * 20), encoding="utf-8"
    )
    return root


@pytest.fixture
def synthetic_corpus(tmp_path):
    return write_synthetic_corpus(tmp_path / "corpus")


@pytest.fixture
def mock_registry_path():
    return str(FIXTURES / "mock_registry.json")


@pytest.fixture
def persona_fixture_dir():
    return FIXTURES / "personas"


@pytest.fixture
def expanded_themes():
    data = json.loads((FIXTURES / "expanded_themes.json").read_text("utf-8"))
    return [ExpandedTheme.from_dict(d) for d in data]


def all_keep_decision(dimension: str, n_themes: int) -> dict:
    return {
        "dimension": dimension,
        "actions": [
            {"action": "keep", "baseline_theme_id": f"{dimension}:baseline:{i}"}
            for i in range(1, n_themes + 1)
        ],
        "analyst_note": "all baseline themes kept",
        "decided_by": "tester",
    }


def write_decisions(directory: Path, n_themes: int = 2) -> dict:
    """Writes all-keep decision files for both dimensions; returns the
    config fields pointing at them."""
    directory.mkdir(parents=True, exist_ok=True)
    paths = {}
    for dim in ("challenge", "need"):
        path = directory / f"decision_{dim}.json"
        path.write_text(json.dumps(all_keep_decision(dim, n_themes)), encoding="utf-8")
        paths[f"decision_{dim}"] = str(path)
    return paths
