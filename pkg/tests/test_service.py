import json
import shutil

import pytest
from fastapi.testclient import TestClient

from ta_personas.pipeline import PipelineConfig, run_pipeline
from ta_personas.service import create_app

from conftest import write_decisions


@pytest.fixture
def completed_run(tmp_path, synthetic_corpus, mock_registry_path):
    registry = tmp_path / "registry.json"
    shutil.copy(mock_registry_path, registry)
    decisions = write_decisions(tmp_path / "decisions")
    config = PipelineConfig(
        corpus_dir=str(synthetic_corpus),
        runs_root=str(tmp_path / "runs"),
        run_id="svc-run",
        provider="mock",
        mock_registry=str(registry),
        n_groups=2,
        **decisions,
    )
    summary = run_pipeline(config)
    assert summary["status"] == "complete"
    client = TestClient(create_app(config.runs_root))
    return {"client": client, "registry": registry, "config": config}


def manifest_entries(client):
    return client.get("/runs/svc-run/manifest").json()["entries"]


# -- reads ------------------------------------------------------------------------


def test_lists_runs_and_artifacts(completed_run):
    client = completed_run["client"]
    assert client.get("/runs").json() == {"runs": ["svc-run"]}
    artifacts = client.get("/runs/svc-run/artifacts").json()["artifacts"]
    kinds = {a["kind"] for a in artifacts}
    assert {"corpus", "codebook", "themebook", "consistency_report",
            "decision", "persona", "trace_report"} <= kinds
    one = artifacts[0]
    fetched = client.get(f"/runs/svc-run/artifacts/{one['kind']}/{one['digest']}")
    assert fetched.status_code == 200
    assert fetched.json()["digest"] == one["digest"]


def test_unknown_run_and_artifact_return_404(completed_run):
    client = completed_run["client"]
    assert client.get("/runs/nope/artifacts").status_code == 404
    assert client.get(f"/runs/svc-run/artifacts/corpus/{'0' * 64}").status_code == 404


def test_reads_codebooks_themebooks_and_consistency(completed_run):
    client = completed_run["client"]
    reduced = client.get("/runs/svc-run/codebooks/challenge/reduced").json()
    assert reduced["payload"]["stage"] == "reduced"

    baseline = client.get("/runs/svc-run/themebooks/need/baseline").json()["books"]
    variants = client.get("/runs/svc-run/themebooks/need/variant").json()["books"]
    final = client.get("/runs/svc-run/themebooks/need/final").json()["books"]
    assert len(baseline) == 1 and len(final) == 1
    assert len(variants) == 3
    assert all("digest" in b for b in baseline + variants + final)

    consistency = client.get("/runs/svc-run/consistency/challenge").json()
    assert consistency["k"] == 3
    assert consistency["rows"]

    assert client.get("/runs/svc-run/themebooks/pets/final").status_code == 422
    assert client.get("/runs/svc-run/themebooks/need/draft").status_code == 422


def test_reads_personas_and_traces(completed_run):
    client = completed_run["client"]
    personas = client.get("/runs/svc-run/personas").json()["personas"]
    assert len(personas) == 1
    assert personas[0]["name"] == "Lena"
    traces = client.get("/runs/svc-run/traces").json()["traces"]
    assert len(traces) == 1
    assert traces[0]["persona_ref"] == personas[0]["digest"]


# -- decision writes ----------------------------------------------------------------


def test_valid_decision_is_stored_and_logged(completed_run):
    client = completed_run["client"]
    before = len(manifest_entries(client))
    body = {
        "dimension": "challenge",
        "actions": [
            {"action": "keep", "baseline_theme_id": "challenge:baseline:1"},
            {"action": "drop", "baseline_theme_id": "challenge:baseline:2"},
        ],
        "decided_by": "reviewer",
    }
    response = client.post("/runs/svc-run/decisions", json=body)
    assert response.status_code == 200, response.text
    digest = response.json()["digest"]
    entries = manifest_entries(client)
    assert len(entries) == before + 1
    logged = entries[-1]
    assert logged["event"] == "decision"
    assert logged["artifact_digest"] == digest
    assert logged["decided_by"] == "reviewer"
    stored = client.get(f"/runs/svc-run/artifacts/decision/{digest}")
    assert stored.json()["payload"]["decided_by"] == "reviewer"


def test_invalid_decision_returns_problem_list_and_writes_nothing(completed_run):
    client = completed_run["client"]
    before = len(manifest_entries(client))
    body = {
        "dimension": "challenge",
        "actions": [{"action": "keep", "baseline_theme_id": "challenge:baseline:1"}],
    }
    response = client.post("/runs/svc-run/decisions", json=body)
    assert response.status_code == 422
    problems = response.json()["detail"]["problems"]
    assert any("challenge:baseline:2 has no action" in p for p in problems)
    assert len(manifest_entries(client)) == before


# -- persona and trace writes --------------------------------------------------------


def persona_body(**overrides):
    body = {
        "need_pair": ["need:final:1", "need:final:2"],
        "challenge_pair": ["challenge:final:1", "challenge:final:2"],
        "seed": 3,
        "decided_by": "reviewer",
    }
    body.update(overrides)
    return body


def test_manual_persona_request_generates_and_logs(completed_run):
    client = completed_run["client"]
    before = len(manifest_entries(client))
    response = client.post("/runs/svc-run/personas", json=persona_body())
    assert response.status_code == 200, response.text
    payload = response.json()
    assert payload["name"] == "Lena"
    assert payload["source_selection"]["mode"] == "manual"
    assert not any(f["severity"] == "error"
                   for f in payload["validation"]["findings"])
    entries = manifest_entries(client)
    # one gateway call plus the persona_saved event
    assert len(entries) == before + 2
    assert entries[-1]["event"] == "persona_saved"


def test_persona_request_with_unknown_theme_is_422(completed_run):
    client = completed_run["client"]
    response = client.post(
        "/runs/svc-run/personas",
        json=persona_body(need_pair=["need:final:1", "need:final:42"]),
    )
    assert response.status_code == 422


def test_provider_failure_surfaces_as_502(completed_run):
    client = completed_run["client"]
    registry = completed_run["registry"]
    entries = json.loads(registry.read_text("utf-8"))
    del entries["write_persona"]
    registry.write_text(json.dumps(entries), encoding="utf-8")
    response = client.post("/runs/svc-run/personas", json=persona_body())
    assert response.status_code == 502
    detail = response.json()["detail"]
    assert detail["error_class"] == "MockMiss"


def test_trace_request_links_stored_persona(completed_run):
    client = completed_run["client"]
    persona = client.post("/runs/svc-run/personas", json=persona_body()).json()
    before = len(manifest_entries(client))
    response = client.post(
        "/runs/svc-run/traces",
        json={"persona_digest": persona["digest"], "decided_by": "reviewer"},
    )
    assert response.status_code == 200, response.text
    report = response.json()
    assert report["persona_ref"] == persona["digest"]
    assert report["quote_match"]["similarity"] == 1.0
    entries = manifest_entries(client)
    assert len(entries) == before + 1
    assert entries[-1]["event"] == "trace_saved"
