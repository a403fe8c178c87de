import json

import pytest

from ta_personas.errors import IoError, ManifestCorruption, SchemaError
from ta_personas.store import (
    ArtifactEnvelope,
    RunManifest,
    RunStore,
    canonical_json,
    list_runs,
    payload_digest,
)


def decision_payload(note="n"):
    return {"dimension": "challenge", "actions": [], "analyst_note": note,
            "decided_by": "tester"}


def make_store(tmp_path, run_id="run-1"):
    return RunStore(tmp_path, run_id, config={"seed": 0})


# -- canonical serialization -----------------------------------------------------


def test_canonical_json_is_key_order_independent():
    assert canonical_json({"b": 1, "a": [2, 3]}) == canonical_json({"a": [2, 3], "b": 1})


def test_payload_digest_is_content_addressed():
    assert payload_digest(decision_payload()) == payload_digest(decision_payload())
    assert payload_digest(decision_payload()) != payload_digest(decision_payload("x"))


def test_envelope_digest_ignores_provenance():
    a = ArtifactEnvelope("decision", decision_payload(), {"run_id": "r1"})
    b = ArtifactEnvelope("decision", decision_payload(), {"run_id": "r2"})
    assert a.digest == b.digest


# -- artifacts --------------------------------------------------------------------


def test_save_and_load_round_trip(tmp_path):
    store = make_store(tmp_path)
    env = ArtifactEnvelope("decision", decision_payload(), {"run_id": "run-1"})
    digest = store.save_artifact(env)
    loaded = store.load_artifact("decision", digest)
    assert loaded.payload == env.payload
    assert loaded.digest == digest
    assert store.list_artifacts() == [("decision", digest)]


def test_save_rejects_unknown_kind(tmp_path):
    with pytest.raises(SchemaError):
        make_store(tmp_path).save_artifact(ArtifactEnvelope("mystery", {"a": 1}))


def test_save_rejects_payload_missing_required_keys(tmp_path):
    with pytest.raises(SchemaError):
        make_store(tmp_path).save_artifact(ArtifactEnvelope("decision", {"oops": 1}))


def test_save_rejects_unresolvable_parent_digest(tmp_path):
    store = make_store(tmp_path)
    env = ArtifactEnvelope("decision", decision_payload(),
                           {"run_id": "run-1", "parents": ["deadbeef"]})
    with pytest.raises(SchemaError) as err:
        store.save_artifact(env)
    assert "provenance" in str(err.value)


def test_load_missing_artifact_raises(tmp_path):
    with pytest.raises(IoError):
        make_store(tmp_path).load_artifact("decision", "0" * 64)


def test_find_latest_with_predicate(tmp_path):
    store = make_store(tmp_path)
    store.save_artifact(ArtifactEnvelope("decision", decision_payload("first")))
    store.save_artifact(ArtifactEnvelope("decision", decision_payload("second")))
    found = store.find_latest("decision", lambda p: p["analyst_note"] == "first")
    assert found.payload["analyst_note"] == "first"
    assert store.find_latest("decision", lambda p: False) is None


# -- manifest ---------------------------------------------------------------------


def test_manifest_assigns_contiguous_sequences(tmp_path):
    store = make_store(tmp_path)
    first = store.manifest.append({"purpose_tag": "other"})
    second = store.manifest.append({"purpose_tag": "other"})
    assert (first["sequence"], second["sequence"]) == (1, 2)

    reopened = RunStore(tmp_path, "run-1")
    assert [e["sequence"] for e in reopened.manifest.entries] == [1, 2]
    assert reopened.manifest.config == {"seed": 0}


def test_manifest_rejects_sequence_gaps(tmp_path):
    store = make_store(tmp_path)
    store.manifest.append({"purpose_tag": "other"})
    with pytest.raises(ManifestCorruption):
        store.manifest.append({"purpose_tag": "other", "sequence": 5})


def test_manifest_detects_corruption_on_load(tmp_path):
    store = make_store(tmp_path)
    store.manifest.append({"purpose_tag": "other"})
    path = store.manifest.path
    lines = path.read_text("utf-8").splitlines()
    entry = json.loads(lines[1])
    entry["sequence"] = 7
    path.write_text(lines[0] + "\n" + json.dumps(entry) + "\n", encoding="utf-8")
    with pytest.raises(ManifestCorruption):
        RunStore(tmp_path, "run-1")


def test_manifest_guards_against_run_id_mixup(tmp_path):
    make_store(tmp_path, "run-1")
    with pytest.raises(ManifestCorruption):
        RunManifest(tmp_path / "run-1" / "manifest.jsonl", "other-run")


# -- state and run listing ----------------------------------------------------------


def test_state_round_trip(tmp_path):
    store = make_store(tmp_path)
    assert store.load_state() == {}
    store.save_state({"ingest": {"input_digest": "d", "artifacts": {}}})
    assert store.load_state()["ingest"]["input_digest"] == "d"


def test_list_runs(tmp_path):
    assert list_runs(tmp_path / "missing") == []
    make_store(tmp_path, "run-b")
    make_store(tmp_path, "run-a")
    assert list_runs(tmp_path) == ["run-a", "run-b"]
