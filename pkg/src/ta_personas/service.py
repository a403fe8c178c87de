"""Local HTTP API over the run store: read any artifact, submit review
decisions, request persona generation from a manual theme tuple, and request
traces. Serves the browser review workbench.

Reads are side-effect free; every successful write is appended to the run
manifest before the response is sent. Loopback-only by design: this is an
analyst's desk tool with no authentication."""

import threading
from typing import List, Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import persona_writer, theme_review, traceability
from .coding import Dimension
from .errors import PipelineError, UnknownTheme
from .llm_gateway import Gateway
from .pipeline import PipelineConfig, build_gateway
from .store import ArtifactEnvelope, RunStore, list_runs
from .theming import ThemeBook


class DecisionActionIn(BaseModel):
    action: str
    baseline_theme_id: Optional[str] = None
    replacement_variant: Optional[int] = None
    replacement_theme_id: Optional[str] = None


class DecisionIn(BaseModel):
    dimension: str
    actions: List[DecisionActionIn]
    analyst_note: str = ""
    decided_by: str = ""


class PersonaRequestIn(BaseModel):
    need_pair: List[str] = Field(min_length=2, max_length=2)
    challenge_pair: List[str] = Field(min_length=2, max_length=2)
    seed: int = 0
    decided_by: str = ""


class TraceRequestIn(BaseModel):
    persona_digest: str
    decided_by: str = ""


def create_app(runs_root) -> FastAPI:
    app = FastAPI(title="theme review service")
    write_lock = threading.Lock()

    def store_for(run_id: str) -> RunStore:
        if run_id not in list_runs(runs_root):
            raise HTTPException(404, f"unknown run: {run_id}")
        return RunStore(runs_root, run_id)

    def stage_artifacts(store: RunStore, stage: str) -> dict:
        state = store.load_state()
        record = state.get(stage)
        if not record:
            raise HTTPException(404, f"run has no completed '{stage}' stage")
        return record["artifacts"]

    def load_payload(store: RunStore, kind: str, digest: str) -> dict:
        try:
            return store.load_artifact(kind, digest).payload
        except PipelineError as exc:
            raise HTTPException(404, str(exc))

    def parse_dimension(value: str) -> Dimension:
        try:
            return Dimension(value)
        except ValueError:
            raise HTTPException(422, f"unknown dimension: {value}")

    # -- reads ---------------------------------------------------------------

    @app.get("/runs")
    def get_runs():
        return {"runs": list_runs(runs_root)}

    @app.get("/runs/{run_id}/artifacts")
    def get_artifacts(run_id: str):
        store = store_for(run_id)
        return {
            "artifacts": [
                {"kind": kind, "digest": digest}
                for kind, digest in store.list_artifacts()
            ]
        }

    @app.get("/runs/{run_id}/artifacts/{kind}/{digest}")
    def get_artifact(run_id: str, kind: str, digest: str):
        store = store_for(run_id)
        try:
            return store.load_artifact(kind, digest).to_dict()
        except PipelineError as exc:
            raise HTTPException(404, str(exc))

    @app.get("/runs/{run_id}/manifest")
    def get_manifest(run_id: str):
        store = store_for(run_id)
        return {
            "run_id": run_id,
            "created_at": store.manifest.created_at,
            "config": store.manifest.config,
            "entries": store.manifest.entries,
        }

    @app.get("/runs/{run_id}/codebooks/{dimension}/{stage}")
    def get_codebook(run_id: str, dimension: str, stage: str):
        store = store_for(run_id)
        dim = parse_dimension(dimension)
        env = store.find_latest(
            "codebook",
            lambda p: p["dimension"] == dim.value and p["stage"] == stage,
        )
        if env is None:
            raise HTTPException(404, f"no {stage} {dimension} codebook")
        return env.to_dict()

    @app.get("/runs/{run_id}/themebooks/{dimension}/{stage}")
    def get_themebooks(run_id: str, dimension: str, stage: str):
        store = store_for(run_id)
        dim = parse_dimension(dimension)
        if stage == "variant":
            digests = stage_artifacts(store, "evaluate")[f"variants_{dim.value}"]
        else:
            stage_name = {"baseline": "theme", "final": "finalize"}.get(stage)
            if stage_name is None:
                raise HTTPException(422, f"unknown theme book stage: {stage}")
            digests = [stage_artifacts(store, stage_name)[f"{stage}_{dim.value}"]]
        return {
            "books": [
                dict(load_payload(store, "themebook", d), digest=d) for d in digests
            ]
        }

    @app.get("/runs/{run_id}/consistency/{dimension}")
    def get_consistency(run_id: str, dimension: str):
        store = store_for(run_id)
        dim = parse_dimension(dimension)
        digest = stage_artifacts(store, "evaluate")[f"report_{dim.value}"]
        return dict(load_payload(store, "consistency_report", digest), digest=digest)

    @app.get("/runs/{run_id}/personas")
    def get_personas(run_id: str):
        store = store_for(run_id)
        return {
            "personas": [
                dict(store.load_artifact(kind, digest).payload, digest=digest)
                for kind, digest in store.list_artifacts()
                if kind == "persona"
            ]
        }

    @app.get("/runs/{run_id}/traces")
    def get_traces(run_id: str):
        store = store_for(run_id)
        return {
            "traces": [
                dict(store.load_artifact(kind, digest).payload, digest=digest)
                for kind, digest in store.list_artifacts()
                if kind == "trace_report"
            ]
        }

    # -- writes --------------------------------------------------------------

    def run_gateway(store: RunStore) -> Gateway:
        config = PipelineConfig.from_dict(
            {
                k: v
                for k, v in store.manifest.config.items()
                if k != "prompt_template_digests"
            }
        )
        return build_gateway(config, manifest_append=store.manifest.append)

    def final_books(store: RunStore) -> dict:
        final = stage_artifacts(store, "finalize")
        return {
            dim: ThemeBook.from_dict(
                load_payload(store, "themebook", final[f"final_{dim.value}"])
            )
            for dim in (Dimension.NEED, Dimension.CHALLENGE)
        }

    @app.post("/runs/{run_id}/decisions")
    def post_decision(run_id: str, body: DecisionIn):
        store = store_for(run_id)
        dim = parse_dimension(body.dimension)
        decision = theme_review.ReviewDecision(
            dimension=dim,
            actions=tuple(
                theme_review.DecisionAction(
                    action=a.action,
                    baseline_theme_id=a.baseline_theme_id,
                    replacement_variant=a.replacement_variant,
                    replacement_theme_id=a.replacement_theme_id,
                )
                for a in body.actions
            ),
            analyst_note=body.analyst_note,
            decided_by=body.decided_by,
        )
        baseline_digest = stage_artifacts(store, "theme")[f"baseline_{dim.value}"]
        baseline = ThemeBook.from_dict(
            load_payload(store, "themebook", baseline_digest)
        )
        variant_digests = stage_artifacts(store, "evaluate")[f"variants_{dim.value}"]
        variants = [
            ThemeBook.from_dict(load_payload(store, "themebook", d))
            for d in variant_digests
        ]
        problems = theme_review.validate_decision(decision, baseline, variants)
        if problems:
            raise HTTPException(422, {"problems": problems})
        with write_lock:
            env = ArtifactEnvelope(
                artifact_kind="decision",
                payload=decision.to_dict(),
                provenance={"run_id": run_id, "parents": [baseline_digest]},
            )
            digest = store.save_artifact(env)
            store.manifest.append(
                {
                    "purpose_tag": "other",
                    "event": "decision",
                    "dimension": dim.value,
                    "artifact_digest": digest,
                    "decided_by": body.decided_by,
                }
            )
        return {"digest": digest, "dimension": dim.value}

    @app.post("/runs/{run_id}/personas")
    def post_persona(run_id: str, body: PersonaRequestIn):
        store = store_for(run_id)
        books = final_books(store)
        need_book = books[Dimension.NEED]
        challenge_book = books[Dimension.CHALLENGE]
        try:
            selection = persona_writer.select_tuples(
                need_book,
                challenge_book,
                seed=body.seed,
                mode=persona_writer.TupleMode.MANUAL,
                manual_need_pair=tuple(body.need_pair),
                manual_challenge_pair=tuple(body.challenge_pair),
            )
        except UnknownTheme as exc:
            raise HTTPException(422, str(exc))
        config = store.manifest.config
        with write_lock:
            gateway = run_gateway(store)
            try:
                req = persona_writer.render_persona_prompt(
                    selection,
                    need_book,
                    challenge_book,
                    temperature=config.get("persona_temperature", 1.0),
                    model_name=config.get("model_name", "gpt-3.5-turbo"),
                    tokenizer=gateway.tokenizer,
                    context_limit=gateway.context_limit,
                )
                completion = gateway.complete(req)
                persona = persona_writer.parse_persona(completion, selection)
            except PipelineError as exc:
                raise HTTPException(
                    502, {"error_class": type(exc).__name__, "detail": str(exc)}
                )
            report = persona_writer.validate_persona(persona)
            payload = persona.to_dict()
            payload["validation"] = report.to_dict()
            env = ArtifactEnvelope(
                artifact_kind="persona",
                payload=payload,
                provenance={"run_id": run_id, "parents": []},
            )
            digest = store.save_artifact(env)
            store.manifest.append(
                {
                    "purpose_tag": "other",
                    "event": "persona_saved",
                    "artifact_digest": digest,
                    "decided_by": body.decided_by,
                }
            )
        return dict(payload, digest=digest)

    @app.post("/runs/{run_id}/traces")
    def post_trace(run_id: str, body: TraceRequestIn):
        store = store_for(run_id)
        payload = load_payload(store, "persona", body.persona_digest)
        persona = persona_writer.Persona.from_dict(
            {k: v for k, v in payload.items() if k != "validation"}
        )
        books = final_books(store)
        try:
            report = traceability.trace_persona(
                persona,
                books[Dimension.NEED],
                books[Dimension.CHALLENGE],
                persona_ref=body.persona_digest,
            )
        except UnknownTheme as exc:
            raise HTTPException(422, str(exc))
        with write_lock:
            env = ArtifactEnvelope(
                artifact_kind="trace_report",
                payload=report.to_dict(),
                provenance={"run_id": run_id, "parents": [body.persona_digest]},
            )
            digest = store.save_artifact(env)
            store.manifest.append(
                {
                    "purpose_tag": "other",
                    "event": "trace_saved",
                    "artifact_digest": digest,
                    "decided_by": body.decided_by,
                }
            )
        return dict(report.to_dict(), digest=digest)

    return app
