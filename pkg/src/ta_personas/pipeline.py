"""End-to-end orchestration: ingest -> code -> reduce -> theme -> evaluate
-> [human decision gate] -> finalize -> persona -> trace.

Each stage records its input digest; re-running a completed stage with
identical inputs is a no-op, which is also what makes resume after the
decision gate cheap. The gate is a hard barrier: theme replacement is never
auto-applied."""

import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

from . import coding, corpus, persona_writer, theme_review, theming, traceability
from .coding import Dimension
from .errors import ConfigError, PipelineError
from .llm_gateway import Gateway, MockProvider, OpenAIChatProvider
from .prompt_templates import template_digests
from .store import ArtifactEnvelope, RunStore, payload_digest
from .tokenizers import get_tokenizer

logger = logging.getLogger(__name__)

STAGES = (
    "ingest",
    "code",
    "reduce",
    "theme",
    "evaluate",
    "finalize",
    "persona",
    "trace",
)


@dataclass
class PipelineConfig:
    corpus_dir: str = ""
    runs_root: str = "runs"
    run_id: Optional[str] = None
    provider: str = "mock"  # mock | live
    mock_registry: Optional[str] = None
    model_name: str = "gpt-3.5-turbo"
    tokenizer_backend: str = "approx"
    chunk_min: int = 700
    chunk_max: int = 1600
    context_limit: int = 4097
    reduce_threshold: float = 0.85
    n_groups: int = 12
    k_variants: int = 3
    variability_temperature: float = 0.5
    match_threshold: float = 0.5
    keep_threshold: float = 0.5
    persona_count: int = 1
    persona_temperature: float = 1.0
    seed: int = 0
    tuple_mode: str = "unordered_with_repetition"
    decision_challenge: Optional[str] = None
    decision_need: Optional[str] = None
    strict: bool = False
    max_in_flight: int = 4
    retry_cap: int = 3

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        path = Path(path)
        text = path.read_text("utf-8")
        if path.suffix in (".yaml", ".yml"):
            import yaml

            data = yaml.safe_load(text)
        else:
            data = json.loads(text)
        return cls.from_dict(data or {})

    def effective_run_id(self) -> str:
        if self.run_id:
            return self.run_id
        keyed = self.to_dict()
        for volatile in ("run_id", "decision_challenge", "decision_need"):
            keyed.pop(volatile, None)
        return "run-" + payload_digest(keyed)[:10]


def build_gateway(config: PipelineConfig, manifest_append=None) -> Gateway:
    if config.provider == "mock":
        provider = MockProvider()
        if config.mock_registry:
            provider.load_registry(config.mock_registry)
    elif config.provider == "live":
        provider = OpenAIChatProvider()
    else:
        raise ConfigError(f"unknown provider: {config.provider}")
    return Gateway(
        provider,
        manifest_append=manifest_append,
        tokenizer=get_tokenizer(config.tokenizer_backend),
        context_limit=config.context_limit,
        max_in_flight=config.max_in_flight,
        retry_cap=config.retry_cap,
    )


def _corpus_input_digest(config: PipelineConfig) -> str:
    root = Path(config.corpus_dir)
    files = []
    if root.is_dir():
        for path in sorted(root.iterdir()):
            if path.is_file() and path.suffix == ".txt":
                files.append(
                    [path.name, hashlib.sha256(path.read_bytes()).hexdigest()]
                )
    return payload_digest(
        {
            "files": files,
            "chunk_min": config.chunk_min,
            "chunk_max": config.chunk_max,
            "tokenizer_backend": config.tokenizer_backend,
        }
    )


class PipelineRun:
    """One run: holds the store, the gateway, and stage execution."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.run_id = config.effective_run_id()
        snapshot = dict(
            config.to_dict(),
            run_id=self.run_id,
            prompt_template_digests=template_digests(),
        )
        self.store = RunStore(config.runs_root, self.run_id, snapshot)
        self.gateway = build_gateway(config, self.store.manifest.append)
        self.tokenizer = self.gateway.tokenizer
        self.state = self.store.load_state()

    # -- plumbing ----------------------------------------------------------

    def _stage(self, name: str, input_digest: str, fn) -> dict:
        rec = self.state.get(name)
        if rec and rec.get("input_digest") == input_digest:
            return rec["artifacts"]
        first_seq = len(self.store.manifest.entries) + 1
        try:
            artifacts = fn()
        except PipelineError as exc:
            raise type(exc)(f"stage {name}: {exc}") from exc
        self.state[name] = {
            "input_digest": input_digest,
            "artifacts": artifacts,
            "manifest_entries": [first_seq, len(self.store.manifest.entries)],
        }
        self.store.save_state(self.state)
        return artifacts

    def _save(self, kind: str, payload: dict, parents: List[str]) -> str:
        env = ArtifactEnvelope(
            artifact_kind=kind,
            payload=payload,
            provenance={"run_id": self.run_id, "parents": parents},
        )
        return self.store.save_artifact(env)

    def _load_payload(self, kind: str, digest: str) -> dict:
        return self.store.load_artifact(kind, digest).payload

    # -- stages ------------------------------------------------------------

    def ingest(self) -> dict:
        input_digest = _corpus_input_digest(self.config)

        def run() -> dict:
            docs = corpus.load_corpus(self.config.corpus_dir)
            policy = corpus.ChunkPolicy(
                chunk_min=self.config.chunk_min,
                chunk_max=self.config.chunk_max,
                model_context_limit=self.config.context_limit,
            )
            chunks = corpus.chunk_corpus(docs, policy, self.tokenizer)
            payload = {
                "documents": [d.to_dict() for d in docs],
                "chunks": [c.to_dict() for c in chunks],
                "policy": {
                    "chunk_min": policy.chunk_min,
                    "chunk_max": policy.chunk_max,
                    "model_context_limit": policy.model_context_limit,
                },
                "tokenizer_backend": self.config.tokenizer_backend,
            }
            return {"corpus": self._save("corpus", payload, parents=[])}

        return self._stage("ingest", input_digest, run)

    def code(self) -> dict:
        corpus_digest = self.ingest()["corpus"]
        input_digest = payload_digest(
            {
                "corpus": corpus_digest,
                "templates": template_digests(),
                "model": self.config.model_name,
            }
        )

        def run() -> dict:
            payload = self._load_payload("corpus", corpus_digest)
            chunks = [corpus.InterviewChunk.from_dict(c) for c in payload["chunks"]]
            out = {}
            for dim in (Dimension.CHALLENGE, Dimension.NEED):
                requests = [
                    coding.render_code_prompt(
                        chunk,
                        dim,
                        model_name=self.config.model_name,
                        tokenizer=self.tokenizer,
                        context_limit=self.config.context_limit,
                    )
                    for chunk in chunks
                ]
                completions = self.gateway.complete_many(requests)
                codes = []
                for chunk, completion in zip(chunks, completions):
                    codes.extend(
                        coding.extract_codes(completion, dim, chunk.chunk_id, chunk.text)
                    )
                cb = coding.build_codebook(codes, dim, provenance=self.run_id)
                out[f"raw_{dim.value}"] = self._save(
                    "codebook", cb.to_dict(), parents=[corpus_digest]
                )
            return out

        return self._stage("code", input_digest, run)

    def reduce(self) -> dict:
        raw = self.code()
        input_digest = payload_digest(
            {"raw": raw, "threshold": self.config.reduce_threshold}
        )

        def run() -> dict:
            out = {}
            for dim in (Dimension.CHALLENGE, Dimension.NEED):
                raw_digest = raw[f"raw_{dim.value}"]
                cb = coding.Codebook.from_dict(
                    self._load_payload("codebook", raw_digest), provenance=self.run_id
                )
                reduced, merge_map = coding.reduce_codebook(
                    cb, threshold=self.config.reduce_threshold
                )
                payload = reduced.to_dict()
                payload["merge_map"] = merge_map.to_dict()
                out[f"reduced_{dim.value}"] = self._save(
                    "codebook", payload, parents=[raw_digest]
                )
            return out

        return self._stage("reduce", input_digest, run)

    def _load_reduced(self, dim: Dimension):
        digest = self.reduce()[f"reduced_{dim.value}"]
        payload = self._load_payload("codebook", digest)
        cb = coding.Codebook.from_dict(payload, provenance=self.run_id)
        merge_map = coding.MergeMap.from_dict(payload["merge_map"])
        return cb, merge_map, digest

    def _load_raw(self, dim: Dimension):
        digest = self.code()[f"raw_{dim.value}"]
        return coding.Codebook.from_dict(
            self._load_payload("codebook", digest), provenance=self.run_id
        )

    def theme(self) -> dict:
        reduced = self.reduce()
        input_digest = payload_digest(
            {"reduced": reduced, "n_groups": self.config.n_groups}
        )

        def run() -> dict:
            out = {}
            for dim in (Dimension.CHALLENGE, Dimension.NEED):
                cb, _, cb_digest = self._load_reduced(dim)
                req = theming.render_grouping_prompt(
                    cb,
                    n_groups=self.config.n_groups,
                    temperature=0.0,
                    model_name=self.config.model_name,
                    tokenizer=self.tokenizer,
                    context_limit=self.config.context_limit,
                )
                completion = self.gateway.complete(req)
                book = theming.parse_theme_groups(
                    completion,
                    cb,
                    self.config.n_groups,
                    stage="baseline",
                    temperature=0.0,
                    source_codebook=cb_digest,
                )
                out[f"baseline_{dim.value}"] = self._save(
                    "themebook", book.to_dict(), parents=[cb_digest]
                )
            return out

        return self._stage("theme", input_digest, run)

    def evaluate(self) -> dict:
        baselines = self.theme()
        input_digest = payload_digest(
            {
                "baselines": baselines,
                "k": self.config.k_variants,
                "temperature": self.config.variability_temperature,
                "match_threshold": self.config.match_threshold,
                "keep_threshold": self.config.keep_threshold,
            }
        )

        def run() -> dict:
            out = {}
            for dim in (Dimension.CHALLENGE, Dimension.NEED):
                cb, _, cb_digest = self._load_reduced(dim)
                baseline_digest = baselines[f"baseline_{dim.value}"]
                baseline = theming.ThemeBook.from_dict(
                    self._load_payload("themebook", baseline_digest)
                )
                variants, k_effective = theme_review.run_variability_tests(
                    cb,
                    self.gateway,
                    k=self.config.k_variants,
                    temperature=self.config.variability_temperature,
                    n_groups=self.config.n_groups,
                    model_name=self.config.model_name,
                    source_codebook=cb_digest,
                )
                variant_digests = [
                    self._save("themebook", v.to_dict(), parents=[cb_digest])
                    for v in variants
                ]
                report = theme_review.score_consistency(
                    baseline,
                    variants,
                    match_threshold=self.config.match_threshold,
                    keep_threshold=self.config.keep_threshold,
                    baseline_ref=baseline_digest,
                    variant_refs=tuple(variant_digests),
                )
                out[f"variants_{dim.value}"] = variant_digests
                out[f"k_effective_{dim.value}"] = k_effective
                out[f"report_{dim.value}"] = self._save(
                    "consistency_report",
                    report.to_dict(),
                    parents=[baseline_digest] + variant_digests,
                )
            return out

        return self._stage("evaluate", input_digest, run)

    def _resolve_decision(self, dim: Dimension) -> Optional[theme_review.ReviewDecision]:
        path = (
            self.config.decision_challenge
            if dim == Dimension.CHALLENGE
            else self.config.decision_need
        )
        if path:
            data = json.loads(Path(path).read_text("utf-8"))
            return theme_review.ReviewDecision.from_dict(data)
        env = self.store.find_latest(
            "decision", lambda p: p.get("dimension") == dim.value
        )
        if env is not None:
            return theme_review.ReviewDecision.from_dict(env.payload)
        return None

    def finalize(self) -> dict:
        evaluated = self.evaluate()
        decisions = {}
        for dim in (Dimension.CHALLENGE, Dimension.NEED):
            decision = self._resolve_decision(dim)
            if decision is None:
                raise _AwaitingDecision(dim)
            decisions[dim] = decision
        decision_digests = {
            dim: payload_digest(d.to_dict()) for dim, d in decisions.items()
        }
        input_digest = payload_digest(
            {
                "evaluate": {k: v for k, v in evaluated.items() if "report" in k},
                "decisions": {d.value: decision_digests[d] for d in decision_digests},
            }
        )

        def run() -> dict:
            out = {}
            for dim in (Dimension.CHALLENGE, Dimension.NEED):
                baseline_digest = self.theme()[f"baseline_{dim.value}"]
                baseline = theming.ThemeBook.from_dict(
                    self._load_payload("themebook", baseline_digest)
                )
                variant_digests = evaluated[f"variants_{dim.value}"]
                variants = [
                    theming.ThemeBook.from_dict(self._load_payload("themebook", d))
                    for d in variant_digests
                ]
                raw_cb = self._load_raw(dim)
                _, merge_map, _ = self._load_reduced(dim)
                decision_digest = self._save(
                    "decision", decisions[dim].to_dict(), parents=[baseline_digest]
                )
                final = theme_review.apply_decisions(
                    baseline, variants, decisions[dim], raw_cb, merge_map
                )
                out[f"decision_{dim.value}"] = decision_digest
                out[f"final_{dim.value}"] = self._save(
                    "themebook",
                    final.to_dict(),
                    parents=[baseline_digest, decision_digest],
                )
            return out

        return self._stage("finalize", input_digest, run)

    def _final_books(self):
        final = self.finalize()
        books = {}
        for dim in (Dimension.CHALLENGE, Dimension.NEED):
            digest = final[f"final_{dim.value}"]
            books[dim] = (
                theming.ThemeBook.from_dict(self._load_payload("themebook", digest)),
                digest,
            )
        return books

    def persona(self) -> dict:
        final = self.finalize()
        input_digest = payload_digest(
            {
                "final": final,
                "seed": self.config.seed,
                "mode": self.config.tuple_mode,
                "count": self.config.persona_count,
                "temperature": self.config.persona_temperature,
            }
        )

        def run() -> dict:
            books = self._final_books()
            need_book, need_digest = books[Dimension.NEED]
            challenge_book, challenge_digest = books[Dimension.CHALLENGE]
            digests = []
            for i in range(self.config.persona_count):
                selection = persona_writer.select_tuples(
                    need_book,
                    challenge_book,
                    seed=self.config.seed + i,
                    mode=persona_writer.TupleMode(self.config.tuple_mode),
                )
                req = persona_writer.render_persona_prompt(
                    selection,
                    need_book,
                    challenge_book,
                    temperature=self.config.persona_temperature,
                    model_name=self.config.model_name,
                    tokenizer=self.tokenizer,
                    context_limit=self.config.context_limit,
                )
                completion = self.gateway.complete(req)
                persona = persona_writer.parse_persona(completion, selection)
                report = persona_writer.validate_persona(persona, strict=self.config.strict)
                for finding in report.findings:
                    logger.log(
                        logging.WARNING if finding.severity != "info" else logging.INFO,
                        "persona %d validation: %s (%s)", i, finding.rule, finding.detail,
                    )
                payload = persona.to_dict()
                payload["validation"] = report.to_dict()
                digests.append(
                    self._save("persona", payload, parents=[need_digest, challenge_digest])
                )
            return {"personas": digests}

        return self._stage("persona", input_digest, run)

    def trace(self) -> dict:
        persona_digests = self.persona()["personas"]
        input_digest = payload_digest({"personas": persona_digests})

        def run() -> dict:
            books = self._final_books()
            need_book, _ = books[Dimension.NEED]
            challenge_book, _ = books[Dimension.CHALLENGE]
            digests = []
            for pdigest in persona_digests:
                payload = self._load_payload("persona", pdigest)
                persona = persona_writer.Persona.from_dict(
                    {k: v for k, v in payload.items() if k != "validation"}
                )
                report = traceability.trace_persona(
                    persona, need_book, challenge_book, persona_ref=pdigest
                )
                digests.append(
                    self._save("trace_report", report.to_dict(), parents=[pdigest])
                )
            return {"traces": digests}

        return self._stage("trace", input_digest, run)


class _AwaitingDecision(Exception):
    def __init__(self, dimension: Dimension):
        super().__init__(f"awaiting review decision for {dimension.value}")
        self.dimension = dimension


def run_pipeline(config: PipelineConfig, until: Optional[str] = None) -> dict:
    """Runs stages in order up to `until` (default: all). Halts at the
    decision gate with status 'awaiting_decision' when no decision exists."""
    if until is not None and until not in STAGES:
        raise ConfigError(f"unknown stage: {until}")
    run = PipelineRun(config)
    status = "complete"
    halted_on = None
    for stage_name in STAGES:
        try:
            getattr(run, stage_name)()
        except _AwaitingDecision as gate:
            status = "awaiting_decision"
            halted_on = gate.dimension.value
            break
        if stage_name == until:
            break
    summary = {
        "run_id": run.run_id,
        "status": status,
        "stages": run.state,
        "manifest_entries": len(run.store.manifest.entries),
    }
    if status == "awaiting_decision":
        summary["awaiting"] = halted_on
        summary["resume_token"] = run.run_id
    return summary


def replay_run(config: PipelineConfig, replay_root) -> dict:
    """Re-executes a completed mock run into a fresh runs root and compares
    the artifact digests; used to show the manifest + mock registry fully
    determine the artifact chain."""
    original = RunStore(config.runs_root, config.effective_run_id())
    replay_config = dataclasses.replace(config, runs_root=str(replay_root))
    summary = run_pipeline(replay_config)
    replay_store = RunStore(replay_root, summary["run_id"])
    original_artifacts = set(original.list_artifacts())
    replay_artifacts = set(replay_store.list_artifacts())
    return {
        "match": original_artifacts == replay_artifacts,
        "missing": sorted(original_artifacts - replay_artifacts),
        "extra": sorted(replay_artifacts - original_artifacts),
    }


def render_methodology_report(store: RunStore) -> str:
    """Methods-section summary: configuration, prompts, call counts, and
    the analyst decisions on record."""
    config = store.manifest.config
    entries = store.manifest.entries
    by_purpose: Dict[str, int] = {}
    for entry in entries:
        by_purpose[entry["purpose_tag"]] = by_purpose.get(entry["purpose_tag"], 0) + 1

    lines = [
        f"Run {store.run_id}",
        f"Created {store.manifest.created_at}",
        "",
        "Configuration:",
    ]
    for key in sorted(config):
        if key == "prompt_template_digests":
            continue
        lines.append(f"  {key}: {config[key]}")
    lines.append("")
    lines.append("Prompt template digests:")
    for name, digest in sorted(config.get("prompt_template_digests", {}).items()):
        lines.append(f"  {name}: {digest[:16]}")
    lines.append("")
    lines.append(f"Model calls ({len(entries)} total):")
    for tag in sorted(by_purpose):
        lines.append(f"  {tag}: {by_purpose[tag]}")
    lines.append("")
    lines.append("Artifacts:")
    for kind, digest in store.list_artifacts():
        lines.append(f"  {kind} {digest[:16]}")
    decisions = [
        store.load_artifact(kind, digest)
        for kind, digest in store.list_artifacts()
        if kind == "decision"
    ]
    if decisions:
        lines.append("")
        lines.append("Analyst decisions:")
        for env in decisions:
            payload = env.payload
            actions = ", ".join(
                f"{a['action']}:{a.get('baseline_theme_id')}" for a in payload["actions"]
            )
            lines.append(
                f"  {payload['dimension']} by {payload.get('decided_by') or 'unknown'}: "
                f"{actions}"
            )
    return "\n".join(lines)
