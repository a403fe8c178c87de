"""Command-line surface: one subcommand per pipeline stage plus full-run,
reporting, and the local review service. Every flag has a config-file
equivalent; flags override the file."""

import dataclasses
import json

import click

from .errors import PipelineError
from .persona_writer import TupleMode, enumerate_tuples
from .pipeline import PipelineConfig, render_methodology_report, run_pipeline
from .store import RunStore
from .theming import ThemeBook


def _build_config(ctx: click.Context, **overrides) -> PipelineConfig:
    base = ctx.obj or {}
    if base.get("config_path"):
        config = PipelineConfig.from_file(base["config_path"])
    else:
        config = PipelineConfig()
    merged = {}
    for key in ("run_id", "provider", "seed"):
        if base.get(key) is not None:
            merged[key] = base[key]
    merged.update({k: v for k, v in overrides.items() if v is not None})
    if merged:
        config = dataclasses.replace(config, **merged)
    return config


def _run(ctx: click.Context, until, **overrides) -> None:
    config = _build_config(ctx, **overrides)
    try:
        summary = run_pipeline(config, until=until)
    except PipelineError as exc:
        raise click.ClickException(str(exc))
    click.echo(json.dumps(summary, indent=2))
    if until is None and summary["status"] == "awaiting_decision":
        click.echo(
            f"awaiting review decision for {summary['awaiting']}; "
            f"resume with --run-id {summary['resume_token']} once decided",
            err=True,
        )


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="Pipeline config file (JSON or YAML).")
@click.option("--run-id", default=None, help="Run identifier (default: derived from config).")
@click.option("--provider", type=click.Choice(["mock", "live"]), default=None)
@click.option("--seed", type=int, default=None)
@click.pass_context
def main(ctx, config_path, run_id, provider, seed):
    """Thematic-analysis pipeline: transcripts to themes to personas."""
    ctx.obj = {
        "config_path": config_path,
        "run_id": run_id,
        "provider": provider,
        "seed": seed,
    }


@main.command()
@click.option("--in", "corpus_dir", type=click.Path(exists=True, file_okay=False),
              default=None, help="Directory of .txt transcripts.")
@click.option("--chunk-min", type=int, default=None)
@click.option("--chunk-max", type=int, default=None)
@click.pass_context
def ingest(ctx, corpus_dir, chunk_min, chunk_max):
    """Load, clean, and chunk the transcript corpus."""
    _run(ctx, "ingest", corpus_dir=corpus_dir, chunk_min=chunk_min, chunk_max=chunk_max)


@main.command()
@click.pass_context
def code(ctx):
    """Code every chunk for challenges and needs (temperature 0)."""
    _run(ctx, "code")


@main.command()
@click.option("--threshold", "reduce_threshold", type=float, default=None,
              help="Name-similarity merge threshold.")
@click.pass_context
def reduce(ctx, reduce_threshold):
    """Merge near-duplicate codes into reduced codebooks."""
    _run(ctx, "reduce", reduce_threshold=reduce_threshold)


@main.command()
@click.option("--groups", "n_groups", type=int, default=None)
@click.pass_context
def theme(ctx, n_groups):
    """Group reduced codes into baseline themes (temperature 0)."""
    _run(ctx, "theme", n_groups=n_groups)


@main.command()
@click.option("--k", "k_variants", type=int, default=None)
@click.option("--temperature", "variability_temperature", type=float, default=None)
@click.pass_context
def evaluate(ctx, k_variants, variability_temperature):
    """Run variability tests and score baseline-theme consistency."""
    _run(ctx, "evaluate", k_variants=k_variants,
         variability_temperature=variability_temperature)


@main.command()
@click.option("--decision-challenge", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Review decision file for the challenge dimension.")
@click.option("--decision-need", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Review decision file for the need dimension.")
@click.pass_context
def finalize(ctx, decision_challenge, decision_need):
    """Apply the analyst's keep/replace/drop decisions into final theme books."""
    _run(ctx, "finalize", decision_challenge=decision_challenge,
         decision_need=decision_need)


@main.command()
@click.option("--dimension", type=click.Choice(["challenge", "need"]), required=True)
@click.option("--mode", type=click.Choice(
    ["unordered_with_repetition", "unordered_distinct"]),
    default="unordered_with_repetition")
@click.pass_context
def tuples(ctx, dimension, mode):
    """Enumerate the theme pairs available for persona generation."""
    config = _build_config(ctx)
    store = RunStore(config.runs_root, config.effective_run_id())
    state = store.load_state()
    final = state.get("finalize", {}).get("artifacts", {})
    digest = final.get(f"final_{dimension}")
    if not digest:
        raise click.ClickException("no final theme book yet; run finalize first")
    book = ThemeBook.from_dict(store.load_artifact("themebook", digest).payload)
    try:
        pairs = enumerate_tuples(book, TupleMode(mode))
    except PipelineError as exc:
        raise click.ClickException(str(exc))
    click.echo(json.dumps({"dimension": dimension, "mode": mode,
                           "count": len(pairs), "pairs": pairs}, indent=2))


@main.command()
@click.option("--count", "persona_count", type=int, default=None)
@click.option("--mode", "tuple_mode", type=click.Choice([m.value for m in TupleMode]),
              default=None)
@click.option("--decision-challenge", type=click.Path(exists=True, dir_okay=False),
              default=None)
@click.option("--decision-need", type=click.Path(exists=True, dir_okay=False),
              default=None)
@click.option("--strict/--no-strict", default=None)
@click.pass_context
def persona(ctx, persona_count, tuple_mode, decision_challenge, decision_need, strict):
    """Select theme tuples and write personas (temperature 1)."""
    _run(ctx, "persona", persona_count=persona_count, tuple_mode=tuple_mode,
         decision_challenge=decision_challenge, decision_need=decision_need,
         strict=strict)


@main.command()
@click.option("--decision-challenge", type=click.Path(exists=True, dir_okay=False),
              default=None)
@click.option("--decision-need", type=click.Path(exists=True, dir_okay=False),
              default=None)
@click.pass_context
def trace(ctx, decision_challenge, decision_need):
    """Map persona elements back to their source codes and quotes."""
    _run(ctx, "trace", decision_challenge=decision_challenge,
         decision_need=decision_need)


@main.command()
@click.option("--decision-challenge", type=click.Path(exists=True, dir_okay=False),
              default=None)
@click.option("--decision-need", type=click.Path(exists=True, dir_okay=False),
              default=None)
@click.pass_context
def run(ctx, decision_challenge, decision_need):
    """Run the full pipeline; halts at the review gate without decisions."""
    _run(ctx, None, decision_challenge=decision_challenge,
         decision_need=decision_need)


@main.command()
@click.pass_context
def report(ctx):
    """Render a methodology summary for the run (methods-section ready)."""
    config = _build_config(ctx)
    store = RunStore(config.runs_root, config.effective_run_id())
    click.echo(render_methodology_report(store))


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8712, show_default=True)
@click.pass_context
def serve(ctx, host, port):
    """Start the local review API over the runs directory."""
    import uvicorn

    from .service import create_app

    config = _build_config(ctx)
    app = create_app(config.runs_root)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
