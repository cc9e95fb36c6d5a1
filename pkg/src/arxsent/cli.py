"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 network error, 4 model
error, 5 data error (1 for anything else).  Global flags override the
config file; the ARXSENT_ARXIV_URL environment variable overrides the API
base URL.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from . import __version__, inference, pipeline
from .config import RunConfig, load_config
from .errors import ArxsentError, DataError
from .heatmap import ANSI_FORMAT, HTML_FORMAT, render_heatmap


def _build_config(obj: dict) -> RunConfig:
    overrides = {}
    if obj.get("out_dir") is not None:
        overrides["out_dir"] = obj["out_dir"]
    if obj.get("seed") is not None:
        overrides["seed"] = obj["seed"]
    if obj.get("parallelism") is not None:
        overrides["parallelism"] = obj["parallelism"]
    if obj.get("no_cache"):
        overrides["use_cache"] = False
    return load_config(obj.get("config_path"), overrides)


def _fail(exc: ArxsentError) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(exc.exit_code)


@click.group()
@click.version_option(__version__)
@click.option("--config", "config_path", type=click.Path(), help="YAML config file.")
@click.option("--out", "out_dir", type=click.Path(), help="Base output directory.")
@click.option("--seed", type=int, help="Random seed for sampling estimators.")
@click.option("--no-cache", is_flag=True, help="Bypass the score cache.")
@click.option("--parallelism", type=int, help="Concurrent document workers.")
@click.pass_context
def main(ctx, config_path, out_dir, seed, no_cache, parallelism):
    """Measure sentiment about a topic across arXiv abstracts."""
    ctx.obj = {
        "config_path": config_path,
        "out_dir": out_dir,
        "seed": seed,
        "no_cache": no_cache,
        "parallelism": parallelism,
    }


@main.command()
@click.pass_context
def fetch(ctx):
    """Harvest matching abstracts into the run directory."""
    try:
        config = _build_config(ctx.obj)
        path = pipeline.stage_fetch(config)
        count = sum(1 for line in path.read_text(encoding="utf-8").splitlines() if line)
        click.echo(f"fetched {count} records -> {path}")
    except ArxsentError as exc:
        _fail(exc)


@main.command()
@click.pass_context
def classify(ctx):
    """Score every document on the 5-star overall scale."""
    try:
        config = _build_config(ctx.obj)
        path = pipeline.stage_classify(config)
        click.echo(f"wrote {path}")
    except ArxsentError as exc:
        _fail(exc)


@main.command()
@click.argument("doc_id")
@click.option("--target", help="Star label to explain (default: the top label).")
@click.option(
    "--format",
    "fmt",
    type=click.Choice([ANSI_FORMAT, HTML_FORMAT]),
    default=ANSI_FORMAT,
    show_default=True,
    help="Heatmap rendering for stdout.",
)
@click.pass_context
def explain(ctx, doc_id, target, fmt):
    """Attribute one document's score to its spans and show the heatmap."""
    try:
        config = _build_config(ctx.obj)
        doc, attribution = pipeline.explain_single(config, doc_id, target)
        click.echo(render_heatmap(attribution, doc.text, fmt))
        click.echo(
            f"[{attribution.estimator}] target={attribution.target_label} "
            f"base={attribution.base_value:.4f} "
            f"total={attribution.total():.4f}",
            err=True,
        )
        click.echo(f"updated {pipeline.run_paths(config).attributions}", err=True)
    except ArxsentError as exc:
        _fail(exc)


@main.command()
@click.option("--doc-id", help="Restrict to one document.")
@click.option(
    "--aspect",
    "aspect_terms",
    multiple=True,
    help="Explicit aspect term (repeatable); overrides config and extraction.",
)
@click.pass_context
def aspects(ctx, doc_id, aspect_terms):
    """Extract (or take given) aspect terms and score each one."""
    try:
        config = _build_config(ctx.obj)
        path = pipeline.stage_aspects(config, doc_id=doc_id, override=list(aspect_terms) or None)
        click.echo(f"wrote {path}")
    except ArxsentError as exc:
        _fail(exc)


@main.command()
@click.pass_context
def report(ctx):
    """Aggregate results and emit the report artifacts."""
    try:
        config = _build_config(ctx.obj)
        manifest = pipeline.stage_report(config)
        report_dir = pipeline.run_paths(config).report_dir
        for name in sorted(manifest["files"]):
            click.echo(f"wrote {report_dir / name}")
    except ArxsentError as exc:
        _fail(exc)


@main.command("run-all")
@click.option(
    "--corpus",
    "corpus_source",
    type=click.Path(exists=False),
    help="Prefetched corpus file to use instead of hitting the network.",
)
@click.pass_context
def run_all(ctx, corpus_source):
    """Run the full pipeline and print the run directory."""
    try:
        config = _build_config(ctx.obj)
        source = Path(corpus_source) if corpus_source else None
        run_dir = pipeline.run_all(config, corpus_source=source)
        click.echo(f"run complete: {run_dir}")
    except ArxsentError as exc:
        _fail(exc)


@main.command()
@click.argument("doc_id")
@click.pass_context
def show(ctx, doc_id):
    """Print a document's stored overall distribution."""
    try:
        config = _build_config(ctx.obj)
        paths = pipeline.run_paths(config)
        if not paths.overall.exists():
            raise DataError(f"missing upstream artifact {paths.overall}; run 'classify' first")
        for item_id, dist in pipeline.load_overall_results(paths.overall):
            if item_id == doc_id:
                for label, score in dist.entries:
                    click.echo(f"{label:8s} {score:.4f}")
                click.echo(f"top: {inference.top_label(dist)}")
                return
        raise DataError(f"{doc_id} not found in {paths.overall}")
    except ArxsentError as exc:
        _fail(exc)
