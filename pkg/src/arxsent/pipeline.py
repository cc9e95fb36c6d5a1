"""Pipeline stages behind the CLI: fetch -> classify -> explain -> aspects
-> report.

Every stage reads and writes only files inside the run directory
(out_dir/<run_id>/), resolves its models before writing anything, and
fails with a DataError naming the expected file when an upstream artifact
is missing.  Stage outputs depend only on (inputs, semantic config), never
on parallelism, caching, or completion order.
"""

from __future__ import annotations

import json
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence, TypeVar

from . import aspects as aspects_mod
from . import corpus as corpus_mod
from . import explain as explain_mod
from . import inference, report as report_mod
from .cache import CachingClassifier, ScoreCache
from .config import RunConfig
from .errors import DataError
from .heatmap import HTML_FORMAT, render_heatmap

T = TypeVar("T")
U = TypeVar("U")


@dataclass(frozen=True)
class RunPaths:
    run_dir: Path
    corpus: Path
    overall: Path
    attributions: Path
    aspects: Path
    report_dir: Path


def run_paths(config: RunConfig) -> RunPaths:
    run_dir = config.run_dir
    return RunPaths(
        run_dir=run_dir,
        corpus=run_dir / "corpus.jsonl",
        overall=run_dir / "overall.jsonl",
        attributions=run_dir / "attributions.jsonl",
        aspects=run_dir / "aspects.jsonl",
        report_dir=run_dir / "report",
    )


def resolve_model(config: RunConfig, task: str) -> inference.Classifier:
    model_id = (
        config.overall_model if task == inference.OVERALL_SENTIMENT else config.aspect_model
    )
    model = inference.resolve_model(model_id, task, config.model_revision)
    if config.use_cache:
        cache_root = config.cache_dir or config.out_dir / ".cache"
        model = CachingClassifier(model, ScoreCache(cache_root))
    return model


def _parallel_map(
    fn: Callable[[T], U], items: Sequence[T], workers: int, concurrent_safe: bool
) -> list[U]:
    if workers <= 1 or not concurrent_safe or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))  # map preserves input order


def _require(path: Path, producer: str) -> None:
    if not path.exists():
        raise DataError(f"missing upstream artifact {path}; run '{producer}' first")


def _load_documents(path: Path) -> tuple[list[corpus_mod.PaperRecord], dict[str, corpus_mod.AbstractDocument]]:
    records = corpus_mod.load_corpus(path)
    if not records:
        raise DataError(f"corpus file {path} contains no records")
    docs = {}
    for record in records:
        doc = corpus_mod.build_document(record)
        docs[doc.source_id] = doc
    return records, docs


# ---------------------------------------------------------------------------
# Overall-results persistence
# ---------------------------------------------------------------------------


def save_overall_results(
    items: Sequence[tuple[str, inference.LabelDistribution]], path: Path
) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", encoding="utf-8") as handle:
        for doc_id, dist in items:
            row = {
                "doc_id": doc_id,
                "model_id": dist.model_id,
                "scores": dist.as_dict(),
                "text_hash": dist.target_text_hash,
                "truncated": dist.truncated,
            }
            handle.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
    tmp.replace(path)


def load_overall_results(path: Path) -> list[tuple[str, inference.LabelDistribution]]:
    items = []
    with path.open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                dist = inference.LabelDistribution.from_saved(
                    row["scores"],
                    model_id=row["model_id"],
                    text_hash=row["text_hash"],
                    truncated=row.get("truncated", False),
                )
                items.append((row["doc_id"], dist))
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from exc
    return items


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------


def stage_fetch(config: RunConfig, transport=None) -> Path:
    paths = run_paths(config)
    paths.run_dir.mkdir(parents=True, exist_ok=True)
    records = corpus_mod.fetch_papers(
        config.query_term,
        (config.date_start, config.date_end),
        base_url=config.arxiv_url,
        transport=transport,
    )
    corpus_mod.save_corpus(records, paths.corpus)
    return paths.corpus


def seed_corpus(config: RunConfig, source: Path) -> Path:
    """Offline alternative to fetch: copy a prefetched corpus file in."""
    corpus_mod.load_corpus(source)  # validate before copying
    paths = run_paths(config)
    paths.run_dir.mkdir(parents=True, exist_ok=True)
    if source.resolve() != paths.corpus.resolve():
        shutil.copyfile(source, paths.corpus)
    return paths.corpus


def stage_classify(config: RunConfig) -> Path:
    paths = run_paths(config)
    _require(paths.corpus, "fetch")
    records, docs = _load_documents(paths.corpus)
    model = resolve_model(config, inference.OVERALL_SENTIMENT)

    ordered = [docs[record.arxiv_id] for record in records]
    dists = _parallel_map(
        lambda doc: inference.classify_overall(doc.text, model),
        ordered,
        config.parallelism,
        model.concurrent_safe,
    )
    save_overall_results(
        [(doc.source_id, dist) for doc, dist in zip(ordered, dists)], paths.overall
    )
    return paths.overall


def explain_document(
    config: RunConfig,
    doc: corpus_mod.AbstractDocument,
    target: str,
    model: inference.Classifier,
) -> explain_mod.Attribution:
    if config.estimator == "hierarchical":
        def build(text, spans, groups=None):
            return explain_mod.CoalitionValue(model, text, spans, target, groups=groups)

        params = explain_mod.HierarchyParams(
            exact_limit=config.exact_limit,
            samples=config.samples,
            seed=config.seed,
            top_k=config.hierarchy_top_k,
        )
        return explain_mod.shapley_hierarchical(build, doc, target, params)

    segmentation = explain_mod.FeatureSegmentation.words(doc.text)
    v = explain_mod.CoalitionValue(model, doc.text, segmentation.spans, target)
    if config.estimator == "exact":
        return explain_mod.shapley_exact(v, exact_limit=config.exact_limit)
    return explain_mod.shapley_permutation(v, samples=config.samples, seed=config.seed)


def stage_explain(config: RunConfig) -> Path:
    paths = run_paths(config)
    _require(paths.corpus, "fetch")
    _require(paths.overall, "classify")
    records, docs = _load_documents(paths.corpus)
    overall = dict(load_overall_results(paths.overall))
    model = resolve_model(config, inference.OVERALL_SENTIMENT)

    def one(record: corpus_mod.PaperRecord):
        doc = docs[record.arxiv_id]
        if record.arxiv_id not in overall:
            raise DataError(f"{paths.overall} has no result for {record.arxiv_id}")
        target = inference.top_label(overall[record.arxiv_id])
        return (record.arxiv_id, explain_document(config, doc, target, model))

    items = _parallel_map(one, records, config.parallelism, model.concurrent_safe)
    explain_mod.save_attributions(items, paths.attributions)
    return paths.attributions


def explain_single(
    config: RunConfig, doc_id: str, target: str | None = None
) -> tuple[corpus_mod.AbstractDocument, explain_mod.Attribution]:
    """Explain one document and fold the result into attributions.jsonl."""
    paths = run_paths(config)
    _require(paths.corpus, "fetch")
    _, docs = _load_documents(paths.corpus)
    if doc_id not in docs:
        raise DataError(f"{doc_id} is not in {paths.corpus}")
    doc = docs[doc_id]
    model = resolve_model(config, inference.OVERALL_SENTIMENT)
    if target is None:
        target = inference.top_label(inference.classify_overall(doc.text, model))
    elif target not in inference.STAR_LABELS:
        raise DataError(f"target must be a star label, got {target!r}")

    attribution = explain_document(config, doc, target, model)
    existing = (
        explain_mod.load_attributions(paths.attributions)
        if paths.attributions.exists()
        else []
    )
    merged = [(d, a) for d, a in existing if d != doc_id]
    merged.append((doc_id, attribution))
    explain_mod.save_attributions(merged, paths.attributions)
    return doc, attribution


def _candidates_for(
    config: RunConfig,
    doc: corpus_mod.AbstractDocument,
    attributions: dict[str, explain_mod.Attribution],
    override: Sequence[str] | None,
    attributions_path: Path,
) -> list[aspects_mod.AspectCandidate | str]:
    # Precedence: explicit flag > config aspect list > extraction.
    if override:
        return list(override)
    if config.aspects:
        return list(config.aspects)
    if doc.source_id not in attributions:
        raise DataError(
            f"{attributions_path} has no attribution for {doc.source_id}; "
            "run 'explain' first or configure explicit aspects"
        )
    params = aspects_mod.AspectParams(
        tau_quantile=config.tau_quantile, max_candidates=config.max_candidates
    )
    return list(aspects_mod.extract_aspects(doc, attributions[doc.source_id], params))


def stage_aspects(
    config: RunConfig,
    doc_id: str | None = None,
    override: Sequence[str] | None = None,
) -> Path:
    paths = run_paths(config)
    _require(paths.corpus, "fetch")
    records, docs = _load_documents(paths.corpus)
    if doc_id is not None:
        if doc_id not in docs:
            raise DataError(f"{doc_id} is not in {paths.corpus}")
        records = [record for record in records if record.arxiv_id == doc_id]

    needs_extraction = not override and not config.aspects
    attributions: dict[str, explain_mod.Attribution] = {}
    if needs_extraction:
        _require(paths.attributions, "explain")
        attributions = dict(explain_mod.load_attributions(paths.attributions))

    model = resolve_model(config, inference.ASPECT_SENTIMENT)

    def one(record: corpus_mod.PaperRecord):
        doc = docs[record.arxiv_id]
        candidates = _candidates_for(config, doc, attributions, override, paths.attributions)
        if not candidates:
            return []
        scored = aspects_mod.score_aspects(doc, candidates, model)
        rows = []
        for candidate, sentiment in zip(candidates, scored):
            salience = None if isinstance(candidate, str) else candidate.salience
            rows.append((sentiment, salience))
        return rows

    per_doc = _parallel_map(one, records, config.parallelism, model.concurrent_safe)
    new_rows = [row for rows in per_doc for row in rows]

    if doc_id is not None and paths.aspects.exists():
        kept = [
            item
            for item in aspects_mod.load_aspect_results(paths.aspects)
            if item[0].doc_id != doc_id
        ]
        new_rows = kept + new_rows
    aspects_mod.save_aspect_results(new_rows, paths.aspects)
    return paths.aspects


def stage_report(config: RunConfig) -> dict:
    paths = run_paths(config)
    _require(paths.corpus, "fetch")
    _require(paths.overall, "classify")
    records, docs = _load_documents(paths.corpus)
    overall_items = load_overall_results(paths.overall)
    overall = dict(overall_items)

    stars = report_mod.star_distribution(overall_items)
    categories = report_mod.category_distribution(records)

    findings: list[aspects_mod.DivergenceFinding] = []
    if paths.aspects.exists():
        by_doc: dict[str, list[aspects_mod.AspectSentiment]] = {}
        for sentiment, _ in aspects_mod.load_aspect_results(paths.aspects):
            by_doc.setdefault(sentiment.doc_id, []).append(sentiment)
        for doc_id_, results in by_doc.items():
            if doc_id_ not in overall:
                raise DataError(f"{paths.overall} has no result for {doc_id_}")
            findings.extend(aspects_mod.detect_divergence(overall[doc_id_], results))
    table = report_mod.divergence_table(findings)

    heatmaps = []
    if paths.attributions.exists():
        for doc_id_, attribution in explain_mod.load_attributions(paths.attributions):
            if doc_id_ not in docs:
                raise DataError(f"{paths.attributions} mentions unknown document {doc_id_}")
            fragment = render_heatmap(attribution, docs[doc_id_].text, HTML_FORMAT)
            heatmaps.append((doc_id_, fragment))

    bundle = report_mod.ReportBundle(
        run_config={"run_id": config.run_id, **config.semantic_dict()},
        stars=stars,
        categories=categories,
        divergence=table,
        heatmaps=tuple(heatmaps),
    )
    return report_mod.emit_report(bundle, config.formats, paths.report_dir)


def run_all(config: RunConfig, corpus_source: Path | None = None, transport=None) -> Path:
    if corpus_source is not None:
        seed_corpus(config, corpus_source)
    else:
        stage_fetch(config, transport=transport)
    stage_classify(config)
    stage_explain(config)
    stage_aspects(config)
    stage_report(config)
    return run_paths(config).run_dir


def load_corpus_documents(
    config: RunConfig,
) -> tuple[list[corpus_mod.PaperRecord], dict[str, corpus_mod.AbstractDocument]]:
    paths = run_paths(config)
    _require(paths.corpus, "fetch")
    return _load_documents(paths.corpus)
