"""Corpus-level aggregation and report emission.

Star buckets are assigned by argmax of the 5-star distribution and
categories by the record's primary (first-listed) code; both rules are
assumptions about how such distributions are usually displayed and are
restated inside the structured output.  Everything written here is
deterministic for fixed inputs: no timestamps inside content files (the
manifest carries the only one), sorted keys, pinned plot metadata.
"""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import html
import io
import json
import os
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from . import inference
from .aspects import DivergenceFinding
from .corpus import PaperRecord
from .errors import DataError

STRUCTURED = "structured"
TABULAR = "tabular"
PLOTS = "plots"
HEATMAPS = "heatmaps"
ALL_FORMATS = (STRUCTURED, TABULAR, PLOTS, HEATMAPS)

SCHEMA_VERSION = 1

STAR_BUCKET_RULE = "each document counted once under the argmax star label"
CATEGORY_RULE = "each record counted once under its primary (first-listed) category"


def percentage(count: int, total: int) -> float:
    """100 * count / total, rounded half-up to one decimal."""
    if total <= 0:
        raise DataError("total must be positive")
    exact = Decimal(count) * 100 / Decimal(total)
    return float(exact.quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class StarDistributionReport:
    total_docs: int
    percent_by_star: dict[str, float]
    top_label_counts: dict[str, int]


@dataclass(frozen=True)
class CategoryDistributionReport:
    total_docs: int
    percent_by_category: dict[str, float]


@dataclass(frozen=True)
class DivergenceTable:
    rows: tuple[DivergenceFinding, ...]
    divergent_count: int

    @property
    def summary(self) -> str:
        return f"{self.divergent_count} / {len(self.rows)}"


def star_distribution(
    results: Sequence[tuple[str, inference.LabelDistribution]],
) -> StarDistributionReport:
    if not results:
        raise DataError("no classification results to aggregate")
    counts = {label: 0 for label in inference.STAR_LABELS}
    for doc_id, dist in results:
        top = inference.top_label(dist)
        if top not in counts:
            raise DataError(f"{doc_id}: top label {top!r} is not a star label")
        counts[top] += 1
    total = len(results)
    percents = {label: percentage(count, total) for label, count in counts.items()}
    return StarDistributionReport(
        total_docs=total, percent_by_star=percents, top_label_counts=counts
    )


def category_distribution(corpus: Sequence[PaperRecord]) -> CategoryDistributionReport:
    if not corpus:
        raise DataError("no records to aggregate")
    counts: dict[str, int] = {}
    for record in corpus:
        primary = record.categories[0]
        counts[primary] = counts.get(primary, 0) + 1
    total = len(corpus)
    percents = {
        category: percentage(count, total) for category, count in sorted(counts.items())
    }
    return CategoryDistributionReport(total_docs=total, percent_by_category=percents)


def divergence_table(findings: Sequence[DivergenceFinding]) -> DivergenceTable:
    rows = tuple(sorted(findings, key=lambda f: (f.doc_id, f.aspect)))
    return DivergenceTable(
        rows=rows, divergent_count=sum(1 for row in rows if row.divergent)
    )


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReportBundle:
    run_config: dict
    stars: StarDistributionReport | None = None
    categories: CategoryDistributionReport | None = None
    divergence: DivergenceTable | None = None
    heatmaps: tuple[tuple[str, str], ...] = ()  # (doc_id, html fragment)


def _atomic_write(path: Path, payload: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_bytes(payload)
        os.replace(tmp, path)
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc


def _structured_payload(bundle: ReportBundle) -> bytes:
    doc: dict = {
        "schema_version": SCHEMA_VERSION,
        "run_config": bundle.run_config,
        "notes": {
            "star_bucket_rule": STAR_BUCKET_RULE,
            "category_rule": CATEGORY_RULE,
            "rounding": "percentages rounded half-up to 1 decimal",
        },
        "star_distribution": None,
        "category_distribution": None,
        "divergence": None,
    }
    if bundle.stars is not None:
        doc["star_distribution"] = {
            "total_docs": bundle.stars.total_docs,
            "percent_by_star": bundle.stars.percent_by_star,
            "top_label_counts": bundle.stars.top_label_counts,
        }
    if bundle.categories is not None:
        doc["category_distribution"] = {
            "total_docs": bundle.categories.total_docs,
            "percent_by_category": bundle.categories.percent_by_category,
        }
    if bundle.divergence is not None:
        doc["divergence"] = {
            "summary": bundle.divergence.summary,
            "rows": [
                {
                    "doc_id": row.doc_id,
                    "aspect": row.aspect,
                    "overall_star": row.overall_star,
                    "overall_polarity": row.overall_polarity,
                    "aspect_polarity": row.aspect_polarity,
                    "divergent": row.divergent,
                }
                for row in bundle.divergence.rows
            ],
        }
    return (json.dumps(doc, ensure_ascii=False, indent=2, sort_keys=True) + "\n").encode()


def _tabular_payload(table: DivergenceTable | None) -> bytes:
    table = table if table is not None else DivergenceTable(rows=(), divergent_count=0)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(
        ["doc_id", "aspect", "overall_star", "overall_polarity", "aspect_polarity", "divergent"]
    )
    for row in table.rows:
        writer.writerow(
            [
                row.doc_id,
                row.aspect,
                row.overall_star,
                row.overall_polarity,
                row.aspect_polarity,
                str(row.divergent).lower(),
            ]
        )
    buffer.write(f"# divergent: {table.summary}\n")
    return buffer.getvalue().encode()


def _bar_chart(path: Path, labels: list[str], values: list[float], title: str, rotate: bool) -> None:
    fig, ax = plt.subplots(figsize=(8, 4.5), dpi=100)
    try:
        ax.bar(range(len(labels)), values, color="#4878a8")
        ax.set_xticks(range(len(labels)))
        ax.set_xticklabels(labels, rotation=45 if rotate else 0, ha="right" if rotate else "center")
        ax.set_ylabel("% of documents")
        ax.set_title(title)
        for x, value in enumerate(values):
            ax.annotate(f"{value:.1f}", (x, value), ha="center", va="bottom", fontsize=8)
        fig.tight_layout()
        buffer = io.BytesIO()
        # Software metadata embeds the library version; drop it so reruns
        # after environment upgrades stay comparable.
        fig.savefig(buffer, format="png", metadata={"Software": None})
    finally:
        plt.close(fig)
    _atomic_write(path, buffer.getvalue())


_HEATMAP_CSS = """
body { font-family: Georgia, serif; max-width: 60em; margin: 2em auto; line-height: 1.6; }
.attribution-heatmap { margin: 0.5em 0 2em; }
h2 { font-size: 1.1em; border-bottom: 1px solid #999; }
""".strip()


def _heatmap_index(heatmaps: Sequence[tuple[str, str]]) -> bytes:
    parts = [
        "<!DOCTYPE html>",
        '<html lang="en"><head><meta charset="utf-8">',
        "<title>Attribution heatmaps</title>",
        f"<style>{_HEATMAP_CSS}</style>",
        "</head><body>",
        "<h1>Attribution heatmaps</h1>",
    ]
    if not heatmaps:
        parts.append("<p>No heatmaps in this run.</p>")
    for doc_id, fragment in heatmaps:
        parts.append(f"<h2>{html.escape(doc_id)}</h2>")
        parts.append(fragment)
    parts.append("</body></html>")
    return ("\n".join(parts) + "\n").encode()


def emit_report(
    bundle: ReportBundle,
    formats: Sequence[str],
    out_dir: str | Path,
    *,
    now: dt.datetime | None = None,
) -> dict:
    """Write the requested artifacts under ``out_dir`` and return the manifest.

    Filenames are fixed: report.json, divergence.csv, star_distribution.png,
    category_distribution.png, heatmap_index.html, plus manifest.json which
    carries the only timestamp and a sha256 per emitted file.
    """
    unknown = [f for f in formats if f not in ALL_FORMATS]
    if unknown:
        raise DataError(f"unknown report formats: {unknown}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    written: dict[str, bytes] = {}
    if STRUCTURED in formats:
        written["report.json"] = _structured_payload(bundle)
    if TABULAR in formats:
        written["divergence.csv"] = _tabular_payload(bundle.divergence)
    if PLOTS in formats:
        if bundle.stars is not None:
            star_path = out_dir / "star_distribution.png"
            _bar_chart(
                star_path,
                list(bundle.stars.percent_by_star),
                list(bundle.stars.percent_by_star.values()),
                "Overall sentiment distribution",
                rotate=False,
            )
            written["star_distribution.png"] = star_path.read_bytes()
        if bundle.categories is not None:
            ordered = sorted(
                bundle.categories.percent_by_category.items(), key=lambda kv: (-kv[1], kv[0])
            )
            cat_path = out_dir / "category_distribution.png"
            _bar_chart(
                cat_path,
                [category for category, _ in ordered],
                [percent for _, percent in ordered],
                "Primary category distribution",
                rotate=True,
            )
            written["category_distribution.png"] = cat_path.read_bytes()
    if HEATMAPS in formats:
        written["heatmap_index.html"] = _heatmap_index(bundle.heatmaps)

    for name, payload in written.items():
        if not name.endswith(".png"):  # plots already landed atomically
            _atomic_write(out_dir / name, payload)

    stamp = (now or dt.datetime.now(dt.timezone.utc)).isoformat()
    manifest = {
        "created_at": stamp,
        "files": {
            name: hashlib.sha256(payload).hexdigest() for name, payload in sorted(written.items())
        },
    }
    _atomic_write(
        out_dir / "manifest.json",
        (json.dumps(manifest, ensure_ascii=False, indent=2, sort_keys=True) + "\n").encode(),
    )
    return manifest
