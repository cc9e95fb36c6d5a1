"""Aspect-term extraction from attributions plus per-aspect sentiment.

The extraction procedure: keep the spans whose attribution reaches the
tau-quantile of the positive values, emit stopword-filtered unigrams and
bigrams from contiguous runs of those spans, and rank the merged terms by
accumulated salience.  Negative-phi spans never contribute; aspects are
taken to be rating-supporting evidence.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import inference
from .corpus import AbstractDocument, Span
from .errors import ArxsentError, DataError
from .explain import Attribution
from .stopwords import STOPWORDS

_TOKEN_RE = re.compile(r"[A-Za-z0-9]+(?:['’-][A-Za-z0-9]+)*")
_MIN_TERM_LENGTH = 3


@dataclass(frozen=True)
class AspectParams:
    tau_quantile: float = 0.75
    max_candidates: int = 10


@dataclass(frozen=True)
class AspectCandidate:
    """A normalized candidate term with its supporting occurrences."""

    term: str
    occurrences: tuple[tuple[Span, float], ...]
    salience: float
    rank: int


@dataclass(frozen=True)
class AspectSentiment:
    doc_id: str
    term: str
    distribution: inference.LabelDistribution

    @property
    def polarity(self) -> str:
        return inference.top_label(self.distribution)


@dataclass(frozen=True)
class DivergenceFinding:
    doc_id: str
    overall_star: str
    overall_polarity: str
    aspect: str
    aspect_polarity: str
    divergent: bool


def normalize_term(token: str) -> str:
    """Lowercase, strip surrounding punctuation, and strip a plural "s".

    The plural strip is deliberately light: only a trailing "s" on tokens
    of length >= 4 not ending in "ss" ("aspects" -> "aspect", "class"
    stays).  Full lemmatization is out of scope.
    """
    term = token.lower().strip("'’\"“”‘().,;:!?[]{}")
    if len(term) >= 4 and term.endswith("s") and not term.endswith("ss"):
        term = term[:-1]
    return term


def _valid_component(term: str) -> bool:
    return bool(term) and term not in STOPWORDS


def _check_aligned(attribution: Attribution, text: str) -> None:
    previous_end = 0
    for value in attribution.values:
        if not (0 <= value.start < value.end <= len(text)) or value.start < previous_end:
            raise DataError("attribution does not align with the document text")
        previous_end = value.end


def extract_aspects(
    doc: AbstractDocument,
    attribution: Attribution,
    params: AspectParams = AspectParams(),
) -> list[AspectCandidate]:
    """Ranked aspect candidates from the high-attribution spans of ``doc``."""
    _check_aligned(attribution, doc.text)
    if not 0.0 <= params.tau_quantile <= 1.0:
        raise DataError("tau_quantile must lie in [0, 1]")

    positive = [value.phi for value in attribution.values if value.phi > 0]
    if not positive:
        return []
    threshold = float(np.quantile(positive, params.tau_quantile))
    selected = [i for i, value in enumerate(attribution.values) if value.phi >= threshold]

    # Maximal runs of consecutive selected spans; candidates never cross a gap.
    runs: list[list[int]] = []
    for index in selected:
        if runs and index == runs[-1][-1] + 1:
            runs[-1].append(index)
        else:
            runs.append([index])

    # occurrence: (term, (start, end), phi, weight, position)
    occurrences: list[tuple[str, Span, float, float, int]] = []
    for run in runs:
        tokens: list[tuple[int, int, str, int]] = []  # start, end, normalized, owner index
        multi_token_owner: dict[int, bool] = {}
        for index in run:
            value = attribution.values[index]
            matches = list(_TOKEN_RE.finditer(doc.text, value.start, value.end))
            multi_token_owner[index] = len(matches) > 1
            for match in matches:
                tokens.append((match.start(), match.end(), normalize_term(match.group()), index))

        raw: list[tuple[str, Span, tuple[int, ...]]] = []  # term, span, owner indices
        for position, (start, end, term, owner) in enumerate(tokens):
            if _valid_component(term) and len(term) >= _MIN_TERM_LENGTH:
                raw.append((term, (start, end), (owner,)))
            if position + 1 < len(tokens):
                n_start, n_end, n_term, n_owner = tokens[position + 1]
                if _valid_component(term) and _valid_component(n_term):
                    bigram = f"{term} {n_term}"
                    if len(bigram) >= _MIN_TERM_LENGTH:
                        owners = (owner,) if owner == n_owner else (owner, n_owner)
                        raw.append((bigram, (start, n_end), owners))

        # Word-granular evidence counts in full; a multi-word span's phi is
        # shared evenly among the candidates it supports.
        usage = {index: 0 for index in run}
        for _, _, owners in raw:
            for owner in owners:
                usage[owner] += 1
        for term, span, owners in raw:
            phi = sum(attribution.values[owner].phi for owner in owners)
            shared = [usage[owner] for owner in owners if multi_token_owner[owner]]
            weight = 1.0 / max(shared) if shared else 1.0
            occurrences.append((term, span, phi, weight, span[0]))

    merged: dict[str, dict] = {}
    for term, span, phi, weight, position in occurrences:
        entry = merged.setdefault(
            term, {"occurrences": [], "salience": 0.0, "first": position}
        )
        entry["occurrences"].append((span, phi))
        entry["salience"] += max(phi, 0.0) * weight
        entry["first"] = min(entry["first"], position)

    ranked = sorted(merged.items(), key=lambda item: (-item[1]["salience"], item[1]["first"]))
    return [
        AspectCandidate(
            term=term,
            occurrences=tuple(entry["occurrences"]),
            salience=entry["salience"],
            rank=rank,
        )
        for rank, (term, entry) in enumerate(ranked[: params.max_candidates], start=1)
    ]


def score_aspects(
    doc: AbstractDocument,
    candidates: Sequence[AspectCandidate | str],
    model: inference.Classifier,
) -> list[AspectSentiment]:
    """One AspectSentiment per candidate, order preserved.

    Accepts plain strings so user-supplied aspect terms take the same path
    as extracted candidates.
    """
    if not candidates:
        raise DataError("no aspect candidates to score")
    results = []
    for index, candidate in enumerate(candidates):
        term = candidate if isinstance(candidate, str) else candidate.term
        try:
            dist = inference.classify_aspect(doc.text, term, model)
        except ArxsentError as exc:
            raise exc.__class__(f"candidate {index} ({term!r}): {exc}") from exc
        results.append(AspectSentiment(doc_id=doc.source_id, term=term, distribution=dist))
    return results


def detect_divergence(
    overall: inference.LabelDistribution,
    aspect_results: Sequence[AspectSentiment],
) -> list[DivergenceFinding]:
    """Flag aspects whose polarity departs from the document's overall one."""
    if set(overall.labels) != set(inference.STAR_LABELS):
        raise DataError("overall distribution must cover the five star labels")
    star = inference.top_label(overall)
    overall_polarity = inference.star_to_polarity(star)
    return [
        DivergenceFinding(
            doc_id=result.doc_id,
            overall_star=star,
            overall_polarity=overall_polarity,
            aspect=result.term,
            aspect_polarity=result.polarity,
            divergent=result.polarity != overall_polarity,
        )
        for result in aspect_results
    ]


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def save_aspect_results(
    items: Sequence[tuple[AspectSentiment, float | None]], path: str | Path
) -> None:
    """Write (sentiment, salience) rows as JSON lines; salience is None for
    user-supplied terms that never went through extraction."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", encoding="utf-8") as handle:
        for sentiment, salience in items:
            row = {
                "doc_id": sentiment.doc_id,
                "term": sentiment.term,
                "salience": salience,
                "polarity": sentiment.polarity,
                "scores": sentiment.distribution.as_dict(),
                "model_id": sentiment.distribution.model_id,
                "text_hash": sentiment.distribution.target_text_hash,
            }
            handle.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
    tmp.replace(path)


def load_aspect_results(path: str | Path) -> list[tuple[AspectSentiment, float | None]]:
    path = Path(path)
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
                )
                items.append(
                    (
                        AspectSentiment(
                            doc_id=row["doc_id"], term=row["term"], distribution=dist
                        ),
                        row["salience"],
                    )
                )
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from exc
    return items
