"""Shapley-value attribution of a classifier score over text spans.

The value of a coalition is the score the classifier assigns to the target
label when every span outside the coalition is replaced by a mask
placeholder.  Three estimators share that contract: exact enumeration over
all coalitions (the oracle, bounded by ``EXACT_LIMIT``), seeded permutation
sampling, and a two-stage hierarchical scheme for long documents that
attributes sentences first and then refines the most influential ones to
word level.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import inference
from .corpus import AbstractDocument, Span, segment_sentences
from .errors import DataError

EXACT_LIMIT = 12  # 2^12 coalition evaluations
MASK_FALLBACK = "..."

WORD_UNIT = "word"
SENTENCE_UNIT = "sentence"

# second branch sweeps up whatever the word branch left, so standalone
# joiners like "--" still land in a span
_WORD_SPAN_RE = re.compile(r"[A-Za-z0-9]+(?:['’-][A-Za-z0-9]+)*|[^\sA-Za-z0-9]+")


def segment_words(text: str, offset: int = 0) -> list[Span]:
    """Spans of word tokens and punctuation runs; together they cover every
    non-whitespace character exactly once."""
    return [(m.start() + offset, m.end() + offset) for m in _WORD_SPAN_RE.finditer(text)]


def _check_partition(text: str, spans: Sequence[Span]) -> None:
    previous_end = -1
    covered = 0
    for start, end in spans:
        if not (0 <= start < end <= len(text)):
            raise DataError(f"span ({start}, {end}) out of bounds for text of length {len(text)}")
        if start < previous_end:
            raise DataError("spans must be ordered and non-overlapping")
        if text[start:end] != text[start:end].strip():
            raise DataError(f"span ({start}, {end}) has surrounding whitespace")
        covered += sum(1 for ch in text[start:end] if not ch.isspace())
        previous_end = end
    total = sum(1 for ch in text if not ch.isspace())
    if covered != total:
        raise DataError("spans must cover all non-whitespace characters")


@dataclass(frozen=True)
class FeatureSegmentation:
    """Ordered spans partitioning the maskable content of a text."""

    unit: str
    spans: tuple[Span, ...]

    @classmethod
    def words(cls, text: str) -> "FeatureSegmentation":
        spans = tuple(segment_words(text))
        _check_partition(text, spans)
        return cls(unit=WORD_UNIT, spans=spans)

    @classmethod
    def sentences(cls, text: str) -> "FeatureSegmentation":
        spans = tuple(segment_sentences(text))
        _check_partition(text, spans)
        return cls(unit=SENTENCE_UNIT, spans=spans)


def mask_apply(
    text: str,
    segmentation: FeatureSegmentation | Sequence[Span],
    active: Iterable[int],
    placeholder: str = MASK_FALLBACK,
) -> str:
    """Replace every span outside ``active`` with ``placeholder``; active
    spans and all inter-span text are preserved verbatim."""
    spans = segmentation.spans if isinstance(segmentation, FeatureSegmentation) else segmentation
    active_set = set(active)
    invalid = [i for i in active_set if not 0 <= i < len(spans)]
    if invalid:
        raise DataError(f"active indices out of range: {sorted(invalid)}")
    pieces = []
    cursor = 0
    for index, (start, end) in enumerate(spans):
        pieces.append(text[cursor:start])
        pieces.append(text[start:end] if index in active_set else placeholder)
        cursor = end
    pieces.append(text[cursor:])
    return "".join(pieces)


# ---------------------------------------------------------------------------
# Attribution result
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpanValue:
    start: int
    end: int
    phi: float
    stderr: float | None = None


@dataclass(frozen=True)
class Attribution:
    target_label: str
    base_value: float
    values: tuple[SpanValue, ...]
    model_id: str
    estimator: str
    sample_count: int = 0
    seed: int | None = None

    @property
    def phi(self) -> list[float]:
        return [value.phi for value in self.values]

    @property
    def spans(self) -> list[Span]:
        return [(value.start, value.end) for value in self.values]

    def total(self) -> float:
        return self.base_value + math.fsum(value.phi for value in self.values)


# ---------------------------------------------------------------------------
# Coalition value function
# ---------------------------------------------------------------------------


class CoalitionValue:
    """v(S) = classifier score for ``target_label`` on the text with every
    span outside coalition S masked.

    ``groups`` lets one coalition unit toggle several spans at once (the
    hierarchical estimator masks a sentence by masking each of its word
    spans, which keeps token counts stable across both stages).  Spans not
    owned by any group are always left active.
    """

    def __init__(
        self,
        model: inference.Classifier,
        text: str,
        spans: Sequence[Span],
        target_label: str,
        *,
        aspect: str | None = None,
        groups: Sequence[Sequence[int]] | None = None,
        placeholder: str | None = None,
    ):
        self.model = model
        self.text = text
        self.spans = tuple(spans)
        self.target_label = target_label
        self.aspect = aspect
        self.groups = tuple(tuple(g) for g in groups) if groups is not None else tuple(
            (i,) for i in range(len(self.spans))
        )
        self.placeholder = placeholder or model.mask_token or MASK_FALLBACK
        self.model_id = model.spec.model_id

    @property
    def n(self) -> int:
        return len(self.groups)

    def masked_text(self, active: Iterable[int]) -> str:
        grouped = set()
        for members in self.groups:
            grouped.update(members)
        active_spans = set(range(len(self.spans))) - grouped
        for unit in active:
            active_spans.update(self.groups[unit])
        return mask_apply(self.text, self.spans, active_spans, self.placeholder)

    def __call__(self, active: Iterable[int]) -> float:
        return self.many([frozenset(active)])[0]

    def many(self, coalitions: Sequence[frozenset[int]]) -> list[float]:
        texts = [self.masked_text(coalition) for coalition in coalitions]
        dists = inference.classify_batch(texts, self.model, self.aspect)
        return [dist.score(self.target_label) for dist in dists]


def _evaluate(v: Callable, coalitions: list[frozenset[int]]) -> list[float]:
    many = getattr(v, "many", None)
    if many is not None:
        return [float(value) for value in many(coalitions)]
    return [float(v(coalition)) for coalition in coalitions]


def _resolve_game(v, n, spans, target_label, model_id):
    if isinstance(v, CoalitionValue):
        n = v.n if n is None else n
        if spans is None and len(v.groups) == v.n:
            # Report one span per coalition unit when units are contiguous.
            spans = [
                (min(v.spans[m][0] for m in members), max(v.spans[m][1] for m in members))
                for members in v.groups
            ]
        target_label = target_label or v.target_label
        model_id = model_id or v.model_id
    if n is None:
        raise DataError("span count n is required for plain value functions")
    if spans is None:
        spans = [(i, i + 1) for i in range(n)]  # index placeholders
    return n, list(spans), target_label or "value", model_id or "synthetic-game"


def _mask_to_frozenset(mask: int, n: int) -> frozenset[int]:
    return frozenset(i for i in range(n) if mask >> i & 1)


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------


def shapley_exact(
    v,
    n: int | None = None,
    *,
    spans: Sequence[Span] | None = None,
    target_label: str | None = None,
    model_id: str | None = None,
    exact_limit: int = EXACT_LIMIT,
) -> Attribution:
    """Exact Shapley values by enumerating all 2^n coalitions."""
    n, spans, target_label, model_id = _resolve_game(v, n, spans, target_label, model_id)
    if n > exact_limit:
        raise DataError(
            f"{n} spans exceed the exact limit of {exact_limit}; "
            "use the permutation or hierarchical estimator"
        )
    size = 1 << n
    values = _evaluate(v, [_mask_to_frozenset(mask, n) for mask in range(size)])

    fact = math.factorial
    weight = [fact(s) * fact(n - s - 1) / fact(n) for s in range(n)]
    phi = [0.0] * n
    for mask in range(size):
        s = bin(mask).count("1")
        if s == n:
            continue
        without = values[mask]
        for i in range(n):
            if mask >> i & 1:
                continue
            phi[i] += weight[s] * (values[mask | (1 << i)] - without)

    return Attribution(
        target_label=target_label,
        base_value=values[0],
        values=tuple(
            SpanValue(start=start, end=end, phi=phi[i]) for i, (start, end) in enumerate(spans)
        ),
        model_id=model_id,
        estimator="exact",
    )


def shapley_permutation(
    v,
    n: int | None = None,
    *,
    samples: int,
    seed: int,
    spans: Sequence[Span] | None = None,
    target_label: str | None = None,
    model_id: str | None = None,
) -> Attribution:
    """Monte Carlo Shapley values over seeded random player orderings.

    All permutations are drawn from the seed up front and every distinct
    coalition is evaluated once (in first-appearance order), so the result
    is independent of how evaluations are dispatched or completed.
    """
    n, spans, target_label, model_id = _resolve_game(v, n, spans, target_label, model_id)
    if samples < 1:
        raise DataError("samples must be >= 1")

    rng = np.random.default_rng(seed)
    perms = [tuple(int(p) for p in rng.permutation(n)) for _ in range(samples)]

    order: list[frozenset[int]] = []
    index_of: dict[frozenset[int], int] = {}
    for coalition in (frozenset(), frozenset(range(n))):
        index_of[coalition] = len(order)
        order.append(coalition)
    for perm in perms:
        members: set[int] = set()
        for player in perm[:-1]:
            members.add(player)
            coalition = frozenset(members)
            if coalition not in index_of:
                index_of[coalition] = len(order)
                order.append(coalition)

    values = _evaluate(v, order)

    marginals = np.empty((samples, n), dtype=float)
    empty_value = values[0]
    full_value = values[1]
    for row, perm in enumerate(perms):
        members = set()
        previous = empty_value
        for position, player in enumerate(perm):
            if position == n - 1:
                current = full_value
            else:
                members.add(player)
                current = values[index_of[frozenset(members)]]
            marginals[row, player] = current - previous
            previous = current

    phi = marginals.mean(axis=0)
    if samples > 1:
        stderr = marginals.std(axis=0, ddof=1) / math.sqrt(samples)
    else:
        stderr = np.zeros(n)

    return Attribution(
        target_label=target_label,
        base_value=empty_value,
        values=tuple(
            SpanValue(start=start, end=end, phi=float(phi[i]), stderr=float(stderr[i]))
            for i, (start, end) in enumerate(spans)
        ),
        model_id=model_id,
        estimator="permutation",
        sample_count=samples,
        seed=seed,
    )


@dataclass(frozen=True)
class HierarchyParams:
    exact_limit: int = EXACT_LIMIT
    samples: int = 2000
    seed: int | None = None
    top_k: int = 3


def shapley_hierarchical(
    v_builder: Callable[..., CoalitionValue],
    doc: AbstractDocument,
    target_label: str,
    params: HierarchyParams = HierarchyParams(),
) -> Attribution:
    """Two-stage attribution for long documents.

    Stage 1 attributes whole sentences (each sentence toggles its word
    spans as one unit).  Stage 2 re-runs the estimator over the words of
    the ``top_k`` sentences by absolute attribution, with every other
    sentence left intact, and rescales the word values so they sum to the
    sentence's stage-1 value; document-level efficiency is preserved.

    ``v_builder(text, spans, groups=...)`` must return the coalition value
    function for the given masking layout.
    """
    if doc.sentence_count < 1:
        raise DataError("document has no sentences")

    word_spans: list[Span] = []
    groups: list[list[int]] = []
    for start, end in doc.sentences:
        sentence_words = segment_words(doc.text[start:end], offset=start)
        groups.append(list(range(len(word_spans), len(word_spans) + len(sentence_words))))
        word_spans.extend(sentence_words)

    n_sentences = len(groups)
    use_sampling = n_sentences > params.exact_limit
    if use_sampling and params.seed is None:
        raise DataError("seed required: sentence stage falls back to permutation sampling")

    v_sentences = v_builder(doc.text, word_spans, groups=groups)
    if use_sampling:
        stage1 = shapley_permutation(
            v_sentences, samples=params.samples, seed=params.seed, spans=doc.sentences
        )
    else:
        stage1 = shapley_exact(v_sentences, spans=doc.sentences, exact_limit=params.exact_limit)

    ranked = sorted(range(n_sentences), key=lambda k: -abs(stage1.values[k].phi))
    refine = set(ranked[: max(params.top_k, 0)])

    final: list[SpanValue] = []
    for k in range(n_sentences):
        sentence_value = stage1.values[k]
        if k not in refine or not groups[k]:
            final.append(sentence_value)
            continue

        member_spans = [word_spans[m] for m in groups[k]]
        v_words = v_builder(doc.text, word_spans, groups=[[m] for m in groups[k]])
        m_words = len(member_spans)
        if m_words > params.exact_limit:
            if params.seed is None:
                raise DataError("seed required: word stage falls back to permutation sampling")
            refined = shapley_permutation(
                v_words, samples=params.samples, seed=params.seed + 1 + k, spans=member_spans
            )
        else:
            refined = shapley_exact(v_words, spans=member_spans, exact_limit=params.exact_limit)

        word_sum = math.fsum(value.phi for value in refined.values)
        if abs(word_sum) > 1e-12:
            factor = sentence_value.phi / word_sum
            scaled = [
                replace(
                    value,
                    phi=value.phi * factor,
                    stderr=None if value.stderr is None else value.stderr * abs(factor),
                )
                for value in refined.values
            ]
        else:
            # Degenerate refinement: spread the sentence value uniformly.
            share = sentence_value.phi / m_words
            scaled = [replace(value, phi=share, stderr=None) for value in refined.values]
        final.extend(scaled)

    final.sort(key=lambda value: value.start)
    return Attribution(
        target_label=stage1.target_label,
        base_value=stage1.base_value,
        values=tuple(final),
        model_id=stage1.model_id,
        estimator="hierarchical",
        sample_count=stage1.sample_count,
        seed=params.seed,
    )


# ---------------------------------------------------------------------------
# Persistence: one record per (document, target label)
# ---------------------------------------------------------------------------


def save_attributions(items: Sequence[tuple[str, Attribution]], path: str | Path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", encoding="utf-8") as handle:
        for doc_id, attribution in items:
            row = {
                "doc_id": doc_id,
                "target_label": attribution.target_label,
                "model_id": attribution.model_id,
                "estimator": attribution.estimator,
                "seed": attribution.seed,
                "sample_count": attribution.sample_count,
                "base_value": attribution.base_value,
                "spans": [
                    [value.start, value.end, value.phi, value.stderr]
                    for value in attribution.values
                ],
            }
            handle.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
    tmp.replace(path)


def load_attributions(path: str | Path) -> list[tuple[str, Attribution]]:
    path = Path(path)
    items = []
    with path.open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                attribution = Attribution(
                    target_label=row["target_label"],
                    base_value=row["base_value"],
                    values=tuple(
                        SpanValue(start=s, end=e, phi=p, stderr=se)
                        for s, e, p, se in row["spans"]
                    ),
                    model_id=row["model_id"],
                    estimator=row["estimator"],
                    sample_count=row["sample_count"],
                    seed=row["seed"],
                )
                items.append((row["doc_id"], attribution))
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from exc
    return items
