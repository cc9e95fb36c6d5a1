"""arXiv corpus construction: harvesting, documents, segmentation, persistence.

The analysis unit is the title-prefixed abstract: the paper title is turned
into a sentence and prepended to the abstract body, and all downstream
modules treat the concatenation as one document.
"""

from __future__ import annotations

import json
import logging
import re
import time
import urllib.error
import urllib.parse
import urllib.request
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from datetime import date, datetime
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .errors import DataError, TransportError

log = logging.getLogger(__name__)

DEFAULT_ARXIV_URL = "http://export.arxiv.org/api/query"
DEFAULT_REQUEST_DELAY = 3.0  # arXiv API etiquette
DEFAULT_MAX_RETRIES = 3

ATOM_NS = {
    "atom": "http://www.w3.org/2005/Atom",
    "arxiv": "http://arxiv.org/schemas/atom",
    "opensearch": "http://a9.com/-/spec/opensearch/1.1/",
}

# Subject codes like "cs.CL", "stat.ML", but also archive-only codes such as
# "hep-th" that predate the archive.subject scheme.
CATEGORY_RE = re.compile(r"^[a-z][a-z-]*(\.[A-Za-z-]+)?$")

Span = tuple[int, int]


@dataclass(frozen=True)
class PaperRecord:
    """One arXiv metadata entry. ``categories[0]`` is the primary category."""

    arxiv_id: str
    title: str
    abstract: str
    categories: tuple[str, ...]
    submitted: date
    fetched_at: datetime

    def __post_init__(self):
        if not self.arxiv_id:
            raise DataError("arxiv_id must be nonempty")
        if not self.categories:
            raise DataError(f"{self.arxiv_id}: categories must be nonempty")
        for code in self.categories:
            if not CATEGORY_RE.match(code):
                raise DataError(f"{self.arxiv_id}: bad category code {code!r}")

    @property
    def primary_category(self) -> str:
        return self.categories[0]


@dataclass(frozen=True)
class AbstractDocument:
    """Title-prefixed abstract with its sentence segmentation."""

    source_id: str
    text: str
    sentences: tuple[Span, ...]
    warnings: tuple[str, ...] = ()

    @property
    def char_count(self) -> int:
        return len(self.text)

    @property
    def sentence_count(self) -> int:
        return len(self.sentences)

    def sentence_text(self, index: int) -> str:
        start, end = self.sentences[index]
        return self.text[start:end]


@dataclass(frozen=True)
class CorpusStats:
    document_count: int
    mean_sentences: float
    max_sentences: int
    category_counts: dict[str, int] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Sentence segmentation
# ---------------------------------------------------------------------------

# Tokens that end in "." without ending a sentence.  Single capital initials
# ("A.") are deliberately absent: "A. B." is two sentences.
ABBREVIATIONS = frozenset(
    {
        "e.g.", "i.e.", "etc.", "cf.", "vs.", "al.", "resp.", "approx.",
        "fig.", "figs.", "eq.", "eqs.", "sec.", "no.", "vol.", "pp.",
        "dr.", "mr.", "mrs.", "ms.", "prof.", "st.",
    }
)

_BOUNDARY_RE = re.compile(r"[.!?]+(?=\s)")


def segment_sentences(text: str) -> list[Span]:
    """Split ``text`` into sentence spans on terminal punctuation.

    A boundary is a run of ``.!?`` followed by whitespace and then an
    uppercase letter or digit, unless the token ending at the run is a known
    abbreviation.  Spans exclude surrounding whitespace; when no boundary is
    found the whole trimmed text is one span.
    """
    if not text:
        raise DataError("cannot segment empty text")

    boundaries: list[int] = []
    for match in _BOUNDARY_RE.finditer(text):
        end = match.end()
        follow = text[end:].lstrip()
        if not follow or not (follow[0].isupper() or follow[0].isdigit()):
            continue
        token = text[: end].rsplit(None, 1)[-1].lower()
        # Strip leading brackets/quotes so "(e.g." still matches the list.
        token = token.lstrip("([\"'‘“")
        if token in ABBREVIATIONS:
            continue
        boundaries.append(end)

    spans: list[Span] = []
    cursor = 0
    for cut in boundaries + [len(text)]:
        chunk = text[cursor:cut]
        start = cursor + (len(chunk) - len(chunk.lstrip()))
        end = cursor + len(chunk.rstrip())
        if end > start:
            spans.append((start, end))
        cursor = cut
    return spans


# ---------------------------------------------------------------------------
# Document construction
# ---------------------------------------------------------------------------


def normalize_title(title: str) -> str:
    """Return the title as a sentence: append "." unless it already ends in
    terminal punctuation."""
    title = title.strip()
    if not title:
        raise DataError("title must be nonempty")
    if title[-1] not in ".!?":
        title += "."
    return title


def build_document(record: PaperRecord) -> AbstractDocument:
    """Turn a record into the title-prefixed abstract document."""
    title_sentence = normalize_title(record.title)
    abstract = record.abstract.strip()
    warnings: tuple[str, ...] = ()
    if abstract:
        text = f"{title_sentence} {abstract}"
    else:
        text = title_sentence
        warnings = ("empty abstract: document is the title sentence only",)
    return AbstractDocument(
        source_id=record.arxiv_id,
        text=text,
        sentences=tuple(segment_sentences(text)),
        warnings=warnings,
    )


def corpus_stats(
    documents: Sequence[AbstractDocument],
    records: Sequence[PaperRecord] | None = None,
) -> CorpusStats:
    """Sentence-count statistics, plus primary-category counts when records
    are supplied."""
    if not documents:
        raise DataError("corpus_stats requires a nonempty corpus")
    counts = [doc.sentence_count for doc in documents]
    categories: dict[str, int] = {}
    for record in records or ():
        categories[record.primary_category] = categories.get(record.primary_category, 0) + 1
    return CorpusStats(
        document_count=len(documents),
        mean_sentences=sum(counts) / len(counts),
        max_sentences=max(counts),
        category_counts=dict(sorted(categories.items())),
    )


# ---------------------------------------------------------------------------
# arXiv harvesting
# ---------------------------------------------------------------------------

_VERSION_RE = re.compile(r"^(?P<base>.+?)v(?P<version>\d+)$")


def split_version(arxiv_id: str) -> tuple[str, int]:
    match = _VERSION_RE.match(arxiv_id)
    if match:
        return match.group("base"), int(match.group("version"))
    return arxiv_id, 0


def _default_transport(url: str, timeout: float = 30.0) -> bytes:
    request = urllib.request.Request(url, headers={"User-Agent": "arxsent/0.1"})
    with urllib.request.urlopen(request, timeout=timeout) as response:
        return response.read()


def _collapse_ws(text: str) -> str:
    return " ".join(text.split())


def parse_feed(payload: bytes | str) -> tuple[list[dict], int]:
    """Parse one Atom page into raw entry dicts plus the advertised total.

    Malformed entries (missing id, title, summary, date, or any category)
    are skipped with a warning rather than failing the page.
    """
    try:
        root = ET.fromstring(payload)
    except ET.ParseError as exc:
        raise DataError(f"unparseable Atom feed: {exc}") from exc

    total_text = root.findtext("opensearch:totalResults", namespaces=ATOM_NS)
    total = int(total_text) if total_text and total_text.isdigit() else -1

    entries = []
    for position, entry in enumerate(root.findall("atom:entry", ATOM_NS)):
        raw_id = (entry.findtext("atom:id", "", ATOM_NS) or "").strip()
        arxiv_id = raw_id.rsplit("/", 1)[-1]
        title = _collapse_ws(entry.findtext("atom:title", "", ATOM_NS) or "")
        summary = _collapse_ws(entry.findtext("atom:summary", "", ATOM_NS) or "")
        published = (entry.findtext("atom:published", "", ATOM_NS) or "").strip()

        categories = []
        primary = entry.find("arxiv:primary_category", ATOM_NS)
        if primary is not None and primary.get("term"):
            categories.append(primary.get("term"))
        for node in entry.findall("atom:category", ATOM_NS):
            term = node.get("term")
            if term and term not in categories:
                categories.append(term)

        try:
            submitted = datetime.fromisoformat(published.replace("Z", "+00:00")).date()
        except ValueError:
            submitted = None

        if not arxiv_id or not title or not summary or submitted is None or not categories:
            log.warning("skipping malformed feed entry at position %d (id=%r)", position, arxiv_id)
            continue
        if not all(CATEGORY_RE.match(code) for code in categories):
            log.warning("skipping entry %s: unrecognized category code", arxiv_id)
            continue

        entries.append(
            {
                "arxiv_id": arxiv_id,
                "title": title,
                "abstract": summary,
                "categories": tuple(categories),
                "submitted": submitted,
            }
        )
    return entries, total


def fetch_papers(
    query_term: str,
    window: tuple[date, date],
    page_size: int = 100,
    *,
    base_url: str = DEFAULT_ARXIV_URL,
    request_delay: float = DEFAULT_REQUEST_DELAY,
    max_retries: int = DEFAULT_MAX_RETRIES,
    transport: Callable[[str], bytes] | None = None,
    now: Callable[[], datetime] | None = None,
) -> list[PaperRecord]:
    """Harvest every record whose title or abstract contains ``query_term``
    (case-insensitive) and whose submission date lies inside ``window``.

    The API is queried with a field-restricted search and the results are
    re-filtered locally, so server-side relevance quirks cannot widen the
    corpus.  Pagination continues until a page comes back short or the
    advertised total is reached; duplicate ids keep the latest version.
    """
    if not query_term:
        raise DataError("query_term must be nonempty")
    start_date, end_date = window
    if start_date > end_date:
        raise DataError("window start must not be after window end")
    if not 1 <= page_size <= 2000:
        raise DataError("page_size must be in [1, 2000]")

    transport = transport or _default_transport
    now = now or (lambda: datetime.now().astimezone())
    needle = query_term.lower()
    search = f'ti:"{query_term}" OR abs:"{query_term}"'

    by_base: dict[str, PaperRecord] = {}
    order: list[str] = []
    start = 0
    while True:
        params = urllib.parse.urlencode(
            {"search_query": search, "start": start, "max_results": page_size}
        )
        url = f"{base_url}?{params}"
        payload = _fetch_with_retry(url, transport, max_retries, request_delay)
        entries, total = parse_feed(payload)

        fetched_at = now()
        for raw in entries:
            if needle not in raw["title"].lower() and needle not in raw["abstract"].lower():
                continue
            if not start_date <= raw["submitted"] <= end_date:
                continue
            record = PaperRecord(fetched_at=fetched_at, **raw)
            base, version = split_version(record.arxiv_id)
            existing = by_base.get(base)
            if existing is None:
                by_base[base] = record
                order.append(base)
            elif version >= split_version(existing.arxiv_id)[1]:
                by_base[base] = record

        start += page_size
        exhausted = len(entries) < page_size or (0 <= total <= start)
        if exhausted:
            break
        if request_delay > 0:
            time.sleep(request_delay)

    return [by_base[base] for base in order]


def _fetch_with_retry(url, transport, max_retries, request_delay) -> bytes:
    last_error = None
    for attempt in range(max_retries):
        try:
            return transport(url)
        except (urllib.error.URLError, ConnectionError, TimeoutError, OSError) as exc:
            last_error = exc
            log.warning("request failed (attempt %d/%d): %s", attempt + 1, max_retries, exc)
            if attempt + 1 < max_retries and request_delay > 0:
                time.sleep(request_delay)
    raise TransportError(f"arXiv request failed after {max_retries} attempts: {last_error}")


# ---------------------------------------------------------------------------
# Persistence: UTF-8 line-delimited records
# ---------------------------------------------------------------------------

_CORPUS_FIELDS = ("arxiv_id", "title", "abstract", "categories", "submitted", "fetched_at")


def save_corpus(records: Iterable[PaperRecord], path: str | Path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", encoding="utf-8") as handle:
        for record in records:
            row = {
                "arxiv_id": record.arxiv_id,
                "title": record.title,
                "abstract": record.abstract,
                "categories": list(record.categories),
                "submitted": record.submitted.isoformat(),
                "fetched_at": record.fetched_at.isoformat(),
            }
            handle.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
    tmp.replace(path)


def load_corpus(path: str | Path) -> list[PaperRecord]:
    path = Path(path)
    records = []
    with path.open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: line {lineno}: invalid JSON ({exc})") from exc
            missing = [key for key in _CORPUS_FIELDS if key not in row]
            if missing:
                raise DataError(f"{path}: line {lineno}: missing fields {missing}")
            try:
                records.append(
                    PaperRecord(
                        arxiv_id=row["arxiv_id"],
                        title=row["title"],
                        abstract=row["abstract"],
                        categories=tuple(row["categories"]),
                        submitted=date.fromisoformat(row["submitted"]),
                        fetched_at=datetime.fromisoformat(row["fetched_at"]),
                    )
                )
            except (DataError, ValueError, TypeError) as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from exc
    seen = set()
    for record in records:
        if record.arxiv_id in seen:
            raise DataError(f"{path}: duplicate arxiv_id {record.arxiv_id}")
        seen.add(record.arxiv_id)
    return records
