"""Shared fixtures: the two worked example documents, published score
lists, synthetic corpora, and offline transports for the Atom fixtures."""

import datetime as dt
import urllib.parse
from pathlib import Path

import pytest

from arxsent import PaperRecord, build_document, save_corpus
from arxsent.inference import (
    ASPECT_SENTIMENT,
    OVERALL_SENTIMENT,
    resolve_model,
)

DATA = Path(__file__).parent / "data"

# --- Example 1: the truthfulness abstract -----------------------------------

TRUTHFUL_TITLE = "Why Does ChatGPT Fall Short in Providing Truthful Answers?"
TRUTHFUL_ABSTRACT = (
    "Recent advancements in Large Language Models, such as ChatGPT, have "
    "demonstrated significant potential to impact various aspects of human life. "
    "However, ChatGPT still faces challenges in aspects like truthfulness, e.g. "
    "providing accurate and reliable outputs. Therefore, in this paper, we seek to "
    "understand why ChatGPT falls short in providing truthful answers. For this "
    "purpose, we first analyze the failures of ChatGPT in complex open-domain "
    "question answering and identifies the abilities under the failures. "
    "Specifically, we categorize ChatGPT's failures into four types: comprehension, "
    "factualness, specificity, and inference. We further pinpoint three critical "
    "abilities associated with QA failures: knowledge memorization, knowledge "
    "recall, and knowledge reasoning. Additionally, we conduct experiments centered "
    "on these abilities and propose potential approaches to enhance truthfulness. "
    "The results indicate that furnishing the model with fine-grained external "
    "knowledge, hints for knowledge recall, and guidance for reasoning can empower "
    "the model to answer questions more truthfully."
)

# --- Example 2: the education abstract --------------------------------------

EDUCATION_TITLE = "A New Era of Artificial Intelligence in Education: A Multifaceted Revolution"
EDUCATION_ABSTRACT = (
    "The recent high performance of ChatGPT on several standardized academic test "
    "has thrust the topic of artificial intelligence (AI) into the mainstream "
    "conversation about the future of education. The objective of the present study "
    "is to investigate the effect of AI on education by examining its applications, "
    "advantages, and challenges. Our report focuses on the use of artificial "
    "intelligence in collaborative teacher-student learning, intelligent tutoring "
    "systems, automated assessment, and personalized learning. We also look into "
    "potential negative aspects, ethical issues, and possible future routes for AI "
    "implementation in education. Ultimately, we find that the only way forward is "
    "to accept and embrace the new technology, while implementing guardrails to "
    "prevent its abuse."
)

# --- Published per-label scores ---------------------------------------------

TRUTHFUL_OVERALL_SCORES = {
    "1 star": 0.10217782855033875,
    "2 stars": 0.32270216941833496,
    "3 stars": 0.37044963240623474,
    "4 stars": 0.17089851200580597,
    "5 stars": 0.033771809190511703,
}
EDUCATION_OVERALL_SCORES = {
    "1 star": 0.009633398614823818,
    "2 stars": 0.023732537403702736,
    "3 stars": 0.07598904520273209,
    "4 stars": 0.5352276563644409,
    "5 stars": 0.35541731119155884,
}
TRUTHFUL_ASPECT_SCORES = {
    "Negative": 0.6775800585746765,
    "Neutral": 0.07836440950632095,
    "Positive": 0.24405549466609955,
}
EDUCATION_ASPECT_SCORES = {
    "Negative": 0.025161078199744225,
    "Neutral": 0.4476832151412964,
    "Positive": 0.5271556973457336,
}
LEARNING_ASPECT_SCORES = {
    "Negative": 0.013970516622066498,
    "Neutral": 0.2606089413166046,
    "Positive": 0.7254205346107483,
}

_FETCHED = dt.datetime(2023, 7, 25, 12, 0, tzinfo=dt.timezone.utc)


@pytest.fixture
def truthful_record():
    return PaperRecord(
        arxiv_id="2304.10513v1",
        title=TRUTHFUL_TITLE,
        abstract=TRUTHFUL_ABSTRACT,
        categories=("cs.CL", "cs.AI"),
        submitted=dt.date(2023, 4, 20),
        fetched_at=_FETCHED,
    )


@pytest.fixture
def education_record():
    return PaperRecord(
        arxiv_id="2305.18303v1",
        title=EDUCATION_TITLE,
        abstract=EDUCATION_ABSTRACT,
        categories=("cs.CY",),
        submitted=dt.date(2023, 5, 26),
        fetched_at=_FETCHED,
    )


@pytest.fixture
def truthful_doc(truthful_record):
    return build_document(truthful_record)


@pytest.fixture
def education_doc(education_record):
    return build_document(education_record)


# --- Synthetic pipeline corpus ----------------------------------------------


def make_synthetic_records():
    return [
        PaperRecord(
            arxiv_id="2304.00001v1",
            title="Language models give helpful and truthful answers",
            abstract=(
                "This work shows the system is helpful and effective. "
                "Results are promising for education. "
                "Some limitations remain in truthfulness."
            ),
            categories=("cs.CL", "cs.AI"),
            submitted=dt.date(2023, 4, 1),
            fetched_at=_FETCHED,
        ),
        PaperRecord(
            arxiv_id="2304.00002v2",
            title="Risks of automated misuse",
            abstract=(
                "We find failure cases and concerning risks. "
                "The misuse potential is bad. "
                "Ethical concerns dominate the findings."
            ),
            categories=("cs.CY",),
            submitted=dt.date(2023, 4, 2),
            fetched_at=_FETCHED,
        ),
        PaperRecord(
            arxiv_id="2305.00003v1",
            title="A neutral survey of applications",
            abstract=(
                "This survey maps applications across domains. "
                "Coverage spans many tasks. "
                "Findings vary by setting."
            ),
            categories=("cs.SE",),
            submitted=dt.date(2023, 5, 3),
            fetched_at=_FETCHED,
        ),
    ]


@pytest.fixture
def synthetic_corpus(tmp_path):
    path = tmp_path / "corpus_fixture.jsonl"
    save_corpus(make_synthetic_records(), path)
    return path


# --- Models -----------------------------------------------------------------


@pytest.fixture
def overall_lexicon():
    return resolve_model("synthetic/lexicon", OVERALL_SENTIMENT)


@pytest.fixture
def aspect_lexicon():
    return resolve_model("synthetic/lexicon", ASPECT_SENTIMENT)


@pytest.fixture
def overall_uniform():
    return resolve_model("synthetic/uniform", OVERALL_SENTIMENT)


# --- Offline transports ------------------------------------------------------


def transport_serving(pages, calls=None):
    """Transport answering by the request's ``start`` parameter.

    ``pages``: map from start offset to a fixture Path (or raw bytes).
    """

    def transport(url):
        if calls is not None:
            calls.append(url)
        query = urllib.parse.parse_qs(urllib.parse.urlparse(url).query)
        start = int(query.get("start", ["0"])[0])
        try:
            page = pages[start]
        except KeyError:
            raise ConnectionError(f"unexpected page offset {start}")
        return page if isinstance(page, bytes) else Path(page).read_bytes()

    return transport


def failing_transport(failures, then=None):
    """Raise for the first ``failures`` calls, then serve ``then`` (or keep
    failing when ``then`` is None)."""
    state = {"calls": 0}

    def transport(url):
        state["calls"] += 1
        if state["calls"] <= failures or then is None:
            raise ConnectionError(f"boom on call {state['calls']}")
        return then if isinstance(then, bytes) else Path(then).read_bytes()

    transport.state = state
    return transport
