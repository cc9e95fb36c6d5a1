"""The acceptance gate: one test per criterion, at the stated tolerances.

Criterion 7 needs network access and the pinned model weights; it attempts a
real download in a subprocess and skips cleanly when that fails.  Everything
else runs offline in seconds.
"""

import datetime as dt
import json
import math
import os
import subprocess
import sys
import textwrap

import numpy as np
import pytest

from arxsent import (
    AspectSentiment,
    CoalitionValue,
    HierarchyParams,
    PaperRecord,
    category_distribution,
    detect_divergence,
    percentage,
    shapley_exact,
    shapley_hierarchical,
    shapley_permutation,
    star_distribution,
)
from arxsent.config import load_config
from arxsent.corpus import AbstractDocument, parse_feed, segment_sentences
from arxsent.explain import segment_words
from arxsent.inference import (
    LabelDistribution,
    cumulative_probability,
    resolve_model,
    OVERALL_SENTIMENT,
)
from arxsent.pipeline import run_all

from conftest import (
    DATA,
    TRUTHFUL_ABSTRACT,
    TRUTHFUL_TITLE,
    TRUTHFUL_OVERALL_SCORES,
    EDUCATION_OVERALL_SCORES,
)


def table_game(n, seed):
    rng = np.random.default_rng(seed)
    table = rng.uniform(-1, 1, 2**n)

    def v(coalition):
        mask = 0
        for i in coalition:
            mask |= 1 << i
        return float(table[mask])

    return v, table


def report(line):
    print(line)


class TestCriterion1:
    def test_axioms_and_permutation_bound_on_100_games(self):
        rng = np.random.default_rng(20230724)
        for game in range(100):
            n = int(rng.integers(3, 11))  # n <= 10
            v, table = table_game(n, int(rng.integers(0, 2**31)))
            exact = shapley_exact(v, n)

            # efficiency
            assert abs(exact.total() - v(frozenset(range(n)))) <= 1e-9

            # symmetry: make players 0 and 1 interchangeable
            bonus = float(rng.uniform(0.5, 2.0))

            def sym(s, v=v, bonus=bonus):
                rest = frozenset(i for i in s if i > 1)
                return v(rest) + bonus * len(s & {0, 1})

            sym_att = shapley_exact(sym, n)
            assert abs(sym_att.phi[0] - sym_att.phi[1]) <= 1e-9

            # dummy: player n contributes nothing
            def with_dummy(s, v=v, n=n):
                return v(frozenset(i for i in s if i < n))

            dummy_att = shapley_exact(with_dummy, n + 1)
            assert abs(dummy_att.phi[n]) <= 1e-9
            for i in range(n):
                assert abs(dummy_att.phi[i] - exact.phi[i]) <= 1e-9

            # linearity
            v2, _ = table_game(n, int(rng.integers(0, 2**31)))
            a, b = float(rng.uniform(-2, 2)), float(rng.uniform(-2, 2))
            combined = shapley_exact(lambda s: a * v(s) + b * v2(s), n)
            phi2 = shapley_exact(v2, n).phi
            for i in range(n):
                assert abs(combined.phi[i] - (a * exact.phi[i] + b * phi2[i])) <= 1e-9

            # permutation estimator against the brute-force oracle
            approx = shapley_permutation(v, n, samples=2000, seed=game)
            bound = 0.05 * float(table.max() - table.min())
            worst = max(abs(p - q) for p, q in zip(exact.phi, approx.phi))
            assert worst <= bound, f"game {game}: {worst} > {bound}"
        report("criterion 1 (shapley axioms + permutation error bound): PASS")


class TestCriterion2:
    def test_additive_games_are_recovered_exactly(self):
        rng = np.random.default_rng(42)
        for trial in range(10):
            n = int(rng.integers(2, 10))
            weights = rng.uniform(-1, 1, n)

            def v(s, weights=weights):
                return math.fsum(weights[i] for i in s)

            for att in (
                shapley_exact(v, n),
                shapley_permutation(v, n, samples=50, seed=trial),
            ):
                for phi, w in zip(att.phi, weights):
                    assert abs(phi - w) <= 1e-12
            # zero-variance property: sampling adds no spread
            sampled = shapley_permutation(v, n, samples=50, seed=trial)
            for value in sampled.values:
                assert value.stderr <= 1e-12
        report("criterion 2 (additive-game exactness at 1e-12): PASS")


class TestCriterion3:
    def make_doc(self, text):
        return AbstractDocument(
            source_id="doc",
            text=text,
            sentences=tuple(segment_sentences(text)),
            warnings=(),
        )

    def test_hierarchical_efficiency_and_rescaling(self):
        model = resolve_model("synthetic/lexicon", OVERALL_SENTIMENT)
        texts = [
            "Alpha beta gamma. Results are good and promising. Risks are bad.",
            "The tool is helpful. It is effective for education. Failure cases remain. "
            "Misuse is a concern.",
            "Promising results emerge. Nothing else here.",
        ]
        for text in texts:
            doc = self.make_doc(text)

            def builder(t, spans, groups=None):
                return CoalitionValue(model, t, spans, "4 stars", groups=groups)

            words = segment_words(text)
            v_full = builder(text, words)(range(len(words)))

            sentence_only = shapley_hierarchical(
                builder, doc, "4 stars", HierarchyParams(top_k=0)
            )
            assert abs(sentence_only.total() - v_full) <= 1e-9

            refined = shapley_hierarchical(
                builder, doc, "4 stars", HierarchyParams(top_k=3)
            )
            for k, (start, end) in enumerate(doc.sentences):
                words_sum = math.fsum(
                    value.phi for value in refined.values if start <= value.start < end
                )
                assert abs(words_sum - sentence_only.values[k].phi) <= 1e-9
        report("criterion 3 (hierarchical efficiency + per-sentence rescaling): PASS")


class TestCriterion4:
    def dist(self, scores):
        return LabelDistribution.from_saved(
            scores, model_id="pinned", text_hash="0" * 64
        )

    def test_cumulative_probabilities(self):
        neutral_or_lower = cumulative_probability(
            self.dist(TRUTHFUL_OVERALL_SCORES), ["1 star", "2 stars", "3 stars"]
        )
        assert abs(neutral_or_lower - 0.7953) <= 1e-4

        positive = cumulative_probability(
            self.dist(EDUCATION_OVERALL_SCORES), ["4 stars", "5 stars"]
        )
        assert abs(positive - 0.8906) <= 1e-4
        report("criterion 4 (cumulative-probability arithmetic at 1e-4): PASS")


class TestCriterion5:
    def star_result(self, doc_id, top):
        scores = {f"{n} star" if n == 1 else f"{n} stars": 0.05 for n in range(1, 6)}
        scores[top] = 0.8
        return doc_id, LabelDistribution.from_saved(
            scores, model_id="synthetic/lexicon", text_hash="0" * 64
        )

    def record(self, arxiv_id, primary):
        return PaperRecord(
            arxiv_id=arxiv_id,
            title="Title",
            abstract="Abstract body.",
            categories=(primary,),
            submitted=dt.date(2023, 5, 1),
            fetched_at=dt.datetime(2023, 7, 24, tzinfo=dt.timezone.utc),
        )

    def test_star_and_category_aggregation(self):
        injected = {"4 stars": 151, "3 stars": 24, "5 stars": 12, "2 stars": 8, "1 star": 5}
        results = []
        for label, count in injected.items():
            results.extend(
                self.star_result(f"{label}-{i}", label) for i in range(count)
            )
        assert len(results) == 200

        stars = star_distribution(results)
        assert stars.total_docs == 200
        assert stars.percent_by_star == {
            "1 star": 2.5,
            "2 stars": 4.0,
            "3 stars": 12.0,
            "4 stars": 75.5,
            "5 stars": 6.0,
        }
        assert stars.top_label_counts == injected
        for label, count in injected.items():
            assert stars.percent_by_star[label] == percentage(count, 200)

        corpus = (
            [self.record(f"cl{i}", "cs.CL") for i in range(3)]
            + [self.record(f"cy{i}", "cs.CY") for i in range(2)]
            + [self.record(f"oc{i}", "math.OC") for i in range(2)]
            + [self.record("gn0", "econ.GN")]
        )
        categories = category_distribution(corpus)
        assert categories.percent_by_category == {
            "cs.CL": 37.5,
            "cs.CY": 25.0,
            "econ.GN": 12.5,
            "math.OC": 25.0,
        }
        report("criterion 5 (aggregation on the 200-document synthetic corpus): PASS")


class TestCriterion6:
    def test_atom_fixture_parses_to_pinned_values(self):
        entries, total = parse_feed(DATA.joinpath("atom_page.xml").read_bytes())
        assert total == 4
        assert len(entries) == 4

        first = entries[0]
        assert first["arxiv_id"] == "2304.10513v1"
        assert first["title"] == TRUTHFUL_TITLE
        assert first["abstract"] == TRUTHFUL_ABSTRACT
        assert first["categories"] == ("cs.CL", "cs.AI")
        assert first["submitted"] == dt.date(2023, 4, 20)

    def test_malformed_entry_is_skipped_with_a_warning(self, caplog):
        with caplog.at_level("WARNING", logger="arxsent.corpus"):
            entries, _ = parse_feed(DATA.joinpath("atom_malformed.xml").read_bytes())
        assert [e["arxiv_id"] for e in entries] == ["2301.01768v1", "2301.03333v1"]
        assert any("malformed" in rec.message for rec in caplog.records)
        report("criterion 6 (atom parsing against committed fixtures): PASS")


_PROBE = textwrap.dedent(
    """
    import json, sys
    from arxsent.inference import (
        ASPECT_SENTIMENT,
        OVERALL_SENTIMENT,
        classify_aspect,
        classify_overall,
        resolve_model,
    )

    payload = json.load(sys.stdin)
    overall = resolve_model(payload["overall_model"], OVERALL_SENTIMENT, payload["revision"])
    aspect = resolve_model(payload["aspect_model"], ASPECT_SENTIMENT, payload["revision"])
    out = {
        "overall_truthful": dict(classify_overall(payload["truthful_text"], overall).entries),
        "overall_education": dict(classify_overall(payload["education_text"], overall).entries),
        "aspect_truthfulness": dict(classify_aspect(payload["truthful_text"], "truthfulness", aspect).entries),
        "aspect_education": dict(classify_aspect(payload["education_text"], "education", aspect).entries),
        "aspect_learning": dict(classify_aspect(payload["education_text"], "learning", aspect).entries),
    }
    print(json.dumps(out))
    """
)


class TestCriterion7:
    def dist(self, scores):
        return LabelDistribution.from_saved(scores, model_id="hub", text_hash="0" * 64)

    def test_pinned_model_reproduction(self, truthful_doc, education_doc):
        env = {
            k: v
            for k, v in os.environ.items()
            if k not in ("HF_HUB_OFFLINE", "TRANSFORMERS_OFFLINE")
        }
        payload = json.dumps(
            {
                "overall_model": "nlptown/bert-base-multilingual-uncased-sentiment",
                "aspect_model": "yangheng/deberta-v3-base-absa-v1.1",
                "revision": "main",
                "truthful_text": truthful_doc.text,
                "education_text": education_doc.text,
            }
        )
        try:
            proc = subprocess.run(
                [sys.executable, "-c", _PROBE],
                input=payload,
                capture_output=True,
                text=True,
                env=env,
                timeout=900,
            )
        except subprocess.TimeoutExpired:
            report("criterion 7 (pinned-model reproduction): SKIP (download timed out)")
            pytest.skip("model download timed out")
        if proc.returncode != 0:
            tail = proc.stderr.strip().splitlines()[-1] if proc.stderr.strip() else "no output"
            report(f"criterion 7 (pinned-model reproduction): SKIP ({tail})")
            pytest.skip(f"model weights unavailable: {tail}")

        scores = json.loads(proc.stdout)

        for label, expected in TRUTHFUL_OVERALL_SCORES.items():
            assert abs(scores["overall_truthful"][label] - expected) <= 0.02
        assert max(scores["overall_truthful"], key=scores["overall_truthful"].get) == "3 stars"
        assert max(scores["overall_education"], key=scores["overall_education"].get) == "4 stars"
        assert abs(scores["aspect_truthfulness"]["Negative"] - 0.678) <= 0.02
        assert abs(scores["aspect_education"]["Positive"] - 0.527) <= 0.02
        assert abs(scores["aspect_learning"]["Positive"] - 0.725) <= 0.02

        example_5_1 = detect_divergence(
            self.dist(scores["overall_truthful"]),
            [
                AspectSentiment(
                    doc_id="2304.10513v1",
                    term="truthfulness",
                    distribution=self.dist(scores["aspect_truthfulness"]),
                )
            ],
        )
        assert example_5_1[0].divergent is True

        example_5_2 = detect_divergence(
            self.dist(scores["overall_education"]),
            [
                AspectSentiment(
                    doc_id="2305.18303v1",
                    term=term,
                    distribution=self.dist(scores[key]),
                )
                for term, key in (("education", "aspect_education"), ("learning", "aspect_learning"))
            ],
        )
        assert all(f.divergent is False for f in example_5_2)
        report("criterion 7 (pinned-model reproduction): PASS")


class TestCriterion8:
    def test_run_all_twice_is_byte_identical(self, tmp_path, synthetic_corpus):
        manifests = []
        trees = []
        for name in ("first", "second"):
            config = load_config(None, {"out_dir": tmp_path / name})
            run_dir = run_all(config, corpus_source=synthetic_corpus)
            tree = {}
            for path in sorted(run_dir.rglob("*")):
                if path.is_file():
                    tree[str(path.relative_to(run_dir))] = path.read_bytes()
            manifest = json.loads(tree.pop("report/manifest.json").decode())
            manifest.pop("created_at")
            manifests.append(manifest)
            trees.append(tree)

        assert trees[0].keys() == trees[1].keys()
        for name in trees[0]:
            assert trees[0][name] == trees[1][name], f"{name} differs between runs"
        assert manifests[0] == manifests[1]
        report("criterion 8 (byte-identical reruns, manifest timestamp aside): PASS")
