import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest
from click.testing import CliRunner

from arxsent.aspects import load_aspect_results
from arxsent.cli import main
from arxsent.config import ENV_ARXIV_URL, load_config
from arxsent.errors import (
    ArxsentError,
    ConfigError,
    DataError,
    ModelLoadError,
    TransportError,
)
from arxsent.pipeline import run_paths, seed_corpus

from conftest import DATA


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def atom_server():
    payload = DATA.joinpath("atom_page.xml").read_bytes()

    class Handler(BaseHTTPRequestHandler):
        def do_GET(self):
            self.send_response(200)
            self.send_header("Content-Type", "application/atom+xml")
            self.end_headers()
            self.wfile.write(payload)

        def log_message(self, *args):
            pass

    server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}/api/query"
    server.shutdown()


def config_for(base, config_path=None, **overrides):
    return load_config(config_path, {"out_dir": base, **overrides})


def plant_corpus(base, corpus_file, config_path=None, **overrides):
    config = config_for(base, config_path, **overrides)
    seed_corpus(config, corpus_file)
    return config


def test_exit_code_table():
    assert ArxsentError("x").exit_code == 1
    assert ConfigError("x").exit_code == 2
    assert TransportError("x").exit_code == 3
    assert ModelLoadError("x").exit_code == 4
    assert ModelLoadError("x").kind == "missing-artifact"
    assert DataError("x").exit_code == 5


def test_version(runner):
    result = runner.invoke(main, ["--version"])
    assert result.exit_code == 0
    assert "0.1.0" in result.output


class TestFetch:
    def test_local_server_end_to_end(self, runner, tmp_path, monkeypatch, atom_server):
        monkeypatch.setenv(ENV_ARXIV_URL, atom_server)
        base = tmp_path / "base"
        result = runner.invoke(main, ["--out", str(base), "fetch"])
        assert result.exit_code == 0, result.output
        assert "fetched 2 records" in result.output

        corpus_path = run_paths(config_for(base)).corpus
        assert corpus_path.exists()
        ids = [json.loads(line)["arxiv_id"] for line in corpus_path.read_text().splitlines()]
        assert ids == ["2304.10513v1", "2305.18303v1"]


class TestRunAll:
    def test_offline_corpus_to_report(self, runner, tmp_path, synthetic_corpus):
        base = tmp_path / "base"
        result = runner.invoke(
            main, ["--out", str(base), "run-all", "--corpus", str(synthetic_corpus)]
        )
        assert result.exit_code == 0, result.output
        assert "run complete:" in result.output

        paths = run_paths(config_for(base))
        for artifact in (paths.corpus, paths.overall, paths.attributions, paths.aspects):
            assert artifact.exists(), artifact
        manifest = json.loads((paths.report_dir / "manifest.json").read_text())
        assert sorted(manifest["files"]) == [
            "category_distribution.png",
            "divergence.csv",
            "heatmap_index.html",
            "report.json",
            "star_distribution.png",
        ]

        shown = runner.invoke(main, ["--out", str(base), "show", "2304.00001v1"])
        assert shown.exit_code == 0
        assert "top:" in shown.output
        assert "4 stars" in shown.output or "5 stars" in shown.output

        explained = runner.invoke(
            main,
            ["--out", str(base), "explain", "2304.00001v1", "--format", "html"],
        )
        assert explained.exit_code == 0, explained.output
        assert explained.output.startswith('<div class="attribution-heatmap"')


class TestExitCodes:
    def test_unknown_config_key_is_a_config_error(self, runner, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text("not_a_key: 1\n")
        result = runner.invoke(
            main, ["--config", str(bad), "--out", str(tmp_path / "b"), "classify"]
        )
        assert result.exit_code == 2
        assert "not_a_key" in result.stderr

    def test_classify_without_corpus_is_a_data_error(self, runner, tmp_path):
        result = runner.invoke(main, ["--out", str(tmp_path / "b"), "classify"])
        assert result.exit_code == 5
        assert "fetch" in result.stderr

    def test_unknown_model_is_a_model_error_with_no_partial_output(
        self, runner, tmp_path, monkeypatch, synthetic_corpus
    ):
        monkeypatch.setenv("HF_HUB_OFFLINE", "1")
        cfg = tmp_path / "run.yaml"
        cfg.write_text("overall_model: nowhere/does-not-exist\n")
        base = tmp_path / "base"
        config = plant_corpus(base, synthetic_corpus, cfg)

        result = runner.invoke(
            main, ["--config", str(cfg), "--out", str(base), "classify"]
        )
        assert result.exit_code == 4
        # the model is resolved before any writes
        assert not run_paths(config).overall.exists()

    def test_explain_unknown_doc_is_a_data_error(self, runner, tmp_path, synthetic_corpus):
        base = tmp_path / "base"
        plant_corpus(base, synthetic_corpus)
        result = runner.invoke(main, ["--out", str(base), "explain", "1234.99999v9"])
        assert result.exit_code == 5
        assert "1234.99999v9" in result.stderr

    def test_explain_bad_target_is_a_data_error(self, runner, tmp_path, synthetic_corpus):
        base = tmp_path / "base"
        plant_corpus(base, synthetic_corpus)
        result = runner.invoke(
            main,
            ["--out", str(base), "explain", "2304.00001v1", "--target", "6 stars"],
        )
        assert result.exit_code == 5

    def test_report_without_classify_is_a_data_error(self, runner, tmp_path, synthetic_corpus):
        base = tmp_path / "base"
        plant_corpus(base, synthetic_corpus)
        result = runner.invoke(main, ["--out", str(base), "report"])
        assert result.exit_code == 5
        assert "classify" in result.stderr


class TestAspects:
    def test_flag_overrides_config_list(self, runner, tmp_path, synthetic_corpus):
        cfg = tmp_path / "run.yaml"
        cfg.write_text("aspects: [alpha]\n")
        base = tmp_path / "base"
        config = plant_corpus(base, synthetic_corpus, cfg)
        common = ["--config", str(cfg), "--out", str(base)]

        from_config = runner.invoke(main, [*common, "aspects"])
        assert from_config.exit_code == 0, from_config.output
        rows = load_aspect_results(run_paths(config).aspects)
        assert {sentiment.term for sentiment, _ in rows} == {"alpha"}
        # explicit terms carry no extraction salience
        assert all(salience is None for _, salience in rows)

        from_flag = runner.invoke(
            main, [*common, "aspects", "--aspect", "beta", "--aspect", "gamma"]
        )
        assert from_flag.exit_code == 0, from_flag.output
        rows = load_aspect_results(run_paths(config).aspects)
        assert {sentiment.term for sentiment, _ in rows} == {"beta", "gamma"}

    def test_doc_id_restricts_and_upserts(self, runner, tmp_path, synthetic_corpus):
        base = tmp_path / "base"
        config = plant_corpus(base, synthetic_corpus)
        common = ["--out", str(base)]

        runner.invoke(main, [*common, "aspects", "--aspect", "alpha"])
        result = runner.invoke(
            main,
            [*common, "aspects", "--doc-id", "2304.00002v2", "--aspect", "beta"],
        )
        assert result.exit_code == 0, result.output
        rows = load_aspect_results(run_paths(config).aspects)
        by_doc = {}
        for sentiment, _ in rows:
            by_doc.setdefault(sentiment.doc_id, set()).add(sentiment.term)
        assert by_doc["2304.00002v2"] == {"beta"}
        assert by_doc["2304.00001v1"] == {"alpha"}

    def test_extraction_path_requires_attributions(self, runner, tmp_path, synthetic_corpus):
        base = tmp_path / "base"
        plant_corpus(base, synthetic_corpus)
        result = runner.invoke(main, ["--out", str(base), "aspects"])
        assert result.exit_code == 5
        assert "explain" in result.stderr


class TestGlobalFlags:
    def test_seed_changes_the_run_directory(self, runner, tmp_path, synthetic_corpus):
        base = tmp_path / "base"
        dirs = set()
        for seed in (0, 1):
            config = plant_corpus(base, synthetic_corpus, seed=seed)
            result = runner.invoke(
                main, ["--out", str(base), "--seed", str(seed), "classify"]
            )
            assert result.exit_code == 0, result.output
            assert run_paths(config).overall.exists()
            dirs.add(config.run_dir)
        assert len(dirs) == 2

    def test_no_cache_skips_the_cache_directory(self, runner, tmp_path, synthetic_corpus):
        cached_base = tmp_path / "cached"
        plant_corpus(cached_base, synthetic_corpus)
        runner.invoke(main, ["--out", str(cached_base), "classify"])
        assert (cached_base / ".cache").exists()

        bare_base = tmp_path / "bare"
        plant_corpus(bare_base, synthetic_corpus)
        result = runner.invoke(main, ["--out", str(bare_base), "--no-cache", "classify"])
        assert result.exit_code == 0
        assert not (bare_base / ".cache").exists()

    def test_report_lists_written_files(self, runner, tmp_path, synthetic_corpus):
        base = tmp_path / "base"
        plant_corpus(base, synthetic_corpus)
        runner.invoke(main, ["--out", str(base), "classify"])
        result = runner.invoke(main, ["--out", str(base), "report"])
        assert result.exit_code == 0, result.output
        for name in ("report.json", "divergence.csv", "star_distribution.png"):
            assert name in result.output
