import json

import pytest
from pydantic import ValidationError

from src.cli import build_parser, main
from src.conf.config import load_run_config
from src.entity.models import KnowledgeMode, ScoredCandidate
from src.repository.ledger import load_ledger
from src.repository.trec import read_qrels, read_rankings, write_candidate_run
from src.services.pipeline import cost_per_pair


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Synthetic fixture plus BM25 and reranked runs, produced through the CLI."""
    directory = tmp_path_factory.mktemp("cli")
    out = str(directory)
    assert main(["synth", "--output-dir", out, "--seed", "13"]) == 0
    files = ["--corpus", f"{out}/corpus.jsonl", "--queries", f"{out}/queries.jsonl"]
    assert main(["retrieve", *files, "--output-dir", out]) == 0
    assert main(["rerank", *files, "--mock-table", f"{out}/oracle.tsv", "--output-dir", out]) == 0
    return directory


def test_synth_writes_every_file(workdir):
    for name in ("corpus.jsonl", "queries.jsonl", "qrels.txt", "oracle.tsv"):
        assert (workdir / name).exists()


def test_retrieve_and_rerank_cover_the_same_candidates(workdir):
    bm25 = read_rankings(workdir / "bm25.run")
    reranked = read_rankings(workdir / "orlog-param+.run")
    assert set(bm25) == set(reranked)
    for qid, ranking in bm25.items():
        assert len(ranking) <= 20
        assert sorted(ranking) == sorted(reranked[qid])


def test_eval_against_baseline(workdir, capsys):
    out = str(workdir)
    code = main(["eval", "--run", f"{out}/orlog-param+.run", "--qrels", f"{out}/qrels.txt",
                 "--queries", f"{out}/queries.jsonl", "--baseline-run", f"{out}/bm25.run", "--output-dir", out])
    assert code == 0
    printed = capsys.readouterr().out
    assert "P@1" in printed and "NDCG@10" in printed and "MRR" in printed
    assert "A∨B∨C" in printed

    report = json.loads((workdir / "orlog-param+.metrics.json").read_text(encoding="utf-8"))
    assert report["evaluated_queries"] == 72
    assert report["means"]["P@1"] == report["covered_queries"] / 72
    assert (workdir / "orlog-param+_vs_bm25.templates.csv").exists()


def test_eval_of_an_ideal_ordering(workdir, tmp_path):
    qrels = read_qrels(workdir / "qrels.txt")
    ideal = {qid: [ScoredCandidate(entity_id, float(-rank), rank)
                   for rank, entity_id in enumerate(sorted(gold), start=1)]
             for qid, gold in qrels.items()}
    write_candidate_run(ideal, tmp_path / "ideal.run", "ideal")
    code = main(["eval", "--run", str(tmp_path / "ideal.run"), "--qrels", str(workdir / "qrels.txt"),
                 "--output-dir", str(tmp_path)])
    assert code == 0
    report = json.loads((tmp_path / "ideal.metrics.json").read_text(encoding="utf-8"))
    assert report["means"]["NDCG@10"] == pytest.approx(1.0)
    assert report["means"]["MRR"] == pytest.approx(1.0)


def test_synth_is_byte_identical_for_a_seed(tmp_path):
    for name in ("first", "second"):
        assert main(["synth", "--output-dir", str(tmp_path / name), "--seed", "7"]) == 0
    for name in ("corpus.jsonl", "queries.jsonl", "qrels.txt", "oracle.tsv"):
        assert (tmp_path / "first" / name).read_bytes() == (tmp_path / "second" / name).read_bytes()


def test_cost(workdir, capsys):
    assert main(["cost", "--ledger", str(workdir / "orlog-param+.ledger.jsonl")]) == 0
    printed = capsys.readouterr().out
    expected = cost_per_pair(load_ledger(workdir / "orlog-param+.ledger.jsonl"))
    assert printed.splitlines()[0].split() == ["method", "tokens/pair"]
    assert printed.splitlines()[2].split() == ["orlog-param+", f"{expected:.2f}"]


def test_rerank_imported_candidates_with_parametric_prompts(workdir):
    out = str(workdir)
    code = main(["rerank", "--corpus", f"{out}/corpus.jsonl", "--queries", f"{out}/queries.jsonl",
                 "--mock-table", f"{out}/oracle.tsv", "--candidates-run", f"{out}/bm25.run", "--k", "5",
                 "--mode", "parametric", "--output-dir", f"{out}/imported"])
    assert code == 0
    reranked = read_rankings(workdir / "imported" / "orlog-param.run")
    bm25 = read_rankings(workdir / "bm25.run")
    for qid, ranking in reranked.items():
        assert sorted(ranking) == sorted(bm25[qid][:5])


def test_index_snapshot_is_reused(workdir):
    out = str(workdir)
    assert main(["index", "--corpus", f"{out}/corpus.jsonl", "--index-path", f"{out}/index.json"]) == 0
    code = main(["retrieve", "--queries", f"{out}/queries.jsonl", "--index-path", f"{out}/index.json",
                 "--run", f"{out}/from-index.run"])
    assert code == 0
    assert read_rankings(workdir / "from-index.run") == read_rankings(workdir / "bm25.run")


def test_missing_required_path(capsys):
    assert main(["eval", "--qrels", "qrels.txt"]) == 1
    assert "orlog: error: --run is required" in capsys.readouterr().err


def test_missing_file(tmp_path, capsys):
    assert main(["cost", "--ledger", str(tmp_path / "absent.jsonl")]) == 1
    assert capsys.readouterr().err.startswith("orlog: error:")


def test_out_of_range_value(capsys):
    assert main(["synth", "--noise", "0.9"]) == 1
    assert "noise" in capsys.readouterr().err


def test_translate_rejects_a_line_without_tab(tmp_path, capsys):
    path = tmp_path / "raw.tsv"
    path.write_text("Q1\tbooks from France\nQ2 no tab here\n", encoding="utf-8")
    assert main(["translate", "--input", str(path), "--output-dir", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert err.startswith("orlog: error:")
    assert "raw.tsv:2" in err


def test_serve_runs_the_packaged_app(monkeypatch):
    from src.app import app

    served = {}
    monkeypatch.setattr("uvicorn.run", lambda application, **options: served.update(app=application, **options))
    assert main(["serve", "--port", "9000"]) == 0
    assert served["app"] is app
    assert served["port"] == 9000


def test_unknown_command():
    with pytest.raises(SystemExit) as e:
        main(["bogus"])
    assert e.value.code == 2


def test_every_command_is_registered():
    parser = build_parser()
    for command in ("index", "retrieve", "rerank", "eval", "cost", "synth", "translate", "serve"):
        extra = ["--input", "q.tsv"] if command == "translate" else []
        assert parser.parse_args([command, *extra]).command == command


class TestRunConfig:

    def test_file_values_and_overrides(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text('k = 5\nmode = "parametric"\noutput_dir = "results"\n', encoding="utf-8")
        run_config = load_run_config(path, {"k": 7, "tag": None})
        assert run_config.k == 7
        assert run_config.mode is KnowledgeMode.parametric
        assert str(run_config.output_dir) == "results"
        assert run_config.run_tag == "orlog-param"

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text("top_k = 5\n", encoding="utf-8")
        with pytest.raises(ValidationError):
            load_run_config(path)

    def test_unknown_key_through_the_cli(self, tmp_path, capsys):
        path = tmp_path / "run.toml"
        path.write_text("top_k = 5\n", encoding="utf-8")
        assert main(["synth", "--config", str(path)]) == 1
        assert "top_k" in capsys.readouterr().err

    def test_broken_toml(self, tmp_path, capsys):
        path = tmp_path / "run.toml"
        path.write_text("k = \n", encoding="utf-8")
        assert main(["synth", "--config", str(path)]) == 1
        assert capsys.readouterr().err.startswith("orlog: error:")
