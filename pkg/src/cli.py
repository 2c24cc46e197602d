"""
``orlog`` command line: index, retrieve, rerank, eval, cost, synth, translate and serve.

Every subcommand reads an optional TOML config (``--config``); flags override
file values. Results go to stdout, logs to stderr.
"""
import argparse
import asyncio
import logging
import sys
import tomllib
from pathlib import Path
from typing import Callable, Optional, Sequence

from pydantic import ValidationError

from src.conf.config import RunConfig, config, load_run_config
from src.entity.errors import ConfigError, EmptyQuery, OrLogError
from src.entity.models import BackendKind, FieldPolicy, KnowledgeMode, QuerySpec
from src.repository.corpus import load_corpus
from src.repository.ledger import dump_ledger, load_ledger
from src.repository.queries import load_queries, read_raw_queries, save_queries
from src.repository.snapshot import load_index, save_index
from src.repository.trec import read_qrels, read_rankings, write_candidate_run, write_reranked_run
from src.services.evaluation import (compare_runs, evaluate_run, format_comparisons, format_report, format_table,
                                     format_template_breakdown, template_breakdown, template_breakdown_csv)
from src.services.pipeline import PipelineOptions, cost_per_pair, make_backend, run_pipeline
from src.services.retrieval import build_index, import_run, retrieve_topk
from src.services.synth import generate_fixture, write_fixture
from src.services.translator import translate

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
RETRIEVER_TAG = "bm25"


def _require(run_config: RunConfig, name: str):
    value = getattr(run_config, name)
    if value is None:
        raise ConfigError(f"--{name.replace('_', '-')} is required")
    return value


def _index(run_config: RunConfig):
    if run_config.index_path is not None and run_config.index_path.exists():
        return load_index(run_config.index_path)
    corpus = load_corpus(_require(run_config, "corpus"))
    return build_index(corpus, run_config.field_policy, run_config.stopwords)


def cmd_index(run_config: RunConfig, args: argparse.Namespace) -> int:
    """Build the BM25 index over the corpus and write its snapshot."""
    corpus = load_corpus(_require(run_config, "corpus"))
    index = build_index(corpus, run_config.field_policy, run_config.stopwords)
    path = run_config.index_path or run_config.output_dir / "index.json"
    save_index(index, path)
    print(f"indexed {index.doc_count} entities into {path}")
    return 0


def cmd_retrieve(run_config: RunConfig, args: argparse.Namespace) -> int:
    """Write the top-k BM25 candidates of every query as a TREC run."""
    queries = load_queries(_require(run_config, "queries"))
    index = _index(run_config)
    candidates = {}
    for query in queries:
        try:
            candidates[query.qid] = retrieve_topk(index, query.raw, run_config.k, run_config.k1, run_config.b)
        except EmptyQuery as e:
            logger.warning("query %s skipped: %s", query.qid, e)
    tag = run_config.tag or RETRIEVER_TAG
    path = run_config.run or run_config.output_dir / f"{tag}.run"
    write_candidate_run(candidates, path, tag)
    print(f"retrieved candidates for {len(candidates)} of {len(queries)} queries into {path}")
    return 0


async def _rerank(run_config: RunConfig, queries: list[QuerySpec], corpus, index, imported):
    backend = make_backend(run_config, config)
    try:
        return await run_pipeline(queries, corpus, backend, PipelineOptions.from_config(run_config), index, imported)
    finally:
        await backend.aclose()


def cmd_rerank(run_config: RunConfig, args: argparse.Namespace) -> int:
    """Rerank candidates by posterior; writes the run file and the ledger dump."""
    queries = load_queries(_require(run_config, "queries"))
    corpus = load_corpus(_require(run_config, "corpus"))
    index = imported = None
    if run_config.candidates_run is not None:
        imported = import_run(run_config.candidates_run, run_config.k, known_ids={entity.id for entity in corpus})
    else:
        index = _index(run_config)
    result = asyncio.run(_rerank(run_config, queries, corpus, index, imported))
    tag = run_config.run_tag
    run_path = run_config.run or run_config.output_dir / f"{tag}.run"
    ledger_path = run_config.ledger or run_config.output_dir / f"{tag}.ledger.jsonl"
    write_reranked_run(result.runs, run_path, tag)
    if len(result.ledger):
        dump_ledger(result.ledger, ledger_path)
    print(f"reranked {len(result.runs)} of {len(queries)} queries into {run_path}")
    if result.failures:
        print(f"{len(result.failures)} queries failed: {', '.join(sorted(result.failures))}")
    return 0


def cmd_eval(run_config: RunConfig, args: argparse.Namespace) -> int:
    """Evaluate a run; with baselines, add mean differences, sign tests and per-template deltas."""
    run_path = _require(run_config, "run")
    qrels = read_qrels(_require(run_config, "qrels"))
    queries = load_queries(run_config.queries) if run_config.queries is not None else None
    rankings = read_rankings(run_path)
    report = evaluate_run(rankings, qrels, queries, run_name=Path(run_path).stem)
    print(format_report(report))
    run_config.output_dir.mkdir(parents=True, exist_ok=True)
    (run_config.output_dir / f"{report.run_name}.metrics.json").write_text(
        report.model_dump_json(indent=2), encoding="utf-8")
    for baseline_path in run_config.baseline_runs:
        baseline_rankings = read_rankings(baseline_path)
        baseline = evaluate_run(baseline_rankings, qrels, queries, run_name=Path(baseline_path).stem)
        print()
        print(format_report(baseline))
        print()
        print(format_comparisons(compare_runs(report, baseline, alpha=run_config.alpha)))
        if queries is not None:
            rows = template_breakdown(rankings, baseline_rankings, qrels, queries, run_config.metric)
            print()
            print(format_template_breakdown(rows))
            template_breakdown_csv(
                rows, run_config.output_dir / f"{report.run_name}_vs_{baseline.run_name}.templates.csv")
    return 0


def cmd_cost(run_config: RunConfig, args: argparse.Namespace) -> int:
    """Average token cost per (query, entity) pair of a ledger dump."""
    ledger_path = _require(run_config, "ledger")
    value = cost_per_pair(load_ledger(ledger_path))
    method = run_config.tag or Path(ledger_path).name.split(".")[0]
    print(format_table(("method", "tokens/pair"), [(method, f"{value:.2f}")]))
    return 0


def cmd_synth(run_config: RunConfig, args: argparse.Namespace) -> int:
    """Write a seeded synthetic corpus, queries, qrels and mock-oracle table."""
    fixture = generate_fixture(run_config.seed, run_config.n_entities, run_config.queries_per_template,
                               run_config.noise)
    paths = write_fixture(fixture, run_config.output_dir)
    for role, path in paths.items():
        print(f"{role}: {path}")
    return 0


async def _translate_all(rows: list[tuple[str, str]], endpoint: str, timeout: float) -> list[QuerySpec]:
    return [await translate(qid, text, endpoint, timeout) for qid, text in rows]


def cmd_translate(run_config: RunConfig, args: argparse.Namespace) -> int:
    """Decompose raw queries (TSV ``qid<TAB>text``) through an external translator into a query file."""
    rows = read_raw_queries(args.input)
    endpoint = run_config.endpoint or config.ORACLE_ENDPOINT
    queries = asyncio.run(_translate_all(rows, endpoint, run_config.timeout))
    path = run_config.queries or run_config.output_dir / "queries.jsonl"
    save_queries(queries, path)
    print(f"translated {len(queries)} queries into {path}")
    return 0


def cmd_serve(run_config: RunConfig, args: argparse.Namespace) -> int:
    """Serve the truth-evaluation protocol over HTTP from the configured backend."""
    import uvicorn

    from src.app import app
    from src.routes.truth_eval import get_backend

    if run_config.mock_table is not None or run_config.backend is not BackendKind.mock:
        backend = make_backend(run_config, config)
        app.dependency_overrides[get_backend] = lambda: backend
    uvicorn.run(app, host=args.host, port=args.port, log_level=config.LOG_LEVEL.lower())
    return 0


COMMANDS: dict[str, Callable[[RunConfig, argparse.Namespace], int]] = {
    "index": cmd_index,
    "retrieve": cmd_retrieve,
    "rerank": cmd_rerank,
    "eval": cmd_eval,
    "cost": cmd_cost,
    "synth": cmd_synth,
    "translate": cmd_translate,
    "serve": cmd_serve,
}

# flag -> RunConfig field; every flag defaults to None so file values survive
_CONFIG_FLAGS = {
    "corpus": dict(type=Path),
    "queries": dict(type=Path),
    "qrels": dict(type=Path),
    "run": dict(type=Path),
    "baseline_runs": dict(type=Path, action="append", flags=("--baseline-run",)),
    "candidates_run": dict(type=Path),
    "ledger": dict(type=Path),
    "index_path": dict(type=Path),
    "output_dir": dict(type=Path),
    "mock_table": dict(type=Path),
    "k": dict(type=int),
    "k1": dict(type=float),
    "b": dict(type=float),
    "field_policy": dict(choices=[p.value for p in FieldPolicy]),
    "stopwords": dict(nargs="*"),
    "backend": dict(choices=[b.value for b in BackendKind]),
    "endpoint": dict(),
    "mode": dict(choices=[m.value for m in KnowledgeMode]),
    "concurrency": dict(type=int),
    "retries": dict(type=int),
    "timeout": dict(type=float),
    "context_cap": dict(type=int),
    "suffix": dict(),
    "constant_prior": dict(type=float),
    "mock_default": dict(type=float),
    "tag": dict(),
    "metric": dict(),
    "alpha": dict(type=float),
    "seed": dict(type=int),
    "n_entities": dict(type=int),
    "queries_per_template": dict(type=int),
    "noise": dict(type=float),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML file with RunConfig keys")
    common.add_argument("--log-level", help="overrides LOG_LEVEL")
    for name, options in _CONFIG_FLAGS.items():
        options = dict(options)
        flags = options.pop("flags", (f"--{name.replace('_', '-')}",))
        common.add_argument(*flags, dest=name, default=None, **options)

    parser = argparse.ArgumentParser(prog="orlog", description="Constraint-aware entity retrieval toolkit")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, handler in COMMANDS.items():
        sub = subparsers.add_parser(name, parents=[common], help=handler.__doc__.splitlines()[0])
        if name == "translate":
            sub.add_argument("--input", type=Path, required=True, help="TSV of qid and raw query text")
        if name == "serve":
            sub.add_argument("--host", default="127.0.0.1")
            sub.add_argument("--port", type=int, default=8000)
    return parser


def _describe(error: Exception) -> str:
    if isinstance(error, ValidationError):
        first = error.errors()[0]
        where = ".".join(str(part) for part in first["loc"])
        return f"{where}: {first['msg']}" if where else first["msg"]
    return str(error)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Entry point of the ``orlog`` console script.

    :param argv: Arguments without the program name; defaults to ``sys.argv[1:]``.
    :type argv: Sequence[str] | None
    :return: Exit status: 0 on success, 1 on a failed command (argparse exits 2 on bad arguments).
    :rtype: int
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=(args.log_level or config.LOG_LEVEL).upper(), format=LOG_FORMAT, stream=sys.stderr)
    overrides = {name: getattr(args, name) for name in _CONFIG_FLAGS}
    try:
        run_config = load_run_config(args.config, overrides)
        return COMMANDS[args.command](run_config, args)
    except (OrLogError, ValidationError, OSError, tomllib.TOMLDecodeError) as e:
        print(f"orlog: error: {_describe(e)}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
