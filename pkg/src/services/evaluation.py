"""
Ranking metrics over binary relevance, macro averaging and paired sign tests.

Metric names follow the ``<NAME>@<K>`` convention (``P@1``, ``R@10``, ``F1@10``,
``NDCG@10``); ``MRR`` has no cutoff. P, R, NDCG and MRR are computed by trec_eval
through ``ir_measures``; F1 is the harmonic mean of P and R at the same cutoff.
"""
import csv
import io
import math
import re
from collections import defaultdict
from fractions import Fraction
from pathlib import Path
from typing import Collection, Iterable, Mapping, Optional, Sequence

import ir_measures
from ir_measures import RR, P, R, nDCG
from scipy.special import comb

from src.entity.models import QuerySpec
from src.schemas.reports import MetricsReport, RunComparison, SignTestResult, TemplateDelta

DEFAULT_CUTOFFS = (1, 10)
DEFAULT_ALPHA = 0.05
NO_TEMPLATE = "-"

CUTOFF_METRICS = ("P", "R", "F1", "NDCG")
_MEASURES = {"P": P, "R": R, "NDCG": nDCG}
_METRIC_RE = re.compile(r"(P|R|F1|NDCG)@([1-9][0-9]*)")


def _check_k(k: int) -> None:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")


def _parse_metric(name: str) -> tuple[str, Optional[int]]:
    if name == "MRR":
        return name, None
    match = _METRIC_RE.fullmatch(name)
    if match is None:
        raise ValueError(f"unknown metric {name!r}")
    return match.group(1), int(match.group(2))


def _scored(ranking: Sequence[str]) -> dict[str, float]:
    # trec_eval orders by score; -rank keeps the given order and drops repeats after the first
    scored: dict[str, float] = {}
    for rank, entity_id in enumerate(ranking, start=1):
        scored.setdefault(entity_id, float(-rank))
    return scored


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def per_query_metrics(
        names: Iterable[str],
        rankings: Mapping[str, Sequence[str]],
        qrels: Mapping[str, Collection],
        qids: Iterable[str],
) -> dict[str, dict[str, float]]:
    """
    Per-query values of several metrics in one trec_eval pass.

    A query with no ranked entity or no relevant entity scores 0 on every metric.

    :param names: Metric names (``MRR`` or ``<P|R|F1|NDCG>@<k>``).
    :type names: Iterable[str]
    :param rankings: Ranked entity ids per qid.
    :type rankings: Mapping[str, Sequence[str]]
    :param qrels: Relevant entity ids per qid.
    :type qrels: Mapping[str, Collection]
    :param qids: Queries to evaluate.
    :type qids: Iterable[str]
    :return: metric -> qid -> value.
    :rtype: dict[str, dict[str, float]]
    :raises ValueError: On an unknown metric name.
    """
    parsed = {name: _parse_metric(name) for name in names}
    qids = list(qids)
    measures = {}
    for family, k in parsed.values():
        if family == "MRR":
            measures["MRR"] = RR
        elif family == "F1":
            measures[f"P@{k}"] = P @ k
            measures[f"R@{k}"] = R @ k
        else:
            measures[f"{family}@{k}"] = _MEASURES[family] @ k
    raw = {key: dict.fromkeys(qids, 0.0) for key in measures}
    judged = [qid for qid in qids if qrels.get(qid) and rankings.get(qid)]
    if judged and measures:
        keys = {str(measure): key for key, measure in measures.items()}
        qrels_dict = {qid: {entity_id: 1 for entity_id in qrels[qid]} for qid in judged}
        run_dict = {qid: _scored(rankings[qid]) for qid in judged}
        for metric in ir_measures.iter_calc(list(measures.values()), qrels_dict, run_dict):
            raw[keys[str(metric.measure)]][metric.query_id] = float(metric.value)
    values = {}
    for name, (family, k) in parsed.items():
        if family == "F1":
            values[name] = {qid: _f1(raw[f"P@{k}"][qid], raw[f"R@{k}"][qid]) for qid in qids}
        else:
            values[name] = raw[name]
    return values


def metric_value(name: str, ranking: Sequence[str], relevant: Collection) -> float:
    """
    Evaluate one metric by name on a single ranking.

    :param name: ``MRR`` or ``<P|R|F1|NDCG>@<k>``.
    :type name: str
    :param ranking: Ranked entity ids.
    :type ranking: Sequence[str]
    :param relevant: Relevant entity ids.
    :type relevant: Collection
    :return: The metric value.
    :rtype: float
    :raises ValueError: On an unknown metric name.
    """
    return per_query_metrics([name], {"q": ranking}, {"q": relevant}, ["q"])[name]["q"]


def precision_at_k(ranking: Sequence[str], relevant: Collection, k: int) -> float:
    """Fraction of the top ``k`` that is relevant; the denominator is ``k`` even for shorter rankings."""
    _check_k(k)
    return metric_value(f"P@{k}", ranking, relevant)


def recall_at_k(ranking: Sequence[str], relevant: Collection, k: int) -> float:
    """Fraction of the relevant set found in the top ``k``; 0 for an empty relevant set."""
    _check_k(k)
    return metric_value(f"R@{k}", ranking, relevant)


def f1_at_k(ranking: Sequence[str], relevant: Collection, k: int) -> float:
    _check_k(k)
    return metric_value(f"F1@{k}", ranking, relevant)


def ndcg_at_k(ranking: Sequence[str], relevant: Collection, k: int) -> float:
    """
    NDCG with binary gains and a ``1 / log2(rank + 1)`` discount.

    The ideal ranking puts ``min(|relevant|, k)`` relevant entities on top.

    :param ranking: Ranked entity ids.
    :type ranking: Sequence[str]
    :param relevant: Relevant entity ids.
    :type relevant: Collection
    :param k: Cutoff.
    :type k: int
    :return: DCG / IDCG, or 0 when there is nothing relevant.
    :rtype: float
    """
    _check_k(k)
    return metric_value(f"NDCG@{k}", ranking, relevant)


def mrr(ranking: Sequence[str], relevant: Collection) -> float:
    """Reciprocal rank of the first relevant entity; 0 if none is ranked."""
    return metric_value("MRR", ranking, relevant)


def metric_names(cutoffs: Iterable[int] = DEFAULT_CUTOFFS) -> list[str]:
    """Metric names in report order: every cutoff metric per cutoff, then ``MRR``."""
    return [f"{name}@{k}" for k in cutoffs for name in CUTOFF_METRICS] + ["MRR"]


def _mean(values: Iterable[float]) -> float:
    values = list(values)
    return math.fsum(values) / len(values) if values else 0.0


def sign_test(per_query_a: Sequence[float], per_query_b: Sequence[float]) -> SignTestResult:
    """
    Paired two-tailed sign test with an exact binomial tail.

    Ties are discarded. With ``n`` remaining pairs of which ``s`` favour ``a``,
    ``p = 2 * P(X >= max(s, n - s))`` for ``X ~ Binomial(n, 1/2)``, capped at 1.
    The tail is exact; its float conversion underflows to 0 past about 1075 one-sided pairs.

    :param per_query_a: Per-query statistic of the first run.
    :type per_query_a: Sequence[float]
    :param per_query_b: Same statistic of the second run, aligned by query.
    :type per_query_b: Sequence[float]
    :return: The p-value with win, loss and tie counts; ``all_ties`` is set (and p = 1) when nothing differs.
    :rtype: SignTestResult
    :raises ValueError: If the sequences differ in length.
    """
    if len(per_query_a) != len(per_query_b):
        raise ValueError(f"paired samples differ in length: {len(per_query_a)} != {len(per_query_b)}")
    wins = sum(1 for a, b in zip(per_query_a, per_query_b) if a > b)
    losses = sum(1 for a, b in zip(per_query_a, per_query_b) if a < b)
    ties = len(per_query_a) - wins - losses
    n = wins + losses
    if n == 0:
        return SignTestResult(p_value=1.0, wins=0, losses=0, ties=ties, all_ties=True)
    extreme = max(wins, losses)
    tail = sum(comb(n, i, exact=True) for i in range(extreme, n + 1))
    p_value = min(Fraction(2 * tail, 2 ** n), Fraction(1))
    return SignTestResult(p_value=float(p_value), wins=wins, losses=losses, ties=ties)


def evaluate_run(
        rankings: Mapping[str, Sequence[str]],
        qrels: Mapping[str, Collection],
        queries: Optional[Iterable[QuerySpec]] = None,
        cutoffs: Iterable[int] = DEFAULT_CUTOFFS,
        run_name: str = "run",
) -> MetricsReport:
    """
    Macro-average every metric over the evaluated queries.

    The evaluated queries are those with a non-empty qrels entry (restricted to
    ``queries`` when given). A query missing from the run scores 0 everywhere.

    :param rankings: Ranked entity ids per qid.
    :type rankings: Mapping[str, Sequence[str]]
    :param qrels: Relevant entity ids per qid.
    :type qrels: Mapping[str, Collection]
    :param queries: Query set; supplies the template labels for per-template means.
    :type queries: Iterable[QuerySpec] | None
    :param cutoffs: Values of K.
    :type cutoffs: Iterable[int]
    :param run_name: Name stored on the report.
    :type run_name: str
    :return: The report, per-query values included.
    :rtype: MetricsReport
    """
    templates = {}
    if queries is not None:
        templates = {query.qid: query.template_label or NO_TEMPLATE for query in queries}
        qids = sorted(qid for qid in templates if qrels.get(qid))
    else:
        qids = sorted(qid for qid, relevant in qrels.items() if relevant)
    names = metric_names(cutoffs)
    per_query = per_query_metrics(names, rankings, qrels, qids)
    covered = sum(any(entity_id in qrels[qid] for entity_id in rankings.get(qid, ())) for qid in qids)
    means = {name: _mean(per_query[name][qid] for qid in qids) for name in names}
    by_template: dict[str, list[str]] = defaultdict(list)
    for qid in qids:
        if qid in templates:
            by_template[templates[qid]].append(qid)
    template_means = {
        template: {name: _mean(per_query[name][qid] for qid in members) for name in names}
        for template, members in sorted(by_template.items())
    }
    return MetricsReport(
        run_name=run_name,
        evaluated_queries=len(qids),
        covered_queries=covered,
        means=means,
        per_query=per_query,
        templates=template_means,
    )


def compare_runs(
        report: MetricsReport,
        baseline: MetricsReport,
        metrics: Optional[Iterable[str]] = None,
        alpha: float = DEFAULT_ALPHA,
) -> list[RunComparison]:
    """
    Mean differences and sign tests of a run against one baseline.

    Per-query values are paired on the queries both reports evaluated.

    :param report: The run under test.
    :type report: MetricsReport
    :param baseline: The baseline run.
    :type baseline: MetricsReport
    :param metrics: Metrics to compare; defaults to every metric of ``report``.
    :type metrics: Iterable[str] | None
    :param alpha: Significance level.
    :type alpha: float
    :return: One comparison per metric.
    :rtype: list[RunComparison]
    """
    comparisons = []
    for metric in metrics or list(report.means):
        ours = report.per_query[metric]
        theirs = baseline.per_query[metric]
        qids = sorted(set(ours) & set(theirs))
        a = [ours[qid] for qid in qids]
        b = [theirs[qid] for qid in qids]
        mean_a, mean_b = _mean(a), _mean(b)
        test = sign_test(a, b)
        delta = mean_a - mean_b
        comparisons.append(RunComparison(
            baseline=baseline.run_name,
            metric=metric,
            mean_run=mean_a,
            mean_baseline=mean_b,
            delta=delta,
            test=test,
            significant=not test.all_ties and test.p_value < alpha,
            direction="better" if delta > 0 else "worse" if delta < 0 else "same",
        ))
    return comparisons


def template_breakdown(
        run_a: Mapping[str, Sequence[str]],
        run_b: Mapping[str, Sequence[str]],
        qrels: Mapping[str, Collection],
        queries: Iterable[QuerySpec],
        metric: str = "P@1",
) -> list[TemplateDelta]:
    """
    Per-template mean difference of one metric between two runs.

    :param run_a: Rankings of the first run.
    :type run_a: Mapping[str, Sequence[str]]
    :param run_b: Rankings of the second run.
    :type run_b: Mapping[str, Sequence[str]]
    :param qrels: Relevant entity ids per qid.
    :type qrels: Mapping[str, Collection]
    :param queries: Queries carrying the template labels; queries without qrels are skipped.
    :type queries: Iterable[QuerySpec]
    :param metric: Metric name, ``P@1`` by default.
    :type metric: str
    :return: One row per template, in order of first appearance.
    :rtype: list[TemplateDelta]
    """
    judged = [query for query in queries if qrels.get(query.qid)]
    qids = [query.qid for query in judged]
    values_a = per_query_metrics([metric], run_a, qrels, qids)[metric]
    values_b = per_query_metrics([metric], run_b, qrels, qids)[metric]
    groups: dict[str, list[tuple[float, float]]] = {}
    for query in judged:
        pair = (values_a[query.qid], values_b[query.qid])
        groups.setdefault(query.template_label or NO_TEMPLATE, []).append(pair)
    rows = []
    for template, pairs in groups.items():
        a = [x for x, _ in pairs]
        b = [y for _, y in pairs]
        rows.append(TemplateDelta(
            template=template,
            count=len(pairs),
            mean_a=_mean(a),
            mean_b=_mean(b),
            delta=_mean(x - y for x, y in pairs),
            test=sign_test(a, b),
        ))
    return rows


# --- rendering --------------------------------------------------------------

def format_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    """Left-aligned columns separated by two spaces, with a dashed rule under the header."""
    widths = [max(len(str(cell)) for cell in column) for column in zip(header, *rows)]
    lines = ["  ".join(str(cell).ljust(width) for cell, width in zip(line, widths)).rstrip()
             for line in (header, *rows)]
    lines.insert(1, "  ".join("-" * width for width in widths))
    return "\n".join(lines)


def format_report(report: MetricsReport) -> str:
    """Aligned two-column text table of a report's means."""
    rows = [(name, f"{value:.4f}") for name, value in report.means.items()]
    rows.append(("queries", str(report.evaluated_queries)))
    rows.append(("covered", str(report.covered_queries)))
    return format_table((report.run_name, "value"), rows)


def format_comparisons(comparisons: Sequence[RunComparison]) -> str:
    """Text table of run-vs-baseline differences; ``*`` marks significance."""
    rows = [
        (c.baseline, c.metric, f"{c.mean_run:.4f}", f"{c.mean_baseline:.4f}", f"{c.delta:+.4f}",
         f"{c.test.p_value:.4g}", "*" if c.significant else "", c.direction)
        for c in comparisons
    ]
    return format_table(("baseline", "metric", "run", "base", "delta", "p", "sig", "direction"), rows)


def format_template_breakdown(rows: Sequence[TemplateDelta]) -> str:
    return format_table(
        ("template", "n", "mean_a", "mean_b", "delta", "wins", "losses", "ties", "p"),
        [(r.template, str(r.count), f"{r.mean_a:.4f}", f"{r.mean_b:.4f}", f"{r.delta:+.4f}",
          str(r.test.wins), str(r.test.losses), str(r.test.ties), f"{r.test.p_value:.4g}") for r in rows],
    )


def template_breakdown_csv(rows: Sequence[TemplateDelta], path: Optional[str | Path] = None) -> str:
    """
    Per-template deltas as CSV, for external plotting.

    :param rows: Breakdown rows.
    :type rows: Sequence[TemplateDelta]
    :param path: When given, the CSV is also written there.
    :type path: str | Path | None
    :return: The CSV text.
    :rtype: str
    """
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["template", "count", "mean_a", "mean_b", "delta", "wins", "losses", "ties", "p_value"])
    for r in rows:
        writer.writerow([r.template, r.count, repr(r.mean_a), repr(r.mean_b), repr(r.delta),
                         r.test.wins, r.test.losses, r.test.ties, repr(r.test.p_value)])
    text = buffer.getvalue()
    if path is not None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    return text
