"""Command-line entry point.

One command, ten subcommands, wiring the pipeline end to end:

    ingest    clickstream dump -> per-article traffic table
    metrics   traffic table -> searchshare/resistance, roles, histograms
    overlap   traffic table -> cumulative rank-overlap curves
    graph     edge list or clickstream -> degrees and k-core table
    features  metric + network + content (+ topic) tables -> joined table,
              role medians, topic statistics, per-topic ratio grids
    bins      joined table -> quartile curve over equal-count bins
    topics    article texts -> fitted topic model and assignments
    model     joined table -> cross-validated classifiers and AUC report
    sample    traffic table -> seeded uniform article sample
    report    earlier output dirs -> one plot-ready bundle with an index

Every subcommand takes --out and writes its files plus a manifest
there. Exit codes: 0 success, 1 bad data, 2 bad usage. All randomness
comes from --seed; a --config file supplies key=value defaults that
explicit flags override.
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
from fnmatch import fnmatch
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DataError, UsageError
from .features import (
    binned_quartiles,
    group_medians,
    join_features,
    read_content_table,
    read_joined_table,
    read_topic_assignments,
    relative_difference_heatmap,
    topic_statistics,
    write_bin_table,
    write_group_medians,
    write_joined_table,
    write_topic_stats,
)
from .ingest import (
    ParseStats,
    ParserConfig,
    parse_clickstream,
    read_traffic_file,
    read_traffic_table,
    write_traffic_table,
)
from .linkgraph import (
    EdgeStats,
    build_graph,
    edges_from_clickstream,
    graph_from_file,
    network_features,
    read_network_table,
    write_network_table,
)
from .manifest import build_manifest, write_manifest
from .metrics import (
    TrafficMetrics,
    correlations,
    corpus_thresholds,
    group_shares,
    heatmap_grid,
    histogram,
    metrics_table,
    read_metrics_table,
    write_group_shares,
    write_metrics_table,
    write_thresholds,
)
from .model import (
    FEATURE_GROUPS,
    GBDTConfig,
    balance,
    build_instances,
    cross_validate,
    save_model,
    select_group,
    train_gbdt,
    write_eval_report,
)
from .overlap import RANKING_KEYS, cumulative_overlap, default_ks, rank_articles, write_curve
from .tableio import fmt_value, iter_lines, read_keyvalues, write_keyvalues, write_matrix_csv, write_tsv
from .topics import (
    DEFAULT_STOP_WORDS,
    DEFAULT_TOPIC_LABELS,
    corpus_from_file,
    fit_lda,
    read_stop_words,
    write_assignments,
    write_phi,
    write_theta,
    write_top_words,
)

# flags that take no value; config-file entries for them are true/false
_BOOL_KEYS = frozenset({"strict"})


class _Parser(argparse.ArgumentParser):
    """argparse that reports problems as UsageError instead of exiting."""

    def __init__(self, *args, **kwargs):
        kwargs.setdefault("allow_abbrev", False)
        super().__init__(*args, **kwargs)

    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(f"{message}\n{self.format_usage()}".rstrip())


class _OutputDir:
    """Tracks every file a subcommand emits, for the manifest."""

    def __init__(self, path: str):
        self.path = Path(path)
        self.names: list[str] = []

    def file(self, name: str) -> Path:
        self.names.append(name)
        return self.path / name


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--seed", type=int, default=0, help="seed for all randomness")
    common.add_argument("--threads", type=int, default=1, help="worker thread cap")
    common.add_argument("--strict", action="store_true", help="abort on malformed input lines")
    common.add_argument("--config", help="key=value file with flag defaults; flags win")
    return common


def build_parser() -> _Parser:
    top = _Parser(prog="clickroles", description=__doc__)
    top.add_argument("--version", action="version", version=f"clickroles {__version__}")
    sub = top.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    common = [_common_flags()]

    p = sub.add_parser("ingest", parents=common, help="aggregate a clickstream dump")
    p.add_argument("--clickstream", required=True, help="transition log (TSV, may be .gz)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("metrics", parents=common, help="per-article metrics and role shares")
    p.add_argument("--traffic", required=True, help="traffic table from ingest")
    p.add_argument("--bins", type=int, default=50, help="histogram bin count")
    p.add_argument("--grid", type=int, default=50, help="heatmap grid size")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("overlap", parents=common, help="rank-overlap curves")
    p.add_argument("--traffic", required=True)
    p.add_argument(
        "--pairs",
        default=None,
        help="comma list of key:key ranking pairs (default: all pairs of "
        + "/".join(RANKING_KEYS) + ")",
    )
    p.add_argument("--depths", default=None, help="comma list of depths k (default: log schedule)")
    p.set_defaults(func=cmd_overlap)

    p = sub.add_parser("graph", parents=common, help="link-graph degrees and k-core")
    p.add_argument("--edges", help="edge list file (source<TAB>target, may be .gz)")
    p.add_argument("--clickstream", help="approximate edges from internal transitions")
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("features", parents=common, help="join tables; medians and topic stats")
    p.add_argument("--metrics", required=True)
    p.add_argument("--network", required=True)
    p.add_argument("--content", required=True)
    p.add_argument("--topics", help="topic assignment table (optional)")
    p.add_argument("--labels", help="id=label file for topic display names")
    p.add_argument("--grid", type=int, default=50, help="ratio-grid size; 0 disables")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("bins", parents=common, help="quartiles over equal-count feature bins")
    p.add_argument("--joined", required=True)
    p.add_argument("--bin-feature", default="kcore")
    p.add_argument("--target", default="searchshare")
    p.add_argument("--bins", type=int, default=25)
    p.add_argument("--topic", type=int, default=None, help="restrict to one topic id")
    p.set_defaults(func=cmd_bins)

    p = sub.add_parser("topics", parents=common, help="fit a topic model over article texts")
    p.add_argument("--documents", required=True, help='lines of "article<TAB>text"')
    p.add_argument("--stopwords", help="stop word list, one per line")
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--alpha", type=float, default=None, help="default 50/k")
    p.add_argument("--beta", type=float, default=0.01)
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--top-words", type=int, default=10)
    p.set_defaults(func=cmd_topics)

    p = sub.add_parser("model", parents=common, help="cross-validated role classifiers")
    p.add_argument("--joined", required=True)
    p.add_argument("--task", choices=("searchshare", "resistance"), default="searchshare")
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--groups", default=None, help="comma list from: " + ", ".join(FEATURE_GROUPS))
    p.add_argument("--trees", type=int, default=200)
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--rate", type=float, default=0.1)
    p.add_argument("--min-leaf", type=int, default=20)
    p.add_argument("--folds", type=int, default=10)
    p.set_defaults(func=cmd_model)

    p = sub.add_parser("sample", parents=common, help="seeded uniform article sample")
    p.add_argument("--traffic", required=True)
    p.add_argument("--n", type=int, default=50000)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("report", parents=common, help="bundle outputs into one indexed directory")
    p.add_argument("--inputs", nargs="+", required=True, help="output directories of earlier runs")
    p.set_defaults(func=cmd_report)

    return top


def _inject_config(argv: list[str]) -> list[str]:
    """Insert config-file entries as flags right after the subcommand.

    Later occurrences win in argparse, so explicit flags override the
    injected ones.
    """
    path = None
    for i, token in enumerate(argv):
        if token == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
            break
        if token.startswith("--config="):
            path = token.split("=", 1)[1]
            break
    if path is None or not argv or argv[0].startswith("-"):
        return argv

    injected: list[str] = []
    for lineno, line in enumerate(iter_lines(path), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not sep or not key:
            raise UsageError(f"{path} line {lineno}: expected key=value")
        if key in _BOOL_KEYS:
            if value.lower() in ("1", "true", "yes"):
                injected.append(f"--{key}")
            elif value.lower() not in ("0", "false", "no"):
                raise UsageError(f"{path} line {lineno}: {key} must be true or false")
        else:
            injected.append(f"--{key}={value}")
    return [argv[0]] + injected + argv[1:]


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv = _inject_config(argv)
        args = build_parser().parse_args(argv)
        args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def _finish(args, out: _OutputDir, inputs: list[str]) -> None:
    config = {
        k: (str(v) if isinstance(v, Path) else v)
        for k, v in vars(args).items()
        if k not in ("func", "subcommand", "out", "config", "seed")
    }
    manifest = build_manifest(args.subcommand, config, inputs, out.names, seed=args.seed)
    write_manifest(out.path, manifest)


# ---------------------------------------------------------------------------
# subcommands


def cmd_ingest(args) -> None:
    out = _OutputDir(args.out)
    stats = ParseStats()
    table = read_traffic_file(
        args.clickstream, ParserConfig(strict=args.strict), stats=stats, threads=args.threads
    )
    write_traffic_table(out.file("traffic.tsv"), table)
    write_keyvalues(
        out.file("ingest_stats.txt"),
        {
            "articles": len(table),
            "lines": stats.lines,
            "records": stats.records,
            "malformed": stats.malformed,
            "unknown_rawtype": stats.unknown_rawtype,
            "below_min_count": stats.below_min_count,
            "header_lines": stats.header_lines,
        },
    )
    _finish(args, out, [args.clickstream])


def cmd_metrics(args) -> None:
    out = _OutputDir(args.out)
    traffic = read_traffic_table(args.traffic)
    metrics = metrics_table(traffic)
    if not metrics:
        raise DataError(f"no articles with positive inflow in {args.traffic}")
    thresholds = corpus_thresholds(metrics)
    write_metrics_table(out.file("metrics.tsv"), metrics, thresholds)
    write_thresholds(out.file("thresholds.txt"), thresholds)
    write_group_shares(out.file("group_shares.tsv"), group_shares(metrics, thresholds))
    if len(metrics) >= 2:
        write_keyvalues(out.file("correlations.txt"), correlations(metrics))

    views = [float(m.total_views) for m in metrics]
    for name in ("searchshare", "resistance"):
        values = [getattr(m, name) for m in metrics]
        by_articles = histogram(values, None, args.bins)
        by_views = histogram(values, views, args.bins)
        rows = (
            (
                i,
                fmt_value(i / args.bins),
                fmt_value((i + 1) / args.bins),
                int(by_articles[i]),
                fmt_value(by_views[i]),
            )
            for i in range(args.bins)
        )
        write_tsv(
            out.file(f"histogram_{name}.tsv"),
            ("bin", "low", "high", "articles", "views"),
            rows,
        )

    for weighted, name in ((False, "heatmap_articles.csv"), (True, "heatmap_views.csv")):
        grid = heatmap_grid(metrics, args.grid, weighted=weighted)
        write_matrix_csv(
            out.file(name),
            grid,
            {"rows": "resistance", "cols": "searchshare", "grid": args.grid,
             "weighted": "views" if weighted else "articles"},
        )
    _finish(args, out, [args.traffic])


def _parse_pairs(arg: str | None) -> list[tuple[str, str]]:
    if arg is None:
        return [
            (a, b)
            for i, a in enumerate(RANKING_KEYS)
            for b in RANKING_KEYS[i + 1 :]
        ]
    pairs = []
    for item in arg.split(","):
        a, sep, b = item.partition(":")
        if not sep:
            raise UsageError(f"ranking pair {item!r} must be key:key")
        pairs.append((a.strip(), b.strip()))
    return pairs


def cmd_overlap(args) -> None:
    out = _OutputDir(args.out)
    traffic = read_traffic_table(args.traffic)
    if args.depths is not None:
        try:
            ks = [int(k) for k in args.depths.split(",")]
        except ValueError:
            raise UsageError(f"--depths must be a comma list of integers: {args.depths!r}")
    else:
        ks = default_ks(len(traffic))
    for a, b in _parse_pairs(args.pairs):
        curve = cumulative_overlap(rank_articles(traffic, a), rank_articles(traffic, b), ks)
        write_curve(out.file(f"overlap_{a}_{b}.csv"), curve)
    _finish(args, out, [args.traffic])


def cmd_graph(args) -> None:
    out = _OutputDir(args.out)
    if bool(args.edges) == bool(args.clickstream):
        raise UsageError("exactly one of --edges or --clickstream is required")
    stats = EdgeStats()
    if args.edges:
        graph = graph_from_file(args.edges, strict=args.strict, stats=stats)
        source, source_path = "edge-list", args.edges
    else:
        # traveled-link approximation: only transitions at or above the
        # dump floor appear, so degrees underestimate the true graph
        parse_stats = ParseStats()
        records = parse_clickstream(
            iter_lines(args.clickstream), ParserConfig(strict=args.strict), parse_stats
        )
        graph = build_graph(edges_from_clickstream(records), stats)
        source, source_path = "clickstream-approximation", args.clickstream
    write_network_table(out.file("network.tsv"), network_features(graph))
    write_keyvalues(
        out.file("graph_stats.txt"),
        {
            "edge_source": source,
            "nodes": graph.node_count,
            "edges": graph.edge_count,
            "self_loops": stats.self_loops,
            "duplicates": stats.duplicates,
            "malformed": stats.malformed,
        },
    )
    _finish(args, out, [source_path])


def _topic_labels(args, topic_ids: set[int]) -> dict[int, str]:
    if args.labels:
        raw = read_keyvalues(args.labels)
        try:
            return {int(k): v for k, v in raw.items()}
        except ValueError:
            raise UsageError(f"{args.labels}: keys must be integer topic ids")
    if topic_ids and topic_ids == set(range(20)):
        return dict(enumerate(DEFAULT_TOPIC_LABELS))
    return {}


def cmd_features(args) -> None:
    out = _OutputDir(args.out)
    metrics, quadrants = read_metrics_table(args.metrics)
    network = read_network_table(args.network)
    content = read_content_table(args.content)
    topics = read_topic_assignments(args.topics) if args.topics else None

    joined, jstats = join_features(metrics, quadrants, network, content, topics)
    write_joined_table(out.file("joined.tsv"), joined)
    write_group_medians(out.file("medians.tsv"), group_medians(joined))
    write_keyvalues(
        out.file("join_stats.txt"),
        {"kept": jstats.kept, **{f"dropped_{k}": v for k, v in sorted(jstats.dropped.items())}},
    )

    inputs = [args.metrics, args.network, args.content]
    if topics is not None:
        inputs.append(args.topics)
        assigned_ids = {r.topic_id for r in joined if r.topic_id is not None}
        labels = _topic_labels(args, assigned_ids)
        write_topic_stats(out.file("topic_stats.tsv"), topic_statistics(joined, labels))
        if args.grid > 0 and assigned_ids:
            as_metrics = [
                TrafficMetrics(r.article, r.searchshare, r.resistance, r.total_views)
                for r in joined
            ]
            overall = heatmap_grid(as_metrics, args.grid, weighted=True)
            for tid in sorted(assigned_ids):
                members = [
                    TrafficMetrics(r.article, r.searchshare, r.resistance, r.total_views)
                    for r in joined
                    if r.topic_id == tid
                ]
                ratio = relative_difference_heatmap(
                    heatmap_grid(members, args.grid, weighted=True), overall
                )
                write_matrix_csv(
                    out.file(f"ratio_topic_{tid}.csv"),
                    ratio,
                    {"topic_id": tid, "label": labels.get(tid, f"topic-{tid}"),
                     "rows": "resistance", "cols": "searchshare", "grid": args.grid},
                )
    if args.labels:
        inputs.append(args.labels)
    _finish(args, out, inputs)


def cmd_bins(args) -> None:
    out = _OutputDir(args.out)
    rows = read_joined_table(args.joined)
    suffix = ""
    if args.topic is not None:
        rows = [r for r in rows if r.topic_id == args.topic]
        suffix = f"_topic{args.topic}"
        if not rows:
            raise DataError(f"no rows assigned to topic {args.topic}")
    result = binned_quartiles(rows, args.bin_feature, args.target, args.bins)
    write_bin_table(out.file(f"bins_{args.bin_feature}_{args.target}{suffix}.csv"), result)
    _finish(args, out, [args.joined])


def cmd_topics(args) -> None:
    out = _OutputDir(args.out)
    stop_words = read_stop_words(args.stopwords) if args.stopwords else DEFAULT_STOP_WORDS
    corpus = corpus_from_file(args.documents, stop_words)
    model = fit_lda(
        corpus,
        k=args.k,
        alpha=args.alpha,
        beta=args.beta,
        iterations=args.iterations,
        seed=args.seed,
    )
    write_assignments(out.file("topics.tsv"), model)
    write_phi(out.file("phi.csv"), model)
    write_theta(out.file("theta.csv"), model)
    labels = DEFAULT_TOPIC_LABELS if args.k == len(DEFAULT_TOPIC_LABELS) else None
    write_top_words(out.file("top_words.txt"), model, n=args.top_words, labels=labels)
    write_keyvalues(
        out.file("corpus_stats.txt"),
        {
            "documents": len(corpus.articles),
            "vocabulary": len(corpus.vocabulary),
            "tokens": corpus.total_tokens,
            "empty_documents": len(corpus.empty_articles),
        },
    )
    inputs = [args.documents] + ([args.stopwords] if args.stopwords else [])
    _finish(args, out, inputs)


def cmd_model(args) -> None:
    out = _OutputDir(args.out)
    rows = read_joined_table(args.joined)
    instances, dropped = build_instances(rows, args.task, args.threshold)
    has_topics = any(n.startswith("topic_") for n in instances.feature_names)
    if args.groups:
        groups = [g.strip() for g in args.groups.split(",")]
    else:
        groups = list(FEATURE_GROUPS) if has_topics else ["network", "content-edit"]

    config = GBDTConfig(
        n_trees=args.trees,
        max_depth=args.depth,
        learning_rate=args.rate,
        min_leaf=args.min_leaf,
        seed=args.seed,
    )
    reports = [
        cross_validate(instances, group, config, args.folds, task=args.task, threads=args.threads)
        for group in groups
    ]
    write_eval_report(out.file("eval.csv"), reports)
    for group in groups:
        # fold balance seeds are [seed, 0..folds-1]; stay clear of them
        subset = balance(select_group(instances, group), seed=[args.seed, args.folds])
        final = train_gbdt(subset.x, subset.y, config, subset.feature_names)
        save_model(out.file(f"model_{group}.json"), final)
    write_keyvalues(
        out.file("model_stats.txt"),
        {
            "instances": len(instances),
            "dropped_without_topic": dropped,
            "positives": int(instances.y.sum()),
            "negatives": int(len(instances) - instances.y.sum()),
        },
    )
    _finish(args, out, [args.joined])


def cmd_sample(args) -> None:
    out = _OutputDir(args.out)
    if args.n < 1:
        raise UsageError(f"sample size must be positive, got {args.n}")
    table = read_traffic_table(args.traffic)
    titles = sorted(table)
    if args.n > len(titles):
        raise DataError(f"cannot sample {args.n} articles from {len(titles)}")
    rng = np.random.default_rng(args.seed)
    chosen = rng.choice(len(titles), size=args.n, replace=False)
    subset = {titles[i]: table[titles[i]] for i in sorted(chosen.tolist())}
    write_traffic_table(out.file("traffic_sample.tsv"), subset)
    _finish(args, out, [args.traffic])


_REPORT_KINDS = (
    ("traffic.tsv", "traffic_table"),
    ("traffic_sample.tsv", "traffic_table"),
    ("metrics.tsv", "metrics_table"),
    ("thresholds.txt", "thresholds"),
    ("group_shares.tsv", "group_shares"),
    ("correlations.txt", "correlations"),
    ("histogram_*.tsv", "histogram"),
    ("heatmap_*.csv", "heatmap"),
    ("overlap_*.csv", "overlap_curve"),
    ("network.tsv", "network_table"),
    ("joined.tsv", "joined_table"),
    ("medians.tsv", "median_table"),
    ("topic_stats.tsv", "topic_statistics"),
    ("ratio_topic_*.csv", "ratio_heatmap"),
    ("bins_*.csv", "binned_quartiles"),
    ("topics.tsv", "topic_assignments"),
    ("phi.csv", "topic_word_matrix"),
    ("theta.csv", "document_topic_matrix"),
    ("top_words.txt", "top_words"),
    ("eval.csv", "eval_report"),
    ("model_*.json", "model"),
)


def _report_kind(name: str) -> str | None:
    for pattern, kind in _REPORT_KINDS:
        if fnmatch(name, pattern):
            return kind
    return None


def cmd_report(args) -> None:
    out = _OutputDir(args.out)
    found: dict[str, tuple[Path, str, str]] = {}  # name -> (source path, kind, source dir)
    for directory in args.inputs:
        d = Path(directory)
        if not d.is_dir():
            raise DataError(f"not a directory: {directory}")
        for entry in sorted(p.name for p in d.iterdir() if p.is_file()):
            kind = _report_kind(entry)
            if kind is None:
                continue
            src = d / entry
            if entry in found:
                if src.read_bytes() != found[entry][0].read_bytes():
                    raise DataError(
                        f"conflicting files named {entry!r} in {found[entry][2]} and {directory}"
                    )
                continue
            found[entry] = (src, kind, directory)
    if not found:
        raise DataError(
            "no pipeline outputs found under the given directories; "
            "run ingest/metrics/overlap/graph/features/bins/topics/model first"
        )

    out.path.mkdir(parents=True, exist_ok=True)
    index = []
    for name in sorted(found):
        src, kind, source_dir = found[name]
        shutil.copyfile(src, out.file(name))
        index.append({"file": name, "kind": kind, "source": str(source_dir)})
    with open(out.file("index.json"), "wt", encoding="utf-8") as fh:
        json.dump({"files": index}, fh, indent=1, sort_keys=True)
        fh.write("\n")
    _finish(args, out, [str(src) for src, _, _ in (found[n] for n in sorted(found))])


if __name__ == "__main__":
    sys.exit(main())
