"""Command-line pipeline. Stages communicate through text artifacts in the
output directory, so every stage can be rerun, inspected and diffed on its own:

    synth | ingest -> build-graph -> walk -> train -> recommend -> evaluate
                                                                -> iterate

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import __version__
from .config import PipelineConfig, load_config
from .embedding import TrainConfig, load_embeddings, save_embeddings, train
from .errors import ConfigError, DataError, HullrecError, NumericError
from .graph import HinGraph, build_graph
from .ingest import (
    DEFAULT_ENTITY_VOCABULARY,
    filter_sparse,
    load_tripadvisor,
    load_vocabulary_file,
    load_yelp,
    read_entity_links,
    read_interactions,
    synth_dataset,
    write_cluster_labels,
    write_entity_links,
    write_interactions,
)
from .metrics import (
    MetricsReport,
    POLICY_RANDOM,
    POLICY_UTILITY,
    build_useful_sets,
    catalog_coverage,
    iterative_experiment,
    precision_recall_at_n,
    rmse_mae,
    serendipity_diversity,
    write_coverage_csv,
    write_per_user_csv,
    write_report_csv,
    write_report_text,
)
from .ratings import (
    fit_bias_only,
    fit_biased_mf,
    five_fold_split,
    load_model,
    predict,
    rating_only_top_n,
    save_model,
)
from .recommend import (
    ExpectedSetPolicy,
    RecommenderConfig,
    read_recommendations,
    recommend_all,
    write_recommendations,
)
from .walks import TransitionMatrix, WalkConfig, WalkCorpus, generate_corpus

logger = logging.getLogger("hullrec")

# Artifact names within the output directory.
F_INTERACTIONS = "interactions.tsv"
F_LINKS = "entity_links.tsv"
F_LABELS = "cluster_labels.tsv"
F_TRAIN = "train.tsv"
F_TEST = "test.tsv"
F_NODES = "nodes.tsv"
F_EDGES = "edges.tsv"
F_CORPUS = "corpus.txt"
F_EMBEDDINGS = "embeddings.txt"
F_MODEL = "rating_model.txt"
F_RECOMMENDATIONS = "recommendations.tsv"
F_METRICS = "metrics.txt"
F_METRICS_CSV = "metrics.csv"
F_PER_USER = "per_user_metrics.csv"
F_COVERAGE = "coverage_curve.csv"


def _setup_logging() -> None:
    level_name = os.environ.get("HULLREC_LOG", "INFO").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.INFO
    logging.basicConfig(
        level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr
    )


def _out(args, name: str) -> str:
    return os.path.join(args.output_dir, name)


def _load_effective_config(args) -> PipelineConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("seed must be nonnegative", key="seed")
        cfg.seed = args.seed
    if args.alpha is not None:
        if not 0.0 <= args.alpha <= 1.0:
            raise ConfigError("alpha must lie in [0, 1]", key="alpha")
        cfg.alpha = args.alpha
    if args.top_n is not None:
        if args.top_n < 1:
            raise ConfigError("top-n must be >= 1", key="top_n")
        cfg.top_n = args.top_n
    return cfg


def _transition_matrix(cfg: PipelineConfig) -> TransitionMatrix:
    return TransitionMatrix(
        user_user=cfg.coeff_user_user,
        user_entity=cfg.coeff_user_entity,
        user_item=cfg.coeff_user_item,
        entity_item=cfg.coeff_entity_item,
        entity_entity=cfg.coeff_entity_entity,
        item_item=cfg.coeff_item_item,
    )


def _recommender_config(cfg: PipelineConfig) -> RecommenderConfig:
    return RecommenderConfig(
        alpha=cfg.alpha,
        top_n=cfg.top_n,
        normalize_components=cfg.normalize_components,
        useful_threshold=cfg.useful_threshold,
        boundary_eps=cfg.boundary_eps,
        depth_directions=cfg.depth_directions,
        max_hull_vertices=cfg.max_hull_vertices,
        candidate_cap=cfg.candidate_cap,
    )


def _train_map(records) -> dict[str, list[tuple[str, float | None]]]:
    out: dict[str, list[tuple[str, float | None]]] = {}
    for r in records:
        out.setdefault(r.user_key, []).append((r.item_key, r.timestamp))
    return out


def _fit_rating_model(cfg: PipelineConfig, train_records):
    if cfg.rating_model == "bias_only":
        return fit_bias_only(
            train_records, cfg.rating_min, cfg.rating_max, damping=cfg.rating_damping
        )
    return fit_biased_mf(
        train_records,
        cfg.rating_min,
        cfg.rating_max,
        k=cfg.rating_factors,
        epochs=cfg.rating_epochs,
        lr=cfg.rating_learning_rate,
        reg=cfg.rating_regularization,
        seed=cfg.seed,
    )


# -- stages --------------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = _load_effective_config(args)
    data = synth_dataset(
        clusters=cfg.synth_clusters,
        users_per_cluster=cfg.synth_users_per_cluster,
        items_per_cluster=cfg.synth_items_per_cluster,
        cross_rate=cfg.synth_cross_rate,
        noise=cfg.synth_noise,
        seed=cfg.seed,
        interactions_per_user=cfg.synth_interactions_per_user,
    )
    write_interactions(_out(args, F_INTERACTIONS), data.records)
    write_entity_links(_out(args, F_LINKS), data.entity_links)
    write_cluster_labels(_out(args, F_LABELS), data)
    logger.info(
        "synth: %d interactions, %d links", len(data.records), len(data.entity_links)
    )
    return 0


def cmd_ingest(args) -> int:
    cfg = _load_effective_config(args)
    if cfg.dataset == "yelp":
        for key in ("yelp_reviews", "yelp_businesses", "yelp_users"):
            if not getattr(cfg, key):
                raise ConfigError("required for dataset = yelp", key=key)
        result = load_yelp(cfg.yelp_reviews, cfg.yelp_businesses, cfg.yelp_users)
    elif cfg.dataset == "tripadvisor":
        if not cfg.tripadvisor_reviews:
            raise ConfigError("required for dataset = tripadvisor", key="tripadvisor_reviews")
        vocab = (
            load_vocabulary_file(cfg.entity_vocabulary)
            if cfg.entity_vocabulary
            else DEFAULT_ENTITY_VOCABULARY
        )
        result = load_tripadvisor(cfg.tripadvisor_reviews, vocabulary=vocab)
    else:
        raise ConfigError("use the synth subcommand for dataset = synth", key="dataset")
    records = filter_sparse(result.records, cfg.min_count, single_pass=cfg.single_pass_filter)
    kept_users = {r.user_key for r in records}
    kept_items = {r.item_key for r in records}
    links = [
        link
        for link in result.entity_links
        if (link.source_key in kept_users if link.source_kind == "user" else link.source_key in kept_items)
    ]
    write_interactions(_out(args, F_INTERACTIONS), records)
    write_entity_links(_out(args, F_LINKS), links)
    logger.info(
        "ingest: %d records kept (%d malformed lines), %d links",
        len(records), result.malformed, len(links),
    )
    return 0


def cmd_build_graph(args) -> int:
    cfg = _load_effective_config(args)
    records = read_interactions(_out(args, F_INTERACTIONS))
    if not records:
        raise DataError("no interactions to build a graph from")
    links = read_entity_links(_out(args, F_LINKS))
    splits = five_fold_split(records, n_folds=cfg.split_folds, seed=cfg.seed)
    split = splits[cfg.split_fold]
    write_interactions(_out(args, F_TRAIN), split.train)
    write_interactions(_out(args, F_TEST), split.test)
    graph = build_graph(split.train, links)
    graph.save(_out(args, F_NODES), _out(args, F_EDGES))
    logger.info(
        "build-graph: fold %d, %d train / %d test, %d nodes, %d edges",
        cfg.split_fold, len(split.train), len(split.test),
        graph.node_count, graph.edge_count,
    )
    return 0


def cmd_walk(args) -> int:
    cfg = _load_effective_config(args)
    graph = HinGraph.load(_out(args, F_NODES), _out(args, F_EDGES))
    walk_cfg = WalkConfig(
        walks_per_node=cfg.walks_per_node, walk_length=cfg.walk_length, seed=cfg.seed
    )
    corpus = generate_corpus(graph, walk_cfg, _transition_matrix(cfg))
    corpus.save(_out(args, F_CORPUS))
    logger.info("walk: %d walks written", len(corpus.walks))
    return 0


def cmd_train(args) -> int:
    cfg = _load_effective_config(args)
    corpus = WalkCorpus.load(_out(args, F_CORPUS))
    train_cfg = TrainConfig(
        dim=cfg.embedding_dim,
        window=cfg.embedding_window,
        min_count=cfg.embedding_min_count,
        epochs=cfg.embedding_epochs,
        negatives=cfg.embedding_negatives,
        learning_rate=cfg.embedding_learning_rate,
        seed=cfg.seed,
    )
    table = train(corpus, train_cfg)
    save_embeddings(table, _out(args, F_EMBEDDINGS))
    logger.info(
        "train: %d vectors of dim %d, final epoch loss %.4f",
        len(table), table.dim, table.epoch_losses[-1],
    )
    return 0


def cmd_recommend(args) -> int:
    cfg = _load_effective_config(args)
    graph = HinGraph.load(_out(args, F_NODES), _out(args, F_EDGES))
    embeddings = load_embeddings(_out(args, F_EMBEDDINGS))
    train_records = read_interactions(_out(args, F_TRAIN))
    model = _fit_rating_model(cfg, train_records)
    save_model(model, _out(args, F_MODEL))
    train_map = _train_map(train_records)
    catalog = sorted({r.item_key for r in train_records})
    policy = ExpectedSetPolicy(
        kind=cfg.expected_set, include_user_vertex=cfg.include_user_vertex
    )
    recommendations = recommend_all(
        sorted(train_map),
        graph,
        embeddings,
        model,
        train_map,
        catalog,
        policy=policy,
        cfg=_recommender_config(cfg),
    )
    write_recommendations(_out(args, F_RECOMMENDATIONS), recommendations)
    logger.info("recommend: lists for %d users (alpha=%.2f)", len(recommendations), cfg.alpha)
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_effective_config(args)
    test_records = read_interactions(_out(args, F_TEST))
    if not test_records:
        raise DataError("empty test split; nothing to evaluate")
    train_records = read_interactions(_out(args, F_TRAIN))
    model = load_model(_out(args, F_MODEL))
    rec_rows = read_recommendations(_out(args, F_RECOMMENDATIONS))

    predictions = [predict(model, r.user_key, r.item_key) for r in test_records]
    actuals = [r.rating for r in test_records]
    rmse, mae = rmse_mae(predictions, actuals)

    rs = {user: [item for item, _, _, _ in rows] for user, rows in rec_rows.items()}
    test_by_user: dict[str, dict[str, float]] = {}
    for r in test_records:
        test_by_user.setdefault(r.user_key, {})[r.item_key] = r.rating
    precision, recall = precision_recall_at_n(
        rs, test_by_user, cfg.top_n, cfg.relevance_threshold
    )

    # Primitive-model lists over the same unseen candidate pool.
    embeddings = load_embeddings(_out(args, F_EMBEDDINGS))
    graph = HinGraph.load(_out(args, F_NODES), _out(args, F_EDGES))
    pm_model = fit_bias_only(
        train_records, cfg.rating_min, cfg.rating_max, damping=cfg.rating_damping
    )
    train_map = _train_map(train_records)
    from .graph import item_node_key

    catalog = sorted({r.item_key for r in train_records})
    embedded_catalog = [
        it
        for it in catalog
        if graph.id_for_key(item_node_key(it)) is not None
        and graph.id_for_key(item_node_key(it)) in embeddings
    ]
    pm = {}
    for user in sorted(rs):
        seen = {item for item, _ in train_map.get(user, [])}
        candidates = [it for it in embedded_catalog if it not in seen]
        pm[user] = rating_only_top_n(pm_model, user, candidates, cfg.top_n)

    users_items = {u: sorted(set(rs[u]) | set(pm.get(u, []))) for u in rs}
    useful = build_useful_sets(users_items, test_by_user, model, cfg.useful_threshold)
    serendipity, diversity = serendipity_diversity(rs, pm, useful, cfg.serendipity_mode)
    coverage = catalog_coverage(rs, catalog)

    unexp_means = []
    per_user: dict[str, dict[str, float]] = {}
    for user, rows in sorted(rec_rows.items()):
        raw = [u for _, _, _, u in rows]
        mean_unexp = sum(raw) / len(raw) if raw else 0.0
        unexp_means.append(mean_unexp)
        per_user[user] = {"mean_unexpectedness": mean_unexp}
    unexpectedness = sum(unexp_means) / len(unexp_means) if unexp_means else 0.0

    report = MetricsReport(
        rmse=rmse,
        mae=mae,
        precision_at_n=precision,
        recall_at_n=recall,
        unexpectedness=unexpectedness,
        serendipity=serendipity,
        diversity=diversity,
        coverage=coverage,
        n=cfg.top_n,
    )
    write_report_text(report, _out(args, F_METRICS))
    algorithm = f"lch[{cfg.rating_model},alpha={cfg.alpha}]"
    write_report_csv([(algorithm, cfg.split_fold, report)], _out(args, F_METRICS_CSV))
    write_per_user_csv(_out(args, F_PER_USER), rs, per_user)

    width = max(len(name) for name in MetricsReport.FIELDS)
    for name in MetricsReport.FIELDS:
        print(f"{name:<{width}}  {getattr(report, name)}")
    return 0


def cmd_iterate(args) -> int:
    cfg = _load_effective_config(args)
    graph = HinGraph.load(_out(args, F_NODES), _out(args, F_EDGES))
    embeddings = load_embeddings(_out(args, F_EMBEDDINGS))
    train_records = read_interactions(_out(args, F_TRAIN))
    model = load_model(_out(args, F_MODEL))
    train_map = _train_map(train_records)
    catalog = sorted({r.item_key for r in train_records})
    rec_cfg = _recommender_config(cfg)
    policy = ExpectedSetPolicy(
        kind=cfg.expected_set, include_user_vertex=cfg.include_user_vertex
    )
    experiments = []
    for rec_policy in (POLICY_UTILITY, POLICY_RANDOM):
        experiments.append(
            iterative_experiment(
                sorted(train_map),
                cfg.iterations,
                graph,
                embeddings,
                model,
                train_map,
                catalog,
                rec_cfg,
                utility_threshold=cfg.utility_threshold,
                policy=rec_policy,
                expected_policy=policy,
                seed=cfg.seed,
                eps=cfg.boundary_eps,
            )
        )
        logger.info(
            "iterate[%s]: coverage %s",
            rec_policy,
            " ".join(f"{c:.3f}" for c in experiments[-1].coverage_curve),
        )
    write_coverage_csv(experiments, _out(args, F_COVERAGE))
    return 0


# -- entry point -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", default=None, help="config file")
    common.add_argument("--seed", type=int, default=None, help="override run seed")
    common.add_argument("--alpha", type=float, default=None, help="override utility blend weight")
    common.add_argument("--top-n", type=int, default=None, dest="top_n", help="override list length")
    common.add_argument(
        "--output-dir", metavar="DIR", default="out", help="artifact directory (default: out)"
    )

    parser = argparse.ArgumentParser(
        prog="hullrec", description="Convex-hull unexpectedness recommendation pipeline"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subs = parser.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")
    for name, handler, doc in (
        ("synth", cmd_synth, "generate the synthetic planted-cluster dataset"),
        ("ingest", cmd_ingest, "load and filter a real dataset"),
        ("build-graph", cmd_build_graph, "split train/test and build the network"),
        ("walk", cmd_walk, "generate the random-walk corpus"),
        ("train", cmd_train, "train node embeddings on the corpus"),
        ("recommend", cmd_recommend, "fit the rating model and emit top-N lists"),
        ("evaluate", cmd_evaluate, "compute accuracy and unexpectedness metrics"),
        ("iterate", cmd_iterate, "run the iterative maximum-hull coverage experiment"),
    ):
        sub = subs.add_parser(name, parents=[common], help=doc)
        sub.set_defaults(handler=handler)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        os.makedirs(args.output_dir, exist_ok=True)
        return args.handler(args)
    except ConfigError as exc:
        logger.error("configuration error: %s", exc)
        return 2
    except DataError as exc:
        logger.error("data error: %s", exc)
        return 3
    except (NumericError, FloatingPointError) as exc:
        logger.error("numeric failure: %s", exc)
        return 4
    except HullrecError as exc:
        logger.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
