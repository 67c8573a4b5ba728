"""Accuracy and beyond-accuracy evaluation, plus the iterative coverage
experiment against each user's maximum hull.

Serendipity and diversity deliberately measure deviation from a primitive
predictor: with RS the recommended set and PM the primitive model's top-N,

    serendipity_u = |RS_u \\ PM_u| / |RS_u|
    diversity_u   = |(RS_u \\ PM_u) & USEFUL_u| / |RS_u|

macro-averaged over users. The alternative reading that divides the RS/PM
intersection by |PM_u| is available via ``mode="literal"``.

Hull "coverage" is an item-mass proxy: the fraction of the maximum hull's
defining item embeddings that the expected hull contains. Volume ratios are
not computable at embedding dimension; this proxy is exact at 0 and 1 and
monotone as the expected hull grows.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .embedding import EmbeddingTable
from .errors import DataError, NumericError
from .graph import HinGraph, item_node_key
from .hull import DEFAULT_BOUNDARY_EPS, HullVertices, project_onto_hull
from .ratings import RatingModel, predict
from .recommend import (
    ExpectedSetPolicy,
    RecommenderConfig,
    expected_set,
    recommend_top_n,
    score_candidates,
)

logger = logging.getLogger(__name__)

_RANDOM_POLICY_STREAM = 505

SERENDIPITY_DEVIATION = "deviation"
SERENDIPITY_LITERAL = "literal"

POLICY_UTILITY = "utility"
POLICY_RANDOM = "random"


@dataclass
class MetricsReport:
    rmse: float
    mae: float
    precision_at_n: float
    recall_at_n: float
    unexpectedness: float
    serendipity: float
    diversity: float
    coverage: float
    n: int

    FIELDS = (
        "rmse",
        "mae",
        "precision_at_n",
        "recall_at_n",
        "unexpectedness",
        "serendipity",
        "diversity",
        "coverage",
        "n",
    )

    def to_text(self) -> str:
        lines = [f"{name} = {getattr(self, name)!r}" for name in self.FIELDS]
        return "\n".join(lines) + "\n"

    def csv_row(self, algorithm: str, fold: int) -> list:
        return [algorithm, fold] + [getattr(self, name) for name in self.FIELDS]

    @staticmethod
    def csv_header() -> list[str]:
        return ["algorithm", "fold"] + list(MetricsReport.FIELDS)


def rmse_mae(predictions: list[float], actual: list[float]) -> tuple[float, float]:
    """Root-mean-square and mean-absolute error over aligned prediction/truth pairs."""
    if not actual or len(predictions) != len(actual):
        raise DataError("rmse_mae needs nonempty, aligned prediction and truth lists")
    err = np.asarray(predictions, dtype=np.float64) - np.asarray(actual, dtype=np.float64)
    return float(np.sqrt((err**2).mean())), float(np.abs(err).mean())


def precision_recall_at_n(
    rs: dict[str, list[str]],
    test_by_user: dict[str, dict[str, float]],
    n: int,
    relevance_threshold: float = 4.0,
) -> tuple[float, float]:
    """Macro-averaged precision and recall against test items rated at or above
    the relevance threshold. Users with empty lists are skipped for precision;
    users with no relevant test items are skipped for recall."""
    if n < 1:
        raise ValueError("n must be >= 1")
    precisions, recalls = [], []
    for user in sorted(rs):
        recommended = set(rs[user][:n])
        relevant = {
            it
            for it, rating in test_by_user.get(user, {}).items()
            if rating >= relevance_threshold
        }
        hits = len(recommended & relevant)
        if recommended:
            precisions.append(hits / len(recommended))
        if relevant:
            recalls.append(hits / len(relevant))
    precision = sum(precisions) / len(precisions) if precisions else 0.0
    recall = sum(recalls) / len(recalls) if recalls else 0.0
    return precision, recall


def serendipity_diversity(
    rs: dict[str, list[str]],
    pm: dict[str, list[str]],
    useful: dict[str, set[str]],
    mode: str = SERENDIPITY_DEVIATION,
) -> tuple[float, float]:
    """Macro-averaged serendipity and diversity; see the module docstring."""
    if mode not in (SERENDIPITY_DEVIATION, SERENDIPITY_LITERAL):
        raise ValueError(f"unknown serendipity mode {mode!r}")
    ser_values, div_values = [], []
    for user in sorted(rs):
        rs_u = set(rs[user])
        if not rs_u:
            continue
        pm_u = set(pm.get(user, []))
        useful_u = useful.get(user, set())
        if mode == SERENDIPITY_DEVIATION:
            novel = rs_u - pm_u
            ser_values.append(len(novel) / len(rs_u))
            div_values.append(len(novel & useful_u) / len(rs_u))
        else:
            if not pm_u:
                continue
            overlap = rs_u & pm_u
            ser_values.append(len(overlap) / len(pm_u))
            div_values.append(len(overlap & useful_u) / len(pm_u))
    serendipity = sum(ser_values) / len(ser_values) if ser_values else 0.0
    diversity = sum(div_values) / len(div_values) if div_values else 0.0
    return serendipity, diversity


def build_useful_sets(
    users_items: dict[str, list[str]],
    test_by_user: dict[str, dict[str, float]],
    model: RatingModel,
    threshold: float = 4.0,
) -> dict[str, set[str]]:
    """Per-user items meeting the usefulness bar: the true test rating when one
    exists, otherwise the model's prediction."""
    useful: dict[str, set[str]] = {}
    for user, items in users_items.items():
        ratings = test_by_user.get(user, {})
        kept = set()
        for it in items:
            value = ratings.get(it)
            if value is None:
                value = predict(model, user, it)
            if value >= threshold:
                kept.add(it)
        useful[user] = kept
    return useful


def catalog_coverage(rs: dict[str, list[str]], catalog: list[str]) -> float:
    """Fraction of distinct catalog items recommended to anyone."""
    catalog_set = set(catalog)
    if not catalog_set:
        raise DataError("catalog_coverage needs a nonempty catalog")
    recommended = set()
    for items in rs.values():
        recommended.update(items)
    return len(recommended & catalog_set) / len(catalog_set)


# -- maximum hull and the iterative experiment --------------------------------


@dataclass
class MaxHullExperiment:
    iterations: list[int]
    coverage_curve: list[float]
    coverage_std: list[float]
    utility_threshold: float
    policy: str = POLICY_UTILITY


def max_hull(
    user_key: str,
    item_keys: list[str],
    model: RatingModel,
    embeddings: EmbeddingTable,
    graph: HinGraph,
    base_hull: HullVertices,
    cfg: RecommenderConfig,
    utility_threshold: float,
) -> tuple[HullVertices, list[str]]:
    """Hull of every item whose utility (scored against the user's base hull)
    reaches the threshold, plus the qualifying item keys (the coverage probes)."""
    scored = score_candidates(user_key, item_keys, base_hull, model, embeddings, graph, cfg)
    qualified = [s.item_key for s in scored if s.utility >= utility_threshold]
    if not qualified:
        raise NumericError(
            f"no item reaches utility threshold {utility_threshold} for user {user_key!r}"
        )
    points = np.array(
        [embeddings.vector(graph.id_for_key(item_node_key(it))) for it in qualified]
    )
    return HullVertices(points), qualified


def hull_coverage(
    expected: HullVertices,
    probe_points: np.ndarray,
    eps: float = DEFAULT_BOUNDARY_EPS,
) -> float:
    """Fraction of probe points the expected hull contains."""
    probes = np.asarray(probe_points, dtype=np.float64)
    if probes.ndim != 2 or probes.shape[0] == 0:
        raise DataError("hull_coverage needs at least one probe point")
    inside = sum(
        1 for p in probes if project_onto_hull(expected, p).distance <= eps
    )
    return inside / probes.shape[0]


def iterative_experiment(
    user_keys: list[str],
    iterations: list[int],
    graph: HinGraph,
    embeddings: EmbeddingTable,
    model: RatingModel,
    train_map: dict[str, list[tuple[str, float | None]]],
    catalog: list[str],
    cfg: RecommenderConfig,
    utility_threshold: float = 0.5,
    policy: str = POLICY_UTILITY,
    expected_policy: ExpectedSetPolicy = ExpectedSetPolicy(),
    seed: int = 0,
    eps: float = DEFAULT_BOUNDARY_EPS,
) -> MaxHullExperiment:
    """Recommend repeatedly, folding each round's recommendations into the
    expected set, and record mean maximum-hull coverage at the checkpoints.

    Items recommended in one iteration become expected (and leave the candidate
    pool) in the next, so per-user coverage is nondecreasing by construction.
    Checkpoint 0, when requested, is the pre-experiment baseline.
    """
    if policy not in (POLICY_UTILITY, POLICY_RANDOM):
        raise ValueError(f"unknown recommendation policy {policy!r}")
    checkpoints = sorted(set(iterations))
    if not checkpoints or checkpoints[0] < 0:
        raise ValueError("iterations must be nonnegative")

    embedded_catalog = [
        it
        for it in sorted(set(catalog))
        if graph.id_for_key(item_node_key(it)) is not None
        and graph.id_for_key(item_node_key(it)) in embeddings
    ]

    class _UserState:
        __slots__ = ("key", "vertices", "seen", "probes", "probe_keys", "covered")

    states: list[_UserState] = []
    for user_key in sorted(set(user_keys)):
        train_items = train_map.get(user_key, [])
        try:
            base, _ = expected_set(
                user_key, graph, embeddings, train_items, expected_policy,
                cfg.max_hull_vertices,
            )
        except Exception:
            logger.warning("iterative_experiment: skipping user %s", user_key)
            continue
        try:
            _, probe_keys = max_hull(
                user_key, embedded_catalog, model, embeddings, graph, base, cfg,
                utility_threshold,
            )
        except NumericError:
            logger.warning("no qualifying items for user %s, skipping", user_key)
            continue
        st = _UserState()
        st.key = user_key
        st.vertices = [row for row in base.points]
        st.seen = {item_key for item_key, _ in train_items}
        st.probe_keys = probe_keys
        st.probes = np.array(
            [embeddings.vector(graph.id_for_key(item_node_key(it))) for it in probe_keys]
        )
        st.covered = set()
        states.append(st)
    if not states:
        raise DataError("iterative_experiment: no usable users")

    def _coverage(st: _UserState) -> float:
        hull_now = HullVertices(np.array(st.vertices))
        for idx in range(len(st.probe_keys)):
            if idx in st.covered:
                continue
            if project_onto_hull(hull_now, st.probes[idx]).distance <= eps:
                st.covered.add(idx)
        return len(st.covered) / len(st.probe_keys)

    curve, stds = [], []

    def _record():
        values = np.array([_coverage(st) for st in states])
        curve.append(float(values.mean()))
        stds.append(float(values.std()))

    if checkpoints[0] == 0:
        _record()
    max_iteration = checkpoints[-1]
    for iteration in range(1, max_iteration + 1):
        for u_idx, st in enumerate(states):
            candidates = [it for it in embedded_catalog if it not in st.seen]
            if not candidates:
                continue
            if policy == POLICY_UTILITY:
                user_hull = HullVertices(np.array(st.vertices))
                scored = score_candidates(
                    st.key, candidates, user_hull, model, embeddings, graph, cfg
                )
                picks = [s.item_key for s in recommend_top_n(st.key, scored, cfg, graph).items]
            else:
                rng = np.random.default_rng([_RANDOM_POLICY_STREAM, seed, u_idx, iteration])
                take = min(cfg.top_n, len(candidates))
                picks = [candidates[j] for j in rng.choice(len(candidates), take, replace=False)]
            for item_key in picks:
                st.seen.add(item_key)
                st.vertices.append(embeddings.vector(graph.id_for_key(item_node_key(item_key))))
        if iteration in checkpoints:
            _record()

    return MaxHullExperiment(
        iterations=checkpoints,
        coverage_curve=curve,
        coverage_std=stds,
        utility_threshold=utility_threshold,
        policy=policy,
    )


# -- serialization -------------------------------------------------------------


def write_report_text(report: MetricsReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(report.to_text())


def write_report_csv(rows: list[tuple[str, int, MetricsReport]], path) -> None:
    """One CSV row per (algorithm, fold)."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(MetricsReport.csv_header())
        for algorithm, fold, report in rows:
            writer.writerow(report.csv_row(algorithm, fold))


def write_coverage_csv(experiments: list[MaxHullExperiment], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["policy", "iteration", "mean_coverage", "std"])
        for exp in experiments:
            for iteration, mean, std in zip(exp.iterations, exp.coverage_curve, exp.coverage_std):
                writer.writerow([exp.policy, iteration, repr(mean), repr(std)])


def write_per_user_csv(
    path,
    rs: dict[str, list[str]],
    per_user_values: dict[str, dict[str, float]],
) -> None:
    """Paired per-user metric values for offline significance testing."""
    metric_names = sorted({name for vals in per_user_values.values() for name in vals})
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["user"] + metric_names)
        for user in sorted(rs):
            vals = per_user_values.get(user, {})
            writer.writerow([user] + [repr(vals.get(name, float("nan"))) for name in metric_names])
