"""Rating prediction: a biased matrix-factorization model for the utility's
rating term, and a closed-form bias-only model doubling as the primitive
predictor whose top-N defines the "obvious" recommendations.

Both models share the same total ``predict`` surface: unknown users or items
fall back to whatever bias terms exist, then to the global mean, and every
estimate is clamped to the declared rating range.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .records import InteractionRecord

logger = logging.getLogger(__name__)

KIND_BIASED_MF = "biased_mf"
KIND_BIAS_ONLY = "bias_only"

_SPLIT_STREAM = 303
_MF_STREAM = 404


@dataclass
class RatingModel:
    kind: str
    rating_min: float
    rating_max: float
    global_mean: float
    user_bias: dict[str, float]
    item_bias: dict[str, float]
    user_factors: dict[str, np.ndarray] | None = None
    item_factors: dict[str, np.ndarray] | None = None
    k: int = 0
    train_rmse_history: list[float] = field(default_factory=list)


def predict(model: RatingModel, user_key: str, item_key: str) -> float:
    """Clamped rating estimate; total over any (user, item) pair."""
    est = model.global_mean
    bu = model.user_bias.get(user_key)
    bi = model.item_bias.get(item_key)
    if bu is not None:
        est += bu
    if bi is not None:
        est += bi
    if model.user_factors is not None and model.item_factors is not None:
        p = model.user_factors.get(user_key)
        q = model.item_factors.get(item_key)
        if p is not None and q is not None:
            est += float(p @ q)
    return min(max(est, model.rating_min), model.rating_max)


def fit_bias_only(
    train: list[InteractionRecord],
    rating_min: float = 1.0,
    rating_max: float = 5.0,
    damping: float = 10.0,
) -> RatingModel:
    """Closed-form global mean plus damped item and user bias means."""
    if not train:
        raise DataError("cannot fit a rating model on an empty training set")
    mu = sum(r.rating for r in train) / len(train)

    item_sum: dict[str, float] = {}
    item_n: dict[str, int] = {}
    for r in train:
        item_sum[r.item_key] = item_sum.get(r.item_key, 0.0) + (r.rating - mu)
        item_n[r.item_key] = item_n.get(r.item_key, 0) + 1
    item_bias = {k: s / (damping + item_n[k]) for k, s in item_sum.items()}

    user_sum: dict[str, float] = {}
    user_n: dict[str, int] = {}
    for r in train:
        resid = r.rating - mu - item_bias[r.item_key]
        user_sum[r.user_key] = user_sum.get(r.user_key, 0.0) + resid
        user_n[r.user_key] = user_n.get(r.user_key, 0) + 1
    user_bias = {k: s / (damping + user_n[k]) for k, s in user_sum.items()}

    return RatingModel(
        kind=KIND_BIAS_ONLY,
        rating_min=rating_min,
        rating_max=rating_max,
        global_mean=mu,
        user_bias=user_bias,
        item_bias=item_bias,
    )


def fit_biased_mf(
    train: list[InteractionRecord],
    rating_min: float = 1.0,
    rating_max: float = 5.0,
    k: int = 32,
    epochs: int = 50,
    lr: float = 0.005,
    reg: float = 0.02,
    seed: int = 0,
) -> RatingModel:
    """SGD on squared error of mu + b_u + b_i + p_u.q_i with L2 regularization."""
    if not train:
        raise DataError("cannot fit a rating model on an empty training set")
    if k < 1:
        raise ValueError("k must be >= 1")
    users = sorted({r.user_key for r in train})
    items = sorted({r.item_key for r in train})
    uix = {u: i for i, u in enumerate(users)}
    iix = {it: i for i, it in enumerate(items)}
    ratings = np.array([r.rating for r in train])
    u_idx = np.array([uix[r.user_key] for r in train])
    i_idx = np.array([iix[r.item_key] for r in train])
    mu = float(ratings.mean())

    rng = np.random.default_rng([_MF_STREAM, seed])
    P = rng.normal(0.0, 0.1, size=(len(users), k))
    Q = rng.normal(0.0, 0.1, size=(len(items), k))
    bu = np.zeros(len(users))
    bi = np.zeros(len(items))

    def train_rmse() -> float:
        raw = mu + bu[u_idx] + bi[i_idx] + (P[u_idx] * Q[i_idx]).sum(axis=1)
        clamped = np.clip(raw, rating_min, rating_max)
        return float(np.sqrt(((clamped - ratings) ** 2).mean()))

    history = [train_rmse()]
    for _ in range(epochs):
        for ridx in rng.permutation(len(train)):
            ui, ii = u_idx[ridx], i_idx[ridx]
            p, q = P[ui], Q[ii]
            err = ratings[ridx] - (mu + bu[ui] + bi[ii] + p @ q)
            bu[ui] += lr * (err - reg * bu[ui])
            bi[ii] += lr * (err - reg * bi[ii])
            p_old = p.copy()
            P[ui] += lr * (err * q - reg * p)
            Q[ii] += lr * (err * p_old - reg * q)
        history.append(train_rmse())
    logger.info("biased MF: train rmse %.4f -> %.4f", history[0], history[-1])

    return RatingModel(
        kind=KIND_BIASED_MF,
        rating_min=rating_min,
        rating_max=rating_max,
        global_mean=mu,
        user_bias={u: float(bu[uix[u]]) for u in users},
        item_bias={it: float(bi[iix[it]]) for it in items},
        user_factors={u: P[uix[u]].copy() for u in users},
        item_factors={it: Q[iix[it]].copy() for it in items},
        k=k,
        train_rmse_history=history,
    )


def rating_only_top_n(
    model: RatingModel, user_key: str, candidates: list[str], n: int
) -> list[str]:
    """Top-n candidate item keys by predicted rating, ties broken by key."""
    ranked = sorted(candidates, key=lambda it: (-predict(model, user_key, it), it))
    return ranked[:n]


# -- train/test splitting ----------------------------------------------------


@dataclass
class TrainTestSplit:
    train: list[InteractionRecord]
    test: list[InteractionRecord]
    fold_id: int


def five_fold_split(
    records: list[InteractionRecord], n_folds: int = 5, seed: int = 0
) -> list[TrainTestSplit]:
    """Per-user stratified folds with a repair pass so that every test user and
    item also appears in that fold's train set.

    Users or items with a single record cannot satisfy that guarantee; their
    records stay in train for every fold (and are logged). After the usual
    sparsity filter no such records exist, so each remaining record lands in
    exactly one test fold.
    """
    if n_folds < 2:
        raise ValueError("n_folds must be >= 2")
    rng = np.random.default_rng([_SPLIT_STREAM, seed])

    by_user: dict[str, list[int]] = {}
    for idx, rec in enumerate(records):
        by_user.setdefault(rec.user_key, []).append(idx)

    user_count = {u: len(v) for u, v in by_user.items()}
    item_count: dict[str, int] = {}
    for rec in records:
        item_count[rec.item_key] = item_count.get(rec.item_key, 0) + 1

    # fold_of[i] is the test fold of record i, or None for train-everywhere.
    fold_of: list[int | None] = [None] * len(records)
    for user in sorted(by_user):
        idxs = by_user[user]
        if len(idxs) < 2:
            continue
        order = rng.permutation(len(idxs))
        start = int(rng.integers(n_folds))
        for pos, j in enumerate(order):
            fold_of[idxs[int(j)]] = (start + pos) % n_folds

    singletons = sum(1 for u, c in user_count.items() if c < 2)
    if singletons:
        logger.warning(
            "%d single-record users kept in train for all folds", singletons
        )

    # Repair: a fold's test set must never hold ALL of an item's (or user's)
    # records, otherwise that fold's train set cannot cover it.
    item_test: dict[str, list[int]] = {it: [0] * n_folds for it in item_count}
    user_test: dict[str, list[int]] = {u: [0] * n_folds for u in user_count}
    for idx, rec in enumerate(records):
        f = fold_of[idx]
        if f is not None:
            item_test[rec.item_key][f] += 1
            user_test[rec.user_key][f] += 1

    def _drop_to_train(idx, rec):
        f = fold_of[idx]
        item_test[rec.item_key][f] -= 1
        user_test[rec.user_key][f] -= 1
        fold_of[idx] = None

    def _violates(rec, f):
        return (
            item_count[rec.item_key] - item_test[rec.item_key][f] == 0
            or user_count[rec.user_key] - user_test[rec.user_key][f] == 0
        )

    for _ in range(20):
        moved = False
        for idx, rec in enumerate(records):
            f = fold_of[idx]
            if f is None:
                continue
            if item_count[rec.item_key] < 2:
                _drop_to_train(idx, rec)
                continue
            if not _violates(rec, f):
                continue
            it, u = rec.item_key, rec.user_key
            options = [
                g
                for g in range(n_folds)
                if g != f
                and item_test[it][g] + 1 < item_count[it]
                and user_test[u][g] + 1 < user_count[u]
            ]
            if not options:
                _drop_to_train(idx, rec)
                continue
            target = min(options, key=lambda g: (item_test[it][g] + user_test[u][g], g))
            item_test[it][f] -= 1
            user_test[u][f] -= 1
            item_test[it][target] += 1
            user_test[u][target] += 1
            fold_of[idx] = target
            moved = True
        if not moved:
            break
    dropped = 0
    for idx, rec in enumerate(records):
        f = fold_of[idx]
        if f is not None and _violates(rec, f):
            _drop_to_train(idx, rec)
            dropped += 1
    if dropped:
        logger.warning("split repair kept %d unplaceable records in train", dropped)

    splits = []
    for f in range(n_folds):
        train = [rec for idx, rec in enumerate(records) if fold_of[idx] != f]
        test = [rec for idx, rec in enumerate(records) if fold_of[idx] == f]
        splits.append(TrainTestSplit(train=train, test=test, fold_id=f))
    return splits


# -- persistence ---------------------------------------------------------------


def save_model(model: RatingModel, path) -> None:
    """Text format mirroring the embedding file: header lines + parameter blocks."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"rating-model {model.kind}\n")
        f.write(f"range {model.rating_min!r} {model.rating_max!r}\n")
        f.write(f"mean {model.global_mean!r}\n")
        f.write(f"factors {model.k}\n")
        users = sorted(model.user_bias)
        f.write(f"users {len(users)}\n")
        for u in users:
            line = f"{u}\t{model.user_bias[u]!r}"
            if model.user_factors is not None:
                line += "\t" + " ".join(repr(float(x)) for x in model.user_factors[u])
            f.write(line + "\n")
        items = sorted(model.item_bias)
        f.write(f"items {len(items)}\n")
        for it in items:
            line = f"{it}\t{model.item_bias[it]!r}"
            if model.item_factors is not None:
                line += "\t" + " ".join(repr(float(x)) for x in model.item_factors[it])
            f.write(line + "\n")


def _parse_param_block(f, path, expected, k, lineno0):
    biases: dict[str, float] = {}
    factors: dict[str, np.ndarray] = {}
    for offset in range(expected):
        lineno = lineno0 + offset
        line = f.readline()
        if not line:
            raise DataError(f"{path}:{lineno}: unexpected end of parameter block")
        parts = line.rstrip("\n").split("\t")
        if len(parts) not in (2, 3):
            raise DataError(f"{path}:{lineno}: expected 2 or 3 columns, got {len(parts)}")
        try:
            biases[parts[0]] = float(parts[1])
            if len(parts) == 3:
                vec = np.array([float(x) for x in parts[2].split()])
                if vec.shape != (k,):
                    raise ValueError(f"expected {k} factors, got {vec.shape[0]}")
                factors[parts[0]] = vec
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
    return biases, factors or None


def load_model(path) -> RatingModel:
    with open(path, encoding="utf-8") as f:
        head = f.readline().split()
        if len(head) != 2 or head[0] != "rating-model":
            raise DataError(f"{path}:1: not a rating model file")
        kind = head[1]
        if kind not in (KIND_BIASED_MF, KIND_BIAS_ONLY):
            raise DataError(f"{path}:1: unknown model kind {kind!r}")
        try:
            _, lo, hi = f.readline().split()
            _, mean = f.readline().split()
            _, k_s = f.readline().split()
            tag, n_users_s = f.readline().split()
            if tag != "users":
                raise ValueError("expected 'users' block")
            k = int(k_s)
            user_bias, user_factors = _parse_param_block(f, path, int(n_users_s), k, 6)
            tag, n_items_s = f.readline().split()
            if tag != "items":
                raise ValueError("expected 'items' block")
            item_bias, item_factors = _parse_param_block(
                f, path, int(n_items_s), k, 7 + int(n_users_s)
            )
        except ValueError as exc:
            raise DataError(f"{path}: malformed model file: {exc}") from exc
    return RatingModel(
        kind=kind,
        rating_min=float(lo),
        rating_max=float(hi),
        global_mean=float(mean),
        user_bias=user_bias,
        item_bias=item_bias,
        user_factors=user_factors,
        item_factors=item_factors,
        k=k,
    )
