"""Loss, AUC, GAUC, NDCG@k, list reward LR@k and the simulator's list value."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .simulator import SimGroundTruth


class UndefinedMetricError(ValueError):
    """The metric is undefined for the given labels."""


def auc(scores, labels) -> float:
    """P(random positive scores above random negative); ties count one half."""
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ValueError(f"{scores.shape} scores for {labels.shape} labels")
    n_pos = int((labels == 1).sum())
    if n_pos == 0 or n_pos == len(labels):
        raise UndefinedMetricError("AUC needs at least one positive and one negative label")
    return float(kernels.auc(scores, labels.astype(np.int64)))


def gauc(groups: Iterable[tuple[Sequence[float], Sequence[int]]],
         weights: Sequence[float] | None = None, weighted: bool = True) -> float:
    """Weighted mean of per-group AUC over groups holding both classes.

    Weights default to the group's impression count; ``weighted=False``
    gives the plain mean.
    """
    num = den = 0.0
    for g, (s, y) in enumerate(groups):
        y = np.asarray(y)
        if y.size == 0 or y.min() == y.max():
            continue
        w = 1.0 if not weighted else (len(y) if weights is None else float(weights[g]))
        num += w * auc(s, y)
        den += w
    if den == 0.0:
        raise UndefinedMetricError("no group has both positive and negative labels")
    return num / den


def group_by_user(user_keys: Sequence, scores: np.ndarray, labels: np.ndarray):
    """Pool (scores, labels) per user for :func:`gauc`."""
    pooled: dict = {}
    for key, s, y in zip(user_keys, scores, labels):
        ps, py = pooled.setdefault(key, ([], []))
        ps.extend(np.ravel(s))
        py.extend(np.ravel(y))
    return list(pooled.values())


def dcg(gains: np.ndarray) -> float:
    gains = np.asarray(gains, dtype=float)
    return float((gains / np.log2(np.arange(2, len(gains) + 2))).sum())


def ndcg_at_k(order: Sequence[int], relevance: Sequence[float], k: int) -> float:
    """NDCG@k of ``order`` (indices into the candidate list) against per-candidate gains."""
    if k < 1:
        raise ValueError("k must be >= 1")
    rel = np.asarray(relevance, dtype=float)
    ideal = dcg(np.sort(rel)[::-1][:k])
    if ideal == 0.0:
        return 0.0
    return dcg(rel[np.asarray(order)[:k]]) / ideal


def candidate_relevance(final: np.ndarray, labels: np.ndarray, m: int) -> np.ndarray:
    """Recorded labels scattered onto the candidate list; unexhibited items get 0."""
    rel = np.zeros((len(final), m))
    np.put_along_axis(rel, np.asarray(final), np.asarray(labels, dtype=float), axis=1)
    return rel


def mean_ndcg_at_k(orders: np.ndarray, relevance: np.ndarray, k: int) -> float:
    return float(np.mean([ndcg_at_k(o, r, k) for o, r in zip(orders, relevance)]))


def lr_at_k(evaluator, batch, orders: np.ndarray, k: int) -> np.ndarray:
    """Evaluator's summed click probability over each truncated top-k list."""
    orders = np.asarray(orders)
    if k > orders.shape[1]:
        raise ValueError(f"k={k} exceeds list length {orders.shape[1]}")
    return evaluator.score_lists(batch, orders[:, :k]).sum(axis=1)


def ground_truth_list_value(truth: SimGroundTruth, rows, orders: np.ndarray, k: int) -> np.ndarray:
    """Summed true click probability of each top-k list under the simulator."""
    orders = np.asarray(orders)
    if k > orders.shape[1]:
        raise ValueError(f"k={k} exceeds list length {orders.shape[1]}")
    return truth.list_value(orders[:, :k], rows=rows)


@dataclass
class EvalReport:
    name: str
    k: int = 5
    loss: float | None = None
    auc: float | None = None
    gauc: float | None = None
    ndcg_at_k: float | None = None
    lr_at_k: float | None = None
    true_value_at_k: float | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self))


REPORT_COLUMNS = ("loss", "auc", "gauc", "ndcg_at_k", "lr_at_k", "true_value_at_k")


def format_table(reports: Sequence[EvalReport]) -> str:
    cols = [c for c in REPORT_COLUMNS if any(getattr(r, c) is not None for r in reports)]
    k = reports[0].k if reports else 5
    heads = ["model"] + [c.replace("_at_k", f"@{k}") for c in cols]
    width = max([len(r.name) for r in reports] + [5])
    lines = [f"{heads[0]:<{width}}  " + "  ".join(f"{h:>10}" for h in heads[1:])]
    for r in reports:
        cells = ["-" if getattr(r, c) is None else f"{getattr(r, c):.4f}" for c in cols]
        lines.append(f"{r.name:<{width}}  " + "  ".join(f"{c:>10}" for c in cells))
    return "\n".join(lines)
