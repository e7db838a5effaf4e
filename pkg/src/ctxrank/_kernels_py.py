"""Pure-numpy implementations of the hot kernels (fallback for ``_kernels``)."""
from __future__ import annotations

import numpy as np


def list_probs(base, category, price, orders, gamma, beta, alpha, lo, hi):
    """True click probability at every position of each order.

    ``base``/``category``/``price`` are (R, m); ``orders`` is (R, k).
    """
    rows = np.arange(len(orders))[:, None]
    b = base[rows, orders]
    c = category[rows, orders]
    p = price[rows, orders]
    k = orders.shape[1]
    decay = gamma ** np.arange(k)
    same = (c[:, :, None] == c[:, None, :]).astype(float)
    earlier = np.tril(np.ones((k, k)), -1)
    counts = np.maximum(np.arange(k), 1)
    fatigue = (same * earlier).sum(axis=2) / counts
    drop = np.zeros_like(p)
    drop[:, 1:] = np.maximum(p[:, :-1] - p[:, 1:], 0.0)
    return np.clip(b * decay * (1.0 - beta * fatigue) * (1.0 + alpha * drop), lo, hi)


def perm_values(base, category, price, perms, gamma, beta, alpha, lo, hi):
    """Summed true probability of each candidate order ``perms`` (P, k) for one record."""
    P = len(perms)
    tile = lambda a: np.broadcast_to(a, (P, len(a)))  # noqa: E731
    return list_probs(tile(base), tile(category), tile(price), perms,
                      gamma, beta, alpha, lo, hi).sum(axis=1)


def auc(scores, labels):
    """Tie-aware ROC AUC via average ranks."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    order = np.argsort(scores, kind="mergesort")
    s = scores[order]
    ranks = np.empty(len(s))
    _, start, counts = np.unique(s, return_index=True, return_counts=True)
    avg = start + (counts + 1) / 2.0
    ranks[order] = np.repeat(avg, counts)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    return (ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
