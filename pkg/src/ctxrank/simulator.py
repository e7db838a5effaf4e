"""Synthetic contextual-click environment with known ground truth.

True click probability of the item at (0-based) position t of an exhibited
list is

    sigmoid(affinity) * gamma**t
        * (1 - beta * share of earlier items with the same category)
        * (1 + alpha * max(0, price[t-1] - price[t]))

clipped to [0.01, 0.99].  Prices live in [0, 1], so the price drop is
already normalized.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass, fields
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import kernels
from .data import ItemProfile, ListRecord, UserProfile

PROB_LO, PROB_HI = 0.01, 0.99
MAX_EXHAUSTIVE_M, MAX_EXHAUSTIVE_N = 10, 5


class SimConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class SimConfig:
    num_users: int = 2000
    num_items: int = 1000
    num_categories: int = 8
    num_user_types: int = 16
    user_noise: float = 0.3
    num_records: int = 20000
    m: int = 10
    n: int = 5
    latent_dim: int = 8
    gamma: float = 0.9
    beta: float = 0.5
    alpha: float = 0.2
    epsilon: float = 0.1
    affinity_scale: float = 1.5
    seed: int = 0

    def validate(self) -> "SimConfig":
        for name in ("num_users", "num_items", "num_categories", "num_user_types", "num_records",
                     "m", "n", "latent_dim"):
            if int(getattr(self, name)) < 1:
                raise SimConfigError(name, "must be >= 1")
        if self.n > self.m:
            raise SimConfigError("n", f"must be <= m ({self.n} > {self.m})")
        if self.m > self.num_items:
            raise SimConfigError("m", "cannot exceed num_items")
        if not 0.0 < self.gamma <= 1.0:
            raise SimConfigError("gamma", "must lie in (0, 1]")
        if self.user_noise < 0:
            raise SimConfigError("user_noise", "must be >= 0")
        if self.beta < 0:
            raise SimConfigError("beta", "must be >= 0")
        if self.alpha < 0:
            raise SimConfigError("alpha", "must be >= 0")
        if not 0.0 <= self.epsilon <= 1.0:
            raise SimConfigError("epsilon", "must lie in [0, 1]")
        return self

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            name = sorted(unknown)[0]
            raise SimConfigError(name, "unknown simulator field")
        return cls(**d).validate()


@dataclass
class SimGroundTruth:
    """Latent world plus the per-record quantities that fix true click probabilities."""

    gamma: float
    beta: float
    alpha: float
    base: np.ndarray  # (R, m) sigmoid(affinity) of each candidate
    category: np.ndarray  # (R, m)
    price: np.ndarray  # (R, m)
    true_probs: np.ndarray  # (R, n) for the logged final list
    user_latent: np.ndarray | None = None
    item_latent: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.base)

    def take(self, rows) -> "SimGroundTruth":
        rows = np.asarray(rows, dtype=int)
        return SimGroundTruth(self.gamma, self.beta, self.alpha, self.base[rows],
                              self.category[rows], self.price[rows], self.true_probs[rows],
                              self.user_latent, self.item_latent)

    def list_probs(self, orders: np.ndarray, rows=None) -> np.ndarray:
        """True probabilities (R, k) of ``orders`` (R, k) indexing each record's C."""
        rows = np.arange(len(self)) if rows is None else np.asarray(rows)
        return kernels.list_probs(self.base[rows], self.category[rows], self.price[rows],
                                  np.asarray(orders, dtype=np.int64), self.gamma, self.beta,
                                  self.alpha, PROB_LO, PROB_HI)

    def list_value(self, orders: np.ndarray, k: int | None = None, rows=None) -> np.ndarray:
        orders = np.asarray(orders)
        k = orders.shape[1] if k is None else k
        return self.list_probs(orders[:, :k], rows).sum(axis=1)

    # -------------------------------------------------------------- sidecar

    def write(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"gamma": self.gamma, "beta": self.beta, "alpha": self.alpha}) + "\n")
            for r in range(len(self)):
                fh.write(json.dumps({
                    "id": r,
                    "base": self.base[r].tolist(),
                    "category": self.category[r].tolist(),
                    "price": self.price[r].tolist(),
                    "true_probs": self.true_probs[r].tolist(),
                }, separators=(",", ":")) + "\n")

    @classmethod
    def read(cls, path: str | Path) -> "SimGroundTruth":
        with open(path, encoding="utf-8") as fh:
            head = json.loads(fh.readline())
            rows = [json.loads(line) for line in fh if line.strip()]
        return cls(head["gamma"], head["beta"], head["alpha"],
                   np.array([r["base"] for r in rows], dtype=float),
                   np.array([r["category"] for r in rows], dtype=np.int64),
                   np.array([r["price"] for r in rows], dtype=float),
                   np.array([r["true_probs"] for r in rows], dtype=float))


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def simulate_records(config: SimConfig) -> tuple[list[ListRecord], SimGroundTruth]:
    """Draw a world, then ``num_records`` logged impressions with Bernoulli clicks.

    Record r uses its own RNG stream spawned from the config seed, so records
    do not depend on each other's draws.
    """
    cfg = config.validate()
    root = np.random.SeedSequence(cfg.seed)
    world_seq, rec_seq = root.spawn(2)
    rng = np.random.default_rng(world_seq)
    D, K = cfg.latent_dim, cfg.num_categories

    centers = rng.normal(size=(K, D))
    item_cat = rng.integers(0, K, size=cfg.num_items)
    item_lat = centers[item_cat] + 0.5 * rng.normal(size=(cfg.num_items, D))
    quality = 0.5 * rng.normal(size=cfg.num_items)
    price = rng.uniform(0.0, 1.0, size=cfg.num_items)
    type_lat = rng.normal(size=(cfg.num_user_types, D))
    segment = rng.integers(0, cfg.num_user_types, size=cfg.num_users)
    user_lat = type_lat[segment] + cfg.user_noise * rng.normal(size=(cfg.num_users, D))
    activity = rng.normal(size=cfg.num_users)
    affinity = cfg.affinity_scale * (user_lat @ item_lat.T) / np.sqrt(D) + quality - 1.0

    R, m, n = cfg.num_records, cfg.m, cfg.n
    users = np.empty(R, dtype=np.int64)
    cand = np.empty((R, m), dtype=np.int64)
    final = np.empty((R, n), dtype=np.int64)
    uniforms = np.empty((R, n))
    for r, seq in enumerate(rec_seq.spawn(R)):
        rr = np.random.default_rng(seq)
        u = rr.integers(cfg.num_users)
        users[r] = u
        # candidate retrieval: Gumbel top-m sample, then sorted by affinity
        keys = affinity[u] + rr.gumbel(size=cfg.num_items)
        picked = np.argpartition(-keys, m - 1)[:m]
        cand[r] = picked[np.argsort(-affinity[u, picked], kind="stable")]
        shown = list(range(m))
        for t in range(n):
            if m > n and rr.random() < cfg.epsilon:
                j = int(rr.integers(n, m))
                shown[t], shown[j] = shown[j], shown[t]
        final[r] = shown[:n]
        uniforms[r] = rr.random(n)

    truth = SimGroundTruth(cfg.gamma, cfg.beta, cfg.alpha,
                           base=_sigmoid(affinity[users[:, None], cand]),
                           category=item_cat[cand], price=price[cand],
                           true_probs=np.zeros((R, n)), user_latent=user_lat,
                           item_latent=item_lat)
    truth.true_probs = truth.list_probs(final)
    labels = (uniforms < truth.true_probs).astype(int)

    # Ids are record keys only; as embedding features they mostly let the
    # evaluator memorize.  The upstream point-wise score is exposed the way a
    # production reranker would receive it.
    records = []
    for r in range(R):
        u = int(users[r])
        user = UserProfile((int(segment[u]),), (float(activity[u]),), user_id=u)
        items = tuple(ItemProfile((int(item_cat[i]),), (float(price[i]), float(affinity[u, i])),
                                  item_id=int(i)) for i in cand[r])
        records.append(ListRecord(user, items, tuple(int(x) for x in final[r]),
                                  tuple(int(y) for y in labels[r])))
    return records, truth


@lru_cache(maxsize=32)
def _arrangements(m: int, n: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(m), n)), dtype=np.int64).reshape(-1, n)


def true_optimal_order(truth: SimGroundTruth, row: int, n: int) -> tuple[np.ndarray, float]:
    """Exhaustive argmax of the summed true probability over all n-arrangements of C."""
    m = truth.base.shape[1]
    if m > MAX_EXHAUSTIVE_M or n > MAX_EXHAUSTIVE_N or n > m:
        raise ValueError(f"exhaustive search limited to m <= {MAX_EXHAUSTIVE_M}, "
                         f"n <= {MAX_EXHAUSTIVE_N} (got m={m}, n={n})")
    perms = _arrangements(m, n)
    values = kernels.perm_values(truth.base[row], truth.category[row], truth.price[row], perms,
                                 truth.gamma, truth.beta, truth.alpha, PROB_LO, PROB_HI)
    best = int(np.argmax(values))
    return perms[best].copy(), float(values[best])


def config_to_json(cfg: SimConfig) -> dict:
    return asdict(cfg)
