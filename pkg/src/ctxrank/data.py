"""Users, items, list records, the JSONL dataset format and feature encoding."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import autograd as ag
from .autograd import ParamStore, Tensor

DENSE_STD_FLOOR = 1e-6
OOV = 0


class RecordError(ValueError):
    """A record violates the list-record invariants or cannot be parsed."""


@dataclass(frozen=True)
class UserProfile:
    sparse: tuple[int, ...]
    dense: tuple[float, ...] = ()
    user_id: int | str | None = None

    @property
    def key(self):
        return self.user_id if self.user_id is not None else self.sparse


@dataclass(frozen=True)
class ItemProfile:
    sparse: tuple[int, ...]
    dense: tuple[float, ...] = ()
    item_id: int | str | None = None


@dataclass(frozen=True)
class ListRecord:
    """One impression: user, input list C, exhibited order into C, labels."""

    user: UserProfile
    items: tuple[ItemProfile, ...]
    final: tuple[int, ...]
    labels: tuple[int, ...]

    def __post_init__(self):
        m, n = len(self.items), len(self.final)
        if n > m:
            raise RecordError(f"final list longer than input list ({n} > {m})")
        if len(self.labels) != n:
            raise RecordError(f"{len(self.labels)} labels for a final list of {n}")
        if len(set(self.final)) != n:
            raise RecordError(f"duplicate index in final list {list(self.final)}")
        if any(not 0 <= i < m for i in self.final):
            raise RecordError(f"final index out of range [0, {m}): {list(self.final)}")
        if any(y not in (0, 1) for y in self.labels):
            raise RecordError(f"labels must be 0/1: {list(self.labels)}")

    @property
    def m(self) -> int:
        return len(self.items)

    @property
    def n(self) -> int:
        return len(self.final)


# ---------------------------------------------------------------- JSONL I/O

def _profile_to_json(p: UserProfile | ItemProfile, id_attr: str) -> dict:
    out: dict = {"sparse": list(p.sparse), "dense": list(p.dense)}
    pid = getattr(p, id_attr)
    if pid is not None:
        out["id"] = pid
    return out


def record_to_json(r: ListRecord) -> dict:
    return {
        "user": _profile_to_json(r.user, "user_id"),
        "items": [_profile_to_json(it, "item_id") for it in r.items],
        "final": list(r.final),
        "labels": list(r.labels),
    }


def _int_list(values, what: str) -> tuple[int, ...]:
    if not isinstance(values, list):
        raise RecordError(f"{what} must be a list")
    out = []
    for v in values:
        if isinstance(v, bool) or not isinstance(v, int):
            raise RecordError(f"{what} must hold integers, got {v!r}")
        out.append(v)
    return tuple(out)


def _float_list(values, what: str) -> tuple[float, ...]:
    if not isinstance(values, list):
        raise RecordError(f"{what} must be a list")
    out = []
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not np.isfinite(v):
            raise RecordError(f"{what} must hold finite numbers, got {v!r}")
        out.append(float(v))
    return tuple(out)


def record_from_json(obj) -> ListRecord:
    if not isinstance(obj, dict):
        raise RecordError("record must be a JSON object")
    try:
        u = obj["user"]
        user = UserProfile(_int_list(u["sparse"], "user.sparse"),
                           _float_list(u.get("dense", []), "user.dense"), u.get("id"))
        items = tuple(
            ItemProfile(_int_list(it["sparse"], "item.sparse"),
                        _float_list(it.get("dense", []), "item.dense"), it.get("id"))
            for it in obj["items"])
        return ListRecord(user, items, _int_list(obj["final"], "final"),
                          _int_list(obj["labels"], "labels"))
    except (KeyError, TypeError) as exc:
        raise RecordError(f"missing or malformed field: {exc}") from exc


def load_records(path: str | Path) -> list[ListRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                records.append(record_from_json(json.loads(line)))
            except (json.JSONDecodeError, RecordError) as exc:
                raise RecordError(f"{path}:{lineno}: {exc}") from None
    return records


def write_records(records: Iterable[ListRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(record_to_json(r), separators=(",", ":")) + "\n")


def split_records(records: Sequence, train_frac: float = 0.9, seed: int = 0):
    """Seeded shuffle, then the first ``round(train_frac * N)`` go to train."""
    if not 0.0 < train_frac < 1.0:
        raise ValueError(f"train_frac must be in (0, 1), got {train_frac}")
    order = np.random.default_rng(seed).permutation(len(records))
    cut = int(round(train_frac * len(records)))
    return [records[i] for i in order[:cut]], [records[i] for i in order[cut:]]


# ---------------------------------------------------------------- feature encoding

@dataclass
class DenseStats:
    mean: np.ndarray
    std: np.ndarray

    def standardize(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) / np.maximum(self.std, DENSE_STD_FLOOR)

    @classmethod
    def fit(cls, rows: np.ndarray) -> "DenseStats":
        rows = np.asarray(rows, dtype=float).reshape(len(rows), -1)
        if len(rows) == 0:
            return cls(np.zeros(rows.shape[1]), np.ones(rows.shape[1]))
        return cls(rows.mean(axis=0), rows.std(axis=0))


@dataclass
class Vocab:
    """Raw categorical id -> dense index; index 0 is reserved for unseen ids."""

    index: dict[int, int] = field(default_factory=dict)

    @classmethod
    def fit(cls, ids: Iterable[int]) -> "Vocab":
        return cls({int(v): i + 1 for i, v in enumerate(sorted(set(ids)))})

    def __len__(self) -> int:
        return len(self.index) + 1

    def encode(self, ids) -> np.ndarray:
        get = self.index.get
        return np.fromiter((get(int(v), OOV) for v in np.ravel(ids)), dtype=np.int64,
                           count=np.size(ids)).reshape(np.shape(ids))


@dataclass
class Featurizer:
    """Vocabularies and dense statistics, fitted on the training split only."""

    user_vocabs: list[Vocab]
    item_vocabs: list[Vocab]
    user_stats: DenseStats
    item_stats: DenseStats

    @classmethod
    def fit(cls, records: Sequence[ListRecord]) -> "Featurizer":
        if not records:
            raise ValueError("cannot fit features on an empty record set")
        fu = len(records[0].user.sparse)
        fi = len(records[0].items[0].sparse)
        users = [r.user for r in records]
        items = [it for r in records for it in r.items]
        return cls(
            [Vocab.fit(u.sparse[k] for u in users) for k in range(fu)],
            [Vocab.fit(it.sparse[k] for it in items) for k in range(fi)],
            DenseStats.fit(np.array([u.dense for u in users], dtype=float)),
            DenseStats.fit(np.array([it.dense for it in items], dtype=float)),
        )

    @property
    def user_dense_dim(self) -> int:
        return len(self.user_stats.mean)

    @property
    def item_dense_dim(self) -> int:
        return len(self.item_stats.mean)

    def user_width(self, d: int) -> int:
        return len(self.user_vocabs) * d + self.user_dense_dim

    def item_width(self, d: int) -> int:
        return len(self.item_vocabs) * d + self.item_dense_dim

    def to_json(self) -> dict:
        return {
            "user_vocabs": [sorted(v.index.items(), key=lambda kv: kv[1]) for v in self.user_vocabs],
            "item_vocabs": [sorted(v.index.items(), key=lambda kv: kv[1]) for v in self.item_vocabs],
            "user_stats": [self.user_stats.mean.tolist(), self.user_stats.std.tolist()],
            "item_stats": [self.item_stats.mean.tolist(), self.item_stats.std.tolist()],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Featurizer":
        def vocab(pairs):
            return Vocab({int(k): int(i) for k, i in pairs})

        return cls(
            [vocab(p) for p in obj["user_vocabs"]],
            [vocab(p) for p in obj["item_vocabs"]],
            DenseStats(np.array(obj["user_stats"][0]), np.array(obj["user_stats"][1])),
            DenseStats(np.array(obj["item_stats"][0]), np.array(obj["item_stats"][1])),
        )

    def encode(self, records: Sequence[ListRecord], index: Sequence[int] | None = None
               ) -> "EncodedLists":
        """Encode records sharing one (m, n) shape into stacked arrays."""
        if not records:
            raise ValueError("nothing to encode")
        m, n = records[0].m, records[0].n
        if any(r.m != m or r.n != n for r in records):
            raise ValueError("encode() needs records of a single (m, n) shape; use encode_grouped")
        us = np.array([r.user.sparse for r in records], dtype=np.int64).reshape(len(records), -1)
        ud = np.array([r.user.dense for r in records], dtype=float).reshape(len(records), -1)
        is_ = np.array([[it.sparse for it in r.items] for r in records],
                       dtype=np.int64).reshape(len(records), m, -1)
        id_ = np.array([[it.dense for it in r.items] for r in records],
                       dtype=float).reshape(len(records), m, -1)
        us = np.stack([v.encode(us[:, k]) for k, v in enumerate(self.user_vocabs)], axis=-1) \
            if self.user_vocabs else us[:, :0]
        is_ = np.stack([v.encode(is_[..., k]) for k, v in enumerate(self.item_vocabs)], axis=-1) \
            if self.item_vocabs else is_[..., :0]
        return EncodedLists(
            user_sparse=us,
            user_dense=self.user_stats.standardize(ud) if ud.shape[1] else ud,
            item_sparse=is_,
            item_dense=self.item_stats.standardize(id_) if id_.shape[2] else id_,
            final=np.array([r.final for r in records], dtype=np.int64).reshape(len(records), n),
            labels=np.array([r.labels for r in records], dtype=float).reshape(len(records), n),
            user_keys=[r.user.key for r in records],
            index=np.arange(len(records)) if index is None else np.asarray(index),
        )

    def encode_grouped(self, records: Sequence[ListRecord]) -> list["EncodedLists"]:
        groups: dict[tuple[int, int], list[int]] = {}
        for i, r in enumerate(records):
            groups.setdefault((r.m, r.n), []).append(i)
        return [self.encode([records[i] for i in idx], idx) for _, idx in sorted(groups.items())]


@dataclass
class EncodedLists:
    """Stacked arrays for R records of identical shape (m candidates, n exhibited)."""

    user_sparse: np.ndarray  # (R, Fu) vocab indices
    user_dense: np.ndarray  # (R, Du) standardized
    item_sparse: np.ndarray  # (R, m, Fi)
    item_dense: np.ndarray  # (R, m, Di)
    final: np.ndarray  # (R, n)
    labels: np.ndarray  # (R, n)
    user_keys: list
    index: np.ndarray  # position of each record in the source list

    def __len__(self) -> int:
        return len(self.final)

    @property
    def m(self) -> int:
        return self.item_sparse.shape[1]

    @property
    def n(self) -> int:
        return self.final.shape[1]

    def take(self, rows) -> "EncodedLists":
        rows = np.asarray(rows)
        return EncodedLists(self.user_sparse[rows], self.user_dense[rows], self.item_sparse[rows],
                            self.item_dense[rows], self.final[rows], self.labels[rows],
                            [self.user_keys[i] for i in rows], self.index[rows])

    def batches(self, size: int, rng: np.random.Generator | None = None):
        order = np.arange(len(self)) if rng is None else rng.permutation(len(self))
        for s in range(0, len(self), size):
            yield self.take(order[s:s + size])


# ---------------------------------------------------------------- embeddings

class EmbeddingTable:
    """One ``vocab x d`` table per sparse field, held in a ParamStore."""

    def __init__(self, store: ParamStore, prefix: str, vocab_sizes: Sequence[int], d: int,
                 rng: np.random.Generator):
        self.store, self.prefix, self.d = store, prefix, d
        self.names = [f"{prefix}.{k}" for k in range(len(vocab_sizes))]
        for name, size in zip(self.names, vocab_sizes):
            store.uniform(name, (size, d), rng)

    def lookup(self, ids: np.ndarray) -> Tensor:
        """``ids`` (..., F) -> concatenated embeddings (..., F*d)."""
        parts = [ag.embedding(self.store[name], ids[..., k]) for k, name in enumerate(self.names)]
        if not parts:
            return Tensor(np.zeros(ids.shape[:-1] + (0,)))
        return parts[0] if len(parts) == 1 else ag.concat(parts, axis=-1)


def represent(table: EmbeddingTable, sparse_ids: np.ndarray, dense: np.ndarray) -> Tensor:
    """Embedded sparse fields followed by standardized dense features."""
    emb = table.lookup(sparse_ids)
    if dense.shape[-1] == 0:
        return emb
    return ag.concat([emb, Tensor(dense)], axis=-1)


def build_representation(profile: UserProfile | ItemProfile, table: EmbeddingTable,
                         vocabs: Sequence[Vocab], stats: DenseStats) -> Tensor:
    """Vector of length ``|sparse| * d + |dense|`` for one profile."""
    ids = np.array([v.encode([s])[0] for v, s in zip(vocabs, profile.sparse)], dtype=np.int64)
    dense = stats.standardize(profile.dense) if len(profile.dense) else np.zeros(0)
    return represent(table, ids, dense)
