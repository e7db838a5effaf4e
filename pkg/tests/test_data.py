import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxrank import autograd as ag
from ctxrank.autograd import ParamStore
from ctxrank.data import (DenseStats, EmbeddingTable, Featurizer, ItemProfile, ListRecord,
                          RecordError, UserProfile, Vocab, build_representation, load_records,
                          record_to_json, split_records, write_records)


def make_record(m=4, n=2, seed=0):
    rng = np.random.default_rng(seed)
    user = UserProfile((int(rng.integers(5)), int(rng.integers(3))), (float(rng.normal()),), user_id=7)
    items = tuple(ItemProfile((int(rng.integers(20)), int(rng.integers(4))),
                              (float(rng.uniform()), float(rng.normal()))) for _ in range(m))
    final = tuple(int(i) for i in rng.permutation(m)[:n])
    labels = tuple(int(y) for y in rng.integers(0, 2, n))
    return ListRecord(user, items, final, labels)


def test_representation_length():
    store = ParamStore()
    rng = np.random.default_rng(0)
    table = EmbeddingTable(store, "emb", [10, 4], 8, rng)
    vocabs = [Vocab.fit(range(9)), Vocab.fit(range(3))]
    stats = DenseStats(np.array([2.0]), np.array([0.5]))
    rep = build_representation(UserProfile((3, 1), (2.0,)), table, vocabs, stats)
    assert rep.shape == (17,)
    assert rep.data[-1] == 0.0  # dense equal to its mean


def test_representation_lookup_identity():
    store = ParamStore()
    table = EmbeddingTable(store, "emb", [4], 3, np.random.default_rng(0))
    store["emb.0"].data[:] = np.eye(4, 3)
    vocab = Vocab({10: 1, 11: 2, 12: 3})
    rep = build_representation(ItemProfile((11,), ()), table, [vocab], DenseStats(np.zeros(0), np.ones(0)))
    np.testing.assert_array_equal(rep.data, [0.0, 0.0, 1.0])  # vocab index 2 -> row e_2


def test_embedding_out_of_range_raises():
    store = ParamStore()
    table = EmbeddingTable(store, "emb", [4], 3, np.random.default_rng(0))
    with pytest.raises(IndexError):
        table.lookup(np.array([[4]]))


def test_unseen_raw_id_maps_to_reserved_slot():
    v = Vocab.fit([5, 9])
    np.testing.assert_array_equal(v.encode([5, 9, 100]), [1, 2, 0])
    assert len(v) == 3


def test_dense_std_floor():
    stats = DenseStats.fit(np.array([[1.0], [1.0]]))
    assert stats.standardize([1.0])[0] == 0.0
    assert np.isfinite(stats.standardize([2.0])).all()


def test_record_invariants():
    user = UserProfile((0,), ())
    items = tuple(ItemProfile((i,), ()) for i in range(3))
    with pytest.raises(RecordError):
        ListRecord(user, items, (0, 1, 2, 0), (0, 0, 0, 0))  # n > m
    with pytest.raises(RecordError):
        ListRecord(user, items, (1, 1), (0, 1))
    with pytest.raises(RecordError):
        ListRecord(user, items, (0, 1), (0, 2))
    with pytest.raises(RecordError):
        ListRecord(user, items, (0, 3), (0, 1))
    with pytest.raises(RecordError):
        ListRecord(user, items, (0, 1), (0,))


def test_load_empty_file(tmp_path):
    p = tmp_path / "empty.jsonl"
    p.write_text("")
    assert load_records(p) == []


def test_round_trip(tmp_path):
    recs = [make_record(seed=s) for s in range(5)]
    p = tmp_path / "d.jsonl"
    write_records(recs, p)
    assert load_records(p) == recs


def test_load_names_bad_line(tmp_path):
    good = json.dumps(record_to_json(make_record()))
    bad = record_to_json(make_record(m=2, n=2))
    bad["final"] = [0, 1, 1]
    bad["labels"] = [0, 1, 1]
    p = tmp_path / "d.jsonl"
    p.write_text(good + "\n" + json.dumps(bad) + "\n")
    with pytest.raises(RecordError, match=r":2:"):
        load_records(p)


CORRUPTIONS = ["dup_final", "n_gt_m", "bad_label", "label_count", "index_range", "missing_key",
               "not_json", "float_id"]


@settings(max_examples=80, deadline=None)
@given(st.sampled_from(CORRUPTIONS), st.integers(0, 1000))
def test_corrupted_files_are_rejected(tmp_path_factory, kind, seed):
    rec = record_to_json(make_record(m=4, n=3, seed=seed))
    rng = np.random.default_rng(seed)
    if kind == "dup_final":
        rec["final"][1] = rec["final"][0]
    elif kind == "n_gt_m":
        rec["final"] = [0, 1, 2, 3, 3]
        rec["labels"] = [0] * 5
    elif kind == "bad_label":
        rec["labels"][int(rng.integers(3))] = int(rng.choice([2, -1, 5]))
    elif kind == "label_count":
        rec["labels"].append(0)
    elif kind == "index_range":
        rec["final"][0] = int(rng.choice([4, 9, -1]))
    elif kind == "missing_key":
        del rec[str(rng.choice(["user", "items", "final", "labels"]))]
    elif kind == "float_id":
        rec["items"][0]["sparse"][0] = 1.5
    line = "{not json" if kind == "not_json" else json.dumps(rec)
    p = tmp_path_factory.mktemp("c") / "d.jsonl"
    p.write_text(line + "\n")
    with pytest.raises(RecordError):
        load_records(p)


def test_split_ninety_ten():
    train, test = split_records(list(range(10)), 0.9, seed=3)
    assert (len(train), len(test)) == (9, 1)
    assert sorted(train + test) == list(range(10))


def test_split_deterministic_and_disjoint():
    recs = list(range(57))
    a = split_records(recs, 0.9, seed=11)
    b = split_records(recs, 0.9, seed=11)
    assert a == b
    assert not set(a[0]) & set(a[1])
    assert len(a[0]) + len(a[1]) == 57


def test_split_rejects_bad_fraction():
    with pytest.raises(ValueError):
        split_records([1, 2], 1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3), st.integers(0, 3), st.integers(1, 3), st.integers(0, 3), st.integers(2, 8))
def test_featurizer_widths(fu, du, fi, di, d):
    rng = np.random.default_rng(0)
    recs = []
    for _ in range(3):
        user = UserProfile(tuple(int(x) for x in rng.integers(0, 5, fu)),
                           tuple(float(x) for x in rng.normal(size=du)))
        items = tuple(ItemProfile(tuple(int(x) for x in rng.integers(0, 5, fi)),
                                  tuple(float(x) for x in rng.normal(size=di))) for _ in range(4))
        recs.append(ListRecord(user, items, (2, 0), (1, 0)))
    fz = Featurizer.fit(recs)
    enc = fz.encode(recs)
    store = ParamStore()
    ut = EmbeddingTable(store, "u", [len(v) for v in fz.user_vocabs], d, rng)
    it = EmbeddingTable(store, "i", [len(v) for v in fz.item_vocabs], d, rng)
    from ctxrank.data import represent
    assert represent(ut, enc.user_sparse, enc.user_dense).shape == (3, fu * d + du)
    assert represent(it, enc.item_sparse, enc.item_dense).shape == (3, 4, fi * d + di)
    assert fz.user_width(d) == fu * d + du
    restored = Featurizer.from_json(json.loads(json.dumps(fz.to_json())))
    np.testing.assert_array_equal(restored.encode(recs).item_sparse, enc.item_sparse)
    assert ag.DTYPE == np.float64
