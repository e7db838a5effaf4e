import itertools

import numpy as np
import pytest

from ctxrank.simulator import (PROB_HI, PROB_LO, SimConfig, SimConfigError, SimGroundTruth,
                               simulate_records, true_optimal_order)

from conftest import tiny_records


def loop_prob(base, cat, price, order, gamma, beta, alpha):
    out = []
    for t, j in enumerate(order):
        same = sum(cat[order[s]] == cat[j] for s in range(t)) / max(t, 1)
        drop = max(0.0, price[order[t - 1]] - price[j]) if t else 0.0
        p = base[j] * gamma ** t * (1 - beta * same) * (1 + alpha * drop)
        out.append(min(max(p, PROB_LO), PROB_HI))
    return out


def random_truth(rng, m, gamma=0.9, beta=0.5, alpha=0.2, cats=3):
    return SimGroundTruth(gamma, beta, alpha, rng.uniform(0.05, 0.95, (1, m)),
                          rng.integers(0, cats, (1, m)), rng.uniform(0, 1, (1, m)), np.zeros((1, 1)))


def test_list_probs_match_loop_formula():
    rng = np.random.default_rng(0)
    for _ in range(50):
        tr = random_truth(rng, 7)
        order = rng.permutation(7)[:5]
        np.testing.assert_allclose(tr.list_probs(order[None])[0],
                                   loop_prob(tr.base[0], tr.category[0], tr.price[0], order, 0.9, 0.5, 0.2),
                                   rtol=0, atol=1e-15)


def test_degenerate_config_is_context_free():
    tr = random_truth(np.random.default_rng(1), 6, gamma=1.0, beta=0.0, alpha=0.0)
    a = tr.list_probs(np.array([[0, 1, 2, 3]]))[0]
    b = tr.list_probs(np.array([[3, 2, 1, 0]]))[0]
    np.testing.assert_array_equal(a, b[::-1])
    np.testing.assert_array_equal(a, np.clip(tr.base[0, :4], PROB_LO, PROB_HI))


def test_fatigue_lowers_repeated_category():
    tr = SimGroundTruth(0.9, 0.5, 0.0, np.full((1, 3), 0.6), np.array([[0, 0, 1]]),
                        np.zeros((1, 3)), np.zeros((1, 1)))
    same = tr.list_probs(np.array([[0, 1]]))[0, 1]
    other = tr.list_probs(np.array([[2, 1]]))[0, 1]
    assert same < other


def test_records_are_valid_and_reproducible():
    a, ta = tiny_records(seed=4)
    b, tb = tiny_records(seed=4)
    assert a == b
    np.testing.assert_array_equal(ta.true_probs, tb.true_probs)
    assert all(r.m == 5 and r.n == 3 for r in a)
    assert np.all((ta.true_probs >= PROB_LO) & (ta.true_probs <= PROB_HI))
    # C is the input ranking: descending point-wise score
    scores = np.array([[it.dense[1] for it in r.items] for r in a])
    assert np.all(np.diff(scores, axis=1) <= 0)


def test_sidecar_round_trip(tmp_path):
    _, truth = tiny_records()
    truth.write(tmp_path / "t.jsonl")
    back = SimGroundTruth.read(tmp_path / "t.jsonl")
    for name in ("base", "category", "price", "true_probs"):
        np.testing.assert_array_equal(getattr(back, name), getattr(truth, name))
    assert (back.gamma, back.beta, back.alpha) == (truth.gamma, truth.beta, truth.alpha)


@pytest.mark.parametrize("field,value", [("gamma", 0.0), ("gamma", 1.5), ("beta", -0.1),
                                         ("alpha", -1.0), ("n", 20), ("epsilon", 2.0)])
def test_invalid_config_names_field(field, value):
    with pytest.raises(SimConfigError) as err:
        SimConfig(**{field: value}).validate()
    assert err.value.field == field


def test_unknown_config_field():
    with pytest.raises(SimConfigError) as err:
        SimConfig.from_dict({"bogus": 1})
    assert err.value.field == "bogus"


def test_optimal_order_separable_case_is_descending():
    rng = np.random.default_rng(2)
    tr = random_truth(rng, 6, gamma=0.8, beta=0.0, alpha=0.0)
    order, _ = true_optimal_order(tr, 0, 3)
    np.testing.assert_array_equal(order, np.argsort(-tr.base[0])[:3])


def test_optimal_order_matches_second_enumeration():
    rng = np.random.default_rng(3)
    for _ in range(30):
        tr = random_truth(rng, 3, cats=2)
        best = max(itertools.permutations(range(3), 2),
                   key=lambda o: sum(loop_prob(tr.base[0], tr.category[0], tr.price[0], o, 0.9, 0.5, 0.2)))
        order, value = true_optimal_order(tr, 0, 2)
        assert tuple(order) == best
        assert value == pytest.approx(sum(loop_prob(tr.base[0], tr.category[0], tr.price[0], best,
                                                    0.9, 0.5, 0.2)), abs=1e-12)


def test_optimum_dominates_greedy():
    rng = np.random.default_rng(4)
    for _ in range(30):
        tr = random_truth(rng, 6)
        greedy = np.argsort(-tr.base[0], kind="stable")[:3]
        assert true_optimal_order(tr, 0, 3)[1] >= tr.list_value(greedy[None])[0] - 1e-12


def test_exhaustive_size_bound():
    tr = random_truth(np.random.default_rng(0), 11)
    with pytest.raises(ValueError):
        true_optimal_order(tr, 0, 3)
    with pytest.raises(ValueError):
        true_optimal_order(random_truth(np.random.default_rng(0), 8), 0, 6)


def test_context_makes_greedy_suboptimal_somewhere():
    found = 0
    for seed in range(100):
        _, truth = tiny_records(seed=seed, num_records=1, m=6, n=3)
        order, _ = true_optimal_order(truth, 0, 3)
        found += not np.array_equal(order, np.argsort(-truth.base[0], kind="stable")[:3])
    assert found > 0


def test_labels_converge_to_true_probabilities():
    # one user, m items: every record exhibits the same list
    cfg = dict(num_users=1, num_items=4, num_categories=2, num_user_types=1, m=4, n=4,
               epsilon=0.0, num_records=100_000)
    records, truth = simulate_records(SimConfig(seed=0, **cfg))
    assert all(r.final == records[0].final for r in records[:100])
    labels = np.array([r.labels for r in records], dtype=float)
    p = truth.true_probs[0]
    sigma = np.sqrt(p * (1 - p) / len(records))
    assert np.all(np.abs(labels.mean(axis=0) - p) <= 3 * sigma)
