"""Two-stage training: evaluator by cross entropy, generator by policy gradient."""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, fields
from typing import Callable, Sequence

import numpy as np

from . import autograd as ag
from . import metrics
from .data import EncodedLists, Featurizer, ListRecord
from .evaluator import Evaluator, EvaluatorConfig, evaluator_loss
from .generator import GeneratedBatch, Generator, GeneratorConfig
from .simulator import SimGroundTruth

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 0.001
    batch_size: int = 128
    evaluator_epochs: int = 8
    generator_epochs: int = 10
    seed: int = 0
    k: int = 5
    use_self_reward: bool = True
    use_diff_reward: bool = True

    def validate(self) -> "TrainConfig":
        if not self.lr >= 0:
            raise ValueError("lr must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not (self.use_self_reward or self.use_diff_reward):
            raise ValueError("at least one reward component must be enabled")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        return self

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        bad = set(d) - known
        if bad:
            raise ValueError(f"unknown train field {sorted(bad)[0]!r}")
        return cls(**d).validate()


@dataclass
class RewardBreakdown:
    self_reward: np.ndarray  # (B, n)
    diff_reward: np.ndarray  # (B, n)
    advantage: np.ndarray  # (B, n), closed form: value(O) - value(O minus item t)


LogFn = Callable[[dict], None]


def _batches(groups: Sequence[EncodedLists], size: int, rng: np.random.Generator):
    plan = [(g, rows) for g, grp in enumerate(groups)
            for rows in np.array_split(rng.permutation(len(grp)), max(1, -(-len(grp) // size)))]
    for i in rng.permutation(len(plan)):
        g, rows = plan[i]
        yield groups[g].take(rows)


# ---------------------------------------------------------------- stage 1

def evaluate_evaluator(evaluator: Evaluator, groups: Sequence[EncodedLists],
                       name: str = "evaluator") -> metrics.EvalReport:
    total, count, scores, labels, keys = 0.0, 0, [], [], []
    with ag.no_grad():
        for grp in groups:
            for batch in grp.batches(1024):
                probs = evaluator.forward_records(batch).probs
                total += evaluator_loss(probs, batch.labels).item() * len(batch)
                count += len(batch)
                scores.append(probs.data)
                labels.append(batch.labels)
                keys.extend(batch.user_keys)
    s = np.concatenate([x.ravel() for x in scores])
    y = np.concatenate([x.ravel() for x in labels])
    report = metrics.EvalReport(name, loss=total / max(count, 1))
    try:
        report.auc = metrics.auc(s, y)
        per_record_s = [x for arr in scores for x in arr]
        per_record_y = [x for arr in labels for x in arr]
        report.gauc = metrics.gauc(metrics.group_by_user(keys, per_record_s, per_record_y))
    except metrics.UndefinedMetricError:
        pass
    return report


def train_evaluator(train: Sequence[ListRecord], val: Sequence[ListRecord],
                    config: TrainConfig, model_config: EvaluatorConfig | None = None,
                    featurizer: Featurizer | None = None, log_fn: LogFn | None = None
                    ) -> Evaluator:
    """Fit the evaluator and return it at the epoch with the lowest validation loss."""
    if not train:
        raise ValueError("training set is empty")
    config.validate()
    featurizer = featurizer or Featurizer.fit(train)
    model = Evaluator(model_config or EvaluatorConfig(), featurizer, seed=config.seed)
    tr = featurizer.encode_grouped(train)
    va = featurizer.encode_grouped(val) if val else tr
    rng = np.random.default_rng(config.seed + 1)
    best_loss, best_state = np.inf, model.store.state_dict()
    for epoch in range(1, config.evaluator_epochs + 1):
        t0 = time.perf_counter()
        running, seen = 0.0, 0
        for batch in _batches(tr, config.batch_size, rng):
            loss = evaluator_loss(model.forward_records(batch).probs, batch.labels)
            ag.backward(loss, model.store)
            ag.adam_step(model.store, config.lr)
            running += loss.item() * len(batch)
            seen += len(batch)
        rep = evaluate_evaluator(model, va)
        if rep.loss < best_loss:
            best_loss, best_state = rep.loss, model.store.state_dict()
        entry = {"stage": "evaluator", "epoch": epoch, "train_loss": running / seen,
                 "val_loss": rep.loss, "val_auc": rep.auc, "val_gauc": rep.gauc,
                 "wall_time_s": time.perf_counter() - t0}
        log.info("evaluator epoch %d: train %.4f val %.4f auc %s", epoch, entry["train_loss"],
                 rep.loss, rep.auc)
        if log_fn:
            log_fn(entry)
    model.store.load_state_dict(best_state)
    return model


# ---------------------------------------------------------------- rewards and loss

def advantage_reward(evaluator: Evaluator, batch: EncodedLists, orders: np.ndarray,
                     reprs=None) -> RewardBreakdown:
    """Self, differential and advantage reward of every step of ``orders`` (B, n).

    Issues one evaluator pass on the full lists and one per removed position.
    """
    orders = np.asarray(orders)
    B, n = orders.shape
    if n < 1:
        raise ValueError("orders must be nonempty")
    if reprs is None:
        with ag.no_grad():
            reprs = evaluator.represent(batch)
    full = evaluator.score_lists(batch, orders, reprs)
    total = full.sum(axis=1)
    self_r = full.copy()
    diff = np.zeros((B, n))
    adv = np.empty((B, n))
    keep = np.ones(n, dtype=bool)
    for t in range(n):
        if n == 1:
            adv[:, t] = total
            continue
        keep[:] = True
        keep[t] = False
        without = evaluator.score_lists(batch, orders[:, keep], reprs)
        # item-wise difference, so a context-free evaluator gives exactly 0
        diff[:, t] = (full[:, keep] - without).sum(axis=1)
        adv[:, t] = total - without.sum(axis=1)
    return RewardBreakdown(self_r, diff, adv)


def combine_rewards(rewards: RewardBreakdown, use_self: bool = True, use_diff: bool = True
                    ) -> np.ndarray:
    if use_self and use_diff:
        return rewards.advantage
    if use_self:
        return rewards.self_reward
    if use_diff:
        return rewards.diff_reward
    raise ValueError("at least one reward component must be enabled")


def generator_loss(generated: GeneratedBatch, rewards: np.ndarray) -> ag.Tensor:
    """-(1/N) sum over records and steps of reward * log(sampling probability)."""
    if generated.mode != "sampled":
        raise ValueError("policy loss needs sampled-mode lists with their sampling probabilities")
    if generated.log_probs is None:
        raise ValueError("generated lists carry no log-probabilities")
    rewards = np.asarray(rewards, dtype=float)
    if rewards.shape != generated.log_probs.shape:
        raise ag.ShapeError(f"rewards {rewards.shape} vs steps {generated.log_probs.shape}")
    return ag.sum(generated.log_probs * rewards) * (-1.0 / rewards.shape[0])


# ---------------------------------------------------------------- stage 2

def greedy_baseline(evaluator: Evaluator, batch: EncodedLists, n: int | None = None
                    ) -> GeneratedBatch:
    """Rank C by evaluator score (context = C in recorded order), keep the top n."""
    n = batch.n if n is None else n
    m = batch.m
    if n > m:
        raise ValueError(f"cannot pick {n} items from {m} candidates")
    scores = evaluator.score_lists(batch, np.tile(np.arange(m), (len(batch), 1)))
    orders = np.argsort(-scores, axis=1, kind="stable")[:, :n]
    steps = np.zeros((len(batch), n, m))
    steps[np.arange(len(batch))[:, None], np.arange(n)[None, :], orders] = 1.0
    return GeneratedBatch(orders, steps, "greedy")


def generate_greedy(generator: Generator, groups: Sequence[EncodedLists]) -> list[np.ndarray]:
    with ag.no_grad():
        return [np.concatenate([generator.generate(b, mode="greedy").orders
                                for b in grp.batches(1024)]) for grp in groups]


def baseline_orders(evaluator: Evaluator, groups: Sequence[EncodedLists]) -> list[np.ndarray]:
    return [np.concatenate([greedy_baseline(evaluator, b).orders for b in grp.batches(1024)])
            for grp in groups]


def evaluate_orders(name: str, evaluator: Evaluator, groups: Sequence[EncodedLists],
                    orders: Sequence[np.ndarray], k: int,
                    truth: SimGroundTruth | None = None) -> metrics.EvalReport:
    """NDCG@k, LR@k and (given ground truth) true list value of per-group orders."""
    ndcg, lr, tv, count = 0.0, 0.0, 0.0, 0
    for grp, ords in zip(groups, orders):
        rel = metrics.candidate_relevance(grp.final, grp.labels, grp.m)
        kk = min(k, ords.shape[1])
        ndcg += sum(metrics.ndcg_at_k(o, r, kk) for o, r in zip(ords, rel))
        for s in range(0, len(grp), 1024):
            lr += metrics.lr_at_k(evaluator, grp.take(np.arange(s, min(s + 1024, len(grp)))),
                                  ords[s:s + 1024], kk).sum()
        if truth is not None:
            tv += metrics.ground_truth_list_value(truth, grp.index, ords, kk).sum()
        count += len(grp)
    return metrics.EvalReport(name, k=k, ndcg_at_k=ndcg / count, lr_at_k=lr / count,
                              true_value_at_k=tv / count if truth is not None else None)


def train_generator(train: Sequence[ListRecord], val: Sequence[ListRecord], evaluator: Evaluator,
                    config: TrainConfig, model_config: GeneratorConfig | None = None,
                    log_fn: LogFn | None = None) -> Generator:
    """Policy-gradient training against a frozen evaluator.

    One sampled list per record per epoch; returns the generator at the
    epoch with the best validation LR@k (greedy decoding).
    """
    if not train:
        raise ValueError("training set is empty")
    config.validate()
    bad = [i for i, r in enumerate(train) if r.n > r.m]
    if bad:
        raise ValueError(f"record {bad[0]} has n > m")
    featurizer = evaluator.featurizer
    gen = Generator(model_config or GeneratorConfig(), featurizer, seed=config.seed + 7)
    tr = featurizer.encode_grouped(train)
    va = featurizer.encode_grouped(val) if val else tr
    rng = np.random.default_rng(config.seed + 2)

    def val_lr() -> float:
        rep = evaluate_orders("generator", evaluator, va, generate_greedy(gen, va), config.k)
        return rep.lr_at_k

    best_lr, best_state = val_lr(), gen.store.state_dict()
    for epoch in range(1, config.generator_epochs + 1):
        t0 = time.perf_counter()
        running, seen, mean_reward = 0.0, 0, 0.0
        for batch in _batches(tr, config.batch_size, rng):
            out = gen.generate(batch, mode="sampled", rng=rng)
            rewards = combine_rewards(advantage_reward(evaluator, batch, out.orders),
                                      config.use_self_reward, config.use_diff_reward)
            loss = generator_loss(out, rewards)
            ag.backward(loss, gen.store)
            ag.adam_step(gen.store, config.lr)
            running += loss.item() * len(batch)
            mean_reward += rewards.sum()
            seen += len(batch)
        lr_k = val_lr()
        if lr_k > best_lr:
            best_lr, best_state = lr_k, gen.store.state_dict()
        entry = {"stage": "generator", "epoch": epoch, "train_loss": running / seen,
                 "mean_reward": mean_reward / seen, f"val_lr_at_{config.k}": lr_k,
                 "wall_time_s": time.perf_counter() - t0}
        log.info("generator epoch %d: loss %.4f val LR@%d %.4f", epoch, entry["train_loss"],
                 config.k, lr_k)
        if log_fn:
            log_fn(entry)
    gen.store.load_state_dict(best_state)
    return gen


def config_to_json(cfg) -> dict:
    return asdict(cfg)
