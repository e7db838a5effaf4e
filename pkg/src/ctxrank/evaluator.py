"""Context-wise click model: Bi-LSTM + self-attention + MLP over an exhibited list."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import autograd as ag
from . import nn
from .autograd import ParamStore, Tensor
from .data import EmbeddingTable, EncodedLists, Featurizer, represent

PROB_CLIP = 1e-7


@dataclass
class EvaluatorConfig:
    embed_dim: int = 8
    hidden: int = 32
    mlp: tuple[int, ...] = (128, 64, 32)
    heads: int = 1
    use_bilstm: bool = True
    use_selfattn: bool = True
    lstm_cell: str = "standard"

    def __post_init__(self):
        self.mlp = tuple(self.mlp)
        if self.lstm_cell not in nn.LSTM_CELLS:
            raise ValueError(f"lstm_cell must be one of {nn.LSTM_CELLS}")
        if self.heads < 1:
            raise ValueError("heads must be >= 1")

    def to_json(self) -> dict:
        d = asdict(self)
        d["mlp"] = list(self.mlp)
        return d


@dataclass
class EvaluatorOutput:
    logits: Tensor  # (B, L)
    probs: Tensor  # (B, L)
    hidden: Tensor | None = None  # (B, L, 2h)
    mutual: Tensor | None = None  # (B, L, d_item)


@dataclass
class Evaluator:
    config: EvaluatorConfig
    featurizer: Featurizer
    seed: int = 0
    store: ParamStore = field(init=False)
    score_calls: int = field(init=False, default=0)

    def __post_init__(self):
        cfg, fz = self.config, self.featurizer
        rng = np.random.default_rng(self.seed)
        self.store = ParamStore()
        d = cfg.embed_dim
        self.user_table = EmbeddingTable(self.store, "E.user_emb", [len(v) for v in fz.user_vocabs], d, rng)
        self.item_table = EmbeddingTable(self.store, "E.item_emb", [len(v) for v in fz.item_vocabs], d, rng)
        self.user_width = fz.user_width(d)
        self.item_width = fz.item_width(d)
        if cfg.use_bilstm:
            for direction in ("fwd", "bwd"):
                nn.init_lstm(self.store, f"E.lstm.{direction}", self.item_width, cfg.hidden, rng)
        nn.init_mlp(self.store, "E.mlp", self.mlp_input_width, cfg.mlp, rng)

    @property
    def mlp_input_width(self) -> int:
        w = self.user_width + self.item_width
        if self.config.use_bilstm:
            w += 2 * self.config.hidden
        if self.config.use_selfattn:
            w += self.item_width
        return w

    # -------------------------------------------------------------- forward

    def represent(self, batch: EncodedLists) -> tuple[Tensor, Tensor]:
        """User (B, du) and candidate (B, m, di) representations."""
        return (represent(self.user_table, batch.user_sparse, batch.user_dense),
                represent(self.item_table, batch.item_sparse, batch.item_dense))

    def forward(self, user: Tensor, items: Tensor) -> EvaluatorOutput:
        """Contextual click probability of every item in the list ``items`` (B, L, di)."""
        cfg = self.config
        if items.ndim != 3 or items.shape[1] < 1:
            raise ValueError(f"evaluator needs a nonempty (B, L, d) list, got {items.shape}")
        if items.shape[2] != self.item_width or user.shape[-1] != self.user_width:
            raise ag.ShapeError(
                f"representation widths ({user.shape[-1]}, {items.shape[2]}) do not match "
                f"model ({self.user_width}, {self.item_width})")
        B, L, _ = items.shape
        parts = [ag.broadcast_to(ag.reshape(user, (B, 1, self.user_width)), (B, L, self.user_width)),
                 items]
        hidden = mutual = None
        if cfg.use_bilstm:
            hidden = nn.bilstm(self.store, "E.lstm", items, cfg.lstm_cell)
            parts.append(hidden)
        if cfg.use_selfattn:
            mutual = nn.self_attention(items, cfg.heads)
            parts.append(mutual)
        x = ag.concat(parts, axis=-1)
        logits = nn.mlp(self.store, "E.mlp", x, len(cfg.mlp))
        return EvaluatorOutput(logits, ag.sigmoid(logits), hidden, mutual)

    def forward_records(self, batch: EncodedLists) -> EvaluatorOutput:
        """Score each record's exhibited list V."""
        user, cands = self.represent(batch)
        return self.forward(user, gather_items(cands, batch.final))

    def score_lists(self, batch: EncodedLists, orders: np.ndarray,
                    reprs: tuple[Tensor, Tensor] | None = None) -> np.ndarray:
        """Probabilities (B, L) for arbitrary orderings ``orders`` (B, L) into each C."""
        self.score_calls += 1
        with ag.no_grad():
            user, cands = reprs if reprs is not None else self.represent(batch)
            return self.forward(user, gather_items(cands, orders)).probs.data


def gather_items(cands: Tensor, orders: np.ndarray) -> Tensor:
    """Pick rows ``orders`` (B, L) out of candidate representations (B, m, d)."""
    orders = np.asarray(orders)
    if orders.ndim != 2 or orders.shape[1] < 1:
        raise ValueError(f"orders must be a nonempty (B, L) index array, got {orders.shape}")
    return cands[np.arange(len(orders))[:, None], orders]


def evaluator_loss(probs: Tensor, labels: np.ndarray) -> Tensor:
    """Summed per-item binary cross entropy, averaged over records."""
    labels = np.asarray(labels, dtype=float)
    if probs.shape != labels.shape:
        raise ag.ShapeError(f"{probs.shape} predictions for {labels.shape} labels")
    p = ag.clip(probs, PROB_CLIP, 1.0 - PROB_CLIP)
    ll = labels * ag.log(p) + (1.0 - labels) * ag.log(1.0 - p)
    n_records = labels.shape[0] if labels.ndim > 1 else 1
    return ag.sum(ll) * (-1.0 / n_records)
