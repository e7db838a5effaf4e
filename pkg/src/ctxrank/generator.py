"""Sequential reranking policy: GRU evolving layer, activating attention, pointer selector."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import autograd as ag
from . import nn
from .autograd import ParamStore, Tensor
from .data import EmbeddingTable, EncodedLists, Featurizer, represent

MODES = ("sampled", "greedy")


@dataclass
class GeneratorConfig:
    embed_dim: int = 8
    hidden: int = 32
    mlp: tuple[int, ...] = (128, 64, 32)
    use_evolving: bool = True
    use_activating: bool = True

    def __post_init__(self):
        self.mlp = tuple(self.mlp)

    def to_json(self) -> dict:
        d = asdict(self)
        d["mlp"] = list(self.mlp)
        return d


@dataclass
class GenerationState:
    """Selected indices so far and the sequence of selected-list encodings."""

    selected: list[np.ndarray]  # one (B,) index array per step
    states: list[Tensor]  # H = [h_1 .. h_t], each (B, width)
    mask: np.ndarray  # (B, m) True where already selected
    last: Tensor  # (B, di) input for the next evolving step
    h: Tensor | None = None  # latest GRU state

    @property
    def t(self) -> int:
        return len(self.selected)


@dataclass
class GeneratedList:
    order: np.ndarray  # (n,) indices into C
    step_probs: np.ndarray  # (n, m) full distribution at each step
    mode: str

    @property
    def chosen_probs(self) -> np.ndarray:
        return self.step_probs[np.arange(len(self.order)), self.order]


@dataclass
class GeneratedBatch:
    orders: np.ndarray  # (B, n)
    step_probs: np.ndarray  # (B, n, m)
    mode: str
    log_probs: Tensor | None = None  # (B, n) log s(chosen) on the tape

    def __len__(self) -> int:
        return len(self.orders)

    @property
    def chosen_probs(self) -> np.ndarray:
        B, n = self.orders.shape
        return self.step_probs[np.arange(B)[:, None], np.arange(n)[None, :], self.orders]

    def lists(self) -> list[GeneratedList]:
        return [GeneratedList(self.orders[b], self.step_probs[b], self.mode) for b in range(len(self))]


def select_step(probs: np.ndarray, mode: str, rng: np.random.Generator | None = None) -> np.ndarray:
    """Pick one index per row of ``probs``: argmax (lowest index on ties) or a seeded draw."""
    p = np.atleast_2d(np.asarray(probs, dtype=float))
    if mode == "greedy":
        idx = p.argmax(axis=1)
    elif mode == "sampled":
        if rng is None:
            raise ValueError("sampled mode needs an RNG")
        cdf = np.cumsum(p, axis=1)
        u = (1.0 - rng.random(len(p))) * cdf[:, -1]
        idx = np.minimum((cdf < u[:, None]).sum(axis=1), p.shape[1] - 1)
    else:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    return idx if np.ndim(probs) > 1 else idx[0]


@dataclass
class Generator:
    config: GeneratorConfig
    featurizer: Featurizer
    seed: int = 0
    store: ParamStore = field(init=False)

    def __post_init__(self):
        cfg, fz = self.config, self.featurizer
        rng = np.random.default_rng(self.seed)
        self.store = ParamStore()
        d = cfg.embed_dim
        self.user_table = EmbeddingTable(self.store, "G.user_emb", [len(v) for v in fz.user_vocabs], d, rng)
        self.item_table = EmbeddingTable(self.store, "G.item_emb", [len(v) for v in fz.item_vocabs], d, rng)
        self.user_width = fz.user_width(d)
        self.item_width = fz.item_width(d)
        self.store.uniform("G.start", (self.item_width,), rng)
        if cfg.use_evolving:
            nn.init_gru(self.store, "G.gru", self.item_width, cfg.hidden, rng)
        if cfg.use_activating:
            nn.init_bilinear(self.store, "G.W_att", self.state_width, self.item_width, rng)
        nn.init_mlp(self.store, "G.selector", self.selector_input_width, cfg.mlp, rng)

    @property
    def state_width(self) -> int:
        return self.config.hidden if self.config.use_evolving else self.item_width

    @property
    def selector_input_width(self) -> int:
        w = self.user_width + self.item_width
        return w + self.state_width if self.config.use_activating else w

    def represent(self, batch: EncodedLists) -> tuple[Tensor, Tensor]:
        return (represent(self.user_table, batch.user_sparse, batch.user_dense),
                represent(self.item_table, batch.item_sparse, batch.item_dense))

    # -------------------------------------------------------------- layers

    def initial_state(self, batch_size: int, m: int) -> GenerationState:
        start = ag.broadcast_to(self.store["G.start"], (batch_size, self.item_width))
        h0 = Tensor(np.zeros((batch_size, self.config.hidden))) if self.config.use_evolving else None
        return GenerationState([], [], np.zeros((batch_size, m), dtype=bool), start, h0)

    def evolving_step(self, state: GenerationState) -> Tensor:
        """Append the next selected-list encoding to ``state.states`` and return it."""
        if self.config.use_evolving:
            state.h = nn.gru_step(self.store, "G.gru", state.last, state.h)
            new = state.h
        else:
            new = state.last
        state.states.append(new)
        return new

    def activating(self, state: GenerationState, cands: Tensor) -> Tensor:
        if not state.states:
            raise ValueError("activating attention needs at least one state")
        hs = ag.stack(state.states, axis=1)
        return nn.activating_attention(hs, self.store["G.W_att"], cands)

    def selector_logits(self, user: Tensor, cands: Tensor, state: GenerationState) -> Tensor:
        B, m, _ = cands.shape
        parts = [ag.broadcast_to(ag.reshape(user, (B, 1, self.user_width)), (B, m, self.user_width)),
                 cands]
        if self.config.use_activating:
            parts.append(self.activating(state, cands))
        return nn.mlp(self.store, "G.selector", ag.concat(parts, axis=-1), len(self.config.mlp))

    def selector_scores(self, user: Tensor, cands: Tensor, state: GenerationState) -> Tensor:
        """Log of the masked softmax over candidates, (B, m); selected ones are -inf."""
        if state.mask.all(axis=1).any():
            raise ValueError("every candidate is already selected")
        return ag.log_softmax(self.selector_logits(user, cands, state), axis=-1, mask=state.mask)

    # -------------------------------------------------------------- generation

    def generate_from_reprs(self, user: Tensor, cands: Tensor, n: int, mode: str,
                            rng: np.random.Generator | None = None,
                            forced: np.ndarray | None = None) -> GeneratedBatch:
        """Run n selection steps; ``forced`` (B, n) replays a fixed trajectory instead."""
        B, m, _ = cands.shape
        if n > m:
            raise ValueError(f"cannot pick {n} items from {m} candidates")
        if n < 1:
            raise ValueError("n must be >= 1")
        state = self.initial_state(B, m)
        rows = np.arange(B)
        dists, chosen_logp = [], []
        for t in range(n):
            self.evolving_step(state)
            logp = self.selector_scores(user, cands, state)
            probs = np.exp(logp.data)
            idx = select_step(probs, mode, rng) if forced is None else forced[:, t]
            dists.append(probs)
            chosen_logp.append(logp[rows, idx])
            state.mask[rows, idx] = True
            state.selected.append(idx)
            state.last = cands[rows, idx]
        orders = np.stack(state.selected, axis=1)
        log_probs = ag.stack(chosen_logp, axis=1)
        return GeneratedBatch(orders, np.stack(dists, axis=1), mode, log_probs)

    def generate(self, batch: EncodedLists, n: int | None = None, mode: str = "greedy",
                 rng: np.random.Generator | None = None) -> GeneratedBatch:
        user, cands = self.represent(batch)
        return self.generate_from_reprs(user, cands, batch.n if n is None else n, mode, rng)

    def replay(self, batch: EncodedLists, orders: np.ndarray) -> GeneratedBatch:
        """Step distributions and log-probabilities of given sampled orders (B, n)."""
        orders = np.asarray(orders, dtype=np.int64)
        user, cands = self.represent(batch)
        return self.generate_from_reprs(user, cands, orders.shape[1], "sampled", forced=orders)

    def generate_list(self, user: Tensor, cands: Tensor, n: int, mode: str = "greedy",
                      rng: np.random.Generator | None = None) -> GeneratedList:
        """Single-record generation from ``user`` (du,) and ``cands`` (m, di)."""
        with ag.no_grad():
            out = self.generate_from_reprs(ag.reshape(user, (1, -1)),
                                           ag.reshape(cands, (1,) + cands.shape), n, mode, rng)
        return out.lists()[0]
