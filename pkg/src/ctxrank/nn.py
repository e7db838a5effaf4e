"""Layers shared by the evaluator and the generator.

Weights use the row-vector convention ``x @ W``.  All layers take a
:class:`ParamStore` plus a name prefix, so one store can hold several
independently named layers.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from . import autograd as ag
from .autograd import ParamStore, Tensor

LSTM_CELLS = ("standard", "printed")


# ---------------------------------------------------------------- MLP

def init_mlp(store: ParamStore, prefix: str, in_dim: int, hidden: Sequence[int],
             rng: np.random.Generator) -> None:
    """ReLU hidden layers followed by a linear scalar head."""
    dims = [in_dim, *hidden, 1]
    for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
        store.uniform(f"{prefix}.W{i}", (a, b), rng)
        store.zeros(f"{prefix}.b{i}", (b,))


def mlp(store: ParamStore, prefix: str, x: Tensor, n_hidden: int) -> Tensor:
    """Return the scalar-head logit with the trailing unit axis dropped."""
    h = x
    for i in range(n_hidden):
        h = ag.relu(h @ store[f"{prefix}.W{i}"] + store[f"{prefix}.b{i}"])
    out = h @ store[f"{prefix}.W{n_hidden}"] + store[f"{prefix}.b{n_hidden}"]
    return ag.reshape(out, out.shape[:-1])


# ---------------------------------------------------------------- LSTM

_LSTM_GATES = ("i", "f", "c", "o")


def init_lstm(store: ParamStore, prefix: str, in_dim: int, hidden: int,
              rng: np.random.Generator) -> None:
    for g in _LSTM_GATES:
        store.uniform(f"{prefix}.W_x{g}", (in_dim, hidden), rng)
        store.uniform(f"{prefix}.W_h{g}", (hidden, hidden), rng)
        store.zeros(f"{prefix}.b_{g}", (hidden,))
    # peephole connections: i and f read c_{t-1}, o reads c_t
    for g in ("i", "f", "o"):
        store.uniform(f"{prefix}.W_c{g}", (hidden, hidden), rng)


def lstm(store: ParamStore, prefix: str, xs: Tensor, cell: str = "standard") -> Tensor:
    """Run a peephole LSTM over axis 1 of ``xs`` (B, L, d); returns (B, L, h).

    ``cell="printed"`` replaces the recurrent cell path ``f * c_{t-1}`` with
    ``f * x_t``, which requires ``h == d``.
    """
    if cell not in LSTM_CELLS:
        raise ValueError(f"unknown LSTM cell {cell!r}")
    p = {k: store[f"{prefix}.{k}"] for k in
         [f"W_x{g}" for g in _LSTM_GATES] + [f"W_h{g}" for g in _LSTM_GATES]
         + [f"b_{g}" for g in _LSTM_GATES] + ["W_ci", "W_cf", "W_co"]}
    B, L, d = xs.shape
    hdim = p["W_hi"].shape[0]
    if cell == "printed" and hdim != d:
        raise ag.ShapeError(f"printed LSTM cell needs hidden size == input size ({hdim} != {d})")
    w_x = ag.concat([p[f"W_x{g}"] for g in _LSTM_GATES], axis=1)
    w_h = ag.concat([p[f"W_h{g}"] for g in _LSTM_GATES], axis=1)
    b = ag.concat([p[f"b_{g}"] for g in _LSTM_GATES], axis=0)
    w_c = ag.concat([p["W_ci"], p["W_cf"]], axis=1)
    proj = xs @ w_x + b  # (B, L, 4h)
    h = Tensor(np.zeros((B, hdim)))
    c = Tensor(np.zeros((B, hdim)))
    outs = []
    for t in range(L):
        z = proj[:, t, :] + h @ w_h
        zc = c @ w_c
        i = ag.sigmoid(z[:, :hdim] + zc[:, :hdim])
        f = ag.sigmoid(z[:, hdim:2 * hdim] + zc[:, hdim:])
        g = ag.tanh(z[:, 2 * hdim:3 * hdim])
        carry = c if cell == "standard" else xs[:, t, :]
        c = f * carry + i * g
        o = ag.sigmoid(z[:, 3 * hdim:] + c @ p["W_co"])
        h = o * ag.tanh(c)
        outs.append(h)
    return ag.stack(outs, axis=1)


def bilstm(store: ParamStore, prefix: str, xs: Tensor, cell: str = "standard") -> Tensor:
    """Forward and backward LSTM states concatenated per position: (B, L, 2h)."""
    if xs.shape[1] < 1:
        raise ValueError("bilstm needs a sequence of length >= 1")
    fwd = lstm(store, f"{prefix}.fwd", xs, cell)
    rev = np.arange(xs.shape[1])[::-1]
    bwd = lstm(store, f"{prefix}.bwd", xs[:, rev, :], cell)[:, rev, :]
    return ag.concat([fwd, bwd], axis=-1)


# ---------------------------------------------------------------- attention

def self_attention(v: Tensor, heads: int = 1) -> Tensor:
    """softmax(V V^T / sqrt(d_k)) V per head, heads concatenated: (B, L, d)."""
    d = v.shape[-1]
    if d % heads:
        raise ag.ShapeError(f"width {d} not divisible into {heads} heads")
    w = d // heads
    outs = []
    for k in range(heads):
        vh = v[..., k * w:(k + 1) * w] if heads > 1 else v
        scores = (vh @ ag.swapaxes(vh, -1, -2)) * (1.0 / np.sqrt(w))
        outs.append(ag.softmax(scores, axis=-1) @ vh)
    return outs[0] if heads == 1 else ag.concat(outs, axis=-1)


def init_bilinear(store: ParamStore, name: str, left: int, right: int,
                  rng: np.random.Generator) -> None:
    store.uniform(name, (left, right), rng)


def activating_attention(hs: Tensor, w: Tensor, cands: Tensor) -> Tensor:
    """Attend over selected-state sequence ``hs`` (B, t, h) once per candidate.

    Weight of state i for candidate j is softmax_i(h_i W x_j); the result
    (B, m, h) is the weighted sum of states.
    """
    scores = hs @ w @ ag.swapaxes(cands, -1, -2)  # (B, t, m)
    weights = ag.softmax(scores, axis=1)
    return ag.swapaxes(weights, 1, 2) @ hs


# ---------------------------------------------------------------- GRU

def init_gru(store: ParamStore, prefix: str, in_dim: int, hidden: int,
             rng: np.random.Generator) -> None:
    for g in ("z", "r", "h"):
        store.uniform(f"{prefix}.W_{g}", (in_dim, hidden), rng)
        store.uniform(f"{prefix}.U_{g}", (hidden, hidden), rng)


def gru_step(store: ParamStore, prefix: str, x: Tensor, h: Tensor) -> Tensor:
    """One bias-free GRU update; ``x`` is (B, d), ``h`` is (B, hidden)."""
    z = ag.sigmoid(x @ store[f"{prefix}.W_z"] + h @ store[f"{prefix}.U_z"])
    r = ag.sigmoid(x @ store[f"{prefix}.W_r"] + h @ store[f"{prefix}.U_r"])
    cand = ag.tanh(x @ store[f"{prefix}.W_h"] + (r * h) @ store[f"{prefix}.U_h"])
    return (1.0 - z) * h + z * cand
