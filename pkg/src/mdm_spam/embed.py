"""User-relation representation: a GRU encoder over relation input
embeddings producing per-position vectors ``e_t``, and relation embeddings
``m_r`` scored against them through a softmax over the M relations.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .ingest import Corpus, UserSequence
from .numerics import DTYPE, Adam, sigmoid, softmax

log = logging.getLogger(__name__)

ENCODER_KEYS = ("emb_in", "gru_wx", "gru_wh", "gru_b")
RELATION_KEY = "rel"
INIT_SCALE = 0.1


@dataclass
class Batch:
    """Left-padded id matrix; real items of row b occupy the last T_b columns."""

    ids: np.ndarray        # (B, T) int, 0 = padding
    mask: np.ndarray       # (B, T) float 0/1
    lengths: np.ndarray    # (B,)
    rel_ind: np.ndarray    # (B, M) relation indicator (set) or counts (bag)

    @property
    def size(self) -> int:
        return self.ids.shape[0]


def make_batch(seqs: Sequence, n_relations: int, bag: bool = False) -> Batch:
    items = [s.items if isinstance(s, UserSequence) else tuple(s) for s in seqs]
    if any(len(it) == 0 for it in items):
        raise ValueError("empty relation sequence")
    for it in items:
        if min(it) < 1 or max(it) > n_relations:
            raise ValueError(f"relation id outside 1..{n_relations}")
    lengths = np.array([len(it) for it in items])
    B, T = len(items), int(lengths.max())
    ids = np.zeros((B, T), dtype=np.int64)
    rel_ind = np.zeros((B, n_relations), dtype=DTYPE)
    for b, it in enumerate(items):
        ids[b, T - len(it):] = it
        if bag:
            np.add.at(rel_ind[b], np.asarray(it) - 1, 1.0)
        else:
            rel_ind[b, np.unique(it) - 1] = 1.0
    mask = (ids > 0).astype(DTYPE)
    return Batch(ids, mask, lengths, rel_ind)


def init_encoder(n_relations: int, d: int, rng: np.random.Generator,
                 scale: float = INIT_SCALE) -> dict[str, np.ndarray]:
    """Encoder tensors plus the relation matrix, uniform(-scale, scale)."""
    p = {
        "emb_in": rng.uniform(-scale, scale, (n_relations + 1, d)),
        "gru_wx": rng.uniform(-scale, scale, (d, 3 * d)),
        "gru_wh": rng.uniform(-scale, scale, (d, 3 * d)),
        "gru_b": np.zeros(3 * d),
        RELATION_KEY: rng.uniform(-scale, scale, (n_relations, d)),
    }
    p["emb_in"][0] = 0.0
    return p


def gru_forward(p, batch: Batch):
    """Run the masked GRU; returns outputs ``E`` (B, T, d) and a cache."""
    ids, mask = batch.ids, batch.mask
    B, T = ids.shape
    d = p["gru_wh"].shape[0]
    wx, wh, bias = p["gru_wx"], p["gru_wh"], p["gru_b"]
    h = np.zeros((B, d))
    E = np.empty((B, T, d))
    cache = []
    for t in range(T):
        x = p["emb_in"][ids[:, t]]
        a = x @ wx + bias
        hh = h @ wh
        z = sigmoid(a[:, :d] + hh[:, :d])
        r = sigmoid(a[:, d:2 * d] + hh[:, d:2 * d])
        hn = hh[:, 2 * d:]
        n = np.tanh(a[:, 2 * d:] + r * hn)
        m = mask[:, t:t + 1]
        h_new = (1.0 - z) * n + z * h
        cache.append((x, h, z, r, n, hn))
        h = m * h_new + (1.0 - m) * h
        E[:, t] = h
    return E, cache


def gru_backward(dE, cache, p, batch: Batch) -> dict[str, np.ndarray]:
    ids, mask = batch.ids, batch.mask
    B, T, d = dE.shape
    wx, wh = p["gru_wx"], p["gru_wh"]
    g = {k: np.zeros_like(p[k]) for k in ENCODER_KEYS}
    dh_next = np.zeros((B, d))
    for t in range(T - 1, -1, -1):
        x, h_prev, z, r, n, hn = cache[t]
        m = mask[:, t:t + 1]
        dh = dE[:, t] + dh_next
        dh_new = m * dh
        dn = dh_new * (1.0 - z)
        dz = dh_new * (h_prev - n)
        dan = dn * (1.0 - n * n)
        dr = dan * hn
        daz = dz * z * (1.0 - z)
        dar = dr * r * (1.0 - r)
        da = np.concatenate([daz, dar, dan], axis=1)
        dhh = np.concatenate([daz, dar, dan * r], axis=1)
        g["gru_wx"] += x.T @ da
        g["gru_b"] += da.sum(axis=0)
        g["gru_wh"] += h_prev.T @ dhh
        np.add.at(g["emb_in"], ids[:, t], da @ wx.T)
        dh_next = dh_new * z + dhh @ wh.T + (1.0 - m) * dh
    g["emb_in"][0] = 0.0
    return g


def encode_positions(seq, p, n_relations: int | None = None) -> np.ndarray:
    """Per-position representations ``e_1..e_T`` as a (T, d) array."""
    M = n_relations if n_relations is not None else p["emb_in"].shape[0] - 1
    batch = make_batch([seq], M)
    E, _ = gru_forward(p, batch)
    return E[0]


def relation_softmax(rel: np.ndarray, e_t: np.ndarray) -> np.ndarray:
    """P(r_m | t, u) for every relation m, from scores ``m_r . e_t``."""
    rel = np.asarray(rel, dtype=DTYPE)
    e_t = np.asarray(e_t, dtype=DTYPE)
    if rel.shape[-1] != e_t.shape[-1]:
        raise ValueError("relation and position vectors differ in width")
    return softmax(e_t @ rel.T, axis=-1)


def _targets(batch: Batch, target: str):
    if target == "current":
        return batch.ids, batch.mask.astype(bool)
    if target == "next":
        tgt = np.zeros_like(batch.ids)
        tgt[:, :-1] = batch.ids[:, 1:]
        # left padding: the last column is always the final item, which has no successor
        return tgt, tgt > 0
    raise ValueError(f"unknown target {target!r}")


def embedding_loss(p, batch: Batch, target: str = "current", grad: bool = True):
    """Mean negative log-likelihood of the target relation per position.

    Padding never contributes. Returns ``(loss, grads)``; grads cover the
    encoder tensors and the relation matrix.
    """
    E, cache = gru_forward(p, batch)
    tgt, valid = _targets(batch, target)
    count = valid.sum()
    if count == 0:
        raise ValueError("no positions with a prediction target")
    rel = p[RELATION_KEY]
    scores = E @ rel.T                                   # (B, T, M)
    probs = softmax(scores, axis=-1)
    b_idx, t_idx = np.nonzero(valid)
    picked = probs[b_idx, t_idx, tgt[b_idx, t_idx] - 1]
    loss = -np.sum(np.log(picked)) / count
    if not grad:
        return loss, None
    dscores = probs.copy()
    dscores[b_idx, t_idx, tgt[b_idx, t_idx] - 1] -= 1.0
    dscores *= valid[..., None] / count
    grads = gru_backward(dscores @ rel, cache, p, batch)
    grads[RELATION_KEY] = np.einsum("btm,btd->md", dscores, E)
    return loss, grads


@dataclass
class EmbeddingModel:
    params: dict[str, np.ndarray]
    losses: list[float] = field(default_factory=list)

    @property
    def relations(self) -> np.ndarray:
        return self.params[RELATION_KEY]

    @property
    def encoder(self) -> dict[str, np.ndarray]:
        return {k: self.params[k] for k in ENCODER_KEYS}


def train_embeddings(corpus: Corpus, d: int, epochs: int = 10, seed: int = 0,
                     lr: float = 1e-2, batch_size: int = 128,
                     target: str = "current") -> EmbeddingModel:
    """Fit the encoder and relation embeddings by maximum likelihood of the
    target relation at every position, with Adam."""
    seqs = [s for s in corpus.sequences if len(s) > 0]
    if not seqs:
        raise ValueError("cannot train embeddings on an empty corpus")
    M = corpus.relation_count
    rng = np.random.default_rng(seed)
    params = init_encoder(M, d, rng)
    opt = Adam(params, lr=lr)
    model = EmbeddingModel(params)
    # group by length to keep padding small
    order = sorted(range(len(seqs)), key=lambda i: (len(seqs[i]), i))
    chunks = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    batches = [make_batch([seqs[i] for i in c], M) for c in chunks]
    weights = np.array([c.__len__() for c in chunks], dtype=DTYPE)
    for epoch in range(epochs):
        total = 0.0
        for bi in rng.permutation(len(batches)):
            loss, grads = embedding_loss(params, batches[bi], target)
            opt.step(params, grads)
            params["emb_in"][0] = 0.0
            total += loss * weights[bi]
        model.losses.append(total / weights.sum())
        log.debug("embed epoch %d loss %.6f", epoch + 1, model.losses[-1])
    return model
