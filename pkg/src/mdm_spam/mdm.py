"""Sequence detection model: forward pass, hand-written backward pass,
scoring and feature extraction.

Pipeline per user: GRU encoder -> LSTM over all positions -> window of the
most recent ``n`` hidden states -> ``k``-layer residual stack with a shared
row-attention per layer -> attention across the ``k+1`` layer summaries
(vector ``v``) -> ``L``-layer residual stack on ``v`` (vector ``g``) ->
``F = v + g`` scored against the summed relation embeddings of the user.

All kernels work on a leading batch axis; sequences are left-padded so that
every user's last item sits in the final column.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .embed import (ENCODER_KEYS, RELATION_KEY, Batch, gru_backward,
                    gru_forward, init_encoder, make_batch)
from .ingest import N_RELATIONS
from .numerics import DTYPE, relu, sigmoid, softmax, softmax_backward

WINDOW_MODES = ("s45", "eq5")
RELATION_SUMS = ("set", "bag")
COMPONENTS = ("repr", "long", "individual", "full")
FEATURE_MODES = ("sum", "concat-all")

LSTM_KEYS = ("lstm_wx", "lstm_wh", "lstm_b")
RES_R_KEYS = ("res_r_w", "res_r_b")
ATT_KEYS = ("att_w2", "att_c1", "att_w1", "att_c2",
            "ord_p2", "ord_b1", "ord_p1", "ord_b2")
RES_E_KEYS = ("res_e_w", "res_e_b")
PARAM_KEYS = ENCODER_KEYS + (RELATION_KEY,) + LSTM_KEYS + RES_R_KEYS + ATT_KEYS + RES_E_KEYS
EMBED_KEYS = ENCODER_KEYS + (RELATION_KEY,)


@dataclass(frozen=True)
class MdmConfig:
    """Architecture hyperparameters.

    ``window="s45"`` puts z_T, z_{T-1}, ... z_{T-n+1} in the window;
    ``"eq5"`` shifts it one step back (z_{T-1} .. z_{T-n}).
    ``components`` truncates the model for ablations: ``repr`` scores the
    mean encoder output, ``long`` the final LSTM state, ``individual`` the
    attended window vector ``v`` and ``full`` the fused ``v + g``.
    """

    d: int = 32
    n: int = 6
    k: int = 4
    L: int = 4
    n_relations: int = N_RELATIONS
    window: str = "s45"
    relation_sum: str = "set"
    components: str = "full"

    def __post_init__(self):
        if self.d < 1 or self.n < 1 or self.k < 0 or self.L < 1:
            raise ValueError(f"invalid sizes d={self.d} n={self.n} k={self.k} L={self.L}")
        if self.window not in WINDOW_MODES:
            raise ValueError(f"window must be one of {WINDOW_MODES}")
        if self.relation_sum not in RELATION_SUMS:
            raise ValueError(f"relation_sum must be one of {RELATION_SUMS}")
        if self.components not in COMPONENTS:
            raise ValueError(f"components must be one of {COMPONENTS}")


@dataclass
class MdmParams:
    """Every trainable tensor, keyed by name (see ``PARAM_KEYS``)."""

    config: MdmConfig
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, key):
        return self.tensors[key]

    def copy(self) -> "MdmParams":
        return MdmParams(self.config, {k: v.copy() for k, v in self.tensors.items()})

    def with_tensors(self, tensors) -> "MdmParams":
        return MdmParams(self.config, dict(tensors))

    @property
    def relations(self) -> np.ndarray:
        return self.tensors[RELATION_KEY]

    def frobenius_sq(self, keys=PARAM_KEYS) -> float:
        return float(sum(np.sum(self.tensors[k] ** 2) for k in keys))


def init_params(cfg: MdmConfig, seed: int = 0, embed: dict | None = None,
                scale: float = 0.1) -> MdmParams:
    """Uniform(-scale, scale) weights, zero biases. ``embed`` (encoder tensors
    plus relation matrix) replaces the fresh encoder when given."""
    rng = np.random.default_rng(seed)
    d, k, L = cfg.d, cfg.k, cfg.L
    t = init_encoder(cfg.n_relations, d, rng, scale)
    if embed is not None:
        for key in EMBED_KEYS:
            if embed[key].shape != t[key].shape:
                raise ValueError(f"pre-trained {key} has shape {embed[key].shape}, "
                                 f"expected {t[key].shape}")
            t[key] = np.array(embed[key], dtype=DTYPE)

    def u(*shape):
        return rng.uniform(-scale, scale, shape)

    t.update(
        lstm_wx=u(d, 4 * d), lstm_wh=u(d, 4 * d), lstm_b=np.zeros(4 * d),
        res_r_w=u(k, d, d), res_r_b=np.zeros((k, d)),
        att_w2=u(d, d), att_c1=np.zeros(d), att_w1=u(d), att_c2=np.zeros(1),
        ord_p2=u(d, d), ord_b1=np.zeros(d), ord_p1=u(d), ord_b2=np.zeros(1),
        res_e_w=u(L, d, d), res_e_b=np.zeros((L, d)),
    )
    return MdmParams(cfg, t)


def zero_params(cfg: MdmConfig) -> MdmParams:
    p = init_params(cfg)
    return p.with_tensors({k: np.zeros_like(v) for k, v in p.tensors.items()})


# ----------------------------------------------------------------- LSTM

def lstm_forward_batch(X, mask, wx, wh, b):
    """Masked LSTM with z_0 = c_0 = 0; gate order (input, forget, output, candidate)."""
    B, T, d = X.shape
    h = np.zeros((B, d))
    c = np.zeros((B, d))
    Z = np.empty((B, T, d))
    cache = []
    xa = X @ wx + b
    for t in range(T):
        a = xa[:, t] + h @ wh
        i = sigmoid(a[:, :d])
        f = sigmoid(a[:, d:2 * d])
        o = sigmoid(a[:, 2 * d:3 * d])
        g = np.tanh(a[:, 3 * d:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        m = mask[:, t:t + 1]
        cache.append((h, c, i, f, o, g, tc))
        h = m * h_new + (1.0 - m) * h
        c = m * c_new + (1.0 - m) * c
        Z[:, t] = h
    return Z, cache


def lstm_backward_batch(dZ, cache, X, mask, wx, wh):
    B, T, d = dZ.shape
    dwh = np.zeros_like(wh)
    dA = np.empty((B, T, 4 * d))
    dh_next = np.zeros((B, d))
    dc_next = np.zeros((B, d))
    for t in range(T - 1, -1, -1):
        h_prev, c_prev, i, f, o, g, tc = cache[t]
        m = mask[:, t:t + 1]
        dh = dZ[:, t] + dh_next
        dh_new = m * dh
        dc_new = m * dc_next + dh_new * o * (1.0 - tc * tc)
        da = np.concatenate([
            dc_new * g * i * (1.0 - i),
            dc_new * c_prev * f * (1.0 - f),
            dh_new * tc * o * (1.0 - o),
            dc_new * i * (1.0 - g * g),
        ], axis=1)
        dA[:, t] = da
        dwh += h_prev.T @ da
        dh_next = da @ wh.T + (1.0 - m) * dh
        dc_next = dc_new * f + (1.0 - m) * dc_next
    dwx = np.einsum("btd,btg->dg", X, dA)
    db = dA.sum(axis=(0, 1))
    dX = dA @ wx.T
    return dX, {"lstm_wx": dwx, "lstm_wh": dwh, "lstm_b": db}


def lstm_forward(e_seq, p: MdmParams) -> np.ndarray:
    """Hidden states z_1..z_T for one (T, d) input sequence."""
    e_seq = np.asarray(e_seq, dtype=DTYPE)
    mask = np.ones((1, e_seq.shape[0]))
    Z, _ = lstm_forward_batch(e_seq[None], mask, p["lstm_wx"], p["lstm_wh"], p["lstm_b"])
    return Z[0]


# --------------------------------------------------------------- window

def _window_index(T: int, n: int, mode: str) -> np.ndarray:
    offset = 1 if mode == "s45" else 2
    return T - offset - np.arange(n)


def window_batch(Z, lengths, n: int, mode: str = "s45"):
    """Most recent ``n`` hidden states, newest first, plus a validity mask."""
    B, T, d = Z.shape
    idx = _window_index(T, n, mode)
    shift = 0 if mode == "s45" else 1
    valid = (np.arange(n)[None, :] + shift) < np.asarray(lengths)[:, None]
    H = np.zeros((B, n, d))
    ok = idx >= 0
    H[:, ok] = Z[:, idx[ok]]
    H *= valid[..., None]
    return H, valid


def window_backward(dH, valid, T: int, n: int, mode: str):
    B, _, d = dH.shape
    dZ = np.zeros((B, T, d))
    idx = _window_index(T, n, mode)
    dH = dH * valid[..., None]
    for i in range(n):
        if idx[i] >= 0:
            dZ[:, idx[i]] += dH[:, i]
    return dZ


def recent_window(z_seq, n: int, mode: str = "s45"):
    """(n, d) window of one hidden-state sequence and its row mask."""
    z_seq = np.asarray(z_seq, dtype=DTYPE)
    H, valid = window_batch(z_seq[None], [z_seq.shape[0]], n, mode)
    return H[0], valid[0]


# ---------------------------------------------------------------- ResNet

def resnet_forward(X, Ws, bs):
    """Residual ReLU stack; returns [X_0 = X, X_1, ..., X_depth]."""
    outs = [X]
    for W, b in zip(Ws, bs):
        prev = outs[-1]
        outs.append(relu(prev @ W + b + prev))
    return outs


def resnet_backward(d_outs, outs, Ws):
    """``d_outs[l]`` is the external gradient on layer output ``l``."""
    depth = len(Ws)
    dWs = np.zeros_like(Ws)
    dbs = np.zeros((depth, Ws.shape[-1]))
    carry = d_outs[depth].copy()
    for l in range(depth, 0, -1):
        dP = carry * (outs[l] > 0)
        prev = outs[l - 1]
        dWs[l - 1] = prev.reshape(-1, prev.shape[-1]).T @ dP.reshape(-1, dP.shape[-1])
        dbs[l - 1] = dP.reshape(-1, dP.shape[-1]).sum(axis=0)
        carry = dP @ Ws[l - 1].T + dP + d_outs[l - 1]
    return carry, dWs, dbs


def resnet_r_forward(H, p: MdmParams, k: int | None = None):
    k = p.config.k if k is None else k
    return resnet_forward(np.asarray(H, dtype=DTYPE), p["res_r_w"][:k], p["res_r_b"][:k])


def resnet_e_forward(v, p: MdmParams, L: int | None = None):
    L = p.config.L if L is None else L
    return resnet_forward(np.asarray(v, dtype=DTYPE), p["res_e_w"][:L], p["res_e_b"][:L])[-1]


# ------------------------------------------------------------- attention

def attention_forward(X, mask, w2, c1, w1, c2):
    """Scores ``w1 . tanh(x W2 + c1) + c2`` per row, softmax over unmasked
    rows, weighted sum of rows. X: (B, N, d); mask: (B, N) bool or None."""
    U = np.tanh(X @ w2 + c1)
    scores = U @ w1 + c2[0]
    alpha = softmax(scores, axis=-1, mask=mask)
    v = np.einsum("bn,bnd->bd", alpha, X)
    return v, alpha, (X, U, alpha)


def attention_backward(dv, cache, w2, w1):
    X, U, alpha = cache
    dalpha = np.einsum("bd,bnd->bn", dv, X)
    dX = alpha[..., None] * dv[:, None, :]
    dscores = softmax_backward(alpha, dalpha)
    dw1 = np.einsum("bn,bnd->d", dscores, U)
    dc2 = np.array([dscores.sum()])
    dPre = dscores[..., None] * w1 * (1.0 - U * U)
    dw2 = X.reshape(-1, X.shape[-1]).T @ dPre.reshape(-1, dPre.shape[-1])
    dc1 = dPre.sum(axis=(0, 1))
    dX += dPre @ w2.T
    return dX, dw2, dc1, dw1, dc2


def layer_attention(H_l, p: MdmParams, mask=None):
    """Attention over the rows of one (n, d) layer output -> (v_l, alpha)."""
    H_l = np.asarray(H_l, dtype=DTYPE)
    m = None if mask is None else np.asarray(mask, dtype=bool)[None]
    v, alpha, _ = attention_forward(H_l[None], m, p["att_w2"], p["att_c1"],
                                    p["att_w1"], p["att_c2"])
    return v[0], alpha[0]


def order_attention(vs, p: MdmParams):
    """Attention across the (k+1, d) layer summaries -> (v, beta)."""
    vs = np.asarray(vs, dtype=DTYPE)
    v, beta, _ = attention_forward(vs[None], None, p["ord_p2"], p["ord_b1"],
                                   p["ord_p1"], p["ord_b2"])
    return v[0], beta[0]


def fuse(v, g):
    return np.asarray(v, dtype=DTYPE) + np.asarray(g, dtype=DTYPE)


# --------------------------------------------------------- full network

@dataclass
class Forward:
    """Intermediate values of a batched forward pass."""

    batch: Batch
    E: np.ndarray
    Z: np.ndarray | None = None
    H: np.ndarray | None = None
    valid: np.ndarray | None = None
    Hs: list | None = None
    alphas: list | None = None
    V: np.ndarray | None = None
    beta: np.ndarray | None = None
    v: np.ndarray | None = None
    gs: list | None = None
    F: np.ndarray | None = None
    S: np.ndarray | None = None
    phi: np.ndarray | None = None
    caches: dict = field(default_factory=dict)

    @property
    def e_mean(self):
        m = self.batch.mask[..., None]
        return (self.E * m).sum(axis=1) / self.batch.lengths[:, None]

    @property
    def z_last(self):
        return self.Z[:, -1]

    @property
    def g(self):
        return self.gs[-1]


def forward(p: MdmParams, batch: Batch) -> Forward:
    cfg = p.config
    t = p.tensors
    E, gru_cache = gru_forward(t, batch)
    fw = Forward(batch, E)
    fw.caches["gru"] = gru_cache
    fw.S = batch.rel_ind @ t[RELATION_KEY]
    if cfg.components == "repr":
        fw.F = fw.e_mean
    else:
        fw.Z, fw.caches["lstm"] = lstm_forward_batch(
            E, batch.mask, t["lstm_wx"], t["lstm_wh"], t["lstm_b"])
        if cfg.components == "long":
            fw.F = fw.z_last
        else:
            fw.H, fw.valid = window_batch(fw.Z, batch.lengths, cfg.n, cfg.window)
            if not fw.valid.any(axis=1).all():
                raise ValueError("a sequence is too short to fill any window row")
            fw.Hs = resnet_forward(fw.H, t["res_r_w"], t["res_r_b"])
            fw.alphas, att_caches, vs = [], [], []
            for H_l in fw.Hs:
                v_l, a_l, c_l = attention_forward(H_l, fw.valid, t["att_w2"],
                                                  t["att_c1"], t["att_w1"], t["att_c2"])
                vs.append(v_l)
                fw.alphas.append(a_l)
                att_caches.append(c_l)
            fw.caches["att"] = att_caches
            fw.V = np.stack(vs, axis=1)
            fw.v, fw.beta, fw.caches["ord"] = attention_forward(
                fw.V, None, t["ord_p2"], t["ord_b1"], t["ord_p1"], t["ord_b2"])
            if cfg.components == "individual":
                fw.F = fw.v
            else:
                fw.gs = resnet_forward(fw.v, t["res_e_w"], t["res_e_b"])
                fw.F = fuse(fw.v, fw.gs[-1])
    fw.phi = np.sum(fw.F * fw.S, axis=1)
    return fw


def backward(p: MdmParams, fw: Forward, dphi) -> dict[str, np.ndarray]:
    """Gradients of ``sum(dphi * phi)`` with respect to every tensor."""
    cfg = p.config
    t = p.tensors
    batch = fw.batch
    grads = {k: np.zeros_like(v) for k, v in t.items()}
    dphi = np.asarray(dphi, dtype=DTYPE)[:, None]
    dF = dphi * fw.S
    grads[RELATION_KEY] += batch.rel_ind.T @ (dphi * fw.F)
    B, T, d = fw.E.shape
    if cfg.components == "repr":
        dE = np.broadcast_to((dF / batch.lengths[:, None])[:, None, :], (B, T, d)) \
            * batch.mask[..., None]
    else:
        dZ = np.zeros((B, T, d))
        if cfg.components == "long":
            dZ[:, -1] = dF
        else:
            dv = dF.copy()
            if cfg.components == "full":
                d_outs = [np.zeros_like(g) for g in fw.gs]
                d_outs[-1] = dF
                dv_e, grads["res_e_w"], grads["res_e_b"] = resnet_backward(
                    d_outs, fw.gs, t["res_e_w"])
                dv += dv_e
            dV, grads["ord_p2"], grads["ord_b1"], grads["ord_p1"], grads["ord_b2"] = \
                attention_backward(dv, fw.caches["ord"], t["ord_p2"], t["ord_p1"])
            d_outs = []
            for l, c_l in enumerate(fw.caches["att"]):
                dH_l, dw2, dc1, dw1, dc2 = attention_backward(
                    dV[:, l], c_l, t["att_w2"], t["att_w1"])
                grads["att_w2"] += dw2
                grads["att_c1"] += dc1
                grads["att_w1"] += dw1
                grads["att_c2"] += dc2
                d_outs.append(dH_l)
            dH, grads["res_r_w"], grads["res_r_b"] = resnet_backward(
                d_outs, fw.Hs, t["res_r_w"])
            dZ += window_backward(dH, fw.valid, T, cfg.n, cfg.window)
        dE, lstm_g = lstm_backward_batch(dZ, fw.caches["lstm"], fw.E, batch.mask,
                                         t["lstm_wx"], t["lstm_wh"])
        grads.update(lstm_g)
    enc_g = gru_backward(np.ascontiguousarray(dE), fw.caches["gru"], t, batch)
    grads.update(enc_g)
    return grads


def batch_for(p: MdmParams, seqs) -> Batch:
    return make_batch(seqs, p.config.n_relations, bag=p.config.relation_sum == "bag")


def score(seq, p: MdmParams) -> float:
    """phi_u = F(u, n) . sum of the user's relation embeddings."""
    if len(seq if not hasattr(seq, "items") else seq.items) == 0:
        raise ValueError("cannot score an empty sequence")
    return float(forward(p, batch_for(p, [seq])).phi[0])


def score_batch(seqs, p: MdmParams, chunk: int = 256) -> np.ndarray:
    parts, inverse = _length_chunks(list(seqs), chunk)
    return np.concatenate([forward(p, batch_for(p, part)).phi for part in parts])[inverse]


def _length_chunks(seqs, chunk):
    """Chunks of similar-length sequences and the permutation undoing the sort."""
    lens = [len(s) for s in seqs]
    order = sorted(range(len(seqs)), key=lambda i: (lens[i], i))
    parts = [[seqs[i] for i in order[j:j + chunk]] for j in range(0, len(order), chunk)]
    inverse = np.empty(len(order), dtype=np.int64)
    inverse[order] = np.arange(len(order))
    return parts, inverse


def feature_blocks(fw: Forward, components: str) -> list[np.ndarray]:
    if components == "repr":
        return [fw.e_mean]
    if components == "long":
        return [fw.z_last]
    if components == "individual":
        return [fw.v]
    return [fw.v, fw.g]


def feature_names(cfg: MdmConfig, mode: str = "sum") -> list[str]:
    blocks = {"repr": ["e"], "long": ["z"], "individual": ["v"], "full": ["v", "g"]}[cfg.components]
    if mode == "sum":
        blocks = blocks + ["m"]
    else:
        blocks = blocks + [f"m{r}" for r in range(1, cfg.n_relations + 1)]
    return [f"mdm_{b}_{i}" for b in blocks for i in range(cfg.d)]


def extract_features_batch(seqs, p: MdmParams, mode: str = "sum",
                           chunk: int = 256) -> np.ndarray:
    """Per-user feature rows.

    ``sum``: [model blocks ; sum of the user's relation embeddings].
    ``concat-all``: [model blocks ; m_1 ; ... ; m_M].
    For the full model the model blocks are [v ; g_L].
    """
    if mode not in FEATURE_MODES:
        raise ValueError(f"feature mode must be one of {FEATURE_MODES}")
    parts, inverse = _length_chunks(list(seqs), chunk)
    rows = []
    for part in parts:
        fw = forward(p, batch_for(p, part))
        blocks = feature_blocks(fw, p.config.components)
        if mode == "sum":
            blocks.append(fw.S)
        else:
            flat = np.broadcast_to(p.relations.reshape(1, -1),
                                   (fw.batch.size, p.relations.size))
            blocks.append(flat)
        rows.append(np.concatenate(blocks, axis=1))
    return np.concatenate(rows, axis=0)[inverse]


def extract_features(seq, p: MdmParams, mode: str = "sum") -> np.ndarray:
    return extract_features_batch([seq], p, mode)[0]


def with_config(p: MdmParams, **changes) -> MdmParams:
    return MdmParams(replace(p.config, **changes), p.tensors)
