"""Pairwise ranking training: every sampled (spammer, normal) pair should
score the spammer higher. The 0/1 ranking indicator is relaxed to the
logistic loss ``-log sigmoid(phi_s - phi_l)``; a Frobenius penalty is added
and everything is optimised with Adam.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .embed import make_batch
from .ingest import NORMAL, SPAMMER, Corpus
from .mdm import (ATT_KEYS, EMBED_KEYS, LSTM_KEYS, RES_E_KEYS, RES_R_KEYS,
                  MdmParams, backward, forward)
from .numerics import Adam, log_sigmoid, sigmoid

log = logging.getLogger(__name__)

SURROGATES = ("logistic",)


@dataclass(frozen=True)
class TrainConfig:
    lam: float = 1e-4
    epochs: int = 20
    batch_pairs: int = 64
    batches_per_epoch: int | None = None
    lr: float = 1e-3
    seed: int = 0
    surrogate: str = "logistic"
    freeze_embed: bool = False
    tol: float = 1e-5

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.batch_pairs < 1:
            raise ValueError("batch_pairs must be at least 1")
        if self.surrogate not in SURROGATES:
            raise ValueError(f"surrogate must be one of {SURROGATES}")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    mean_pair_loss: float
    frobenius_term: float


@dataclass
class TrainResult:
    params: MdmParams
    trace: list[EpochStats] = field(default_factory=list)


def pair_loss(phi_s, phi_l):
    """Logistic ranking loss; ~0 when the spammer outscores the normal user."""
    return -log_sigmoid(np.asarray(phi_s, dtype=float) - np.asarray(phi_l, dtype=float))


def pair_loss_grad(phi_s, phi_l):
    """(d/dphi_s, d/dphi_l) of ``pair_loss``."""
    g = -sigmoid(-(np.asarray(phi_s, dtype=float) - np.asarray(phi_l, dtype=float)))
    return g, -g


def active_keys(p: MdmParams, freeze_embed: bool = False) -> tuple[str, ...]:
    """Tensors that influence the score for the configured components."""
    comp = p.config.components
    keys = () if freeze_embed else EMBED_KEYS
    if comp != "repr":
        keys += LSTM_KEYS
    if comp in ("individual", "full"):
        keys += RES_R_KEYS + ATT_KEYS
    if comp == "full":
        keys += RES_E_KEYS
    return keys


def objective(p: MdmParams, batch, spam_rows, normal_rows, lam: float,
              keys=None, grad: bool = True):
    """Mean pair loss over the given row pairs of ``batch`` plus
    ``lam/2 * ||theta||_F^2`` over ``keys``.

    Returns ``(total, mean_pair_loss, frobenius_term, grads)``; ``grads``
    only holds ``keys``.
    """
    keys = active_keys(p) if keys is None else keys
    fw = forward(p, batch)
    s = np.asarray(spam_rows)
    l = np.asarray(normal_rows)
    losses = pair_loss(fw.phi[s], fw.phi[l])
    mean_loss = float(losses.mean())
    frob = 0.5 * lam * p.frobenius_sq(keys)
    if not grad:
        return mean_loss + frob, mean_loss, frob, None
    gs, gl = pair_loss_grad(fw.phi[s], fw.phi[l])
    dphi = np.zeros(batch.size)
    np.add.at(dphi, s, gs / len(s))
    np.add.at(dphi, l, gl / len(l))
    full = backward(p, fw, dphi)
    grads = {k: full[k] + lam * p.tensors[k] for k in keys}
    return mean_loss + frob, mean_loss, frob, grads


def sample_pairs(rng: np.random.Generator, n_spam: int, n_normal: int, count: int):
    """Uniform (spammer, normal) index pairs, with replacement."""
    return rng.integers(n_spam, size=count), rng.integers(n_normal, size=count)


def train_mdm(corpus: Corpus, params: MdmParams, cfg: TrainConfig) -> TrainResult:
    """Optimise ``params`` (a copy) on sampled spammer/normal pairs."""
    spam = [s for s in corpus.sequences if s.label == SPAMMER]
    normal = [s for s in corpus.sequences if s.label == NORMAL]
    if not spam or not normal:
        raise ValueError("training needs at least one spammer and one normal user")
    p = params.copy()
    keys = active_keys(p, cfg.freeze_embed)
    rng = np.random.default_rng(cfg.seed)
    opt = Adam({k: p.tensors[k] for k in keys}, lr=cfg.lr)
    per_epoch = cfg.batches_per_epoch or max(
        1, math.ceil((len(spam) + len(normal)) / (2 * cfg.batch_pairs)))
    bag = p.config.relation_sum == "bag"
    M = p.config.n_relations
    result = TrainResult(p)
    prev = None
    for epoch in range(1, cfg.epochs + 1):
        pair_total = 0.0
        for _ in range(per_epoch):
            si, li = sample_pairs(rng, len(spam), len(normal), cfg.batch_pairs)
            us, s_rows = np.unique(si, return_inverse=True)
            un, l_rows = np.unique(li, return_inverse=True)
            batch = make_batch([spam[i] for i in us] + [normal[i] for i in un], M, bag)
            _, mean_loss, _, grads = objective(p, batch, s_rows, l_rows + len(us),
                                               cfg.lam, keys)
            opt.step(p.tensors, grads)
            p.tensors["emb_in"][0] = 0.0
            pair_total += mean_loss
        stats = EpochStats(epoch, pair_total / per_epoch, 0.5 * cfg.lam * p.frobenius_sq(keys))
        result.trace.append(stats)
        log.info("epoch %d pair loss %.6f frobenius %.6f", epoch,
                 stats.mean_pair_loss, stats.frobenius_term)
        total = stats.mean_pair_loss + stats.frobenius_term
        if prev is not None and cfg.tol > 0 and abs(prev - total) <= cfg.tol * max(abs(prev), 1e-12):
            log.info("converged after %d epochs", epoch)
            break
        prev = total
    return result


def write_trace(trace, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,mean_pair_loss,frobenius_term\n")
        for s in trace:
            fh.write(f"{s.epoch},{s.mean_pair_loss!r},{s.frobenius_term!r}\n")
