"""Evaluation protocol shared by the CLI, the scripts and the acceptance suite.

Every split seed draws a stratified train/test split; the detection model is
trained on the training users only, features are extracted for everyone and
a logistic-regression head is fitted on the training rows. Relation
embeddings are pre-trained once on all sequences (no labels involved).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .baselines import (build_relation_graphs, compute_graph_features,
                        graph_feature_names, kgram_features, kgram_names)
from .classify import LrConfig, Metrics, evaluate, lr_fit, split
from .embed import EmbeddingModel, train_embeddings
from .ingest import Corpus, Event
from .mdm import MdmConfig, MdmParams, extract_features_batch, feature_names, init_params
from .train import TrainConfig, train_mdm

log = logging.getLogger(__name__)

FAMILIES = ("mdm", "kgram", "graph")


@dataclass(frozen=True)
class ExperimentConfig:
    mdm: MdmConfig = field(default_factory=MdmConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    embed_epochs: int = 20
    embed_lr: float = 1e-2
    embed_target: str = "current"
    n_seeds: int = 10
    test_fraction: float = 0.3
    feature_mode: str = "sum"
    lr: LrConfig = field(default_factory=LrConfig)
    init_seed: int = 0


# Small enough for one CPU core: ten seeds of the full model in well under
# a minute on the default synthetic corpus.
DESK_SCALE = ExperimentConfig(
    mdm=MdmConfig(d=16, n=6, k=4, L=4, relation_sum="bag"),
    train=TrainConfig(epochs=20, lr=3e-3),
)


def labeled(corpus: Corpus) -> Corpus:
    """Only the users that carry a label."""
    return Corpus([s for s in corpus.sequences if s.label is not None],
                  corpus.relation_count, corpus.n_self_interactions)


def label_vector(corpus: Corpus) -> np.ndarray:
    return np.array([s.label for s in corpus.sequences], dtype=int)


def kgram_matrix(corpus: Corpus) -> tuple[np.ndarray, list[str]]:
    M = corpus.relation_count
    X = np.array([kgram_features(s, M) for s in corpus.sequences], dtype=float)
    return X.reshape(len(corpus.sequences), M * M), kgram_names(M)


def graph_matrix(corpus: Corpus, events: Iterable[Event]) -> tuple[np.ndarray, list[str]]:
    M = corpus.relation_count
    rows = compute_graph_features(build_relation_graphs(events, M))
    names = graph_feature_names(M)
    empty = np.zeros(len(names))
    X = np.array([rows.get(s.user, empty) for s in corpus.sequences], dtype=float)
    return X.reshape(len(corpus.sequences), len(names)), names


def pretrain(corpus: Corpus, cfg: ExperimentConfig) -> EmbeddingModel:
    return train_embeddings(corpus, cfg.mdm.d, epochs=cfg.embed_epochs,
                            seed=cfg.init_seed, lr=cfg.embed_lr, target=cfg.embed_target)


def fit_mdm(corpus: Corpus, embed: EmbeddingModel | None, cfg: ExperimentConfig,
            seed: int = 0) -> MdmParams:
    """Fresh parameters (encoder from ``embed`` when given) trained on ``corpus``."""
    p0 = init_params(cfg.mdm, seed, embed=embed.params if embed is not None else None)
    return train_mdm(corpus, p0, replace(cfg.train, seed=seed)).params


def mdm_matrix(corpus: Corpus, params: MdmParams,
               mode: str = "sum") -> tuple[np.ndarray, list[str]]:
    X = extract_features_batch(corpus.sequences, params, mode)
    return X, feature_names(params.config, mode)


def evaluate_split(X, y, train_rows, test_rows, lr_cfg: LrConfig = LrConfig(),
                   threshold: float = 0.5) -> Metrics:
    model = lr_fit(X[train_rows], y[train_rows], lr_cfg)
    return evaluate(model, X[test_rows], y[test_rows], threshold)


def split_rows(users: np.ndarray, y: np.ndarray, test_fraction: float, seed: int):
    train, _ = split(users, y, test_fraction, seed)
    train_rows = np.isin(users, train)
    return train_rows, ~train_rows


def evaluate_fixed(X, y, users, seeds: Sequence[int], test_fraction: float,
                   lr_cfg: LrConfig = LrConfig(), threshold: float = 0.5) -> list[Metrics]:
    """Metrics of a precomputed feature matrix over several split seeds."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(int)
    users = np.asarray(users)
    out = []
    for seed in seeds:
        tr, te = split_rows(users, y, test_fraction, seed)
        out.append(evaluate_split(X, y, tr, te, lr_cfg, threshold))
    return out


def run_protocol(corpus: Corpus, cfg: ExperimentConfig, families=("mdm", "kgram"),
                 events: Iterable[Event] | None = None,
                 embed: EmbeddingModel | None = None) -> dict[str, list[Metrics]]:
    """Per-family metrics over ``cfg.n_seeds`` split seeds.

    ``mdm`` is retrained on the training users of every split; the other
    families are computed once. ``graph`` needs the raw ``events``.
    """
    unknown = set(families) - set(FAMILIES)
    if unknown:
        raise ValueError(f"unknown feature families: {sorted(unknown)}")
    corpus = labeled(corpus)
    users = np.array([s.user for s in corpus.sequences])
    y = label_vector(corpus)
    fixed = {}
    if "kgram" in families:
        fixed["kgram"] = kgram_matrix(corpus)[0]
    if "graph" in families:
        if events is None:
            raise ValueError("graph features need the event list")
        fixed["graph"] = graph_matrix(corpus, events)[0]
    if "mdm" in families and embed is None:
        embed = pretrain(corpus, cfg)
    results = {f: [] for f in families}
    for seed in range(cfg.n_seeds):
        tr, te = split_rows(users, y, cfg.test_fraction, seed)
        for fam in families:
            if fam == "mdm":
                params = fit_mdm(corpus.subset(users[tr].tolist()), embed, cfg, seed)
                X = mdm_matrix(corpus, params, cfg.feature_mode)[0]
            else:
                X = fixed[fam]
            m = evaluate_split(X, y, tr, te, cfg.lr)
            results[fam].append(m)
            log.info("seed %d %s P=%.4f R=%.4f F=%.4f", seed, fam,
                     m.precision, m.recall, m.f_measure)
    return results


def mean_f(metrics: Sequence[Metrics]) -> float:
    return float(np.mean([m.f_measure for m in metrics]))


def report_rows(results: dict[str, list[Metrics]]) -> list[str]:
    """CSV lines: one per (family, seed) then a mean and std row per family."""
    lines = ["features,seed,precision,recall,f_measure"]
    for fam, ms in results.items():
        for seed, m in enumerate(ms):
            lines.append(f"{fam},{seed},{m.precision:.6f},{m.recall:.6f},{m.f_measure:.6f}")
        table = np.array([[m.precision, m.recall, m.f_measure] for m in ms])
        mean, std = table.mean(axis=0), table.std(axis=0)
        lines.append(f"{fam},mean,{mean[0]:.6f},{mean[1]:.6f},{mean[2]:.6f}")
        lines.append(f"{fam},std,{std[0]:.6f},{std[1]:.6f},{std[2]:.6f}")
    return lines
