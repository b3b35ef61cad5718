"""Command-line entry point: ``synth``, ``train``, ``features`` and ``eval``.

Exit codes: 0 success, 1 domain error (bad data, single-class labels, ...),
2 usage error (missing flags, checkpoint missing for mdm features).
"""

from __future__ import annotations

import argparse
import csv
import logging
import re
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import checkpoint
from .classify import LrConfig
from .config import RunConfig, load_config_file, resolve
from .experiment import (evaluate_fixed, graph_matrix, kgram_matrix, labeled,
                         mdm_matrix, pretrain, report_rows)
from .ingest import (NORMAL, SPAMMER, Corpus, build_sequences, parse_events,
                     parse_labels, write_events, write_labels)
from .mdm import COMPONENTS, FEATURE_MODES, RELATION_SUMS, WINDOW_MODES, init_params
from .synth import synth_events
from .train import train_mdm, write_trace

log = logging.getLogger("mdm_spam")

WHICH = ("mdm", "kgram", "graph", "all")
CONFIG_NAME = "config.json"


class UsageError(Exception):
    pass


class DomainError(Exception):
    pass


# ------------------------------------------------------------------ parser

def _add(parser, *flags, dest, type=None, choices=None, help=None):
    parser.add_argument(*flags, dest=dest, type=type, choices=choices,
                        default=None, help=help)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mdm-spam",
                                     description="Spammer detection from multi-relational activity logs.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    _add(common, "--config", dest="config", help="JSON file with RunConfig fields")
    _add(common, "--out", dest="out", help="output directory")
    _add(common, "--seed", dest="seed", type=int)

    data = argparse.ArgumentParser(add_help=False)
    _add(data, "--events", dest="events", help="timestamp,src,dst,relation file")
    _add(data, "--labels", dest="labels", help="user,label file")
    _add(data, "--delimiter", dest="delimiter")

    model = argparse.ArgumentParser(add_help=False)
    _add(model, "--d", dest="d", type=int)
    _add(model, "--n", dest="n", type=int)
    _add(model, "--k", dest="k", type=int)
    _add(model, "--L", dest="L", type=int)
    _add(model, "--window", dest="window", choices=WINDOW_MODES)
    _add(model, "--relation-sum", dest="relation_sum", choices=RELATION_SUMS)
    _add(model, "--components", dest="components", choices=COMPONENTS)
    _add(model, "--lambda", dest="lam", type=float)
    _add(model, "--epochs", dest="epochs", type=int)
    _add(model, "--lr", dest="lr", type=float)
    _add(model, "--batch-pairs", dest="batch_pairs", type=int)
    _add(model, "--embed-epochs", dest="embed_epochs", type=int)
    _add(model, "--embed-lr", dest="embed_lr", type=float)
    _add(model, "--embed-target", dest="embed_target", choices=("current", "next"))

    p = sub.add_parser("synth", parents=[common], help="write a synthetic corpus")
    _add(p, "--users", dest="users", type=int)
    _add(p, "--spam", dest="spam", type=float)
    _add(p, "--mean-length", dest="mean_length", type=float)

    sub.add_parser("train", parents=[common, data, model],
                   help="pre-train embeddings and fit the detection model")

    p = sub.add_parser("features", parents=[common, data],
                       help="write a per-user feature matrix")
    _add(p, "--checkpoint", dest="checkpoint")
    _add(p, "--which", dest="which", choices=WHICH)
    _add(p, "--feature-mode", dest="feature_mode", choices=FEATURE_MODES)

    p = sub.add_parser("eval", parents=[common],
                       help="fit logistic regression over several split seeds")
    _add(p, "--features", dest="features")
    _add(p, "--labels", dest="labels")
    _add(p, "--seeds", dest="seeds", type=int)
    _add(p, "--test-fraction", dest="test_fraction", type=float)
    _add(p, "--C", dest="C", type=float)
    _add(p, "--threshold", dest="threshold", type=float)
    return parser


def effective_config(args: argparse.Namespace) -> RunConfig:
    file_values = load_config_file(args.config) if args.config else None
    flags = {f.name: getattr(args, f.name) for f in fields(RunConfig) if hasattr(args, f.name)}
    return resolve(file_values, flags)


# ----------------------------------------------------------------- helpers

def _require(cfg: RunConfig, *names):
    for name in names:
        if getattr(cfg, name) is None:
            raise UsageError(f"--{name.replace('_', '-')} is required")


def _out_dir(cfg: RunConfig, command: str) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / CONFIG_NAME).write_text(cfg.to_json(command), encoding="utf-8")
    return out


def _load(cfg: RunConfig):
    parsed = parse_events(cfg.events, cfg.delimiter)
    for r in parsed.rejects:
        log.warning("line %d rejected (%s): %s", r.line_no, r.reason, r.text)
    labels = parse_labels(cfg.labels, cfg.delimiter) if cfg.labels else {}
    return build_sequences(parsed.events, labels), parsed.events


def _check_classes(corpus: Corpus) -> None:
    present = {s.label for s in corpus.sequences}
    if SPAMMER not in present or NORMAL not in present:
        raise DomainError("labels must contain both spammers and normal users")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_matrix(path, users, names, X) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(["user", *names]) + "\n")
        for u, row in zip(users, X):
            fh.write(",".join([str(u), *map(_fmt, row)]) + "\n")


def read_matrix(path):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0] or rows[0][0] != "user":
        raise DomainError(f"{path}: expected a header starting with 'user'")
    names = rows[0][1:]
    body = [r for r in rows[1:] if r]
    try:
        users = np.array([int(r[0]) for r in body], dtype=np.int64)
        X = np.array([[float(v) for v in r[1:]] for r in body], dtype=float)
    except ValueError as exc:
        raise DomainError(f"{path}: {exc}") from exc
    if X.size and X.shape[1] != len(names):
        raise DomainError(f"{path}: ragged rows")
    return users, names, X.reshape(len(body), len(names))


def family_of(column: str) -> str:
    if column.startswith("mdm_"):
        return "mdm"
    if column.startswith("bigram_"):
        return "kgram"
    if re.match(r"r\d+_", column):
        return "graph"
    return "custom"


# ---------------------------------------------------------------- commands

def cmd_synth(cfg: RunConfig) -> None:
    _require(cfg, "out")
    out = _out_dir(cfg, "synth")
    events, labels = synth_events(cfg.synth_config())
    write_events(events, out / "events.csv", cfg.delimiter)
    write_labels(labels, out / "labels.csv", cfg.delimiter)
    log.info("wrote %d events for %d users", len(events), len(labels))


def cmd_train(cfg: RunConfig) -> None:
    _require(cfg, "out", "events", "labels")
    corpus, _ = _load(cfg)
    corpus = labeled(corpus)
    _check_classes(corpus)
    out = _out_dir(cfg, "train")
    exp = cfg.experiment_config()
    embed = pretrain(corpus, exp)
    with open(out / "embed_trace.csv", "w", encoding="utf-8") as fh:
        fh.write("epoch,loss\n")
        for i, loss in enumerate(embed.losses, 1):
            fh.write(f"{i},{loss!r}\n")
    result = train_mdm(corpus, init_params(exp.mdm, cfg.seed, embed=embed.params), exp.train)
    checkpoint.save(result.params, out / "model.mdm")
    write_trace(result.trace, out / "loss_trace.csv")


def cmd_features(cfg: RunConfig) -> None:
    _require(cfg, "out", "events")
    which = ("mdm", "kgram", "graph") if cfg.which == "all" else (cfg.which,)
    if "mdm" in which and cfg.checkpoint is None:
        raise UsageError("--checkpoint is required for mdm features")
    params = checkpoint.load(cfg.checkpoint) if "mdm" in which else None
    corpus, events = _load(cfg)
    if cfg.labels:
        corpus = labeled(corpus)
    if not corpus.sequences:
        raise DomainError("no users to featurize")
    out = _out_dir(cfg, "features")
    blocks, names = [], []
    for fam in which:
        if fam == "mdm":
            X, cols = mdm_matrix(corpus, params, cfg.feature_mode)
        elif fam == "kgram":
            X, cols = kgram_matrix(corpus)
        else:
            X, cols = graph_matrix(corpus, events)
        blocks.append(X)
        names.extend(cols)
    users = [s.user for s in corpus.sequences]
    write_matrix(out / "features.csv", users, names, np.hstack(blocks))


def cmd_eval(cfg: RunConfig) -> None:
    _require(cfg, "out", "features", "labels")
    users, names, X = read_matrix(cfg.features)
    labels = parse_labels(cfg.labels, cfg.delimiter)
    keep = np.array([u in labels for u in users], dtype=bool)
    users, X = users[keep], X[keep]
    y = np.array([labels[int(u)] for u in users], dtype=int)
    if len(set(y.tolist())) < 2:
        raise DomainError("labels must contain both spammers and normal users")
    groups: dict[str, list[int]] = {}
    for j, name in enumerate(names):
        groups.setdefault(family_of(name), []).append(j)
    if len(groups) > 1:
        groups["all"] = list(range(len(names)))
    out = _out_dir(cfg, "eval")
    lr_cfg = LrConfig(C=cfg.C)
    seeds = range(cfg.seeds)
    results = {fam: evaluate_fixed(X[:, cols], y, users, seeds, cfg.test_fraction,
                                  lr_cfg, cfg.threshold)
               for fam, cols in groups.items()}
    (out / "metrics.csv").write_text("\n".join(report_rows(results)) + "\n", encoding="utf-8")


COMMANDS = {"synth": cmd_synth, "train": cmd_train,
            "features": cmd_features, "eval": cmd_eval}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = effective_config(args)
        COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (DomainError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
