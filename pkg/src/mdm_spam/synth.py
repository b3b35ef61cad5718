"""Seeded synthetic multi-relational activity logs with labelled spammers.

Normal users walk a first-order chain over social motifs (view profile ->
add friend -> message / gift); some of them also play a game session (a run
of one game relation) somewhere before their last few actions. Spammers
carry a camouflage prefix drawn from the same chain and finish with a burst
of repeated relations (pet game / message runs), sometimes broken by a
short imitation of a normal step. Bigram counts of gamers and spammers
overlap; what separates them is where the run sits.

All tables below are versioned: changing any of them changes every
generated corpus, so bump ``SYNTH_VERSION`` with them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ingest import NORMAL, SPAMMER, Corpus, Event, build_sequences

SYNTH_VERSION = 1
DAY_START = 1398297600
DAY_SECONDS = 86400

# Relation ids: 1 gift, 2 add friend, 3 view profile, 4 message,
# 5 pet game, 6 meet-me game, 7 report abuse.
NORMAL_START = np.array([0.08, 0.12, 0.34, 0.14, 0.18, 0.12, 0.02])

NORMAL_TRANSITIONS = np.array([
    #  1     2     3     4     5     6     7
    [0.10, 0.08, 0.20, 0.42, 0.10, 0.08, 0.02],  # gift
    [0.18, 0.10, 0.14, 0.42, 0.08, 0.06, 0.02],  # add friend
    [0.08, 0.34, 0.18, 0.20, 0.10, 0.08, 0.02],  # view profile
    [0.14, 0.10, 0.28, 0.18, 0.14, 0.14, 0.02],  # message
    [0.10, 0.12, 0.26, 0.18, 0.15, 0.17, 0.02],  # pet game
    [0.04, 0.10, 0.16, 0.12, 0.08, 0.48, 0.02],  # meet-me game
    [0.06, 0.08, 0.30, 0.26, 0.14, 0.14, 0.02],  # report abuse
])

# Closing bursts of spammer sequences.
SPAM_TAILS = (
    (5, 5, 5, 5, 5, 5),
    (5, 5, 5, 5, 5, 4),
    (4, 4, 3, 5, 4, 4),
)
SPAM_TAIL_WEIGHTS = np.array([0.4, 0.3, 0.3])

# One- or two-step copies of normal behaviour used as camouflage.
IMITATION_STEPS = ((2, 4), (1, 4), (3,), (2,))
IMITATION_PROB = 0.15
IMITATING_TAILS = (0, 1)   # only the single-relation bursts get camouflaged
# The repeated relation usually starts before the final pattern.
BURST_RELATION = (5, 5, 4)
BURST_EXTRA_MEAN = 5.0

# Game sessions of normal users; they end at least SESSION_GAP actions
# before the end of the sequence.
SESSION_PROB = 0.35
SESSION_RELATIONS = (5, 6, 4)
SESSION_WEIGHTS = np.array([0.5, 0.2, 0.3])
SESSION_MIN = 4
SESSION_EXTRA_MEAN = 4.0
SESSION_GAP = 6

COMMUNITY_SIZE = 50
CIRCLE_SIZE = (5, 15)


@dataclass(frozen=True)
class SynthConfig:
    n_users: int = 1000
    spam_fraction: float = 0.0445
    mean_length: float = 21.0
    seed: int = 0


def _walk(rng, length: int) -> list[int]:
    if length <= 0:
        return []
    seq = [int(rng.choice(7, p=NORMAL_START)) + 1]
    for _ in range(length - 1):
        seq.append(int(rng.choice(7, p=NORMAL_TRANSITIONS[seq[-1] - 1])) + 1)
    return seq


def _normal(rng, length: int) -> list[int]:
    if rng.random() < SESSION_PROB:
        run = SESSION_MIN + int(rng.poisson(SESSION_EXTRA_MEAN))
        rel = SESSION_RELATIONS[int(rng.choice(len(SESSION_RELATIONS), p=SESSION_WEIGHTS))]
        if length >= run + SESSION_GAP:
            before = int(rng.integers(0, length - run - SESSION_GAP + 1))
            after = length - run - before
            return _walk(rng, before) + [rel] * run + _walk(rng, after)
    return _walk(rng, length)


def _spam_tail(rng, tail_len: int) -> list[int]:
    pick = int(rng.choice(len(SPAM_TAILS), p=SPAM_TAIL_WEIGHTS))
    tail = list(SPAM_TAILS[pick])
    if pick in IMITATING_TAILS and rng.random() < IMITATION_PROB:
        step = IMITATION_STEPS[int(rng.integers(len(IMITATION_STEPS)))]
        # inside the burst, never at its head
        at = int(rng.integers(1, len(tail) - len(step)))
        tail[at:at + len(step)] = step
    return pick, tail[len(tail) - tail_len:]


def synth_sequences(cfg: SynthConfig) -> tuple[dict[int, list[int]], dict[int, int]]:
    """Relation sequences and labels keyed by user id ``0..n_users-1``."""
    if cfg.n_users <= 0:
        raise ValueError("n_users must be positive")
    if not 0.0 < cfg.spam_fraction < 1.0:
        raise ValueError("spam_fraction must lie in (0, 1)")
    if cfg.mean_length < 2:
        raise ValueError("mean_length must be at least 2")
    rng = np.random.default_rng(cfg.seed)
    is_spam = rng.random(cfg.n_users) < cfg.spam_fraction
    tail_len = int(min(len(SPAM_TAILS[0]), max(2, round(cfg.mean_length))))
    seqs: dict[int, list[int]] = {}
    labels: dict[int, int] = {}
    for user in range(cfg.n_users):
        if is_spam[user]:
            pick, tail = _spam_tail(rng, tail_len)
            extra = int(rng.poisson(BURST_EXTRA_MEAN))
            prefix = int(rng.poisson(max(cfg.mean_length - tail_len - BURST_EXTRA_MEAN, 0.0)))
            seqs[user] = _walk(rng, prefix) + [BURST_RELATION[pick]] * extra + tail
            labels[user] = SPAMMER
        else:
            seqs[user] = _normal(rng, 2 + int(rng.poisson(cfg.mean_length - 2)))
            labels[user] = NORMAL
    return seqs, labels


def synth_events(cfg: SynthConfig) -> tuple[list[Event], dict[int, int]]:
    """Timestamped events for a synthetic day plus per-user labels.

    Normal users direct their activity at a small circle inside their
    community; spammers pick targets uniformly across all users.
    """
    seqs, labels = synth_sequences(cfg)
    # independent stream so sequence content does not depend on target choice
    rng = np.random.default_rng([cfg.seed, SYNTH_VERSION])
    n = cfg.n_users
    rows = []
    for user in range(n):
        seq = seqs[user]
        times = np.sort(rng.integers(0, DAY_SECONDS, size=len(seq)))
        if labels[user] == SPAMMER or n < 3:
            pool = None
        else:
            lo = (user // COMMUNITY_SIZE) * COMMUNITY_SIZE
            members = np.arange(lo, min(lo + COMMUNITY_SIZE, n))
            members = members[members != user]
            size = min(len(members), int(rng.integers(*CIRCLE_SIZE)))
            pool = rng.choice(members, size=size, replace=False) if size else None
        for t, rel in zip(times, seq):
            if pool is None:
                dst = int(rng.integers(n - 1)) if n > 1 else user
                if n > 1 and dst >= user:
                    dst += 1
            else:
                dst = int(pool[rng.integers(len(pool))])
            rows.append((int(t), user, dst, rel))
    # stable sort: equal timestamps keep per-user order
    rows.sort(key=lambda r: r[0])
    events = [Event(DAY_START + t, src, dst, rel) for t, src, dst, rel in rows]
    return events, labels


def synth_generate(cfg: SynthConfig) -> Corpus:
    events, labels = synth_events(cfg)
    return build_sequences(events, labels)
