"""Event logs, labels and per-user relational sequences."""

from __future__ import annotations

import io
import logging
import os
from dataclasses import dataclass, field
from typing import Iterable, Mapping

log = logging.getLogger(__name__)

# Relation catalogue of the activity logs; id 0 is reserved for padding.
RELATIONS = {
    1: "Give a Gift",
    2: "Add Friend",
    3: "View Profile",
    4: "Message",
    5: "Pet Game",
    6: "Meet-Me Game",
    7: "Report Abuse",
}
N_RELATIONS = len(RELATIONS)
PAD = 0

SPAMMER = 1
NORMAL = 0

EVENT_HEADER = ("timestamp", "src", "dst", "relation")
LABEL_HEADER = ("user_id", "label")


@dataclass(frozen=True)
class Event:
    timestamp: int
    src: int
    dst: int
    relation: int

    @property
    def is_self(self) -> bool:
        return self.src == self.dst


@dataclass(frozen=True)
class Reject:
    line_no: int
    text: str
    reason: str


@dataclass
class ParseResult:
    events: list[Event] = field(default_factory=list)
    rejects: list[Reject] = field(default_factory=list)


@dataclass(frozen=True)
class UserSequence:
    user: int
    items: tuple[int, ...]
    label: int | None = None

    def __len__(self):
        return len(self.items)

    @property
    def relations(self) -> frozenset[int]:
        return frozenset(self.items)


@dataclass(frozen=True)
class CorpusStats:
    n_users: int
    n_spammers: int
    n_normals: int
    n_interactions: int
    mean_length: float
    n_self_interactions: int = 0

    @property
    def spam_fraction(self) -> float:
        return self.n_spammers / self.n_users if self.n_users else 0.0


@dataclass
class Corpus:
    sequences: list[UserSequence]
    relation_count: int = N_RELATIONS
    n_self_interactions: int = 0

    @property
    def stats(self) -> CorpusStats:
        # always recomputed from the sequences
        lengths = [len(s) for s in self.sequences]
        n_spam = sum(1 for s in self.sequences if s.label == SPAMMER)
        n_norm = sum(1 for s in self.sequences if s.label == NORMAL)
        return CorpusStats(
            n_users=len(self.sequences),
            n_spammers=n_spam,
            n_normals=n_norm,
            n_interactions=sum(lengths),
            mean_length=sum(lengths) / len(lengths) if lengths else 0.0,
            n_self_interactions=self.n_self_interactions,
        )

    def labels(self) -> dict[int, int | None]:
        return {s.user: s.label for s in self.sequences}

    def subset(self, users: Iterable[int]) -> "Corpus":
        keep = set(users)
        return Corpus([s for s in self.sequences if s.user in keep],
                      self.relation_count)

    def by_user(self) -> dict[int, UserSequence]:
        return {s.user: s for s in self.sequences}


def _open_text(source):
    if isinstance(source, (str, os.PathLike)):
        return open(source, "r", encoding="utf-8", newline="")
    if isinstance(source, io.IOBase) or hasattr(source, "read"):
        return source
    raise TypeError(f"cannot read events from {type(source).__name__}")


def _is_int(text: str) -> bool:
    try:
        int(text)
    except ValueError:
        return False
    return True


def parse_events(source, delimiter: str = ",",
                 n_relations: int = N_RELATIONS) -> ParseResult:
    """Read ``timestamp,src,dst,relation`` lines in file order.

    A first non-empty line whose leading field is not an integer is taken as
    a header. Bad lines are collected in ``rejects`` with their 1-based line
    number; I/O failures propagate.
    """
    result = ParseResult()
    fh = _open_text(source)
    close = fh is not source
    try:
        seen_content = False
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            fields = [f.strip() for f in line.split(delimiter)]
            if not seen_content:
                seen_content = True
                if not _is_int(fields[0]):
                    continue
            if len(fields) != 4 or not all(_is_int(f) for f in fields):
                result.rejects.append(Reject(line_no, line, "malformed"))
                continue
            ts, src, dst, rel = (int(f) for f in fields)
            if not 1 <= rel <= n_relations:
                result.rejects.append(
                    Reject(line_no, line, f"relation {rel} outside 1..{n_relations}"))
                continue
            if src < 0 or dst < 0:
                result.rejects.append(Reject(line_no, line, "negative user id"))
                continue
            result.events.append(Event(ts, src, dst, rel))
    finally:
        if close:
            fh.close()
    if result.rejects:
        log.warning("rejected %d event line(s); first at line %d (%s)",
                    len(result.rejects), result.rejects[0].line_no,
                    result.rejects[0].reason)
    return result


def parse_labels(source, delimiter: str = ",") -> dict[int, int]:
    """Read ``user_id,label`` lines (label 1 = spammer, 0 = normal)."""
    labels: dict[int, int] = {}
    fh = _open_text(source)
    close = fh is not source
    try:
        seen_content = False
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            fields = [f.strip() for f in line.split(delimiter)]
            if not seen_content:
                seen_content = True
                if not _is_int(fields[0]):
                    continue
            if len(fields) != 2 or fields[1] not in ("0", "1") or not _is_int(fields[0]):
                raise ValueError(f"bad label line {line_no}: {line!r}")
            labels[int(fields[0])] = int(fields[1])
    finally:
        if close:
            fh.close()
    return labels


def _write_lines(lines, target) -> None:
    if isinstance(target, (str, os.PathLike)):
        with open(target, "w", encoding="utf-8", newline="") as fh:
            fh.writelines(lines)
    else:
        target.writelines(lines)


def write_events(events: Iterable[Event], target, delimiter: str = ",") -> None:
    """Header plus one line per event; ``target`` is a path or text stream."""
    head = [delimiter.join(EVENT_HEADER) + "\n"]
    _write_lines(head + [delimiter.join(map(str, (e.timestamp, e.src, e.dst, e.relation))) + "\n"
                         for e in events], target)


def write_labels(labels: Mapping[int, int], target, delimiter: str = ",") -> None:
    head = [delimiter.join(LABEL_HEADER) + "\n"]
    _write_lines(head + [f"{u}{delimiter}{labels[u]}\n" for u in sorted(labels)], target)


def build_sequences(events: Iterable[Event], labels: Mapping[int, int] | None = None,
                    n_relations: int = N_RELATIONS) -> Corpus:
    """Group events by source user, ordered by (timestamp, input position).

    Users seen only as destinations get no sequence. Users missing from
    ``labels`` are kept with label ``None``.
    """
    labels = labels or {}
    per_user: dict[int, list[tuple[int, int, int]]] = {}
    n_self = 0
    for idx, e in enumerate(events):
        per_user.setdefault(e.src, []).append((e.timestamp, idx, e.relation))
        n_self += e.is_self
    sequences = []
    for user in sorted(per_user):
        rows = sorted(per_user[user])
        sequences.append(UserSequence(user, tuple(r for _, _, r in rows),
                                      labels.get(user)))
    return Corpus(sequences, n_relations, n_self)


def load_corpus(events_path, labels_path=None, delimiter: str = ",",
                n_relations: int = N_RELATIONS) -> tuple[Corpus, ParseResult]:
    parsed = parse_events(events_path, delimiter, n_relations)
    labels = parse_labels(labels_path, delimiter) if labels_path else {}
    return build_sequences(parsed.events, labels, n_relations), parsed
