"""Interaction corpus: records, vocabulary, history profiles, and TSV I/O.

A record is one user-item interaction on a given day, tagged with the scenario
it came from: ``S`` (search, carries the issued query terms) or ``R``
(recommendation, carries no query).  The position of a record in its list is
its *record index*; recency rules and graph adjacency ordering both key off
that index, so parsing and splitting preserve input order everywhere.

File format (one record per line, UTF-8, tab-separated)::

    S|R <TAB> user_id <TAB> item_id <TAB> day <TAB> space-joined terms

The terms field is empty for ``R`` rows.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParseError, ValidationError

__all__ = [
    "SEARCH",
    "REC",
    "RawInteraction",
    "InteractionRecord",
    "Vocabulary",
    "HistoryProfiles",
    "Split",
    "read_raw_interactions",
    "write_raw_interactions",
    "encode_records",
    "parse_interactions",
    "serialize_interactions",
    "chronological_split",
    "assemble_history_profiles",
    "infer_counts",
]

SEARCH = "S"
REC = "R"


@dataclass(frozen=True, slots=True)
class RawInteraction:
    """Record with query terms still in surface (string) form."""

    scenario: str
    user_id: int
    item_id: int
    day: int
    query_terms: tuple[str, ...] = ()


@dataclass(frozen=True, slots=True)
class InteractionRecord:
    """Record with query terms encoded as vocabulary ids."""

    scenario: str
    user_id: int
    item_id: int
    day: int
    query_terms: tuple[int, ...] = ()

    @property
    def is_search(self) -> bool:
        return self.scenario == SEARCH


def _validate_fields(scenario, user_id, item_id, day, has_terms, where: str):
    if scenario not in (SEARCH, REC):
        raise ValidationError(f"{where}: scenario must be 'S' or 'R', got {scenario!r}")
    if user_id < 0 or item_id < 0:
        raise ValidationError(f"{where}: negative user or item id ({user_id}, {item_id})")
    if day < 0:
        raise ValidationError(f"{where}: negative day index {day}")
    if scenario == SEARCH and not has_terms:
        raise ValidationError(f"{where}: search record has no query terms")
    if scenario == REC and has_terms:
        raise ValidationError(f"{where}: recommendation record carries query terms")


def read_raw_interactions(path) -> list[RawInteraction]:
    """Parse a TSV interaction file; errors name the offending line."""
    path = Path(path)
    records: list[RawInteraction] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 5:
                raise ParseError(
                    f"{path}:{lineno}: expected 5 tab-separated fields, got {len(fields)}"
                )
            scenario, user_s, item_s, day_s, terms_s = fields
            try:
                user_id, item_id, day = int(user_s), int(item_s), int(day_s)
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: non-integer id or day field") from exc
            terms = tuple(t for t in terms_s.split(" ") if t) if terms_s else ()
            try:
                _validate_fields(scenario, user_id, item_id, day, bool(terms), "record")
            except ValidationError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
            records.append(RawInteraction(scenario, user_id, item_id, day, terms))
    return records


def write_raw_interactions(records: list[RawInteraction], path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(
                f"{rec.scenario}\t{rec.user_id}\t{rec.item_id}\t{rec.day}\t"
                f"{' '.join(rec.query_terms)}\n"
            )


class Vocabulary:
    """Term <-> id mapping with reserved padding and unknown slots.

    Ids 0 and 1 are reserved for ``<pad>`` and ``<unk>``; real terms get ids
    from 2 upward in order of decreasing training frequency, ties broken
    lexicographically.  ``max_size`` caps the total size including the two
    reserved slots.
    """

    PAD_ID = 0
    UNK_ID = 1
    PAD_TOKEN = "<pad>"
    UNK_TOKEN = "<unk>"

    def __init__(self, terms_in_id_order: list[str]):
        self._id_to_term = [self.PAD_TOKEN, self.UNK_TOKEN, *terms_in_id_order]
        self._term_to_id = {t: i for i, t in enumerate(self._id_to_term)}
        if len(self._term_to_id) != len(self._id_to_term):
            raise ValidationError("vocabulary contains duplicate terms")

    @classmethod
    def from_records(cls, records: list[RawInteraction], max_size: int = 5000) -> "Vocabulary":
        """Build from the query terms of search records (training split)."""
        if max_size < 2:
            raise ConfigError(f"vocabulary max_size must be >= 2, got {max_size}")
        counts: Counter[str] = Counter()
        for rec in records:
            if rec.scenario == SEARCH:
                counts.update(rec.query_terms)
        counts.pop(cls.PAD_TOKEN, None)
        counts.pop(cls.UNK_TOKEN, None)
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        kept = [term for term, _ in ranked[: max_size - 2]]
        return cls(kept)

    def __len__(self) -> int:
        return len(self._id_to_term)

    def __contains__(self, term: str) -> bool:
        return term in self._term_to_id

    def id_of(self, term: str) -> int:
        return self._term_to_id.get(term, self.UNK_ID)

    def term_of(self, term_id: int) -> str:
        if not 0 <= term_id < len(self._id_to_term):
            raise ValidationError(f"term id {term_id} outside vocabulary of size {len(self)}")
        return self._id_to_term[term_id]

    def save(self, path) -> None:
        path = Path(path)
        with path.open("w", encoding="utf-8") as fh:
            for term_id, term in enumerate(self._id_to_term):
                fh.write(f"{term}\t{term_id}\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        path = Path(path)
        entries: list[tuple[str, int]] = []
        with path.open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise ParseError(f"{path}:{lineno}: expected 'term<TAB>id'")
                try:
                    entries.append((parts[0], int(parts[1])))
                except ValueError as exc:
                    raise ParseError(f"{path}:{lineno}: non-integer id") from exc
        entries.sort(key=lambda kv: kv[1])
        expected_ids = list(range(len(entries)))
        if [i for _, i in entries] != expected_ids:
            raise ParseError(f"{path}: vocabulary ids are not contiguous from 0")
        if len(entries) < 2 or entries[0][0] != cls.PAD_TOKEN or entries[1][0] != cls.UNK_TOKEN:
            raise ParseError(f"{path}: first two entries must be the reserved pad/unk tokens")
        return cls([t for t, _ in entries[2:]])


def encode_records(records: list[RawInteraction], vocab: Vocabulary) -> list[InteractionRecord]:
    """Map query terms to vocabulary ids (unknown terms become the UNK id)."""
    return [
        InteractionRecord(
            rec.scenario,
            rec.user_id,
            rec.item_id,
            rec.day,
            tuple(vocab.id_of(t) for t in rec.query_terms),
        )
        for rec in records
    ]


def parse_interactions(path, vocab: Vocabulary) -> list[InteractionRecord]:
    return encode_records(read_raw_interactions(path), vocab)


def serialize_interactions(records: list[InteractionRecord], vocab: Vocabulary, path) -> None:
    """Inverse of `parse_interactions`; unknown ids render as the UNK token."""
    raw = [
        RawInteraction(
            rec.scenario,
            rec.user_id,
            rec.item_id,
            rec.day,
            tuple(vocab.term_of(i) for i in rec.query_terms),
        )
        for rec in records
    ]
    write_raw_interactions(raw, path)


@dataclass(slots=True)
class Split:
    train: list
    valid: list
    test: list


def chronological_split(records, train_days: int = 6, valid_days: int = 1, test_days: int = 1) -> Split:
    """Partition records by day index into consecutive train/valid/test windows.

    The corpus must cover exactly ``train_days + valid_days + test_days``
    distinct days; anything else indicates a config/data mismatch.  Relative
    record order is preserved inside every split.
    """
    if min(train_days, valid_days, test_days) < 1:
        raise ConfigError(
            f"split lengths must be >= 1 day, got {train_days}/{valid_days}/{test_days}"
        )
    days = sorted({rec.day for rec in records})
    expected = train_days + valid_days + test_days
    if len(days) != expected:
        raise ConfigError(
            f"corpus covers {len(days)} distinct days but the split needs exactly {expected}"
        )
    train_cut = set(days[:train_days])
    valid_cut = set(days[train_days : train_days + valid_days])
    split = Split([], [], [])
    for rec in records:
        if rec.day in train_cut:
            split.train.append(rec)
        elif rec.day in valid_cut:
            split.valid.append(rec)
        else:
            split.test.append(rec)
    return split


@dataclass(slots=True)
class HistoryProfiles:
    """Fixed-length recent-query context per user and per item.

    ``user_terms[u]`` holds the user's most recent distinct query term ids,
    newest first; ``item_terms[i]`` holds the terms most frequently used to
    find the item.  Short histories are padded with the PAD id.
    """

    user_terms: np.ndarray  # int64 (n_users, user_len)
    item_terms: np.ndarray  # int64 (n_items, item_len)

    @property
    def user_mask(self) -> np.ndarray:
        return self.user_terms != Vocabulary.PAD_ID

    @property
    def item_mask(self) -> np.ndarray:
        return self.item_terms != Vocabulary.PAD_ID


def assemble_history_profiles(
    train_records: list[InteractionRecord],
    vocab: Vocabulary,
    n_users: int,
    n_items: int,
    user_len: int = 3,
    item_len: int = 10,
) -> HistoryProfiles:
    """Build user/item query-term profiles from training search records.

    User profile: walk the user's search records from newest to oldest (by
    record index) and collect the first ``user_len`` distinct term ids.

    Item profile: rank terms of search records that hit the item by descending
    frequency, breaking ties by most recent occurrence and then by surface
    form; keep the top ``item_len``.
    """
    if user_len < 1 or item_len < 1:
        raise ConfigError(f"profile lengths must be >= 1, got {user_len}/{item_len}")
    user_terms = np.full((n_users, user_len), Vocabulary.PAD_ID, dtype=np.int64)
    item_terms = np.full((n_items, item_len), Vocabulary.PAD_ID, dtype=np.int64)

    per_user: dict[int, list[tuple[int, ...]]] = {}
    per_item_counts: dict[int, Counter[int]] = {}
    per_item_last: dict[int, dict[int, int]] = {}
    for idx, rec in enumerate(train_records):
        if not rec.is_search:
            continue
        if rec.user_id >= n_users:
            raise ValidationError(f"record user id {rec.user_id} >= n_users {n_users}")
        if rec.item_id >= n_items:
            raise ValidationError(f"record item id {rec.item_id} >= n_items {n_items}")
        per_user.setdefault(rec.user_id, []).append(rec.query_terms)
        counts = per_item_counts.setdefault(rec.item_id, Counter())
        last = per_item_last.setdefault(rec.item_id, {})
        for term in rec.query_terms:
            counts[term] += 1
            last[term] = idx

    for user_id, term_lists in per_user.items():
        seen: list[int] = []
        for terms in reversed(term_lists):
            for term in terms:
                if term not in seen:
                    seen.append(term)
                    if len(seen) == user_len:
                        break
            if len(seen) == user_len:
                break
        user_terms[user_id, : len(seen)] = seen

    for item_id, counts in per_item_counts.items():
        last = per_item_last[item_id]
        ranked = sorted(
            counts,
            key=lambda t: (-counts[t], -last[t], vocab.term_of(t)),
        )[:item_len]
        item_terms[item_id, : len(ranked)] = ranked

    return HistoryProfiles(user_terms=user_terms, item_terms=item_terms)


def infer_counts(*record_lists) -> tuple[int, int]:
    """Smallest (n_users, n_items) covering every record in the given lists."""
    max_user = -1
    max_item = -1
    for records in record_lists:
        for rec in records:
            max_user = max(max_user, rec.user_id)
            max_item = max(max_item, rec.item_id)
    return max_user + 1, max_item + 1
