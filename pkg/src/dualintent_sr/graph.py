"""Bipartite interaction graph with scenario-tagged parallel edges.

Every training record becomes one edge between its user and item, so a pair
that interacted five times contributes five parallel edges — multiplicity is
signal for the neighborhood averaging downstream.  Edges are canonically
ordered: all search edges first, then all recommendation edges, each block in
record-index order.  That fixed layout lets training code address "the intent
carried by edge e" as a plain row index into a (n_edges, dim) tensor whose
first block holds pooled query intents and whose second block holds generated
intents.

The graph is always built from the training split only; evaluation-time
records must never add edges.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import InteractionRecord, Vocabulary
from .errors import ValidationError

__all__ = ["EdgeView", "InteractionGraph", "write_graph_dump"]


@dataclass(frozen=True, slots=True)
class EdgeView:
    """One edge as seen from a neighborhood query."""

    edge_id: int
    user_id: int
    item_id: int
    scenario: str
    query_terms: tuple[int, ...]
    record_index: int


class InteractionGraph:
    """Edge arrays plus per-node adjacency in deterministic order."""

    def __init__(self, train_records: list[InteractionRecord], n_users: int, n_items: int):
        if n_users < 1 or n_items < 1:
            raise ValidationError(f"graph needs n_users, n_items >= 1, got {n_users}, {n_items}")
        self.n_users = int(n_users)
        self.n_items = int(n_items)

        search_rows: list[tuple[int, InteractionRecord]] = []
        rec_rows: list[tuple[int, InteractionRecord]] = []
        for idx, rec in enumerate(train_records):
            if not 0 <= rec.user_id < n_users:
                raise ValidationError(
                    f"record {idx}: user id {rec.user_id} outside [0, {n_users})"
                )
            if not 0 <= rec.item_id < n_items:
                raise ValidationError(
                    f"record {idx}: item id {rec.item_id} outside [0, {n_items})"
                )
            (search_rows if rec.is_search else rec_rows).append((idx, rec))

        ordered = search_rows + rec_rows
        self.n_search_edges = len(search_rows)
        self.n_edges = len(ordered)
        self.edge_user = np.array([r.user_id for _, r in ordered], dtype=np.int64)
        self.edge_item = np.array([r.item_id for _, r in ordered], dtype=np.int64)
        self.edge_is_search = np.zeros(self.n_edges, dtype=bool)
        self.edge_is_search[: self.n_search_edges] = True
        self.edge_terms: tuple[tuple[int, ...], ...] = tuple(r.query_terms for _, r in ordered)
        self.edge_record_index = np.array([i for i, _ in ordered], dtype=np.int64)

        self._user_adjacency = self._group_by(self.edge_user, self.n_users)
        self._item_adjacency = self._group_by(self.edge_item, self.n_items)

    def _group_by(self, node_of_edge: np.ndarray, n_nodes: int) -> list[np.ndarray]:
        """Incident edge ids per node, sorted by original record index."""
        buckets: list[list[int]] = [[] for _ in range(n_nodes)]
        for edge_id, node in enumerate(node_of_edge):
            buckets[node].append(edge_id)
        out = []
        for bucket in buckets:
            ids = np.array(bucket, dtype=np.int64)
            order = np.argsort(self.edge_record_index[ids], kind="stable")
            out.append(ids[order])
        return out

    # -- neighborhood queries ---------------------------------------------------

    def _views(self, edge_ids: np.ndarray) -> list[EdgeView]:
        return [
            EdgeView(
                edge_id=int(e),
                user_id=int(self.edge_user[e]),
                item_id=int(self.edge_item[e]),
                scenario="S" if self.edge_is_search[e] else "R",
                query_terms=self.edge_terms[e],
                record_index=int(self.edge_record_index[e]),
            )
            for e in edge_ids
        ]

    def user_neighbors(self, user_id: int) -> list[EdgeView]:
        if not 0 <= user_id < self.n_users:
            raise ValidationError(f"unknown user id {user_id}")
        return self._views(self._user_adjacency[user_id])

    def item_neighbors(self, item_id: int) -> list[EdgeView]:
        if not 0 <= item_id < self.n_items:
            raise ValidationError(f"unknown item id {item_id}")
        return self._views(self._item_adjacency[item_id])

    # -- canonical index blocks ---------------------------------------------------

    @property
    def search_edge_ids(self) -> np.ndarray:
        return np.arange(self.n_search_edges, dtype=np.int64)

    @property
    def rec_edge_ids(self) -> np.ndarray:
        return np.arange(self.n_search_edges, self.n_edges, dtype=np.int64)

    def rec_pairs(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Deduplicated (user, item) pairs behind the recommendation edges.

        Returns ``(pair_user, pair_item, pair_of_edge)`` where ``pair_of_edge``
        maps each rec-block edge position to its pair row.  Generated intents
        depend only on the pair, so computing them once per pair and gathering
        by ``pair_of_edge`` is equivalent to per-edge computation.
        """
        users = self.edge_user[self.n_search_edges :]
        items = self.edge_item[self.n_search_edges :]
        key = users * self.n_items + items
        unique_key, pair_of_edge = np.unique(key, return_inverse=True)
        return unique_key // self.n_items, unique_key % self.n_items, pair_of_edge

    def isolated_users(self) -> np.ndarray:
        """Boolean mask of users with no incident training edge."""
        degree = np.bincount(self.edge_user, minlength=self.n_users)
        return degree == 0

    def isolated_items(self) -> np.ndarray:
        degree = np.bincount(self.edge_item, minlength=self.n_items)
        return degree == 0


def write_graph_dump(graph: InteractionGraph, vocab: Vocabulary, path) -> None:
    """Edge list in canonical edge order: user, item, scenario, terms."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for e in range(graph.n_edges):
            scenario = "S" if graph.edge_is_search[e] else "R"
            terms = " ".join(vocab.term_of(t) for t in graph.edge_terms[e])
            fh.write(f"{graph.edge_user[e]}\t{graph.edge_item[e]}\t{scenario}\t{terms}\n")
