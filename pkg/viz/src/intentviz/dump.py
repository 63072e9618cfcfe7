"""Parse embedding dumps written by ``dualintent-sr export``.

The dump is a TSV with one embedding per line::

    kind <TAB> id <TAB> v0 <TAB> ... <TAB> v{d-1}

where ``kind`` is one of

* ``user``   — a user's propagated state (its inherent preference point),
* ``item``   — an item's propagated state,
* ``intent`` — a user state translated by a demand intent (one row per
  exported interaction record).

All rows must share one dimensionality, and a useful dump must contain items
plus at least one of the two intent-bearing kinds, because every comparison
this package draws is "how close does a preference point sit to the items".
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import VizError

#: Canonical kind order; subsampling, stacking, and legends all follow it.
KINDS = ("user", "item", "intent")


@dataclass(frozen=True)
class EmbeddingDump:
    """Embeddings grouped by kind, in file order within each kind."""

    ids: dict[str, np.ndarray]  # kind -> (n_kind,) int64 row ids
    vectors: dict[str, np.ndarray]  # kind -> (n_kind, dim) float64
    dim: int

    @property
    def kinds(self) -> tuple[str, ...]:
        return tuple(k for k in KINDS if k in self.vectors)

    def count(self, kind: str) -> int:
        return self.ids[kind].shape[0] if kind in self.ids else 0


def load_dump(path: str | Path) -> EmbeddingDump:
    """Read and validate an export TSV; raise :class:`VizError` on bad input."""
    path = Path(path)
    if not path.is_file():
        raise VizError(f"input file not found: {path}")

    ids: dict[str, list[int]] = {}
    rows: dict[str, list[list[float]]] = {}
    dim: int | None = None
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) < 3:
                raise VizError(
                    f"{path}:{lineno}: expected kind, id and at least one value, "
                    f"got {len(parts)} fields"
                )
            kind = parts[0]
            if kind not in KINDS:
                raise VizError(
                    f"{path}:{lineno}: unknown kind {kind!r} (expected one of {', '.join(KINDS)})"
                )
            try:
                row_id = int(parts[1])
            except ValueError:
                raise VizError(f"{path}:{lineno}: id {parts[1]!r} is not an integer") from None
            try:
                values = [float(v) for v in parts[2:]]
            except ValueError:
                raise VizError(f"{path}:{lineno}: non-numeric embedding value") from None
            if dim is None:
                dim = len(values)
            elif len(values) != dim:
                raise VizError(
                    f"{path}:{lineno}: row has {len(values)} values, earlier rows had {dim}"
                )
            ids.setdefault(kind, []).append(row_id)
            rows.setdefault(kind, []).append(values)

    if dim is None:
        raise VizError(f"{path}: no embedding rows found")
    if "item" not in rows:
        raise VizError(f"{path}: dump contains no 'item' rows")
    if "user" not in rows and "intent" not in rows:
        raise VizError(f"{path}: dump needs 'user' or 'intent' rows alongside the items")

    return EmbeddingDump(
        ids={k: np.asarray(v, dtype=np.int64) for k, v in ids.items()},
        vectors={k: np.asarray(v, dtype=np.float64) for k, v in rows.items()},
        dim=dim,
    )
