"""Joint 2-D reduction of the selected embedding kinds.

All selected kinds are reduced in one t-SNE call rather than one call per
kind: cross-kind distances (intent point vs. item cloud) are the object of
study, and separate reductions would place each kind in an unrelated
coordinate system.  The reducer runs with library-default settings; only the
random state is pinned so a (dump, seed, flags) triple always yields the same
coordinates.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.manifold import TSNE

from .dump import KINDS, EmbeddingDump
from .errors import VizError

#: Default number of rows plotted per kind.
SAMPLE_PER_KIND = 100


@dataclass(frozen=True)
class Projection:
    """2-D coordinates for the sampled rows, tagged with kind and source id."""

    kinds: np.ndarray  # (n,) str kind per projected row
    ids: np.ndarray  # (n,) int64 id copied from the dump
    coords: np.ndarray  # (n, 2) float64

    def points_of(self, kind: str) -> np.ndarray:
        return self.coords[self.kinds == kind]


def parse_kinds(arg: str) -> tuple[str, ...]:
    """Turn a comma-separated kind list into a canonical-order tuple."""
    requested = [part.strip() for part in arg.split(",") if part.strip()]
    if not requested:
        raise VizError("no kinds requested")
    unknown = [k for k in requested if k not in KINDS]
    if unknown:
        raise VizError(
            f"unknown kind(s) {', '.join(sorted(set(unknown)))} "
            f"(expected a subset of {', '.join(KINDS)})"
        )
    return tuple(k for k in KINDS if k in requested)


def reduce_embeddings(
    dump: EmbeddingDump,
    kinds: tuple[str, ...],
    seed: int,
    sample_n: int = SAMPLE_PER_KIND,
) -> Projection:
    """Subsample up to `sample_n` rows per kind and reduce them jointly to 2-D.

    Sampling draws without replacement from one seeded generator, iterating
    kinds in canonical order, so the selection is a pure function of
    (dump, kinds, seed, sample_n).  A kind with fewer rows than `sample_n`
    contributes everything it has, with a warning.
    """
    if sample_n < 1:
        raise VizError(f"sample size must be >= 1, got {sample_n}")
    missing = [k for k in kinds if k not in dump.vectors]
    if missing:
        raise VizError(f"dump has no rows of kind(s): {', '.join(missing)}")

    rng = np.random.default_rng(seed)
    chosen_kinds: list[np.ndarray] = []
    chosen_ids: list[np.ndarray] = []
    chosen_vecs: list[np.ndarray] = []
    for kind in kinds:  # canonical order by construction of parse_kinds
        vecs = dump.vectors[kind]
        n = vecs.shape[0]
        if n > sample_n:
            index = np.sort(rng.choice(n, size=sample_n, replace=False))
        else:
            index = np.arange(n)
            if n < sample_n:
                warnings.warn(
                    f"kind {kind!r} has only {n} rows; plotting all of them "
                    f"(wanted {sample_n})",
                    stacklevel=2,
                )
        chosen_kinds.append(np.full(index.size, kind))
        chosen_ids.append(dump.ids[kind][index])
        chosen_vecs.append(vecs[index])

    stacked = np.concatenate(chosen_vecs, axis=0)
    reducer = TSNE(n_components=2, random_state=seed)
    try:
        coords = reducer.fit_transform(stacked)
    except ValueError as exc:
        # The library refuses tiny inputs (perplexity must stay below the row
        # count); surface that as our own error instead of a traceback.
        raise VizError(f"too few rows for the 2-D reduction: {exc}") from None
    return Projection(
        kinds=np.concatenate(chosen_kinds),
        ids=np.concatenate(chosen_ids),
        coords=np.asarray(coords, dtype=np.float64),
    )
