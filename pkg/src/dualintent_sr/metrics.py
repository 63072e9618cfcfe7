"""Ranked-trial evaluation: candidate sampling, ranking metrics, reports.

Every evaluation record becomes one trial: the interacted (positive) item plus
up to 99 sampled negatives the user never interacted with in *any* split of
the corpus handed to the sampler.  The model scores all candidates and the
positive's 1-indexed rank drives the metrics:

- Hit@k:   1 if rank <= k
- NDCG@k:  1 / log2(rank + 1) if rank <= k else 0
- MRR:     1 / rank
- Avg.C:   the rank itself (lower is better)
- AUC:     fraction of negatives ranked below the positive

Score ties resolve in favor of the smaller item id, making ranks — and
therefore reports — deterministic for a fixed score table.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import InteractionRecord
from .errors import ValidationError

__all__ = [
    "RankedTrial",
    "TaskMetrics",
    "EvalReport",
    "build_trials",
    "rank_of_positive",
    "hit_at_k",
    "ndcg_at_k",
    "mrr",
    "auc",
    "summarize",
    "render_report",
    "write_trial_ranks",
]


@dataclass(slots=True)
class RankedTrial:
    """One record's ranking task: positive item plus sampled negatives."""

    record_index: int
    scenario: str
    user_id: int
    positive_item: int
    candidates: np.ndarray  # positive first, then negatives (item ids)
    query_terms: tuple[int, ...]

    @property
    def n_negatives(self) -> int:
        return self.candidates.size - 1


def build_trials(
    records: list[InteractionRecord],
    interacted_by_user: dict[int, set[int]],
    n_items: int,
    rng: np.random.Generator,
    n_negatives: int = 99,
    max_trials: int | None = None,
) -> list[RankedTrial]:
    """Sample one candidate set per record.

    Negatives are drawn uniformly without replacement from the items the user
    never interacted with (per `interacted_by_user`, which should cover every
    split to avoid sampling known positives).  If fewer such items exist than
    requested, all of them are used; records whose user has interacted with
    every item yield no trial.

    `max_trials` caps the number of trials by uniform subsampling (without
    replacement, record order preserved) — used to bound validation cost.
    """
    if n_negatives < 1:
        raise ValidationError(f"n_negatives must be >= 1, got {n_negatives}")
    indices = np.arange(len(records))
    if max_trials is not None and len(records) > max_trials:
        indices = np.sort(rng.choice(len(records), size=max_trials, replace=False))
    all_items = np.arange(n_items)
    trials: list[RankedTrial] = []
    for idx in indices:
        rec = records[idx]
        seen = interacted_by_user.get(rec.user_id, set())
        pool = all_items[~np.isin(all_items, sorted(seen))]
        if pool.size == 0:
            continue  # user interacted with everything: no ranking signal
        k = min(n_negatives, pool.size)
        negatives = rng.choice(pool, size=k, replace=False)
        candidates = np.concatenate(([rec.item_id], negatives)).astype(np.int64)
        trials.append(
            RankedTrial(
                record_index=int(idx),
                scenario=rec.scenario,
                user_id=rec.user_id,
                positive_item=rec.item_id,
                candidates=candidates,
                query_terms=rec.query_terms,
            )
        )
    return trials


def rank_of_positive(scores: np.ndarray, candidates: np.ndarray) -> int:
    """1-indexed rank of the first candidate; ties favor the smaller item id."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != candidates.shape:
        raise ValidationError(
            f"scores shape {scores.shape} != candidates shape {candidates.shape}"
        )
    pos_score = scores[0]
    pos_item = candidates[0]
    others_s = scores[1:]
    others_i = candidates[1:]
    better = int((others_s > pos_score).sum())
    tied_ahead = int(((others_s == pos_score) & (others_i < pos_item)).sum())
    return 1 + better + tied_ahead


def hit_at_k(rank: int, k: int) -> float:
    return 1.0 if rank <= k else 0.0


def ndcg_at_k(rank: int, k: int) -> float:
    return 1.0 / np.log2(rank + 1.0) if rank <= k else 0.0


def mrr(rank: int) -> float:
    return 1.0 / rank


def auc(rank: int, n_negatives: int) -> float:
    """Fraction of negatives the positive outranked."""
    if n_negatives < 1:
        raise ValidationError("AUC needs at least one negative")
    return (n_negatives + 1 - rank) / n_negatives


@dataclass(slots=True)
class TaskMetrics:
    n_trials: int
    hit: float
    ndcg: float
    mrr: float
    avg_rank: float
    auc: float


@dataclass(slots=True)
class EvalReport:
    k: int
    search: TaskMetrics | None
    rec: TaskMetrics | None

    def mean_ndcg(self) -> float:
        """Mean NDCG across available tasks (the early-stopping signal)."""
        parts = [t.ndcg for t in (self.search, self.rec) if t is not None]
        if not parts:
            raise ValidationError("report has no tasks to average")
        return float(np.mean(parts))


def summarize(trials: list[RankedTrial], ranks: np.ndarray, k: int = 5) -> EvalReport:
    """Aggregate per-trial ranks into per-task metrics."""
    ranks = np.asarray(ranks)
    if len(trials) != ranks.size:
        raise ValidationError(f"{len(trials)} trials but {ranks.size} ranks")

    def task(scenario: str) -> TaskMetrics | None:
        sel = [(t, int(r)) for t, r in zip(trials, ranks) if t.scenario == scenario]
        if not sel:
            return None
        return TaskMetrics(
            n_trials=len(sel),
            hit=float(np.mean([hit_at_k(r, k) for _, r in sel])),
            ndcg=float(np.mean([ndcg_at_k(r, k) for _, r in sel])),
            mrr=float(np.mean([mrr(r) for _, r in sel])),
            avg_rank=float(np.mean([r for _, r in sel])),
            auc=float(np.mean([auc(r, t.n_negatives) for t, r in sel])),
        )

    return EvalReport(k=k, search=task("S"), rec=task("R"))


def render_report(report: EvalReport) -> str:
    """Deterministic text report, one metric block per task."""
    lines = [f"ranking evaluation (k={report.k})"]
    for label, task in (("search", report.search), ("rec", report.rec)):
        if task is None:
            lines.append(f"[{label}] no trials")
            continue
        lines.append(
            f"[{label}] trials={task.n_trials} "
            f"hit@{report.k}={task.hit:.6f} "
            f"ndcg@{report.k}={task.ndcg:.6f} "
            f"mrr={task.mrr:.6f} "
            f"avg_rank={task.avg_rank:.6f} "
            f"auc={task.auc:.6f}"
        )
    return "\n".join(lines) + "\n"


def write_trial_ranks(trials: list[RankedTrial], ranks: np.ndarray, path) -> None:
    """Per-trial TSV: record index and achieved rank, in trial order."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write("record_idx\trank\n")
        for trial, rank in zip(trials, np.asarray(ranks)):
            fh.write(f"{trial.record_index}\t{int(rank)}\n")
