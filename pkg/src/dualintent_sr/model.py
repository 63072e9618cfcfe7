"""Joint model: two-tower scoring heads over propagated states, and training.

The full pipeline per training step:

1. materialize one intent vector per training-graph edge — real pooled queries
   for search edges, generated demand intents for recommendation edges (or the
   learned fallback row when generation is disabled);
2. propagate user/item embeddings through the graph with those intents acting
   as translations, and combine all layers into final states;
3. score the batch's (user, positive) and (user, sampled-negative) pairs with
   a per-scenario head over ``user_state || item_state || intent``;
4. optimize the pairwise ranking loss, plus the generator supervision loss
   (search records teach the generator what real intents look like) and the
   translation alignment loss, weighted by ``lambda1`` / ``lambda2``.

Everything that draws randomness does so from named per-purpose streams
derived from one seed, and the trainer can snapshot/restore its complete state
mid-epoch, so an interrupted-and-resumed run is bit-identical to an
uninterrupted one.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .autodiff import Tensor, concat, gather_rows, matmul, no_grad
from .corpus import HistoryProfiles, InteractionRecord, Vocabulary
from .errors import ConfigError, DataError, ValidationError
from .graph import InteractionGraph
from .intent import (
    IntentKernels,
    ModelDims,
    build_intent_kernels,
    fallback_intents,
    generate_intents,
    generated_pair_intents,
    init_intent_parameters,
    pool_term_ids,
    pooled_search_queries,
    supervision_loss,
)
from .metrics import EvalReport, RankedTrial, build_trials, rank_of_positive, summarize
from .optim import AdamW, Parameter
from .propagation import (
    GraphKernels,
    build_graph_kernels,
    combine_layers,
    contrastive_loss,
    propagate,
)

logger = logging.getLogger(__name__)

__all__ = [
    "TrainConfig",
    "DualIntentModel",
    "Trainer",
    "bpr_loss",
    "head_widths",
    "head_forward",
    "init_all_parameters",
    "param_order",
    "rng_streams",
    "sample_negative",
    "export_embeddings",
]


@dataclass(slots=True)
class TrainConfig:
    """All training-time knobs, with their default values."""

    dim: int = 100
    n_layers: int = 2
    words_per_query: int = 3
    user_profile_len: int = 3
    item_profile_len: int = 10
    batch_size: int = 256
    lr: float = 1e-4
    weight_decay: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lambda1: float = 1.5  # generator supervision weight
    lambda2: float = 0.2  # translation alignment weight
    epochs: int = 30
    patience: int = 5
    seed: int = 0
    use_generator: bool = True
    use_translation: bool = True
    detach_intents: bool = False
    negative_tries: int = 100
    valid_negatives: int = 99
    valid_max_trials: int = 2000
    k: int = 5

    def validate(self) -> None:
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if self.n_layers < 0:
            raise ConfigError(f"n_layers must be >= 0, got {self.n_layers}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("loss weights must be non-negative")
        if self.negative_tries < 1:
            raise ConfigError("negative_tries must be >= 1")

    def dims_for(self, n_users: int, n_items: int, vocab_size: int) -> ModelDims:
        return ModelDims(
            n_users=n_users,
            n_items=n_items,
            vocab_size=vocab_size,
            dim=self.dim,
            user_profile_len=self.user_profile_len,
            item_profile_len=self.item_profile_len,
            words_per_query=self.words_per_query,
        )


def rng_streams(seed: int) -> dict:
    """Independent named random streams derived from one seed.

    ``valid`` stays a SeedSequence: validation trials are rebuilt from it on
    demand (including after a checkpoint resume) and come out identical.
    """
    children = np.random.SeedSequence(seed).spawn(4)
    return {
        "init": np.random.default_rng(children[0]),
        "shuffle": np.random.default_rng(children[1]),
        "negative": np.random.default_rng(children[2]),
        "valid": children[3],
    }


# -- parameters ----------------------------------------------------------------


def head_widths(dim: int) -> tuple[int, int, int, int]:
    """Scoring-head layer widths: fused input down to a scalar."""
    return (3 * dim, int(round(1.5 * dim)), int(round(0.75 * dim)), 1)


def _init_head(dims: ModelDims, rng: np.random.Generator, prefix: str) -> dict[str, Parameter]:
    params: dict[str, Parameter] = {}
    widths = head_widths(dims.dim)
    for layer, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:]), start=1):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        params[f"{prefix}.W{layer}"] = Parameter(f"{prefix}.W{layer}", w)
        params[f"{prefix}.b{layer}"] = Parameter(f"{prefix}.b{layer}", np.zeros(fan_out))
    return params


def init_all_parameters(dims: ModelDims, rng: np.random.Generator) -> dict[str, Parameter]:
    """Every model parameter in canonical order (the checkpoint blob order)."""
    params = init_intent_parameters(dims, rng)
    params.update(_init_head(dims, rng, "search_head"))
    params.update(_init_head(dims, rng, "rec_head"))
    return params


def param_order(params: dict[str, Parameter]) -> list[str]:
    return list(params)


def head_forward(params: dict[str, Parameter], prefix: str, fused: Tensor) -> Tensor:
    """Score a fused ``user || item || intent`` batch: (B, 3*dim) -> (B, 1)."""
    h = (matmul(fused, params[f"{prefix}.W1"].tensor) + params[f"{prefix}.b1"].tensor).relu()
    h = (matmul(h, params[f"{prefix}.W2"].tensor) + params[f"{prefix}.b2"].tensor).relu()
    return matmul(h, params[f"{prefix}.W3"].tensor) + params[f"{prefix}.b3"].tensor


def bpr_loss(pos_scores: Tensor, neg_scores: Tensor) -> Tensor:
    """Mean softplus of the negated score margin; 0.6931... when scores tie."""
    if pos_scores.shape != neg_scores.shape:
        raise ValidationError(
            f"score shape mismatch: {pos_scores.shape} vs {neg_scores.shape}"
        )
    if pos_scores.shape[0] == 0:
        return Tensor(0.0)
    return (neg_scores - pos_scores).softplus().mean()


def sample_negative(
    user_id: int,
    interacted: set[int],
    n_items: int,
    rng: np.random.Generator,
    max_tries: int = 100,
) -> int:
    """Uniform item the user has not interacted with; rejection-sampled."""
    for _ in range(max_tries):
        candidate = int(rng.integers(0, n_items))
        if candidate not in interacted:
            return candidate
    raise DataError(
        f"could not sample a negative for user {user_id} after {max_tries} tries "
        f"({len(interacted)}/{n_items} items interacted)"
    )


# -- model core ------------------------------------------------------------------


class DualIntentModel:
    """Parameters plus the profile context needed to compute intents."""

    def __init__(
        self,
        dims: ModelDims,
        config: TrainConfig,
        profiles: HistoryProfiles,
        params: dict[str, Parameter],
    ):
        dims.validate()
        config.validate()
        self.dims = dims
        self.config = config
        self.profiles = profiles
        self.params = params

    @classmethod
    def fresh(cls, dims: ModelDims, config: TrainConfig, profiles: HistoryProfiles) -> "DualIntentModel":
        rng = rng_streams(config.seed)["init"]
        return cls(dims, config, profiles, init_all_parameters(dims, rng))

    # -- intent materialization ---------------------------------------------------

    def edge_intents(self, kernels: IntentKernels, n_rec_edges: int) -> Tensor:
        """One intent per training edge, canonical order (search block first).

        Generated intents are recomputed from current parameters on every call
        — they are a function of the model, never cached state.
        """
        search_block = pooled_search_queries(self.params, kernels)
        if self.config.use_generator:
            pair_block = generated_pair_intents(self.params, kernels)
            rec_block = gather_rows(
                pair_block, kernels.pair_of_edge, scatter=kernels.pair_scatter
            )
        else:
            rec_block = fallback_intents(self.params, n_rec_edges)
        if self.config.detach_intents:
            rec_block = rec_block.detach()
        return concat([search_block, rec_block], axis=0)

    def record_intents(
        self, records: list[InteractionRecord], item_ids: np.ndarray | None = None
    ) -> Tensor:
        """Intent per record: pooled real query (search) or generated (rec).

        `item_ids` overrides each record's item (used for sampled negatives:
        a recommendation intent depends on the item, so it is regenerated,
        while a search intent is the session's query regardless of item).
        """
        user_ids = np.array([r.user_id for r in records], dtype=np.int64)
        if item_ids is None:
            item_ids = np.array([r.item_id for r in records], dtype=np.int64)
        is_search = np.array([r.is_search for r in records], dtype=bool)
        s_pos = np.flatnonzero(is_search)
        r_pos = np.flatnonzero(~is_search)

        blocks: list[Tensor] = []
        if s_pos.size:
            width = self.dims.words_per_query
            q_ids = np.full((s_pos.size, width), Vocabulary.PAD_ID, dtype=np.int64)
            for row, pos in enumerate(s_pos):
                terms = records[pos].query_terms[:width]
                q_ids[row, : len(terms)] = terms
            blocks.append(pool_term_ids(self.params["term_emb"].tensor, q_ids))
        if r_pos.size:
            if self.config.use_generator:
                rec_block = generate_intents(
                    self.params, self.profiles, user_ids[r_pos], item_ids[r_pos]
                )
            else:
                rec_block = fallback_intents(self.params, r_pos.size)
            if self.config.detach_intents:
                rec_block = rec_block.detach()
            blocks.append(rec_block)

        stacked = blocks[0] if len(blocks) == 1 else concat(blocks, axis=0)
        order = np.concatenate([s_pos, r_pos])
        if np.array_equal(order, np.arange(len(records))):
            return stacked
        return gather_rows(stacked, np.argsort(order))

    # -- propagation + scoring ------------------------------------------------------

    def propagated_states(
        self, graph_kernels: GraphKernels, intent_kernels: IntentKernels, n_rec_edges: int
    ) -> tuple[Tensor, Tensor]:
        """Full-graph propagation to final user/item states."""
        intents = None
        if self.config.use_translation:
            intents = self.edge_intents(intent_kernels, n_rec_edges)
        users, items = propagate(
            graph_kernels,
            self.params["user_emb"].tensor,
            self.params["item_emb"].tensor,
            intents,
            self.config.n_layers,
        )
        return combine_layers(users), combine_layers(items)

    def score_records(
        self,
        u_star: Tensor,
        i_star: Tensor,
        records: list[InteractionRecord],
        intents: Tensor,
        item_ids: np.ndarray | None = None,
    ) -> Tensor:
        """Per-record scores (B, 1), routing each scenario to its own head."""
        user_ids = np.array([r.user_id for r in records], dtype=np.int64)
        if item_ids is None:
            item_ids = np.array([r.item_id for r in records], dtype=np.int64)
        is_search = np.array([r.is_search for r in records], dtype=bool)
        u_rows = gather_rows(u_star, user_ids)
        i_rows = gather_rows(i_star, item_ids)
        fused = concat([u_rows, i_rows, intents], axis=1)

        s_pos = np.flatnonzero(is_search)
        r_pos = np.flatnonzero(~is_search)
        blocks: list[Tensor] = []
        if s_pos.size:
            blocks.append(head_forward(self.params, "search_head", gather_rows(fused, s_pos)))
        if r_pos.size:
            blocks.append(head_forward(self.params, "rec_head", gather_rows(fused, r_pos)))
        stacked = blocks[0] if len(blocks) == 1 else concat(blocks, axis=0)
        order = np.concatenate([s_pos, r_pos])
        if np.array_equal(order, np.arange(len(records))):
            return stacked
        return gather_rows(stacked, np.argsort(order))


# -- trainer ---------------------------------------------------------------------


@dataclass(slots=True)
class StepLosses:
    total: float
    bpr: float
    supervision: float
    alignment: float


class Trainer:
    """Owns the optimization loop, validation-based early stopping, and state."""

    def __init__(
        self,
        model: DualIntentModel,
        graph: InteractionGraph,
        train_records: list[InteractionRecord],
        valid_records: list[InteractionRecord],
        log_sink: Callable[[str], None] | None = None,
    ):
        if not train_records:
            raise DataError("cannot train on an empty training split")
        self.model = model
        self.graph = graph
        self.train_records = train_records
        self.valid_records = valid_records
        self.log_sink = log_sink or (lambda line: logger.info("%s", line))

        self.graph_kernels = build_graph_kernels(graph)
        self.intent_kernels = build_intent_kernels(graph, model.profiles, model.dims)
        self.n_rec_edges = graph.n_edges - graph.n_search_edges

        cfg = model.config
        self.optimizer = AdamW(
            list(model.params.values()),
            lr=cfg.lr,
            weight_decay=cfg.weight_decay,
            beta1=cfg.beta1,
            beta2=cfg.beta2,
            eps=cfg.eps,
        )
        streams = rng_streams(cfg.seed)
        self.shuffle_rng = streams["shuffle"]
        self.negative_rng = streams["negative"]
        self.valid_seed_seq = streams["valid"]

        self.interacted_train: dict[int, set[int]] = {}
        for rec in train_records:
            self.interacted_train.setdefault(rec.user_id, set()).add(rec.item_id)
        self.interacted_known: dict[int, set[int]] = {
            u: set(items) for u, items in self.interacted_train.items()
        }
        for rec in valid_records:
            self.interacted_known.setdefault(rec.user_id, set()).add(rec.item_id)

        self.epoch = 0
        self.global_step = 0
        self.step_in_epoch = 0
        self.best_metric = -math.inf
        self.best_epoch = -1
        self.stale_epochs = 0
        self.best_params: dict[str, np.ndarray] | None = None
        self.history: list[float] = []
        self._perm: np.ndarray | None = None
        self._perm_state: dict | None = None
        self._valid_trials: list[RankedTrial] | None = None

    # -- one step ------------------------------------------------------------------

    def compute_losses(self, batch_indices: np.ndarray, neg_items: np.ndarray) -> dict[str, Tensor]:
        """Assemble every loss term for one batch against given negatives."""
        cfg = self.model.config
        records = [self.train_records[i] for i in batch_indices]
        user_ids = np.array([r.user_id for r in records], dtype=np.int64)

        u_star, i_star = self.model.propagated_states(
            self.graph_kernels, self.intent_kernels, self.n_rec_edges
        )
        pos_intents = self.model.record_intents(records)
        neg_intents = self.model.record_intents(records, item_ids=neg_items)

        pos_scores = self.model.score_records(u_star, i_star, records, pos_intents)
        neg_scores = self.model.score_records(
            u_star, i_star, records, neg_intents, item_ids=neg_items
        )
        loss_bpr = bpr_loss(pos_scores, neg_scores)

        loss_sup = Tensor(0.0)
        if cfg.use_generator and cfg.lambda1 > 0.0:
            s_pos = [r for r in records if r.is_search]
            if s_pos:
                su = np.array([r.user_id for r in s_pos], dtype=np.int64)
                si = np.array([r.item_id for r in s_pos], dtype=np.int64)
                generated = generate_intents(self.model.params, self.model.profiles, su, si)
                width = self.model.dims.words_per_query
                q_ids = np.full((len(s_pos), width), Vocabulary.PAD_ID, dtype=np.int64)
                for row, rec in enumerate(s_pos):
                    terms = rec.query_terms[:width]
                    q_ids[row, : len(terms)] = terms
                real = pool_term_ids(self.model.params["term_emb"].tensor, q_ids)
                loss_sup = supervision_loss(real, generated)

        loss_align = Tensor(0.0)
        if cfg.use_translation and cfg.lambda2 > 0.0:
            item_ids = np.array([r.item_id for r in records], dtype=np.int64)
            loss_align = contrastive_loss(
                gather_rows(u_star, user_ids),
                pos_intents,
                gather_rows(i_star, item_ids),
                gather_rows(i_star, neg_items),
            )

        total = loss_bpr
        if cfg.use_generator and cfg.lambda1 > 0.0:
            total = total + loss_sup * cfg.lambda1
        if cfg.use_translation and cfg.lambda2 > 0.0:
            total = total + loss_align * cfg.lambda2
        return {
            "bpr": loss_bpr,
            "supervision": loss_sup,
            "alignment": loss_align,
            "total": total,
        }

    def sample_batch_negatives(self, batch_indices: np.ndarray) -> np.ndarray:
        cfg = self.model.config
        return np.array(
            [
                sample_negative(
                    rec.user_id,
                    self.interacted_train.get(rec.user_id, set()),
                    self.model.dims.n_items,
                    self.negative_rng,
                    cfg.negative_tries,
                )
                for rec in (self.train_records[i] for i in batch_indices)
            ],
            dtype=np.int64,
        )

    def train_step(self, batch_indices: np.ndarray) -> StepLosses:
        neg_items = self.sample_batch_negatives(batch_indices)
        losses = self.compute_losses(batch_indices, neg_items)
        self.optimizer.zero_grad()
        losses["total"].backward()
        self.optimizer.step()
        return StepLosses(
            total=float(losses["total"].data),
            bpr=float(losses["bpr"].data),
            supervision=float(losses["supervision"].data),
            alignment=float(losses["alignment"].data),
        )

    # -- epoch loop ------------------------------------------------------------------

    def _epoch_permutation(self) -> np.ndarray:
        if self._perm is None:
            self._perm_state = self.shuffle_rng.bit_generator.state
            self._perm = self.shuffle_rng.permutation(len(self.train_records))
        return self._perm

    def n_steps_per_epoch(self) -> int:
        return math.ceil(len(self.train_records) / self.model.config.batch_size)

    def run_epoch(self, max_steps: int | None = None) -> bool:
        """Run the remainder of the current epoch; True if it completed.

        `max_steps` caps the optimization steps performed by this call; when
        the cap hits first the trainer pauses mid-epoch in a checkpointable
        state and returns False.
        """
        cfg = self.model.config
        perm = self._epoch_permutation()
        n_steps = self.n_steps_per_epoch()
        executed = 0
        for step in range(self.step_in_epoch, n_steps):
            if max_steps is not None and executed >= max_steps:
                return False
            batch = perm[step * cfg.batch_size : (step + 1) * cfg.batch_size]
            losses = self.train_step(batch)
            executed += 1
            self.global_step += 1
            self.step_in_epoch = step + 1
            self.log_sink(
                f"epoch={self.epoch + 1} step={self.global_step} "
                f"loss={losses.total:.6f} bpr={losses.bpr:.6f} "
                f"supervision={losses.supervision:.6f} alignment={losses.alignment:.6f}"
            )
        self.epoch += 1
        self.step_in_epoch = 0
        self._perm = None
        self._perm_state = None
        return True

    # -- validation / early stopping ----------------------------------------------------

    def _validation_trials(self) -> list[RankedTrial]:
        if self._valid_trials is None:
            cfg = self.model.config
            rng = np.random.default_rng(self.valid_seed_seq)
            self._valid_trials = build_trials(
                self.valid_records,
                self.interacted_known,
                self.model.dims.n_items,
                rng,
                n_negatives=cfg.valid_negatives,
                max_trials=cfg.valid_max_trials,
            )
        return self._valid_trials

    def validate(self) -> float:
        trials = self._validation_trials()
        if not trials:
            raise DataError("validation split produced no ranking trials")
        ranks = self.score_trials(trials)
        report = summarize(trials, ranks, k=self.model.config.k)
        return report.mean_ndcg()

    def fit(self) -> list[float]:
        """Train with early stopping; leaves the best-validation parameters live."""
        cfg = self.model.config
        while self.epoch < cfg.epochs:
            self.run_epoch()
            metric = self.validate()
            self.history.append(metric)
            if metric > self.best_metric:
                self.best_metric = metric
                self.best_epoch = self.epoch
                self.stale_epochs = 0
                self.best_params = {
                    name: p.data.copy() for name, p in self.model.params.items()
                }
            else:
                self.stale_epochs += 1
            self.log_sink(
                f"epoch={self.epoch} validation mean_ndcg@{cfg.k}={metric:.6f} "
                f"best={self.best_metric:.6f} stale={self.stale_epochs}"
            )
            if self.stale_epochs >= cfg.patience:
                self.log_sink(
                    f"early stop after epoch {self.epoch}: no improvement in "
                    f"{cfg.patience} epochs (best epoch {self.best_epoch})"
                )
                break
        if self.best_params is not None:
            for name, data in self.best_params.items():
                self.model.params[name].tensor.data[:] = data
        return self.history

    # -- trial scoring (validation and test evaluation) ---------------------------------

    def score_trials(self, trials: list[RankedTrial], chunk_rows: int = 32768) -> np.ndarray:
        """Rank the positive of each trial under the current parameters."""
        model = self.model
        ranks = np.zeros(len(trials), dtype=np.int64)
        with no_grad():
            u_star, i_star = model.propagated_states(
                self.graph_kernels, self.intent_kernels, self.n_rec_edges
            )
            order = np.argsort([t.candidates.size for t in trials], kind="stable")
            start = 0
            while start < len(order):
                stop = start
                rows = 0
                while stop < len(order) and rows < chunk_rows:
                    rows += trials[order[stop]].candidates.size
                    stop += 1
                chunk = [trials[j] for j in order[start:stop]]
                chunk_ranks = self._score_trial_chunk(u_star, i_star, chunk)
                ranks[order[start:stop]] = chunk_ranks
                start = stop
        return ranks

    def _score_trial_chunk(
        self, u_star: Tensor, i_star: Tensor, chunk: list[RankedTrial]
    ) -> np.ndarray:
        model = self.model
        cfg = model.config
        sizes = np.array([t.candidates.size for t in chunk])
        bounds = np.concatenate(([0], np.cumsum(sizes)))
        flat_users = np.concatenate(
            [np.full(t.candidates.size, t.user_id, dtype=np.int64) for t in chunk]
        )
        flat_items = np.concatenate([t.candidates for t in chunk])
        trial_of_flat = np.repeat(np.arange(len(chunk)), sizes)

        is_search = np.array([t.scenario == "S" for t in chunk], dtype=bool)
        intents = Tensor(np.zeros((flat_users.size, model.dims.dim)))
        if is_search.any():
            width = model.dims.words_per_query
            q_ids = np.full((len(chunk), width), Vocabulary.PAD_ID, dtype=np.int64)
            for row, trial in enumerate(chunk):
                if trial.scenario == "S":
                    terms = trial.query_terms[:width]
                    q_ids[row, : len(terms)] = terms
            per_trial = pool_term_ids(model.params["term_emb"].tensor, q_ids)
            search_flat = is_search[trial_of_flat]
            intents.data[search_flat] = per_trial.data[trial_of_flat[search_flat]]
        if (~is_search).any():
            rec_flat = ~is_search[trial_of_flat]
            if cfg.use_generator:
                gen = generate_intents(
                    model.params,
                    model.profiles,
                    flat_users[rec_flat],
                    flat_items[rec_flat],
                )
                intents.data[rec_flat] = gen.data
            else:
                intents.data[rec_flat] = model.params["pad_query"].data[0]

        u_rows = gather_rows(u_star, flat_users)
        i_rows = gather_rows(i_star, flat_items)
        fused = concat([u_rows, i_rows, intents], axis=1)
        scores = np.empty(flat_users.size, dtype=np.float64)
        search_flat = is_search[trial_of_flat]
        if search_flat.any():
            block = head_forward(model.params, "search_head", gather_rows(fused, np.flatnonzero(search_flat)))
            scores[search_flat] = block.data[:, 0]
        if (~search_flat).any():
            block = head_forward(model.params, "rec_head", gather_rows(fused, np.flatnonzero(~search_flat)))
            scores[~search_flat] = block.data[:, 0]

        return np.array(
            [
                rank_of_positive(scores[bounds[j] : bounds[j + 1]], chunk[j].candidates)
                for j in range(len(chunk))
            ],
            dtype=np.int64,
        )

    # -- test evaluation ----------------------------------------------------------------

    def evaluate(
        self,
        records: list[InteractionRecord],
        interacted_by_user: dict[int, set[int]],
        seed: int,
        n_negatives: int = 99,
        k: int = 5,
        max_trials: int | None = None,
    ) -> tuple[EvalReport, list[RankedTrial], np.ndarray]:
        rng = np.random.default_rng(seed)
        trials = build_trials(
            records,
            interacted_by_user,
            self.model.dims.n_items,
            rng,
            n_negatives=n_negatives,
            max_trials=max_trials,
        )
        if not trials:
            raise DataError("evaluation produced no ranking trials")
        ranks = self.score_trials(trials)
        return summarize(trials, ranks, k=k), trials, ranks


def export_embeddings(
    trainer: Trainer, records: list[InteractionRecord], path: str
) -> int:
    """Write final states as TSV: users, items, and per-record translated users.

    Row format is ``kind<TAB>id<TAB>v0<TAB>...<TAB>v{d-1}`` where kind is
    ``user`` (final user state), ``item`` (final item state), or ``intent``
    (user state shifted by the record's demand intent, id = record position).
    Values are float32 rendered with %.9g, which round-trips exactly.
    Returns the number of rows written.
    """
    model = trainer.model
    with no_grad():
        u_star, i_star = model.propagated_states(
            trainer.graph_kernels, trainer.intent_kernels, trainer.n_rec_edges
        )
        translated = None
        if records:
            user_ids = np.array([r.user_id for r in records], dtype=np.int64)
            intents = model.record_intents(records)
            translated = u_star.data[user_ids] + intents.data

    def render(kind: str, row_id: int, vec: np.ndarray) -> str:
        values = "\t".join("%.9g" % v for v in vec.astype(np.float32))
        return f"{kind}\t{row_id}\t{values}"

    n_rows = 0
    with open(path, "w", encoding="utf-8") as handle:
        for uid in range(model.dims.n_users):
            handle.write(render("user", uid, u_star.data[uid]) + "\n")
            n_rows += 1
        for iid in range(model.dims.n_items):
            handle.write(render("item", iid, i_star.data[iid]) + "\n")
            n_rows += 1
        if translated is not None:
            for pos in range(len(records)):
                handle.write(render("intent", pos, translated[pos]) + "\n")
                n_rows += 1
    return n_rows
