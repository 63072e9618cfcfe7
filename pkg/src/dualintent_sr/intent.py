"""Query intents: pooling, user-aware gated pooling, and the demand generator.

Three intent sources feed the rest of the model:

- *real* search intents: the sum of a query's term embeddings;
- *generated* demand intents for recommendation interactions, produced by an
  MLP from the user embedding, item embedding, the user's recent-query
  context, and a user-aware gated pooling of the item's historical query
  profile (so the same item reads differently to different users);
- a single learned *fallback* intent row used when generation is disabled.

The generator is trained against real search intents (`supervision_loss`),
which is what lets it extrapolate demand to interactions without a query.

Everything here is expressed with batched tensor ops.  For index sets that are
fixed across training steps (the training graph's edges, profiles, and
deduplicated user-item pairs) `IntentKernels` precomputes constant sparse
maps, turning per-step gathers and their backward scatters into cheap sparse
matrix products.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .autodiff import SparseMap, Tensor, concat, gather_rows, gated_softmax_pool, matmul, spmm
from .corpus import HistoryProfiles, Vocabulary
from .errors import ConfigError, ValidationError
from .graph import InteractionGraph
from .optim import Parameter

logger = logging.getLogger(__name__)

__all__ = [
    "ModelDims",
    "IntentKernels",
    "init_intent_parameters",
    "build_intent_kernels",
    "pool_term_ids",
    "pooled_search_queries",
    "user_query_context_all",
    "gate_keys_all_users",
    "gated_item_queries",
    "generator_mlp",
    "generate_intents",
    "generated_pair_intents",
    "fallback_intents",
    "supervision_loss",
    "pool_query",
    "generate_demand_intent",
]


@dataclass(slots=True)
class ModelDims:
    """Size contract shared by parameters, kernels, and checkpoints."""

    n_users: int
    n_items: int
    vocab_size: int
    dim: int = 100
    user_profile_len: int = 3
    item_profile_len: int = 10
    words_per_query: int = 3

    def validate(self) -> None:
        if min(self.n_users, self.n_items) < 1:
            raise ConfigError("model needs at least one user and one item")
        if self.vocab_size < 2:
            raise ConfigError(f"vocab_size must be >= 2, got {self.vocab_size}")
        if self.dim < 1:
            raise ConfigError(f"embedding dim must be >= 1, got {self.dim}")
        if min(self.user_profile_len, self.item_profile_len, self.words_per_query) < 1:
            raise ConfigError("profile and query lengths must be >= 1")

    @property
    def gate_input_width(self) -> int:
        return (1 + self.user_profile_len) * self.dim

    @property
    def generator_widths(self) -> tuple[int, ...]:
        """Layer widths of the generator MLP, input to output."""
        return (4 * self.dim, 2 * self.dim, self.dim, self.dim)


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_intent_parameters(dims: ModelDims, rng: np.random.Generator) -> dict[str, Parameter]:
    """Embedding tables, gate, and generator weights in canonical draw order.

    The draw order (user, item, term embeddings, then gate, then generator
    layers) is part of the reproducibility contract: checkpoints and reruns
    rely on it.  The padding term embedding is zero and never updated.
    """
    dims.validate()
    scale = 1.0 / np.sqrt(dims.dim)
    params: dict[str, Parameter] = {}

    def emb(name: str, rows: int, frozen=()) -> None:
        data = rng.uniform(-scale, scale, size=(rows, dims.dim))
        for row in frozen:
            data[row] = 0.0
        params[name] = Parameter(name, data, frozen_rows=frozen)

    emb("user_emb", dims.n_users)
    emb("item_emb", dims.n_items)
    emb("term_emb", dims.vocab_size, frozen=(Vocabulary.PAD_ID,))
    params["pad_query"] = Parameter("pad_query", np.zeros((1, dims.dim)))
    params["gate.W"] = Parameter("gate.W", _glorot(rng, dims.gate_input_width, dims.dim))
    widths = dims.generator_widths
    for layer, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:]), start=1):
        params[f"gen.W{layer}"] = Parameter(f"gen.W{layer}", _glorot(rng, fan_in, fan_out))
        params[f"gen.b{layer}"] = Parameter(f"gen.b{layer}", np.zeros(fan_out))
    return params


@dataclass(slots=True)
class IntentKernels:
    """Constant sparse maps for the training graph's fixed index sets."""

    # (n_search_edges, vocab): row e counts the terms of search edge e.
    search_pool: SparseMap
    # (n_users, vocab): row u counts the user's profile terms.
    qu_pool: SparseMap
    qu_ids: np.ndarray  # (n_users, user_profile_len)
    qu_gather: SparseMap  # scatter map for gathering qu term embeddings
    # Deduplicated (user, item) pairs behind rec edges.
    pair_user: np.ndarray
    pair_item: np.ndarray
    pair_of_edge: np.ndarray
    sel_pair_user: SparseMap  # (n_pairs, n_users) row selection
    sel_pair_item: SparseMap  # (n_pairs, n_items)
    qi_ids: np.ndarray  # (n_pairs, item_profile_len)
    qi_gather: SparseMap
    pair_scatter: SparseMap  # maps per-pair rows back onto rec-edge slots


def _count_matrix(ids: np.ndarray, n_cols: int) -> SparseMap:
    """CSR whose row r counts the non-PAD ids in row r of `ids`."""
    rows = np.repeat(np.arange(ids.shape[0]), ids.shape[1])
    cols = ids.ravel()
    keep = cols != Vocabulary.PAD_ID
    mat = sp.csr_matrix(
        (np.ones(keep.sum()), (rows[keep], cols[keep])),
        shape=(ids.shape[0], n_cols),
    )
    return SparseMap(mat)


def _pad_terms(term_lists, width: int) -> np.ndarray:
    out = np.full((len(term_lists), width), Vocabulary.PAD_ID, dtype=np.int64)
    for row, terms in enumerate(term_lists):
        kept = terms[:width]
        out[row, : len(kept)] = kept
    return out


def build_intent_kernels(
    graph: InteractionGraph, profiles: HistoryProfiles, dims: ModelDims
) -> IntentKernels:
    search_terms = _pad_terms(
        [graph.edge_terms[e] for e in range(graph.n_search_edges)], dims.words_per_query
    )
    pair_user, pair_item, pair_of_edge = graph.rec_pairs()
    qu_ids = profiles.user_terms
    qi_ids = profiles.item_terms[pair_item]
    return IntentKernels(
        search_pool=_count_matrix(search_terms, dims.vocab_size),
        qu_pool=_count_matrix(qu_ids, dims.vocab_size),
        qu_ids=qu_ids,
        qu_gather=SparseMap.scatter_from_index(qu_ids.ravel(), dims.vocab_size),
        pair_user=pair_user,
        pair_item=pair_item,
        pair_of_edge=pair_of_edge,
        sel_pair_user=SparseMap.select_rows(pair_user, dims.n_users),
        sel_pair_item=SparseMap.select_rows(pair_item, dims.n_items),
        qi_ids=qi_ids,
        qi_gather=SparseMap.scatter_from_index(qi_ids.ravel(), dims.vocab_size),
        pair_scatter=SparseMap.scatter_from_index(pair_of_edge, pair_user.size),
    )


# -- pooling -----------------------------------------------------------------


def pool_term_ids(
    term_table: Tensor, ids: np.ndarray, cap: int | None = None, scatter: SparseMap | None = None
) -> Tensor:
    """Sum the non-PAD term embeddings of each row of `ids` -> (rows, dim).

    `cap` truncates each row to its first `cap` ids (the configured maximum
    words per query); rows that are entirely PAD pool to the zero vector.
    """
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 2:
        raise ValidationError(f"pool_term_ids expects a 2-D id matrix, got {ids.ndim}-D")
    if cap is not None:
        ids = ids[:, :cap]
    mask = (ids != Vocabulary.PAD_ID)[..., None].astype(np.float64)
    rows = gather_rows(term_table, ids, scatter=scatter)  # (B, T, d)
    return (rows * mask).sum(axis=1)


def pooled_search_queries(params: dict[str, Parameter], kernels: IntentKernels) -> Tensor:
    """Real intents of every search edge, in edge order: (n_search_edges, dim)."""
    return spmm(kernels.search_pool, params["term_emb"].tensor)


def user_query_context_all(params: dict[str, Parameter], kernels: IntentKernels) -> Tensor:
    """Sum-pooled recent-query context for every user: (n_users, dim)."""
    return spmm(kernels.qu_pool, params["term_emb"].tensor)


# -- user-aware gate -----------------------------------------------------------


def gate_keys_all_users(params: dict[str, Parameter], kernels: IntentKernels) -> Tensor:
    """Per-user gating key: linear map of user embedding + recent-term embeddings."""
    u, plen = kernels.qu_ids.shape
    terms = gather_rows(params["term_emb"].tensor, kernels.qu_ids, scatter=kernels.qu_gather)
    flat = terms.reshape(u, plen * terms.shape[-1])
    x = concat([params["user_emb"].tensor, flat], axis=1)
    return matmul(x, params["gate.W"].tensor)


def gate_keys_for(
    params: dict[str, Parameter], profiles: HistoryProfiles, user_ids: np.ndarray
) -> Tensor:
    """Gating keys for an ad-hoc batch of users (no precomputed kernels)."""
    user_ids = np.asarray(user_ids, dtype=np.int64)
    qu = profiles.user_terms[user_ids]
    terms = gather_rows(params["term_emb"].tensor, qu)
    flat = terms.reshape(user_ids.size, qu.shape[1] * terms.shape[-1])
    e_u = gather_rows(params["user_emb"].tensor, user_ids)
    x = concat([e_u, flat], axis=1)
    return matmul(x, params["gate.W"].tensor)


def gated_item_queries(
    params: dict[str, Parameter],
    keys: Tensor,
    qi_ids: np.ndarray,
    scatter: SparseMap | None = None,
) -> Tensor:
    """Pool each row of item profile terms with key-dependent softmax weights.

    Rows whose profile is entirely PAD (items never reached through search)
    yield the zero vector: the gate has nothing to attend to.
    """
    qi_ids = np.asarray(qi_ids, dtype=np.int64)
    mask = qi_ids != Vocabulary.PAD_ID
    return gated_softmax_pool(
        params["term_emb"].tensor, keys, qi_ids, mask, scatter=scatter
    )


# -- generator -----------------------------------------------------------------


def generator_mlp(params: dict[str, Parameter], x: Tensor) -> Tensor:
    """Two ReLU hidden layers, linear output: (B, 4*dim) -> (B, dim)."""
    h = (matmul(x, params["gen.W1"].tensor) + params["gen.b1"].tensor).relu()
    h = (matmul(h, params["gen.W2"].tensor) + params["gen.b2"].tensor).relu()
    return matmul(h, params["gen.W3"].tensor) + params["gen.b3"].tensor


def generate_intents(
    params: dict[str, Parameter],
    profiles: HistoryProfiles,
    user_ids: np.ndarray,
    item_ids: np.ndarray,
) -> Tensor:
    """Generated demand intents for an ad-hoc batch of (user, item) pairs."""
    user_ids = np.asarray(user_ids, dtype=np.int64)
    item_ids = np.asarray(item_ids, dtype=np.int64)
    if user_ids.shape != item_ids.shape or user_ids.ndim != 1:
        raise ValidationError("user_ids and item_ids must be equal-length 1-D arrays")
    e_u = gather_rows(params["user_emb"].tensor, user_ids)
    e_i = gather_rows(params["item_emb"].tensor, item_ids)
    e_qu = pool_term_ids(params["term_emb"].tensor, profiles.user_terms[user_ids])
    keys = gate_keys_for(params, profiles, user_ids)
    e_qi = gated_item_queries(params, keys, profiles.item_terms[item_ids])
    return generator_mlp(params, concat([e_u, e_i, e_qu, e_qi], axis=1))


def generated_pair_intents(
    params: dict[str, Parameter], kernels: IntentKernels
) -> Tensor:
    """Generated intents for every deduplicated training pair: (n_pairs, dim).

    Uses the precomputed kernels so the whole-graph pass costs a handful of
    sparse products regardless of how many parallel edges exist.
    """
    e_u = spmm(kernels.sel_pair_user, params["user_emb"].tensor)
    e_i = spmm(kernels.sel_pair_item, params["item_emb"].tensor)
    e_qu = spmm(kernels.sel_pair_user, user_query_context_all(params, kernels))
    keys = spmm(kernels.sel_pair_user, gate_keys_all_users(params, kernels))
    e_qi = gated_item_queries(params, keys, kernels.qi_ids, scatter=kernels.qi_gather)
    return generator_mlp(params, concat([e_u, e_i, e_qu, e_qi], axis=1))


def fallback_intents(params: dict[str, Parameter], count: int) -> Tensor:
    """The learned fallback intent row broadcast to `count` rows."""
    return gather_rows(params["pad_query"].tensor, np.zeros(count, dtype=np.int64))


def supervision_loss(real_query: Tensor, generated: Tensor) -> Tensor:
    """Mean over records of the squared distance between real and generated intent.

    Each record contributes the *sum* of squared residuals over embedding
    dimensions; the batch then averages those sums.  An empty batch (no search
    records) contributes zero.
    """
    if real_query.shape != generated.shape:
        raise ValidationError(
            f"shape mismatch: real {real_query.shape} vs generated {generated.shape}"
        )
    if real_query.shape[0] == 0:
        logger.warning("supervision_loss over an empty batch; returning 0")
        return Tensor(0.0)
    return (real_query - generated).square().sum(axis=1).mean()


# -- single-record conveniences --------------------------------------------------


def pool_query(
    params: dict[str, Parameter], term_ids: tuple[int, ...], cap: int | None = None
) -> Tensor:
    """Pooled intent of one query: (1, dim)."""
    ids = np.array([term_ids], dtype=np.int64) if term_ids else np.full(
        (1, 1), Vocabulary.PAD_ID, dtype=np.int64
    )
    return pool_term_ids(params["term_emb"].tensor, ids, cap=cap)


def generate_demand_intent(
    params: dict[str, Parameter], profiles: HistoryProfiles, user_id: int, item_id: int
) -> Tensor:
    """Generated demand intent of one (user, item) pair: (1, dim)."""
    return generate_intents(
        params, profiles, np.array([user_id]), np.array([item_id])
    )
