"""Translation-based neighborhood propagation and layer aggregation.

Each propagation layer rebuilds item states from the users who interacted with
them and vice versa, with the interaction's intent acting as a *translation*
between the two spaces:

    item  <- mean over incident edges of (user_state + intent)
    user  <- mean over incident edges of (item_state - intent)

Both updates read the previous layer's states.  A node with no edges keeps its
previous state.  The final representation is a weighted sum of all layer
outputs (input embedding included) with weight 1/(layer+1) — deliberately not
normalized, matching the reference aggregation scheme.

The alignment objective `contrastive_loss` pulls ``user + intent`` toward the
interacted item and pushes it away from a sampled negative, scoring each
record by the squared-distance margin through a softplus.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import SparseMap, Tensor, spmm
from .errors import ValidationError
from .graph import InteractionGraph

__all__ = [
    "GraphKernels",
    "build_graph_kernels",
    "propagate",
    "combine_layers",
    "layer_weights",
    "contrastive_loss",
]


@dataclass(slots=True)
class GraphKernels:
    """Constant sparse maps implementing one propagation layer."""

    sel_edge_user: SparseMap  # (n_edges, n_users): user state per edge
    sel_edge_item: SparseMap  # (n_edges, n_items): item state per edge
    agg_into_item: SparseMap  # (n_items, n_edges): mean over incident edges
    agg_into_user: SparseMap  # (n_users, n_edges)
    iso_user: np.ndarray  # (n_users, 1) float, 1.0 where the user has no edges
    iso_item: np.ndarray  # (n_items, 1)


def build_graph_kernels(graph: InteractionGraph) -> GraphKernels:
    return GraphKernels(
        sel_edge_user=SparseMap.select_rows(graph.edge_user, graph.n_users),
        sel_edge_item=SparseMap.select_rows(graph.edge_item, graph.n_items),
        agg_into_item=SparseMap.mean_from_groups(graph.edge_item, graph.n_items),
        agg_into_user=SparseMap.mean_from_groups(graph.edge_user, graph.n_users),
        iso_user=graph.isolated_users().astype(np.float64)[:, None],
        iso_item=graph.isolated_items().astype(np.float64)[:, None],
    )


def propagate(
    kernels: GraphKernels,
    user_emb: Tensor,
    item_emb: Tensor,
    edge_intents: Tensor | None,
    n_layers: int,
) -> tuple[list[Tensor], list[Tensor]]:
    """Run `n_layers` propagation steps; returns per-layer user and item states.

    ``edge_intents`` holds one intent vector per edge in canonical edge order;
    passing ``None`` drops the translation and reduces each layer to plain
    neighborhood mean-pooling (the structure-only ablation).

    Output lists have length ``n_layers + 1`` and start with the inputs.
    """
    if n_layers < 0:
        raise ValidationError(f"n_layers must be >= 0, got {n_layers}")
    users = [user_emb]
    items = [item_emb]
    for _ in range(n_layers):
        u_prev, i_prev = users[-1], items[-1]
        to_items = spmm(kernels.sel_edge_user, u_prev)
        to_users = spmm(kernels.sel_edge_item, i_prev)
        if edge_intents is not None:
            to_items = to_items + edge_intents
            to_users = to_users - edge_intents
        i_next = spmm(kernels.agg_into_item, to_items) + i_prev * kernels.iso_item
        u_next = spmm(kernels.agg_into_user, to_users) + u_prev * kernels.iso_user
        users.append(u_next)
        items.append(i_next)
    return users, items


def layer_weights(n_layers: int) -> list[float]:
    """Aggregation weight per layer: 1/(l+1) for l = 0..n_layers."""
    return [1.0 / (layer + 1) for layer in range(n_layers + 1)]


def combine_layers(layers: list[Tensor]) -> Tensor:
    """Weighted sum of layer states with weights 1/(l+1); not normalized."""
    if not layers:
        raise ValidationError("combine_layers needs at least one layer")
    weights = layer_weights(len(layers) - 1)
    out = layers[0] * weights[0]
    for w, layer in zip(weights[1:], layers[1:]):
        out = out + layer * w
    return out


def contrastive_loss(
    user_state: Tensor, intents: Tensor, pos_item: Tensor, neg_item: Tensor
) -> Tensor:
    """Mean softplus of the negated squared-distance margin.

    For each row the anchor is ``user + intent``; the loss rewards the anchor
    being closer (in squared L2) to the interacted item than to the negative:

        loss = mean softplus(||a - pos||^2 - ||a - neg||^2)

    Equal distances give softplus(0) = ln 2 per row.
    """
    if user_state.shape[0] == 0:
        return Tensor(0.0)
    anchor = user_state + intents
    d_pos = (anchor - pos_item).square().sum(axis=1)
    d_neg = (anchor - neg_item).square().sum(axis=1)
    return (d_pos - d_neg).softplus().mean()
