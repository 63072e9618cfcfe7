"""Synthetic interaction corpus with planted inherent and demand structure.

The generator plants two latent preference components per user:

- an *inherent* vector, fixed across days (long-term taste), and
- a *demand* vector that takes a small random-walk step each day
  (short-term intent with day-to-day persistence).

Because demand walks rather than jittering around a fixed point, what a user
wants tomorrow resembles what they searched for today more than it resembles
their long-run average — so fresh query history carries ranking signal that
no amount of averaging over the full interaction history can replace.

Items and query terms live in the same latent space.  Each (user, day) pair
produces a Poisson number of clicks; every click picks the item maximizing
``item_vec . (inherent + demand)`` plus Gumbel choice noise.  A coin decides
whether the click happened in the search scenario, in which case the issued
query is the demand vector's top-scoring terms.  Because queries are a direct
readout of the planted demand component, models that reconstruct demand from
history have a measurable ranking advantage — which is what the training
pipeline is supposed to exploit.

Record order is deterministic: day ascending, then user ascending, then click
index; all randomness flows from one seeded generator.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .corpus import REC, SEARCH, RawInteraction
from .errors import ConfigError

__all__ = ["WorldConfig", "SyntheticWorld", "synthesize_dataset", "write_world_manifest"]


@dataclass(slots=True)
class WorldConfig:
    """Knobs of the planted-structure generator."""

    n_users: int = 2000
    n_items: int = 300
    n_terms: int = 50
    n_days: int = 8
    latent_dim: int = 8
    clicks_per_day: float = 3.0
    p_search: float = 0.6
    inherent_weight: float = 0.3
    demand_weight: float = 1.6
    demand_drift: float = 0.3
    choice_noise: float = 0.2
    max_query_terms: int = 3

    def validate(self) -> None:
        if min(self.n_users, self.n_items, self.n_terms, self.latent_dim) < 1:
            raise ConfigError("world sizes must all be >= 1")
        if self.n_days < 3:
            raise ConfigError(f"need >= 3 days for a chronological split, got {self.n_days}")
        if self.clicks_per_day <= 0:
            raise ConfigError(f"clicks_per_day must be positive, got {self.clicks_per_day}")
        if not 0.0 <= self.p_search <= 1.0:
            raise ConfigError(f"p_search must lie in [0, 1], got {self.p_search}")
        if self.max_query_terms < 1:
            raise ConfigError(f"max_query_terms must be >= 1, got {self.max_query_terms}")
        if self.max_query_terms > self.n_terms:
            raise ConfigError("max_query_terms cannot exceed the number of terms")
        if self.demand_drift < 0 or self.choice_noise < 0:
            raise ConfigError("noise scales must be non-negative")


@dataclass(slots=True)
class SyntheticWorld:
    """Latent state behind a generated corpus (kept for analysis/tests)."""

    config: WorldConfig
    seed: int
    item_vectors: np.ndarray  # (n_items, latent_dim), unit rows
    term_vectors: np.ndarray  # (n_terms, latent_dim), unit rows
    user_inherent: np.ndarray  # (n_users, latent_dim), unit rows
    user_demand: np.ndarray = field(repr=False, default=None)  # (n_users, n_days, latent_dim), unit rows


def _unit_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return x / norms


def term_name(index: int) -> str:
    return f"t{index:03d}"


def synthesize_dataset(config: WorldConfig, seed: int) -> tuple[list[RawInteraction], SyntheticWorld]:
    """Generate a corpus plus the latent world that produced it."""
    config.validate()
    rng = np.random.default_rng(seed)
    c = config

    item_vectors = _unit_rows(rng.normal(size=(c.n_items, c.latent_dim)))
    term_vectors = _unit_rows(rng.normal(size=(c.n_terms, c.latent_dim)))
    user_inherent = _unit_rows(rng.normal(size=(c.n_users, c.latent_dim)))
    demand_base = _unit_rows(rng.normal(size=(c.n_users, c.latent_dim)))
    # Demand performs a random walk on the unit sphere: each day nudges the
    # previous day's vector by a step whose expected norm is `demand_drift`
    # relative to the unit vector, independent of the latent dimension.
    steps = rng.normal(size=(c.n_users, c.n_days, c.latent_dim)) / np.sqrt(c.latent_dim)
    user_demand = np.empty((c.n_users, c.n_days, c.latent_dim))
    current = demand_base
    for day in range(c.n_days):
        current = _unit_rows(current + c.demand_drift * steps[:, day])
        user_demand[:, day] = current

    records: list[RawInteraction] = []
    names = [term_name(i) for i in range(c.n_terms)]
    for day in range(c.n_days):
        n_clicks = rng.poisson(c.clicks_per_day, size=c.n_users)
        total = int(n_clicks.sum())
        if total == 0:
            continue
        click_user = np.repeat(np.arange(c.n_users), n_clicks)
        is_search = rng.random(total) < c.p_search
        gumbel = rng.gumbel(size=(total, c.n_items))
        query_len = rng.integers(1, c.max_query_terms + 1, size=total)

        preference = (
            c.inherent_weight * user_inherent[click_user]
            + c.demand_weight * user_demand[click_user, day]
        )
        utility = preference @ item_vectors.T + c.choice_noise * gumbel
        clicked = utility.argmax(axis=1)

        term_scores = user_demand[click_user, day] @ term_vectors.T
        # Highest-affinity terms first; argsort on the negated scores gives a
        # deterministic ascending-index order among exact ties.
        top_terms = np.argsort(-term_scores, axis=1, kind="stable")

        for j in range(total):
            if is_search[j]:
                terms = tuple(names[t] for t in top_terms[j, : query_len[j]])
                records.append(
                    RawInteraction(SEARCH, int(click_user[j]), int(clicked[j]), day, terms)
                )
            else:
                records.append(RawInteraction(REC, int(click_user[j]), int(clicked[j]), day))

    world = SyntheticWorld(
        config=c,
        seed=seed,
        item_vectors=item_vectors,
        term_vectors=term_vectors,
        user_inherent=user_inherent,
        user_demand=user_demand,
    )
    return records, world


def write_world_manifest(world: SyntheticWorld, n_records: int, path) -> None:
    """Text manifest of generator settings, written before the data files."""
    path = Path(path)
    lines = [f"seed = {world.seed}", f"records = {n_records}"]
    for f in fields(world.config):
        lines.append(f"world.{f.name} = {getattr(world.config, f.name)!r}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
