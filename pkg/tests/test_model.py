"""Trainer, loss assembly, determinism, and checkpoint round-trip tests.

Scoring is verified against a plain-numpy per-record oracle that re-derives
the head forward pass from raw parameter arrays, so the batched/gathered
implementation can never silently drift from the arithmetic it claims.

Frozen constants (mpmath, 40 digits):
    softplus(0) = ln 2 = 0.6931471805599453094...
    softplus(-1)        = 0.3132616875182228340...
"""

from __future__ import annotations

import numpy as np
import pytest

from dualintent_sr.autodiff import Tensor
from dualintent_sr.checkpoint import load_checkpoint, restore_trainer, save_checkpoint
from dualintent_sr.corpus import (
    REC,
    SEARCH,
    InteractionRecord,
    Vocabulary,
    assemble_history_profiles,
)
from dualintent_sr.errors import ConfigError, DataError, ValidationError
from dualintent_sr.graph import InteractionGraph
from dualintent_sr.intent import generate_intents, pool_term_ids
from dualintent_sr.metrics import build_trials
from dualintent_sr.model import (
    DualIntentModel,
    TrainConfig,
    Trainer,
    bpr_loss,
    export_embeddings,
    head_forward,
    head_widths,
    init_all_parameters,
    rng_streams,
    sample_negative,
)

SOFTPLUS_0 = 0.69314718055994531
SOFTPLUS_NEG1 = 0.31326168751822283

N_USERS = 12
N_ITEMS = 9
VOCAB_SIZE = 14  # ids 0..13; 0=pad, 1=unk
VOCAB = Vocabulary([f"w{i:02d}" for i in range(2, VOCAB_SIZE)])


def make_records(seed: int = 7, n: int = 60) -> list[InteractionRecord]:
    """Mixed search/recommendation records over a small id space."""
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        user = int(rng.integers(0, N_USERS))
        item = int(rng.integers(0, N_ITEMS))
        day = i // 10
        if rng.random() < 0.5:
            n_terms = int(rng.integers(1, 4))
            terms = tuple(int(t) for t in rng.integers(2, VOCAB_SIZE, size=n_terms))
            records.append(InteractionRecord(SEARCH, user, item, day, terms))
        else:
            records.append(InteractionRecord(REC, user, item, day, ()))
    return records


def small_config(**overrides) -> TrainConfig:
    base = dict(
        dim=8,
        n_layers=2,
        batch_size=16,
        epochs=2,
        patience=2,
        seed=3,
        valid_max_trials=50,
    )
    base.update(overrides)
    return TrainConfig(**base)


def make_trainer(config: TrainConfig | None = None, seed: int = 7, log=None):
    config = config or small_config()
    records = make_records(seed)
    train = [r for r in records if r.day < 4]
    valid = [r for r in records if r.day >= 4]
    graph = InteractionGraph(train, N_USERS, N_ITEMS)
    dims = config.dims_for(N_USERS, N_ITEMS, VOCAB_SIZE)
    profiles = assemble_history_profiles(
        train, VOCAB, N_USERS, N_ITEMS,
        user_len=config.user_profile_len, item_len=config.item_profile_len,
    )
    model = DualIntentModel.fresh(dims, config, profiles)
    return Trainer(model, graph, train, valid, log_sink=log), train, valid


# -- numpy oracle ------------------------------------------------------------------


def head_oracle(params, prefix: str, fused_row: np.ndarray) -> float:
    """Independent single-row head forward pass from raw arrays."""
    h = fused_row @ params[f"{prefix}.W1"].data + params[f"{prefix}.b1"].data
    h = np.maximum(h, 0.0)
    h = h @ params[f"{prefix}.W2"].data + params[f"{prefix}.b2"].data
    h = np.maximum(h, 0.0)
    out = h @ params[f"{prefix}.W3"].data + params[f"{prefix}.b3"].data
    return float(out[0])


# -- config and parameter layout ------------------------------------------------------


def test_head_widths_reference_dim():
    assert head_widths(100) == (300, 150, 75, 1)


def test_head_widths_small_dim_rounding():
    assert head_widths(8) == (24, 12, 6, 1)
    assert head_widths(10) == (30, 15, 8, 1)  # 7.5 rounds half-to-even


def test_config_validation():
    with pytest.raises(ConfigError):
        small_config(batch_size=0).validate()
    with pytest.raises(ConfigError):
        small_config(lambda1=-0.1).validate()
    with pytest.raises(ConfigError):
        small_config(patience=0).validate()


def test_parameter_canonical_order():
    config = small_config()
    dims = config.dims_for(N_USERS, N_ITEMS, VOCAB_SIZE)
    params = init_all_parameters(dims, np.random.default_rng(0))
    head = ["W1", "b1", "W2", "b2", "W3", "b3"]
    expected = (
        ["user_emb", "item_emb", "term_emb", "pad_query", "gate.W"]
        + [f"gen.{n}" for n in head]
        + [f"search_head.{n}" for n in head]
        + [f"rec_head.{n}" for n in head]
    )
    assert list(params) == expected
    assert params["search_head.W1"].data.shape == (3 * dims.dim, 12)
    assert params["rec_head.W3"].data.shape == (6, 1)


def test_rng_streams_deterministic_and_distinct():
    a, b = rng_streams(11), rng_streams(11)
    assert a["init"].random() == b["init"].random()
    assert a["shuffle"].random() == b["shuffle"].random()
    assert np.random.default_rng(a["valid"]).random() == np.random.default_rng(b["valid"]).random()
    c = rng_streams(12)
    assert b["negative"].random() != c["negative"].random()


# -- losses ---------------------------------------------------------------------------


def test_bpr_loss_tied_scores_frozen_value():
    s = Tensor(np.zeros((5, 1)))
    assert bpr_loss(s, s).data == pytest.approx(SOFTPLUS_0, abs=1e-12)


def test_bpr_loss_unit_margin_frozen_value():
    pos = Tensor(np.ones((3, 1)))
    neg = Tensor(np.zeros((3, 1)))
    assert bpr_loss(pos, neg).data == pytest.approx(SOFTPLUS_NEG1, abs=1e-12)


def test_bpr_loss_shape_mismatch():
    with pytest.raises(ValidationError):
        bpr_loss(Tensor(np.zeros((3, 1))), Tensor(np.zeros((2, 1))))


# -- negative sampling ------------------------------------------------------------------


def test_sample_negative_avoids_interacted():
    rng = np.random.default_rng(0)
    interacted = {0, 1, 2, 3, 4, 5, 6, 7}
    for _ in range(200):
        assert sample_negative(9, interacted, 10, rng) in (8, 9)


def test_sample_negative_exhaustion_raises():
    rng = np.random.default_rng(0)
    with pytest.raises(DataError, match="after 50 tries"):
        sample_negative(1, set(range(10)), 10, rng, max_tries=50)


def test_sample_negative_deterministic():
    draws1 = [sample_negative(0, {2}, 20, np.random.default_rng(5)) for _ in range(1)]
    draws2 = [sample_negative(0, {2}, 20, np.random.default_rng(5)) for _ in range(1)]
    assert draws1 == draws2


# -- record intents -----------------------------------------------------------------------


def test_record_intents_search_rows_pool_own_query():
    trainer, train, _ = make_trainer()
    model = trainer.model
    batch = train[:12]
    intents = model.record_intents(batch)
    width = model.dims.words_per_query
    for row, rec in enumerate(batch):
        if not rec.is_search:
            continue
        ids = np.full((1, width), 0, dtype=np.int64)
        terms = rec.query_terms[:width]
        ids[0, : len(terms)] = terms
        expected = pool_term_ids(model.params["term_emb"].tensor, ids).data[0]
        np.testing.assert_allclose(intents.data[row], expected, atol=1e-14)


def test_record_intents_rec_rows_are_generated():
    trainer, train, _ = make_trainer()
    model = trainer.model
    batch = train[:12]
    intents = model.record_intents(batch)
    rec_rows = [i for i, r in enumerate(batch) if not r.is_search]
    assert rec_rows, "fixture must include recommendation records"
    users = np.array([batch[i].user_id for i in rec_rows])
    items = np.array([batch[i].item_id for i in rec_rows])
    expected = generate_intents(model.params, model.profiles, users, items)
    np.testing.assert_allclose(intents.data[rec_rows], expected.data, atol=1e-14)


def test_record_intents_item_override_touches_only_rec_rows():
    """A sampled negative changes generated intents but never a search query."""
    trainer, train, _ = make_trainer()
    model = trainer.model
    batch = train[:12]
    alt_items = np.array([(r.item_id + 1) % N_ITEMS for r in batch], dtype=np.int64)
    base = model.record_intents(batch)
    swapped = model.record_intents(batch, item_ids=alt_items)
    for row, rec in enumerate(batch):
        if rec.is_search:
            np.testing.assert_array_equal(base.data[row], swapped.data[row])
        else:
            assert not np.allclose(base.data[row], swapped.data[row])


def test_record_intents_fallback_when_generator_disabled():
    trainer, train, _ = make_trainer(small_config(use_generator=False))
    model = trainer.model
    batch = train[:12]
    intents = model.record_intents(batch)
    fallback = model.params["pad_query"].data[0]
    for row, rec in enumerate(batch):
        if not rec.is_search:
            np.testing.assert_array_equal(intents.data[row], fallback)


def test_record_intents_single_scenario_batches():
    trainer, train, _ = make_trainer()
    model = trainer.model
    only_search = [r for r in train if r.is_search][:5]
    only_rec = [r for r in train if not r.is_search][:5]
    assert model.record_intents(only_search).shape == (5, model.dims.dim)
    assert model.record_intents(only_rec).shape == (5, model.dims.dim)


# -- scoring -----------------------------------------------------------------------------


def test_score_records_matches_numpy_oracle():
    trainer, train, _ = make_trainer()
    model = trainer.model
    batch = train[:16]
    u_star, i_star = model.propagated_states(
        trainer.graph_kernels, trainer.intent_kernels, trainer.n_rec_edges
    )
    intents = model.record_intents(batch)
    scores = model.score_records(u_star, i_star, batch, intents)
    assert scores.shape == (16, 1)
    for row, rec in enumerate(batch):
        fused = np.concatenate(
            [u_star.data[rec.user_id], i_star.data[rec.item_id], intents.data[row]]
        )
        prefix = "search_head" if rec.is_search else "rec_head"
        assert scores.data[row, 0] == pytest.approx(
            head_oracle(model.params, prefix, fused), abs=1e-12
        )


def test_head_forward_matches_oracle_rowwise():
    config = small_config()
    dims = config.dims_for(N_USERS, N_ITEMS, VOCAB_SIZE)
    params = init_all_parameters(dims, np.random.default_rng(1))
    fused = np.random.default_rng(2).normal(size=(7, 3 * dims.dim))
    out = head_forward(params, "rec_head", Tensor(fused))
    for row in range(7):
        assert out.data[row, 0] == pytest.approx(
            head_oracle(params, "rec_head", fused[row]), abs=1e-12
        )


# -- train_step semantics --------------------------------------------------------------------


def test_train_step_updates_parameters_and_reports_losses():
    trainer, train, _ = make_trainer()
    before = {n: p.data.copy() for n, p in trainer.model.params.items()}
    losses = trainer.train_step(np.arange(16))
    assert np.isfinite(losses.total)
    assert losses.total == pytest.approx(
        losses.bpr + 1.5 * losses.supervision + 0.2 * losses.alignment, rel=1e-12
    )
    assert losses.supervision > 0.0
    changed = [n for n, p in trainer.model.params.items() if not np.array_equal(p.data, before[n])]
    assert "user_emb" in changed and "term_emb" in changed
    assert "gen.W1" in changed and "search_head.W1" in changed


def test_train_step_generator_ablation_drops_supervision():
    trainer, _, _ = make_trainer(small_config(use_generator=False))
    losses = trainer.train_step(np.arange(16))
    assert losses.supervision == 0.0
    assert losses.total == pytest.approx(losses.bpr + 0.2 * losses.alignment, rel=1e-12)


def test_train_step_translation_ablation_drops_alignment():
    trainer, _, _ = make_trainer(small_config(use_translation=False))
    losses = trainer.train_step(np.arange(16))
    assert losses.alignment == 0.0
    assert losses.total == pytest.approx(losses.bpr + 1.5 * losses.supervision, rel=1e-12)


def test_train_step_lambda1_zero_skips_supervision_term():
    trainer, _, _ = make_trainer(small_config(lambda1=0.0))
    losses = trainer.train_step(np.arange(16))
    assert losses.supervision == 0.0
    assert losses.total == pytest.approx(losses.bpr + 0.2 * losses.alignment, rel=1e-12)


def test_detached_intents_block_head_gradients_into_generator():
    """With supervision off, a detached generator receives no gradient at all."""
    config = small_config(detach_intents=True, lambda1=0.0, lambda2=0.0)
    trainer, train, _ = make_trainer(config)
    rec_only = np.array(
        [i for i, r in enumerate(train) if not r.is_search][:8], dtype=np.int64
    )
    before = trainer.model.params["gen.W1"].data.copy()
    trainer.train_step(rec_only)
    grad = trainer.model.params["gen.W1"].grad
    assert grad is None or not np.any(grad)
    # weight decay alone must not move a parameter that received no gradient:
    # decoupled decay applies, so it shrinks, but by the decay factor only.
    np.testing.assert_allclose(
        trainer.model.params["gen.W1"].data, before * (1 - 1e-4 * 1e-5), rtol=1e-12
    )


def test_undetached_intents_pass_head_gradients_into_generator():
    config = small_config(detach_intents=False, lambda1=0.0, lambda2=0.0)
    trainer, train, _ = make_trainer(config)
    rec_only = np.array(
        [i for i, r in enumerate(train) if not r.is_search][:8], dtype=np.int64
    )
    trainer.train_step(rec_only)
    grad = trainer.model.params["gen.W1"].grad
    assert grad is not None and np.any(grad)


# -- epochs, determinism, early stopping ------------------------------------------------------


def test_two_identical_runs_are_bitwise_identical():
    logs_a: list[str] = []
    logs_b: list[str] = []
    ta, _, _ = make_trainer(log=logs_a.append)
    tb, _, _ = make_trainer(log=logs_b.append)
    ta.run_epoch()
    tb.run_epoch()
    assert logs_a == logs_b
    for name in ta.model.params:
        np.testing.assert_array_equal(ta.model.params[name].data, tb.model.params[name].data)
    assert ta.validate() == tb.validate()


def test_epoch_permutation_differs_across_epochs():
    trainer, _, _ = make_trainer()
    p1 = trainer._epoch_permutation().copy()
    trainer.run_epoch()
    p2 = trainer._epoch_permutation().copy()
    assert not np.array_equal(p1, p2)


def test_fit_early_stops_and_restores_best_params():
    scripted = iter([0.5, 0.7, 0.6, 0.55, 0.51])

    class Scripted(Trainer):
        def validate(self):
            return next(scripted)

    config = small_config(epochs=10, patience=2)
    records = make_records()
    train = [r for r in records if r.day < 4]
    valid = [r for r in records if r.day >= 4]
    graph = InteractionGraph(train, N_USERS, N_ITEMS)
    dims = config.dims_for(N_USERS, N_ITEMS, VOCAB_SIZE)
    profiles = assemble_history_profiles(
        train, VOCAB, N_USERS, N_ITEMS, user_len=3, item_len=10
    )
    model = DualIntentModel.fresh(dims, config, profiles)
    trainer = Scripted(model, graph, train, valid, log_sink=lambda _line: None)

    snapshots = {}
    original = Trainer.run_epoch

    def capturing(self, max_steps=None):
        result = original(self, max_steps)
        snapshots[self.epoch] = {n: p.data.copy() for n, p in self.model.params.items()}
        return result

    Scripted.run_epoch = capturing
    history = trainer.fit()
    assert history == [0.5, 0.7, 0.6, 0.55]  # stopped after patience=2 stale epochs
    assert trainer.best_epoch == 2
    for name, p in trainer.model.params.items():
        np.testing.assert_array_equal(p.data, snapshots[2][name])


def test_fit_runs_all_epochs_without_stall():
    trainer, _, _ = make_trainer(small_config(epochs=2, patience=5))
    history = trainer.fit()
    assert len(history) == 2
    assert trainer.best_params is not None


# -- trial scoring oracle -------------------------------------------------------------------


def test_score_trials_matches_per_candidate_oracle():
    trainer, train, valid = make_trainer()
    model = trainer.model
    trials = build_trials(
        valid, trainer.interacted_known, N_ITEMS, np.random.default_rng(0), n_negatives=5
    )
    assert trials
    ranks = trainer.score_trials(trials, chunk_rows=17)  # force multiple chunks

    u_star, i_star = model.propagated_states(
        trainer.graph_kernels, trainer.intent_kernels, trainer.n_rec_edges
    )
    width = model.dims.words_per_query
    for trial, rank in zip(trials, ranks):
        scores = []
        for cand in trial.candidates:
            if trial.scenario == SEARCH:
                ids = np.zeros((1, width), dtype=np.int64)
                terms = trial.query_terms[:width]
                ids[0, : len(terms)] = terms
                intent = pool_term_ids(model.params["term_emb"].tensor, ids).data[0]
                prefix = "search_head"
            else:
                intent = generate_intents(
                    model.params,
                    model.profiles,
                    np.array([trial.user_id]),
                    np.array([cand]),
                ).data[0]
                prefix = "rec_head"
            fused = np.concatenate([u_star.data[trial.user_id], i_star.data[cand], intent])
            scores.append(head_oracle(model.params, prefix, fused))
        scores = np.array(scores)
        better = int((scores > scores[0]).sum())
        tied_smaller = int(
            ((scores == scores[0]) & (trial.candidates < trial.candidates[0])).sum()
        )
        assert rank == 1 + better + tied_smaller


def test_score_trials_chunking_invariant():
    trainer, _, valid = make_trainer()
    trials = build_trials(
        valid, trainer.interacted_known, N_ITEMS, np.random.default_rng(1), n_negatives=6
    )
    small = trainer.score_trials(trials, chunk_rows=8)
    large = trainer.score_trials(trials, chunk_rows=10_000)
    np.testing.assert_array_equal(small, large)


def test_validation_trials_are_cached_and_reproducible():
    ta, _, _ = make_trainer()
    tb, _, _ = make_trainer()
    trials_a = ta._validation_trials()
    trials_b = tb._validation_trials()
    assert ta._validation_trials() is trials_a  # cached
    assert len(trials_a) == len(trials_b)
    for x, y in zip(trials_a, trials_b):
        assert x.record_index == y.record_index
        np.testing.assert_array_equal(x.candidates, y.candidates)


# -- checkpointing ------------------------------------------------------------------------------


def _restore_from(path, trainer_src, log=None):
    state = load_checkpoint(path)
    records = make_records()
    train = [r for r in records if r.day < 4]
    valid = [r for r in records if r.day >= 4]
    graph = InteractionGraph(train, N_USERS, N_ITEMS)
    profiles = assemble_history_profiles(
        train, VOCAB, N_USERS, N_ITEMS,
        user_len=state.config.user_profile_len,
        item_len=state.config.item_profile_len,
    )
    return restore_trainer(
        state, graph, profiles, train, valid, log_sink=log or (lambda _l: None)
    )


def test_checkpoint_roundtrip_preserves_everything(tmp_path):
    trainer, _, _ = make_trainer(log=lambda _l: None)
    trainer.run_epoch()
    trainer.validate()
    path = str(tmp_path / "model.udsr")
    save_checkpoint(path, trainer)
    restored = _restore_from(path, trainer)
    assert restored.epoch == trainer.epoch
    assert restored.global_step == trainer.global_step
    assert restored.optimizer.step_count == trainer.optimizer.step_count
    for name in trainer.model.params:
        np.testing.assert_array_equal(
            restored.model.params[name].data, trainer.model.params[name].data
        )
    assert restored.negative_rng.bit_generator.state == trainer.negative_rng.bit_generator.state


def test_resume_epoch_boundary_is_bitwise(tmp_path):
    # Continuous run: two epochs. Interrupted run: one epoch, save, load, one epoch.
    cont, _, _ = make_trainer(log=lambda _l: None)
    cont.run_epoch()
    cont.run_epoch()

    inter, _, _ = make_trainer(log=lambda _l: None)
    inter.run_epoch()
    path = str(tmp_path / "boundary.udsr")
    save_checkpoint(path, inter)
    resumed = _restore_from(path, inter)
    resumed.run_epoch()

    for name in cont.model.params:
        np.testing.assert_array_equal(
            resumed.model.params[name].data, cont.model.params[name].data
        )
    assert resumed.global_step == cont.global_step


def test_resume_mid_epoch_is_bitwise(tmp_path):
    cont_logs: list[str] = []
    cont, _, _ = make_trainer(log=cont_logs.append)
    cont.run_epoch()

    inter, _, _ = make_trainer(log=lambda _l: None)
    completed = inter.run_epoch(max_steps=2)
    assert not completed and inter.step_in_epoch == 2
    path = str(tmp_path / "mid.udsr")
    save_checkpoint(path, inter)

    resumed_logs: list[str] = []
    resumed = _restore_from(path, inter, log=resumed_logs.append)
    assert resumed.step_in_epoch == 2
    assert resumed.run_epoch()

    for name in cont.model.params:
        np.testing.assert_array_equal(
            resumed.model.params[name].data, cont.model.params[name].data
        )
    # resumed log covers exactly the steps after the pause
    assert resumed_logs == cont_logs[2:]


def test_checkpoint_detects_corruption(tmp_path):
    trainer, _, _ = make_trainer(log=lambda _l: None)
    path = str(tmp_path / "c.udsr")
    save_checkpoint(path, trainer)
    blob = bytearray(open(path, "rb").read())
    blob[len(blob) // 2] ^= 0xFF
    open(path, "wb").write(bytes(blob))
    with pytest.raises(DataError, match="integrity"):
        load_checkpoint(path)


def test_checkpoint_rejects_wrong_magic(tmp_path):
    path = str(tmp_path / "bad.udsr")
    open(path, "wb").write(b"NOPE" + b"\x00" * 32)
    with pytest.raises(DataError, match="magic"):
        load_checkpoint(path)


def test_checkpoint_preserves_best_params(tmp_path):
    trainer, _, _ = make_trainer(small_config(epochs=1, patience=5), log=lambda _l: None)
    trainer.fit()
    assert trainer.best_params is not None
    path = str(tmp_path / "best.udsr")
    save_checkpoint(path, trainer)
    restored = _restore_from(path, trainer)
    assert restored.best_params is not None
    for name in trainer.best_params:
        np.testing.assert_array_equal(restored.best_params[name], trainer.best_params[name])
    assert restored.best_metric == trainer.best_metric


# -- export ------------------------------------------------------------------------------------


def test_export_embeddings_layout_and_values(tmp_path):
    trainer, train, _ = make_trainer()
    path = str(tmp_path / "emb.tsv")
    n_rows = export_embeddings(trainer, train[:10], path)
    lines = open(path).read().splitlines()
    assert n_rows == len(lines) == N_USERS + N_ITEMS + 10

    kinds = [line.split("\t")[0] for line in lines]
    assert kinds[:N_USERS] == ["user"] * N_USERS
    assert kinds[N_USERS : N_USERS + N_ITEMS] == ["item"] * N_ITEMS
    assert kinds[N_USERS + N_ITEMS :] == ["intent"] * 10

    dim = trainer.model.dims.dim
    from dualintent_sr.autodiff import no_grad

    with no_grad():
        u_star, i_star = trainer.model.propagated_states(
            trainer.graph_kernels, trainer.intent_kernels, trainer.n_rec_edges
        )
        intents = trainer.model.record_intents(train[:10])
    first = lines[0].split("\t")
    assert first[1] == "0" and len(first) == 2 + dim
    np.testing.assert_allclose(
        np.array(first[2:], dtype=np.float64),
        u_star.data[0].astype(np.float32).astype(np.float64),
        atol=0,
    )
    intent_row = lines[N_USERS + N_ITEMS].split("\t")
    u0 = train[0].user_id
    expected = (u_star.data[u0] + intents.data[0]).astype(np.float32)
    np.testing.assert_array_equal(
        np.array(intent_row[2:], dtype=np.float32), expected
    )


def test_export_float_format_roundtrips_float32():
    value = np.float32(1.2345678e-7)
    assert np.float32("%.9g" % value) == value
