"""Unit tests for kind selection, seeded subsampling, and the joint reduction."""

import numpy as np
import pytest

from intentviz import EmbeddingDump, VizError, parse_kinds, reduce_embeddings


def make_dump(counts: dict[str, int], dim: int = 4, seed: int = 0) -> EmbeddingDump:
    rng = np.random.default_rng(seed)
    ids = {kind: np.arange(n, dtype=np.int64) for kind, n in counts.items()}
    vectors = {kind: rng.normal(size=(n, dim)) for kind, n in counts.items()}
    return EmbeddingDump(ids=ids, vectors=vectors, dim=dim)


class TestParseKinds:
    def test_orders_canonically(self):
        assert parse_kinds("intent,item,user") == ("user", "item", "intent")

    def test_subset(self):
        assert parse_kinds("item,intent") == ("item", "intent")

    def test_rejects_unknown(self):
        with pytest.raises(VizError, match="unknown kind"):
            parse_kinds("item,queries")

    def test_rejects_empty(self):
        with pytest.raises(VizError, match="no kinds requested"):
            parse_kinds(" , ")


class TestReduce:
    def test_same_seed_same_coordinates(self):
        dump = make_dump({"user": 60, "item": 50, "intent": 70})
        a = reduce_embeddings(dump, ("user", "item", "intent"), seed=3, sample_n=40)
        b = reduce_embeddings(dump, ("user", "item", "intent"), seed=3, sample_n=40)
        np.testing.assert_array_equal(a.coords, b.coords)
        np.testing.assert_array_equal(a.ids, b.ids)
        np.testing.assert_array_equal(a.kinds, b.kinds)

    def test_different_seed_changes_selection(self):
        dump = make_dump({"user": 500, "item": 500})
        a = reduce_embeddings(dump, ("user", "item"), seed=0, sample_n=40)
        b = reduce_embeddings(dump, ("user", "item"), seed=1, sample_n=40)
        assert not np.array_equal(a.ids, b.ids)

    def test_caps_each_kind_at_sample_n(self):
        dump = make_dump({"user": 90, "item": 120})
        proj = reduce_embeddings(dump, ("user", "item"), seed=0, sample_n=40)
        assert (proj.kinds == "user").sum() == 40
        assert (proj.kinds == "item").sum() == 40
        assert proj.coords.shape == (80, 2)

    def test_small_kind_plots_everything_with_warning(self):
        dump = make_dump({"user": 12, "item": 60})
        with pytest.warns(UserWarning, match="kind 'user' has only 12 rows"):
            proj = reduce_embeddings(dump, ("user", "item"), seed=0, sample_n=40)
        assert (proj.kinds == "user").sum() == 12
        assert (proj.kinds == "item").sum() == 40

    def test_rows_grouped_in_canonical_kind_order(self):
        dump = make_dump({"user": 40, "item": 40, "intent": 40})
        proj = reduce_embeddings(dump, ("user", "item", "intent"), seed=0, sample_n=40)
        labels = list(proj.kinds)
        assert labels == ["user"] * 40 + ["item"] * 40 + ["intent"] * 40

    def test_single_kind_is_valid(self):
        dump = make_dump({"item": 64})
        proj = reduce_embeddings(dump, ("item",), seed=0, sample_n=50)
        assert proj.coords.shape == (50, 2)

    def test_missing_kind_is_an_error(self):
        dump = make_dump({"item": 64})
        with pytest.raises(VizError, match="no rows of kind"):
            reduce_embeddings(dump, ("user", "item"), seed=0)

    def test_tiny_input_raises_clean_error(self):
        # The reducer's default perplexity needs more rows than this.
        dump = make_dump({"item": 4, "user": 4})
        with pytest.raises(VizError, match="too few rows"):
            reduce_embeddings(dump, ("user", "item"), seed=0, sample_n=4)

    def test_rejects_nonpositive_sample(self):
        dump = make_dump({"item": 8})
        with pytest.raises(VizError, match="sample size"):
            reduce_embeddings(dump, ("item",), seed=0, sample_n=0)
