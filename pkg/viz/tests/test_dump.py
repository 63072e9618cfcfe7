"""Unit tests for TSV parsing and dump validation."""

import numpy as np
import pytest

from intentviz import VizError, load_dump


def write_tsv(path, lines):
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return path


def row(kind, row_id, values):
    return "\t".join([kind, str(row_id)] + ["%.9g" % v for v in values])


class TestLoadDump:
    def test_parses_kinds_ids_and_vectors(self, tmp_path):
        path = write_tsv(
            tmp_path / "dump.tsv",
            [
                row("user", 0, [1.0, 2.0]),
                row("user", 1, [3.0, 4.0]),
                row("item", 0, [5.0, 6.0]),
                row("intent", 7, [0.25, -0.5]),
            ],
        )
        dump = load_dump(path)
        assert dump.dim == 2
        assert dump.kinds == ("user", "item", "intent")
        assert dump.count("user") == 2
        np.testing.assert_array_equal(dump.ids["intent"], [7])
        np.testing.assert_allclose(dump.vectors["user"], [[1.0, 2.0], [3.0, 4.0]])

    def test_roundtrips_float32_repr(self, tmp_path):
        # The exporter prints float32 values with %.9g; parsing must recover
        # them exactly.
        value = np.float32(1.0) / np.float32(3.0)
        path = write_tsv(tmp_path / "dump.tsv", [
            row("item", 0, [value]),
            row("user", 0, [value]),
        ])
        dump = load_dump(path)
        assert np.float32(dump.vectors["item"][0, 0]) == value

    def test_skips_blank_lines(self, tmp_path):
        path = tmp_path / "dump.tsv"
        path.write_text(
            row("item", 0, [1.0]) + "\n\n" + row("user", 0, [2.0]) + "\n",
            encoding="utf-8",
        )
        dump = load_dump(path)
        assert dump.count("item") == 1 and dump.count("user") == 1

    def test_missing_file(self, tmp_path):
        with pytest.raises(VizError, match="not found"):
            load_dump(tmp_path / "absent.tsv")

    def test_empty_file(self, tmp_path):
        with pytest.raises(VizError, match="no embedding rows"):
            load_dump(write_tsv(tmp_path / "dump.tsv", []))

    def test_unknown_kind(self, tmp_path):
        path = write_tsv(tmp_path / "dump.tsv", [row("query", 0, [1.0])])
        with pytest.raises(VizError, match="unknown kind 'query'"):
            load_dump(path)

    def test_ragged_rows(self, tmp_path):
        path = write_tsv(
            tmp_path / "dump.tsv",
            [row("item", 0, [1.0, 2.0]), row("user", 0, [1.0])],
        )
        with pytest.raises(VizError, match="has 1 values, earlier rows had 2"):
            load_dump(path)

    def test_non_numeric_value(self, tmp_path):
        path = write_tsv(tmp_path / "dump.tsv", ["item\t0\tone"])
        with pytest.raises(VizError, match="non-numeric"):
            load_dump(path)

    def test_non_integer_id(self, tmp_path):
        path = write_tsv(tmp_path / "dump.tsv", ["item\tzero\t1.0"])
        with pytest.raises(VizError, match="not an integer"):
            load_dump(path)

    def test_too_few_fields(self, tmp_path):
        path = write_tsv(tmp_path / "dump.tsv", ["item\t0"])
        with pytest.raises(VizError, match="expected kind, id"):
            load_dump(path)

    def test_requires_item_rows(self, tmp_path):
        path = write_tsv(
            tmp_path / "dump.tsv", [row("user", 0, [1.0]), row("intent", 0, [2.0])]
        )
        with pytest.raises(VizError, match="no 'item' rows"):
            load_dump(path)

    def test_requires_an_intent_bearing_kind(self, tmp_path):
        path = write_tsv(tmp_path / "dump.tsv", [row("item", 0, [1.0])])
        with pytest.raises(VizError, match="needs 'user' or 'intent' rows"):
            load_dump(path)
