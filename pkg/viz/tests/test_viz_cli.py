"""End-to-end CLI tests on a handcrafted dump file."""

import numpy as np
import pytest

from intentviz.cli import main

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


@pytest.fixture()
def dump_file(tmp_path):
    """A dump with a planted geometry: intent rows hug the items, user rows don't."""
    rng = np.random.default_rng(7)
    dim = 6
    items = rng.normal(size=(60, dim))
    users = items[rng.integers(0, 60, size=50)] + rng.normal(scale=4.0, size=(50, dim))
    intents = items[rng.integers(0, 60, size=50)] + rng.normal(scale=0.05, size=(50, dim))
    lines = []
    for kind, block in (("user", users), ("item", items), ("intent", intents)):
        for row_id, vec in enumerate(block):
            lines.append("\t".join([kind, str(row_id)] + ["%.9g" % v for v in vec]))
    path = tmp_path / "embeddings.tsv"
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return path


class TestCli:
    def test_default_run_writes_three_panels_and_metrics(self, dump_file, tmp_path, capsys):
        out_dir = tmp_path / "plots"
        code = main(
            ["--input", str(dump_file), "--seed", "0", "--out", str(out_dir), "--sample", "40"]
        )
        assert code == 0
        for name in ("items.png", "inherent.png", "translated.png"):
            assert (out_dir / name).read_bytes()[:8] == PNG_MAGIC
        metrics = (out_dir / "metrics.txt").read_text(encoding="utf-8").splitlines()
        assert metrics[0].startswith("inherent mean_nearest_item_distance=")
        assert metrics[1].startswith("translated mean_nearest_item_distance=")
        run_lines = (out_dir / "run.txt").read_text(encoding="utf-8").splitlines()
        assert "kinds = user,item,intent" in run_lines
        assert "seed = 0" in run_lines
        captured = capsys.readouterr().out
        assert "translated mean_nearest_item_distance=" in captured

    def test_planted_geometry_ranks_translated_below_inherent(self, dump_file, tmp_path):
        out_dir = tmp_path / "plots"
        assert main(["--input", str(dump_file), "--out", str(out_dir), "--sample", "40"]) == 0
        metrics = dict(
            line.split(" mean_nearest_item_distance=")
            for line in (out_dir / "metrics.txt").read_text(encoding="utf-8").splitlines()
        )
        assert float(metrics["translated"]) < float(metrics["inherent"])

    def test_two_kind_selection_writes_single_panel(self, dump_file, tmp_path):
        out_dir = tmp_path / "plots"
        code = main(
            [
                "--input", str(dump_file),
                "--kinds", "item,intent",
                "--seed", "1",
                "--out", str(out_dir),
                "--sample", "40",
            ]
        )
        assert code == 0
        assert (out_dir / "translated.png").exists()
        assert not (out_dir / "inherent.png").exists()
        assert not (out_dir / "items.png").exists()

    def test_identical_invocations_produce_identical_bytes(self, dump_file, tmp_path):
        args = ["--input", str(dump_file), "--seed", "5", "--sample", "40"]
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert main(args + ["--out", str(out_a)]) == 0
        assert main(args + ["--out", str(out_b)]) == 0
        for name in ("items.png", "inherent.png", "translated.png", "metrics.txt"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

    def test_missing_input_fails_cleanly(self, tmp_path, capsys):
        code = main(["--input", str(tmp_path / "nope.tsv"), "--out", str(tmp_path / "o")])
        assert code == 1
        assert "not found" in capsys.readouterr().err

    def test_unknown_kind_fails_cleanly(self, dump_file, tmp_path, capsys):
        code = main(
            ["--input", str(dump_file), "--kinds", "item,foo", "--out", str(tmp_path / "o")]
        )
        assert code == 1
        assert "unknown kind" in capsys.readouterr().err
