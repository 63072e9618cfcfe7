"""Acceptance test: plots from a real export separate translated from inherent.

Drives the recommender package end to end through its command-line interface
(synth -> train -> export), then points the viz CLI at the exported TSV.
Passing means (a) the three-panel output exists and (b) the emitted mean
nearest-item distance is strictly lower for translated intents than for
inherent intents, i.e. translation moves user states toward the items they
interact with, visibly, in the reduced 2-D space.

The world is small but demand-dominant: most of what a user clicks is driven
by their day's demand rather than a static taste, which is exactly the signal
translation is supposed to carry.  Training knobs were calibrated once on
this world and are frozen here; the alignment weight is set high because the
ranking objective alone stops pushing intent vectors once the ordering is
won, while this test needs the absolute geometry to keep tightening.
"""

import subprocess
from pathlib import Path

import pytest

from intentviz.cli import main

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"

PIPELINE_CONFIG = """\
world.n_users = 150
world.n_items = 60
world.n_terms = 20
world.latent_dim = 4
world.clicks_per_day = 2.5
world.p_search = 0.7
world.inherent_weight = 0.1
world.demand_weight = 2.5
world.demand_drift = 0.0
world.choice_noise = 0.15
world.seed = 3

train.dim = 8
train.batch_size = 256
train.epochs = 32
train.patience = 100
train.lr = 3e-3
train.weight_decay = 1e-3
train.lambda2 = 16.0
train.valid_max_trials = 100

export.max_records = none
data.dir = {data}
out.dir = {out}
"""

VIZ_SEED = 0


@pytest.fixture(scope="module")
def exported_tsv(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("pipeline")
    config = root / "run.cfg"
    config.write_text(
        PIPELINE_CONFIG.format(data=root / "data", out=root / "out"), encoding="utf-8"
    )
    for command in ("synth", "train", "export"):
        proc = subprocess.run(
            ["dualintent-sr", command, "--config", str(config)],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, f"{command} failed:\n{proc.stdout}\n{proc.stderr}"
    return root / "out" / "embeddings.tsv"


@pytest.fixture(scope="module")
def viz_out(exported_tsv, tmp_path_factory) -> Path:
    out_dir = tmp_path_factory.mktemp("plots")
    code = main(
        [
            "--input", str(exported_tsv),
            "--kinds", "user,item,intent",
            "--seed", str(VIZ_SEED),
            "--out", str(out_dir),
        ]
    )
    assert code == 0
    return out_dir


class TestVisualizationAcceptance:
    def test_three_panel_pngs_exist(self, viz_out):
        for name in ("items.png", "inherent.png", "translated.png"):
            data = (viz_out / name).read_bytes()
            assert data[:8] == PNG_MAGIC and len(data) > 0

    def test_translated_intents_sit_strictly_closer_to_items(self, viz_out):
        metrics = dict(
            line.split(" mean_nearest_item_distance=")
            for line in (viz_out / "metrics.txt").read_text(encoding="utf-8").splitlines()
        )
        translated = float(metrics["translated"])
        inherent = float(metrics["inherent"])
        assert translated < inherent, (
            f"translated intents should sit closer to the items than inherent "
            f"intents: translated={translated:.4f} inherent={inherent:.4f}"
        )
