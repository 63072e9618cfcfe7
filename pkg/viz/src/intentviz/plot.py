"""Render the projected points as PNG scatter panels and companion numbers.

Three views exist, one per question the plot answers:

* ``items.png``       — where the item cloud sits,
* ``inherent.png``    — bare user states against the items,
* ``translated.png``  — intent-translated user states against the items.

Every panel is drawn from the same joint projection, so distances are
comparable across panels.  The quantitative companion is, per intent-bearing
kind, the mean 2-D distance from each of its points to the nearest item.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

import numpy as np  # noqa: E402

from .dump import KINDS  # noqa: E402
from .errors import VizError  # noqa: E402
from .project import Projection  # noqa: E402

PALETTE = {"item": "#1f77b4", "user": "#d62728", "intent": "#2ca02c"}
LEGEND_LABELS = {"item": "items", "user": "inherent intents", "intent": "translated intents"}

#: File name of the single-kind / paired panel that features each kind.
PANEL_FILES = {"user": "inherent.png", "item": "items.png", "intent": "translated.png"}
METRIC_NAMES = {"user": "inherent", "intent": "translated"}


@dataclass(frozen=True)
class RenderResult:
    """What one panel ended up containing."""

    path: Path
    legend_labels: tuple[str, ...]
    n_points: int


def render_panel(
    projection: Projection, kinds: tuple[str, ...], out_path: str | Path, title: str
) -> RenderResult:
    """Scatter the projection rows of `kinds` into one PNG.

    Items are drawn first so intent points stay visible on top of the cloud.
    """
    order = [k for k in ("item", "user", "intent") if k in kinds]
    groups = [(k, projection.points_of(k)) for k in order]
    groups = [(k, pts) for k, pts in groups if pts.shape[0] > 0]
    if not groups:
        raise VizError("nothing to plot")

    fig, ax = plt.subplots(figsize=(6.0, 6.0))
    for kind, pts in groups:
        ax.scatter(
            pts[:, 0],
            pts[:, 1],
            s=14.0,
            alpha=0.8,
            linewidths=0.0,
            color=PALETTE[kind],
            label=LEGEND_LABELS[kind],
        )
    ax.set_title(title)
    ax.legend(loc="best")
    ax.set_xticks([])
    ax.set_yticks([])
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path)
    plt.close(fig)
    return RenderResult(
        path=out_path,
        legend_labels=tuple(LEGEND_LABELS[k] for k, _ in groups),
        n_points=int(sum(pts.shape[0] for _, pts in groups)),
    )


def panel_plan(kinds: tuple[str, ...]) -> list[tuple[tuple[str, ...], str, str]]:
    """Decide which panels a kind selection produces: (kinds, file, title) each.

    Items plus both intent-bearing kinds fan out into the three-panel layout;
    anything smaller becomes a single panel named after its featured kind.
    """
    present = tuple(k for k in KINDS if k in kinds)
    if not present:
        raise VizError("no kinds requested")
    intent_like = [k for k in ("user", "intent") if k in present]
    if "item" in present and len(intent_like) == 2:
        return [
            (("item",), "items.png", "Items"),
            (("user", "item"), "inherent.png", "Inherent intents vs items"),
            (("intent", "item"), "translated.png", "Translated intents vs items"),
        ]
    if "item" in present and len(intent_like) == 1:
        kind = intent_like[0]
        variant = METRIC_NAMES[kind].capitalize()
        return [((kind, "item"), PANEL_FILES[kind], f"{variant} intents vs items")]
    if len(present) == 1:
        kind = present[0]
        titles = {"item": "Items", "user": "Inherent intents", "intent": "Translated intents"}
        return [((kind,), PANEL_FILES[kind], titles[kind])]
    return [(("user", "intent"), "intents.png", "Inherent vs translated intents")]


def render_views(
    projection: Projection, kinds: tuple[str, ...], out_dir: str | Path
) -> list[RenderResult]:
    """Render every panel the kind selection calls for into `out_dir`."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return [
        render_panel(projection, panel_kinds, out_dir / filename, title)
        for panel_kinds, filename, title in panel_plan(kinds)
    ]


def nearest_item_distances(projection: Projection) -> dict[str, float]:
    """Mean 2-D nearest-item distance per intent-bearing kind in the projection.

    Returns ``{"inherent": ..., "translated": ...}`` restricted to the kinds
    actually present; empty when the projection holds no items to measure
    against.
    """
    items = projection.points_of("item")
    if items.shape[0] == 0:
        return {}
    out: dict[str, float] = {}
    for kind, name in METRIC_NAMES.items():
        points = projection.points_of(kind)
        if points.shape[0] > 0:
            gaps = np.linalg.norm(points[:, None, :] - items[None, :, :], axis=2)
            out[name] = float(gaps.min(axis=1).mean())
    return out


def metric_lines(metrics: dict[str, float]) -> list[str]:
    """Render the companion numbers, one `name mean_nearest_item_distance=v` per line."""
    return [
        f"{name} mean_nearest_item_distance={metrics[name]:.6f}"
        for name in ("inherent", "translated")
        if name in metrics
    ]
