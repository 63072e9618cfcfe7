"""intentviz: 2-D scatter companion for dualintent-sr embedding exports."""

from .dump import KINDS, EmbeddingDump, load_dump
from .errors import VizError
from .plot import (
    RenderResult,
    metric_lines,
    nearest_item_distances,
    panel_plan,
    render_panel,
    render_views,
)
from .project import SAMPLE_PER_KIND, Projection, parse_kinds, reduce_embeddings

__all__ = [
    "KINDS",
    "SAMPLE_PER_KIND",
    "EmbeddingDump",
    "Projection",
    "RenderResult",
    "VizError",
    "load_dump",
    "metric_lines",
    "nearest_item_distances",
    "panel_plan",
    "parse_kinds",
    "reduce_embeddings",
    "render_panel",
    "render_views",
]

__version__ = "0.1.0"
