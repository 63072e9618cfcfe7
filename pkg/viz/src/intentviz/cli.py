"""Command-line entry point.

    viz --input embeddings.tsv --kinds item,intent --seed 0 --out plots/

reads an embedding TSV exported by ``dualintent-sr export``, jointly reduces
up to ``--sample`` rows of each requested kind to 2-D, writes one PNG per
panel plus ``metrics.txt`` and ``run.txt`` into ``--out``, and prints what it
wrote.  The outputs are a pure function of the input file, the seed, and the
flags.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .dump import load_dump
from .errors import VizError
from .plot import metric_lines, nearest_item_distances, render_views
from .project import SAMPLE_PER_KIND, parse_kinds, reduce_embeddings


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="viz",
        description="Scatter-plot embedding dumps: items vs inherent and translated intents.",
    )
    parser.add_argument("--input", required=True, help="embedding TSV written by the exporter")
    parser.add_argument(
        "--kinds",
        default="user,item,intent",
        help="comma-separated kinds to plot (default: user,item,intent)",
    )
    parser.add_argument("--seed", type=int, default=0, help="sampling and reduction seed")
    parser.add_argument("--out", required=True, help="directory receiving PNGs and metrics")
    parser.add_argument(
        "--sample",
        type=int,
        default=SAMPLE_PER_KIND,
        help=f"rows plotted per kind (default: {SAMPLE_PER_KIND})",
    )
    return parser


def run(args: argparse.Namespace) -> list[str]:
    """Execute one viz run; returns the lines to print on stdout."""
    dump = load_dump(args.input)
    kinds = parse_kinds(args.kinds)
    projection = reduce_embeddings(dump, kinds, seed=args.seed, sample_n=args.sample)

    out_dir = Path(args.out)
    results = render_views(projection, kinds, out_dir)
    lines = [f"wrote {res.path} ({res.n_points} points)" for res in results]

    metrics = nearest_item_distances(projection)
    if metrics:
        rendered = metric_lines(metrics)
        (out_dir / "metrics.txt").write_text("\n".join(rendered) + "\n", encoding="utf-8")
        lines.extend(rendered)

    (out_dir / "run.txt").write_text(
        "".join(
            f"{key} = {value}\n"
            for key, value in (
                ("input", args.input),
                ("kinds", ",".join(kinds)),
                ("seed", args.seed),
                ("sample", args.sample),
                ("out", args.out),
            )
        ),
        encoding="utf-8",
    )
    return lines


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        for line in run(args):
            print(line)
    except VizError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
