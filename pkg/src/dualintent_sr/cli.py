"""Command-line interface.

    dualintent-sr synth       --config run.cfg [--force]
    dualintent-sr train       --config run.cfg [--force] [--seed N] [--resume]
    dualintent-sr eval        --config run.cfg [--force] [--seed N]
    dualintent-sr export      --config run.cfg [--force] [--seed N]
    dualintent-sr check-grads --config run.cfg [--seed N]
    dualintent-sr sweep       --config run.cfg [--force] [--seed N]

Every command that writes into a directory first writes the fully resolved
configuration there as ``run_config.txt``, so an output directory always
says how it was produced. Existing primary outputs are never overwritten
without ``--force``. Exit codes: 0 ok, 2 config error, 3 data error,
4 numeric error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, restore_trainer, save_checkpoint
from .config import RunConfig, load_run_config, write_run_config
from .corpus import (
    InteractionRecord,
    Vocabulary,
    assemble_history_profiles,
    chronological_split,
    encode_records,
    infer_counts,
    read_raw_interactions,
    write_raw_interactions,
)
from .errors import ConfigError, DataError, DualIntentError, NumericError
from .gradcheck import format_report, grad_check
from .graph import InteractionGraph
from .metrics import render_report, write_trial_ranks
from .model import DualIntentModel, Trainer, export_embeddings
from .synth import WorldConfig, synthesize_dataset, write_world_manifest

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = "model.udsr"
GRAD_CHECK_THRESHOLD = 1e-4


@dataclass(slots=True)
class Dataset:
    """Encoded splits plus the id-space geometry they imply."""

    vocab: Vocabulary
    train: list[InteractionRecord]
    valid: list[InteractionRecord]
    test: list[InteractionRecord]
    n_users: int
    n_items: int

    def interacted_all(self) -> dict[int, set[int]]:
        """Per-user item sets over every split (test-time negative filter)."""
        seen: dict[int, set[int]] = {}
        for records in (self.train, self.valid, self.test):
            for rec in records:
                seen.setdefault(rec.user_id, set()).add(rec.item_id)
        return seen


def load_dataset(config: RunConfig) -> Dataset:
    """Read the interaction corpus and derive splits, vocabulary, and counts."""
    path = Path(config.data_dir) / "interactions.tsv"
    if not path.exists():
        raise DataError(f"no interaction data at {path}; run 'synth' first")
    raw = read_raw_interactions(path)
    if not raw:
        raise DataError(f"{path} contains no records")
    split = chronological_split(raw)
    vocab = Vocabulary.from_records(split.train, max_size=config.vocab_size)
    train = encode_records(split.train, vocab)
    valid = encode_records(split.valid, vocab)
    test = encode_records(split.test, vocab)
    n_users, n_items = infer_counts(train, valid, test)
    return Dataset(vocab, train, valid, test, n_users, n_items)


def build_trainer(config: RunConfig, dataset: Dataset, log_sink=None) -> Trainer:
    tcfg = config.train
    dims = tcfg.dims_for(dataset.n_users, dataset.n_items, len(dataset.vocab))
    profiles = assemble_history_profiles(
        dataset.train,
        dataset.vocab,
        dataset.n_users,
        dataset.n_items,
        user_len=tcfg.user_profile_len,
        item_len=tcfg.item_profile_len,
    )
    graph = InteractionGraph(dataset.train, dataset.n_users, dataset.n_items)
    model = DualIntentModel.fresh(dims, tcfg, profiles)
    return Trainer(model, graph, dataset.train, dataset.valid, log_sink=log_sink)


def restore_from_checkpoint(config: RunConfig, dataset: Dataset, log_sink=None) -> Trainer:
    path = Path(config.out_dir) / CHECKPOINT_NAME
    if not path.exists():
        raise DataError(f"no checkpoint at {path}; run 'train' first")
    state = load_checkpoint(path)
    profiles = assemble_history_profiles(
        dataset.train,
        dataset.vocab,
        dataset.n_users,
        dataset.n_items,
        user_len=state.config.user_profile_len,
        item_len=state.config.item_profile_len,
    )
    graph = InteractionGraph(dataset.train, dataset.n_users, dataset.n_items)
    return restore_trainer(
        state, graph, profiles, dataset.train, dataset.valid, log_sink=log_sink
    )


def _prepare_dir(directory: str, primary_outputs: list[str], force: bool) -> Path:
    """Create the directory; refuse to clobber primary outputs without --force."""
    path = Path(directory)
    path.mkdir(parents=True, exist_ok=True)
    if not force:
        existing = [name for name in primary_outputs if (path / name).exists()]
        if existing:
            raise ConfigError(
                f"{path} already contains {', '.join(existing)}; pass --force to overwrite"
            )
    return path


# -- commands --------------------------------------------------------------------------


def cmd_synth(config: RunConfig, args: argparse.Namespace) -> int:
    data_dir = _prepare_dir(config.data_dir, ["interactions.tsv"], args.force)
    write_run_config(config, data_dir / "run_config.txt")
    records, world = synthesize_dataset(config.world, config.world_seed)
    if not records:
        raise DataError("synthesis produced no interactions; increase clicks_per_day")
    write_raw_interactions(records, data_dir / "interactions.tsv")
    write_world_manifest(world, len(records), data_dir / "world_manifest.txt")
    n_search = sum(1 for r in records if r.scenario == "S")
    print(
        f"wrote {len(records)} interactions ({n_search} search, "
        f"{len(records) - n_search} recommendation) to {data_dir / 'interactions.tsv'}"
    )
    return 0


def cmd_train(config: RunConfig, args: argparse.Namespace) -> int:
    out_dir = _prepare_dir(config.out_dir, [CHECKPOINT_NAME], args.force)
    write_run_config(config, out_dir / "run_config.txt")
    dataset = load_dataset(config)
    dataset.vocab.save(out_dir / "vocab.tsv")

    log_lines: list[str] = []

    def sink(line: str) -> None:
        log_lines.append(line)
        logger.info("%s", line)

    if args.resume:
        trainer = restore_from_checkpoint(config, dataset, log_sink=sink)
        print(f"resumed at epoch {trainer.epoch}, step {trainer.global_step}")
    else:
        trainer = build_trainer(config, dataset, log_sink=sink)
    history = trainer.fit()
    save_checkpoint(out_dir / CHECKPOINT_NAME, trainer)
    (out_dir / "train_log.txt").write_text("\n".join(log_lines) + "\n", encoding="utf-8")
    best = max(history) if history else float("nan")
    print(
        f"trained {trainer.epoch} epochs ({trainer.global_step} steps); "
        f"best validation mean_ndcg@{config.train.k}={best:.6f}; "
        f"checkpoint at {out_dir / CHECKPOINT_NAME}"
    )
    return 0


def cmd_eval(config: RunConfig, args: argparse.Namespace) -> int:
    out_dir = _prepare_dir(config.out_dir, ["eval_report.txt"], args.force)
    write_run_config(config, out_dir / "run_config.txt")
    dataset = load_dataset(config)
    trainer = restore_from_checkpoint(config, dataset)
    report, trials, ranks = trainer.evaluate(
        dataset.test,
        dataset.interacted_all(),
        seed=config.eval.seed,
        n_negatives=config.eval.negatives,
        k=config.eval.k,
        max_trials=config.eval.max_trials,
    )
    text = render_report(report)
    (out_dir / "eval_report.txt").write_text(text, encoding="utf-8")
    write_trial_ranks(trials, ranks, out_dir / "trial_ranks.tsv")
    print(text, end="")
    return 0


def cmd_export(config: RunConfig, args: argparse.Namespace) -> int:
    out_dir = _prepare_dir(config.out_dir, ["embeddings.tsv"], args.force)
    write_run_config(config, out_dir / "run_config.txt")
    dataset = load_dataset(config)
    trainer = restore_from_checkpoint(config, dataset)
    records = dataset.test
    if config.export.max_records is not None:
        records = records[: config.export.max_records]
    path = out_dir / "embeddings.tsv"
    n_rows = export_embeddings(trainer, records, str(path))
    print(f"wrote {n_rows} embedding rows to {path}")
    return 0


def cmd_check_grads(config: RunConfig, args: argparse.Namespace) -> int:
    """End-to-end gradient check of every loss on a miniature instance."""
    # Small enough for finite differences, roomy enough that every user
    # still has unseen items to sample as negatives.
    world = WorldConfig(
        n_users=10, n_items=25, n_terms=12, n_days=8, clicks_per_day=2.5, latent_dim=4
    )
    raw, _ = synthesize_dataset(world, seed=config.world_seed)
    split = chronological_split(raw)
    vocab = Vocabulary.from_records(split.train, max_size=config.vocab_size)
    train = encode_records(split.train, vocab)
    valid = encode_records(split.valid, vocab)
    n_users, n_items = infer_counts(train, valid, encode_records(split.test, vocab))

    tcfg = replace(
        config.train, dim=10, batch_size=24, use_generator=True, use_translation=True,
        detach_intents=False, lambda1=max(config.train.lambda1, 0.5),
        lambda2=max(config.train.lambda2, 0.1),
    )
    dims = tcfg.dims_for(n_users, n_items, len(vocab))
    profiles = assemble_history_profiles(
        train, vocab, n_users, n_items,
        user_len=tcfg.user_profile_len, item_len=tcfg.item_profile_len,
    )
    graph = InteractionGraph(train, n_users, n_items)
    model = DualIntentModel.fresh(dims, tcfg, profiles)
    trainer = Trainer(model, graph, train, valid, log_sink=lambda _line: None)

    batch = np.arange(min(tcfg.batch_size, len(train)))
    neg_items = trainer.sample_batch_negatives(batch)
    params = list(model.params.values())
    report = grad_check(
        lambda: trainer.compute_losses(batch, neg_items),
        params,
        max_coords_per_param=args.coords,
        rng=np.random.default_rng(0),
    )
    print(format_report(report, threshold=GRAD_CHECK_THRESHOLD), end="")
    failures = report.failures(GRAD_CHECK_THRESHOLD)
    if failures:
        raise NumericError(
            f"{len(failures)} loss/parameter pairs exceeded "
            f"relative error {GRAD_CHECK_THRESHOLD:g}"
        )
    print(
        f"all gradients verified: {report.n_coordinates} coordinates, "
        f"max relative error {report.max_rel_err:.3e}"
    )
    return 0


def cmd_sweep(config: RunConfig, args: argparse.Namespace) -> int:
    out_dir = _prepare_dir(config.out_dir, ["sweep.tsv"], args.force)
    write_run_config(config, out_dir / "run_config.txt")
    dataset = load_dataset(config)
    k = config.train.k

    rows: list[tuple[float, float, float]] = []
    for lam1 in config.sweep.lambda1:
        for lam2 in config.sweep.lambda2:
            sweep_config = replace(
                config, train=replace(config.train, lambda1=lam1, lambda2=lam2)
            )
            trainer = build_trainer(sweep_config, dataset, log_sink=lambda _line: None)
            trainer.fit()
            rows.append((lam1, lam2, trainer.best_metric))
            print(f"lambda1={lam1:g} lambda2={lam2:g} mean_ndcg@{k}={trainer.best_metric:.6f}")

    with open(out_dir / "sweep.tsv", "w", encoding="utf-8") as handle:
        handle.write(f"lambda1\tlambda2\tmean_ndcg@{k}\n")
        for lam1, lam2, metric in rows:
            handle.write(f"{lam1:g}\t{lam2:g}\t{metric:.6f}\n")
    best = max(rows, key=lambda r: r[2])
    print(f"best: lambda1={best[0]:g} lambda2={best[1]:g} mean_ndcg@{k}={best[2]:.6f}")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "export": cmd_export,
    "check-grads": cmd_check_grads,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dualintent-sr",
        description="Joint search/recommendation with generated demand intents.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str, force: bool = True) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to a key=value run config")
        p.add_argument(
            "--seed", type=int, default=None, help="override train.seed from the config"
        )
        if force:
            p.add_argument(
                "--force", action="store_true", help="overwrite existing outputs"
            )
        return p

    add("synth", "generate a synthetic interaction corpus")
    train = add("train", "fit the model on the training split")
    train.add_argument(
        "--resume", action="store_true", help="continue from the saved checkpoint"
    )
    add("eval", "rank test records with the trained model")
    add("export", "write final embeddings as TSV")
    check = add("check-grads", "verify analytic gradients against finite differences", force=False)
    check.add_argument(
        "--coords", type=int, default=25, help="sampled coordinates per parameter"
    )
    add("sweep", "grid-search the loss weights")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    try:
        config = load_run_config(args.config)
        if args.seed is not None:
            config.train = replace(config.train, seed=args.seed)
        return COMMANDS[args.command](config, args)
    except DualIntentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
