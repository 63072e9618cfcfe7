"""Scikit-learn style estimator facade over the training pipeline.

``DualIntentRecommender`` takes a raw interaction corpus (the output of
`read_raw_interactions` or `synthesize_dataset`), performs the chronological
split, vocabulary construction, and encoding internally, and exposes the
fitted model through ``predict`` / ``evaluate`` / ``score``. Construction
follows the scikit-learn contract: parameters are stored verbatim and only
validated in ``fit``, so ``get_params``/``set_params``/``clone`` behave
normally.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .autodiff import no_grad
from .corpus import (
    RawInteraction,
    Vocabulary,
    assemble_history_profiles,
    chronological_split,
    encode_records,
    infer_counts,
)
from .errors import DataError
from .graph import InteractionGraph
from .metrics import EvalReport
from .model import DualIntentModel, TrainConfig, Trainer

__all__ = ["DualIntentRecommender"]


class DualIntentRecommender(BaseEstimator):
    """Joint search/recommendation ranker with generated demand intents.

    Parameters mirror `TrainConfig` plus the data-preparation knobs
    (vocabulary cap and chronological split widths).
    """

    def __init__(
        self,
        dim: int = 100,
        n_layers: int = 2,
        words_per_query: int = 3,
        user_profile_len: int = 3,
        item_profile_len: int = 10,
        batch_size: int = 256,
        lr: float = 1e-4,
        weight_decay: float = 1e-5,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        lambda1: float = 1.5,
        lambda2: float = 0.2,
        epochs: int = 30,
        patience: int = 5,
        seed: int = 0,
        use_generator: bool = True,
        use_translation: bool = True,
        detach_intents: bool = False,
        negative_tries: int = 100,
        valid_negatives: int = 99,
        valid_max_trials: int = 2000,
        k: int = 5,
        vocab_size: int = 5000,
        train_days: int = 6,
        valid_days: int = 1,
        test_days: int = 1,
        verbose: bool = False,
    ):
        self.dim = dim
        self.n_layers = n_layers
        self.words_per_query = words_per_query
        self.user_profile_len = user_profile_len
        self.item_profile_len = item_profile_len
        self.batch_size = batch_size
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.epochs = epochs
        self.patience = patience
        self.seed = seed
        self.use_generator = use_generator
        self.use_translation = use_translation
        self.detach_intents = detach_intents
        self.negative_tries = negative_tries
        self.valid_negatives = valid_negatives
        self.valid_max_trials = valid_max_trials
        self.k = k
        self.vocab_size = vocab_size
        self.train_days = train_days
        self.valid_days = valid_days
        self.test_days = test_days
        self.verbose = verbose

    # -- scikit-learn API ------------------------------------------------------------

    def fit(self, X: list[RawInteraction], y=None) -> "DualIntentRecommender":
        """Fit on a raw interaction corpus covering the full day range."""
        if not X:
            raise DataError("cannot fit on an empty interaction corpus")
        config = self._train_config()
        config.validate()

        split = chronological_split(
            X, train_days=self.train_days, valid_days=self.valid_days, test_days=self.test_days
        )
        vocab = Vocabulary.from_records(split.train, max_size=self.vocab_size)
        train = encode_records(split.train, vocab)
        valid = encode_records(split.valid, vocab)
        test = encode_records(split.test, vocab)
        n_users, n_items = infer_counts(train, valid, test)

        profiles = assemble_history_profiles(
            train, vocab, n_users, n_items,
            user_len=self.user_profile_len, item_len=self.item_profile_len,
        )
        graph = InteractionGraph(train, n_users, n_items)
        model = DualIntentModel.fresh(
            config.dims_for(n_users, n_items, len(vocab)), config, profiles
        )
        sink = print if self.verbose else (lambda _line: None)
        trainer = Trainer(model, graph, train, valid, log_sink=sink)
        history = trainer.fit()

        self.vocab_ = vocab
        self.n_users_ = n_users
        self.n_items_ = n_items
        self.trainer_ = trainer
        self.model_ = model
        self.train_records_ = train
        self.valid_records_ = valid
        self.test_records_ = test
        self.history_ = history
        self.best_metric_ = trainer.best_metric
        self.best_epoch_ = trainer.best_epoch
        return self

    def predict(self, X: list[RawInteraction]) -> np.ndarray:
        """Relevance score for each interaction's (user, item, query) triple."""
        check_is_fitted(self, "trainer_")
        if not X:
            return np.zeros(0, dtype=np.float64)
        records = encode_records(X, self.vocab_)
        trainer = self.trainer_
        with no_grad():
            u_star, i_star = self.model_.propagated_states(
                trainer.graph_kernels, trainer.intent_kernels, trainer.n_rec_edges
            )
            intents = self.model_.record_intents(records)
            scores = self.model_.score_records(u_star, i_star, records, intents)
        return scores.data[:, 0].copy()

    def score(self, X=None, y=None) -> float:
        """Mean of search and recommendation NDCG@k on the validation split."""
        check_is_fitted(self, "trainer_")
        return float(self.trainer_.validate())

    def evaluate(
        self,
        records: list[RawInteraction] | None = None,
        seed: int = 0,
        n_negatives: int = 99,
        max_trials: int | None = None,
    ) -> EvalReport:
        """Ranking metrics; defaults to the held-out test split."""
        check_is_fitted(self, "trainer_")
        if records is None:
            encoded = self.test_records_
        else:
            encoded = encode_records(records, self.vocab_)
        interacted: dict[int, set[int]] = {}
        for split in (self.train_records_, self.valid_records_, self.test_records_):
            for rec in split:
                interacted.setdefault(rec.user_id, set()).add(rec.item_id)
        report, _, _ = self.trainer_.evaluate(
            encoded,
            interacted,
            seed=seed,
            n_negatives=n_negatives,
            k=self.k,
            max_trials=max_trials,
        )
        return report

    # -- internals ------------------------------------------------------------------

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            dim=self.dim,
            n_layers=self.n_layers,
            words_per_query=self.words_per_query,
            user_profile_len=self.user_profile_len,
            item_profile_len=self.item_profile_len,
            batch_size=self.batch_size,
            lr=self.lr,
            weight_decay=self.weight_decay,
            beta1=self.beta1,
            beta2=self.beta2,
            eps=self.eps,
            lambda1=self.lambda1,
            lambda2=self.lambda2,
            epochs=self.epochs,
            patience=self.patience,
            seed=self.seed,
            use_generator=self.use_generator,
            use_translation=self.use_translation,
            detach_intents=self.detach_intents,
            negative_tries=self.negative_tries,
            valid_negatives=self.valid_negatives,
            valid_max_trials=self.valid_max_trials,
            k=self.k,
        )
