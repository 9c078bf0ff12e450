"""scikit-learn style wrapper: ``fit`` on instances, ``predict`` text for graphs."""
from __future__ import annotations

from dataclasses import fields

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .decoding import DEFAULT_BEAM_SIZE, generate
from .linearizer import STRATEGIES
from .metrics import bleu, evaluate
from .trainer import TrainConfig, train
from .validation import check_choice, check_dataset, check_graphs, check_positive

_TRAIN_FIELDS = {f.name for f in fields(TrainConfig)}


class KG2TextGenerator(BaseEstimator):
    """Few-shot knowledge-graph-to-text generator.

    Hyperparameters mirror :class:`~kgtext.trainer.TrainConfig`; any other
    config field can be passed through ``extra``.
    """

    def __init__(self, *, lr=3e-4, batch_size=8, steps=2000, lambda_pg=0.7, lambda_ra=0.5, lambda_gr=0.5,
                 rgcn_layers=2, d_graph=64, d_model=64, dropout=0.1, strategy="rbfs", vocab_size=400,
                 decoding="beam", beam_size=DEFAULT_BEAM_SIZE, seed=0, extra=None):
        self.lr = lr
        self.batch_size = batch_size
        self.steps = steps
        self.lambda_pg = lambda_pg
        self.lambda_ra = lambda_ra
        self.lambda_gr = lambda_gr
        self.rgcn_layers = rgcn_layers
        self.d_graph = d_graph
        self.d_model = d_model
        self.dropout = dropout
        self.strategy = strategy
        self.vocab_size = vocab_size
        self.decoding = decoding
        self.beam_size = beam_size
        self.seed = seed
        self.extra = extra

    def _train_config(self) -> TrainConfig:
        check_choice("strategy", self.strategy, STRATEGIES)
        check_choice("decoding", self.decoding, ("beam", "greedy"))
        check_positive("beam_size", self.beam_size)
        params = {k: v for k, v in self.get_params().items() if k in _TRAIN_FIELDS}
        extra = dict(self.extra or {})
        unknown = set(extra) - _TRAIN_FIELDS
        if unknown:
            raise ValueError(f"unknown config keys in extra: {sorted(unknown)}")
        return TrainConfig(**{**params, **extra})

    def fit(self, X, y=None, valid=None):
        """Train on ``X`` (a Dataset, Instances or records). ``y`` is ignored:
        target texts and mentions travel with the instances."""
        config = self._train_config()
        dataset = check_dataset(X)
        valid = check_dataset(valid, split="valid") if valid is not None else None
        result = train(config, dataset, valid)
        self.model_ = result.model
        self.config_ = config
        self.history_ = result.history
        self.n_steps_ = result.step
        self.relations_ = list(result.model.relations)
        return self

    def _generate(self, X):
        check_is_fitted(self, "model_")
        return [generate(self.model_, g, self.decoding, self.beam_size, self.config_.max_gen_len,
                         self.config_.length_penalty) for g in check_graphs(X)]

    def predict(self, X) -> list[str]:
        return [g.text for g in self._generate(X)]

    def predict_scores(self, X) -> list[float]:
        return [g.score for g in self._generate(X)]

    def score(self, X, y=None) -> float:
        """Corpus BLEU-4 in [0, 1] against the instances' own texts (or ``y``)."""
        dataset = check_dataset(X)
        refs = list(y) if y is not None else dataset.texts()
        return bleu(self.predict(dataset), refs)

    def evaluate(self, X):
        dataset = check_dataset(X)
        return evaluate(self.predict(dataset), dataset.texts())

    def save(self, path) -> None:
        check_is_fitted(self, "model_")
        save_checkpoint(Checkpoint(self.model_, self.config_.to_dict(), self.n_steps_, self.config_.seed), path)

    @classmethod
    def load(cls, path) -> "KG2TextGenerator":
        ckpt = load_checkpoint(path)
        config = TrainConfig.from_dict(ckpt.config)
        own = {k: getattr(config, k) for k in cls._get_param_names() if k in _TRAIN_FIELDS}
        est = cls(**own)
        est.model_ = ckpt.model
        est.config_ = config
        est.history_ = []
        est.n_steps_ = ckpt.step
        est.relations_ = list(ckpt.model.relations)
        return est

