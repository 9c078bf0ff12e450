"""Training loop, evaluation, gradient check and the ablation / linearization experiments."""
from __future__ import annotations

import copy
import json
import logging
import math
import string
import time
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Callable, Iterable, Sequence

import numpy as np
import torch

from .decoding import DEFAULT_BEAM_SIZE, DEFAULT_LENGTH_PENALTY, DEFAULT_MAX_LEN, generate
from .kg_core import Dataset, few_shot_subsample
from .linearizer import STRATEGIES
from .losses import DEFAULT_LAMBDAS, LossBundle
from .metrics import EvalReport, bleu, evaluate
from .model import KG2TextModel, ModelConfig
from .seq_model import SeqModelConfig
from .tokenizer import SubwordVocab, train_bpe

log = logging.getLogger(__name__)

# characters every vocabulary can encode, so unseen validation words never fail
BASE_ALPHABET = string.ascii_lowercase + string.digits + ".,'-"


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    # optimization
    lr: float = 3e-4
    batch_size: int = 8
    steps: int = 2000
    warmup_steps: int = 100
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    grad_clip: float = 1.0
    seed: int = 0
    # loss weights
    lambda_pg: float = DEFAULT_LAMBDAS[0]
    lambda_ra: float = DEFAULT_LAMBDAS[1]
    lambda_gr: float = DEFAULT_LAMBDAS[2]
    normalize_losses: bool = True
    bce_copy: bool = False
    # graph encoder
    rgcn_layers: int = 2
    d_graph: int = 64
    activation: str = "relu"
    rgcn_normalize: bool = False
    split_inverse: bool = False
    # sequence model
    d_model: int = 64
    lower_layers: int = 2
    encoder_layers: int = 2
    decoder_layers: int = 2
    heads: int = 4
    ff_dim: int = 128
    max_len: int = 128
    dropout: float = 0.1
    use_copy: bool = True
    separator: bool = True
    interleave_relations: bool = False
    # data
    strategy: str = "rbfs"
    vocab_size: int = 400
    few_shot_k: int = 0  # 0 keeps the whole training set
    # validation and decoding
    eval_every: int = 200
    patience: int = 5
    eval_decoding: str = "greedy"
    beam_size: int = DEFAULT_BEAM_SIZE
    max_gen_len: int = DEFAULT_MAX_LEN
    length_penalty: float = DEFAULT_LENGTH_PENALTY
    precision: str = "float32"
    log_every: int = 1

    def __post_init__(self):
        for name in ("lr", "batch_size", "steps", "rgcn_layers", "d_graph", "d_model", "heads", "ff_dim",
                     "max_len", "vocab_size", "eval_every", "patience", "beam_size", "max_gen_len", "log_every"):
            v = getattr(self, name)
            if name == "rgcn_layers":
                if v < 0:
                    raise ValueError("rgcn_layers must be >= 0")
            elif not v > 0:
                raise ValueError(f"{name} must be positive, got {v!r}")
        for name in ("lambda_pg", "lambda_ra", "lambda_gr", "weight_decay", "warmup_steps", "dropout",
                     "few_shot_k", "grad_clip"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if self.eval_decoding not in ("greedy", "beam"):
            raise ValueError(f"unknown decoding {self.eval_decoding!r}")
        if self.precision not in ("float32", "float64"):
            raise ValueError(f"precision must be float32 or float64, got {self.precision!r}")

    @property
    def lambdas(self) -> tuple[float, float, float]:
        return (self.lambda_pg, self.lambda_ra, self.lambda_gr)

    @property
    def dtype(self) -> torch.dtype:
        return torch.float64 if self.precision == "float64" else torch.float32

    def model_config(self) -> ModelConfig:
        seq = SeqModelConfig(d_model=self.d_model, lower_layers=self.lower_layers,
                             encoder_layers=self.encoder_layers, decoder_layers=self.decoder_layers,
                             heads=self.heads, ff_dim=self.ff_dim, max_len=self.max_len, dropout=self.dropout)
        return ModelConfig(d_graph=self.d_graph, rgcn_layers=self.rgcn_layers, activation=self.activation,
                           rgcn_normalize=self.rgcn_normalize, split_inverse=self.split_inverse, seq=seq,
                           use_copy=self.use_copy, separator=self.separator,
                           interleave_relations=self.interleave_relations, strategy=self.strategy,
                           seed=self.seed)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


# The published setting, kept loadable for reference; far too large for a desk run.
REFERENCE_PROFILE = {"lr": 1e-5, "batch_size": 20, "rgcn_layers": 2, "d_graph": 1024, "d_model": 1024,
                 "heads": 16, "ff_dim": 4096, "lower_layers": 6, "encoder_layers": 6, "decoder_layers": 12}

PROFILES = {"desk": {}, "reference": REFERENCE_PROFILE}


def profile_config(name: str = "desk", **overrides) -> TrainConfig:
    if name not in PROFILES:
        raise ValueError(f"unknown profile {name!r}; expected one of {sorted(PROFILES)}")
    return TrainConfig(**{**PROFILES[name], **overrides})


def vocabulary_corpus(dataset: Dataset) -> list[str]:
    texts = [" ".join(inst.text) for inst in dataset]
    for inst in dataset:
        texts.extend(e.name for e in inst.graph.entities)
    texts.extend(lab.replace("_", " ") for lab in dataset.relation_labels)
    return texts


def build_vocab(dataset: Dataset, vocab_size: int) -> SubwordVocab:
    return train_bpe(vocabulary_corpus(dataset), vocab_size, alphabet=BASE_ALPHABET)


def build_model(config: TrainConfig, dataset: Dataset, vocab: SubwordVocab | None = None) -> KG2TextModel:
    """Fresh model; parameter init is drawn from the global generator seeded with ``config.seed``."""
    vocab = vocab or build_vocab(dataset, config.vocab_size)
    torch.manual_seed(config.seed)
    model = KG2TextModel(vocab, dataset.relation_labels, config.model_config())
    return model.to(config.dtype)


@dataclass
class TrainResult:
    model: KG2TextModel
    config: TrainConfig
    history: list[dict] = field(default_factory=list)
    evaluations: list[dict] = field(default_factory=list)
    step: int = 0
    best_step: int | None = None
    best_bleu: float | None = None
    stopped_early: bool = False


def _warmup(warmup_steps: int) -> Callable[[int], float]:
    def factor(step: int) -> float:
        if warmup_steps <= 0:
            return 1.0
        return min(1.0, (step + 1) / warmup_steps)
    return factor


def train(config: TrainConfig, dataset: Dataset, valid: Dataset | None = None, *,
          model: KG2TextModel | None = None, log_file=None,
          callback: Callable[[dict], None] | None = None) -> TrainResult:
    """Optimize the weighted multi-task loss with AdamW.

    Runs for ``config.steps`` mini-batch updates over reshuffled epochs. With a
    validation set, greedy (or beam) BLEU-4 is measured every ``eval_every``
    steps; training stops after ``patience`` evaluations without improvement
    and the best parameters are restored.
    """
    if len(dataset) == 0:
        raise ValueError("training dataset is empty")
    if config.few_shot_k:
        dataset = few_shot_subsample(dataset, config.few_shot_k, config.seed)
    if model is None:
        model = build_model(config, dataset)
    torch.manual_seed(config.seed)
    examples = [model.prepare(inst) for inst in dataset]
    opt = torch.optim.AdamW(model.parameters(), lr=config.lr, betas=(config.beta1, config.beta2),
                            weight_decay=config.weight_decay)
    sched = torch.optim.lr_scheduler.LambdaLR(opt, _warmup(config.warmup_steps))
    result = TrainResult(model, config)
    best_state = None
    bad_evals = 0
    order: list[int] = []
    model.train()
    for step in range(1, config.steps + 1):
        if len(order) < config.batch_size:
            order.extend(torch.randperm(len(examples)).tolist())
        idx, order = order[:config.batch_size], order[config.batch_size:]
        batch = [examples[i] for i in idx]
        bundle = model.losses(batch, config.lambdas, normalize=config.normalize_losses,
                              bce_copy=config.bce_copy)
        if not torch.isfinite(bundle.total):
            raise TrainingDiverged(f"non-finite loss at step {step}: {bundle.as_dict()} "
                                   f"(lr={sched.get_last_lr()[0]:.3g}, batch={idx})")
        opt.zero_grad(set_to_none=True)
        bundle.total.backward()
        if config.grad_clip > 0:
            torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
        opt.step()
        sched.step()
        result.step = step
        if step % config.log_every == 0 or step == config.steps:
            row = {"step": step, **bundle.as_dict(), "lr": sched.get_last_lr()[0]}
            result.history.append(row)
            if log_file is not None:
                log_file.write(json.dumps(row) + "\n")
            if callback is not None:
                callback(row)

        if valid is not None and len(valid) and (step % config.eval_every == 0 or step == config.steps):
            score = bleu(*_predict_pairs(model, valid, config))
            model.train()
            entry = {"step": step, "valid_bleu_4": score}
            result.evaluations.append(entry)
            if log_file is not None:
                log_file.write(json.dumps(entry) + "\n")
            log.info("step %d valid BLEU-4 %.4f", step, score)
            if result.best_bleu is None or score > result.best_bleu:
                result.best_bleu, result.best_step, bad_evals = score, step, 0
                best_state = copy.deepcopy(model.state_dict())
            else:
                bad_evals += 1
                if bad_evals >= config.patience:
                    result.stopped_early = True
                    break
    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    return result


def predict_texts(model: KG2TextModel, dataset: Dataset, decoding: str = "beam",
                  beam_size: int = DEFAULT_BEAM_SIZE, max_len: int = DEFAULT_MAX_LEN,
                  length_penalty: float = DEFAULT_LENGTH_PENALTY) -> list:
    return [generate(model, inst.graph, decoding, beam_size, max_len, length_penalty) for inst in dataset]


def _predict_pairs(model, dataset, config: TrainConfig):
    gens = predict_texts(model, dataset, config.eval_decoding, config.beam_size, config.max_gen_len,
                         config.length_penalty)
    return [g.text for g in gens], [" ".join(inst.text) for inst in dataset]


def evaluate_model(model: KG2TextModel, dataset: Dataset, decoding: str = "beam",
                   beam_size: int = DEFAULT_BEAM_SIZE, max_len: int = DEFAULT_MAX_LEN,
                   length_penalty: float = DEFAULT_LENGTH_PENALTY) -> tuple[EvalReport, list]:
    gens = predict_texts(model, dataset, decoding, beam_size, max_len, length_penalty)
    report = evaluate([g.text for g in gens], [" ".join(inst.text) for inst in dataset])
    return report, gens


# ------------------------------------------------------------------ grad check
GRADCHECK_LOSSES = ("lm", "pg", "ra", "gr", "total")

MICRO_CONFIG = dict(d_graph=12, d_model=16, rgcn_layers=2, lower_layers=2, encoder_layers=2,
                    decoder_layers=2, heads=2, ff_dim=32, max_len=96, dropout=0.0, vocab_size=120,
                    activation="tanh", precision="float64")


@dataclass
class GradCheckReport:
    errors: dict[str, dict[str, float]]  # loss -> parameter -> max relative error
    zero_groups: dict[str, list[str]]  # loss -> parameters with an exactly-zero analytic gradient
    h: float
    seconds: float

    def max_error(self, loss: str | None = None) -> float:
        rows = [self.errors[loss]] if loss else self.errors.values()
        return max((v for r in rows for v in r.values()), default=0.0)

    def to_dict(self) -> dict:
        return {"h": self.h, "seconds": self.seconds, "errors": self.errors, "zero_groups": self.zero_groups,
                "max_error": {k: self.max_error(k) for k in self.errors}}


def _components(model, examples, config: TrainConfig) -> dict[str, torch.Tensor]:
    b: LossBundle = model.losses(examples, (1.0, 1.0, 1.0), normalize=config.normalize_losses,
                                 bce_copy=config.bce_copy)
    lam1, lam2, lam3 = config.lambdas
    return {"lm": b.lm, "pg": b.pg, "ra": b.ra, "gr": b.gr, "total": b.lm + lam1 * b.pg + lam2 * b.ra + lam3 * b.gr}


def grad_check(config: TrainConfig | None = None, dataset: Dataset | None = None, *, n_instances: int = 2,
               h: float = 1e-5, coords: int = 3, losses: Iterable[str] = GRADCHECK_LOSSES,
               frozen: Sequence[str] = (), floor: float = 1e-5) -> GradCheckReport:
    """Central finite differences against autograd on a float64 micro-model.

    For every parameter tensor and loss, the ``coords`` coordinates with the
    largest analytic gradient plus ``coords`` random ones are perturbed by
    ``±h``. The relative error is ``|a - n| / max(|a|, |n|, floor)``; the
    floor keeps coordinates whose true gradient is zero (roundoff ~1e-10)
    from dominating. Parameters whose name starts with an entry of ``frozen``
    get ``requires_grad=False``; their analytic gradient is exactly zero.
    """
    from .fixtures import SYNTHETIC_16, fixture_path
    from .kg_core import parse_dataset

    start = time.perf_counter()
    config = config or TrainConfig(**MICRO_CONFIG)
    if config.precision != "float64":
        raise ValueError("gradient checking needs float64 precision")
    losses = tuple(losses)
    for name in losses:
        if name not in GRADCHECK_LOSSES:
            raise ValueError(f"unknown loss {name!r}")
    if dataset is None:
        dataset = parse_dataset(fixture_path(SYNTHETIC_16))
    dataset = Dataset(dataset.instances[:n_instances], dataset.relations, dataset.split)
    model = build_model(config, dataset)
    model.eval()
    for name, p in model.named_parameters():
        if any(name.startswith(f) for f in frozen):
            p.requires_grad_(False)
    examples = [model.prepare(inst) for inst in dataset]
    rng = np.random.default_rng(config.seed)
    params = dict(model.named_parameters())
    trainable = [p for p in params.values() if p.requires_grad]

    analytic: dict[str, dict[str, torch.Tensor]] = {}
    for loss_name in losses:
        if loss_name == "total":
            value = model.losses(examples, config.lambdas, normalize=config.normalize_losses,
                                 bce_copy=config.bce_copy).total
        else:
            value = _components(model, examples, config)[loss_name]
        grads = iter(torch.autograd.grad(value, trainable, allow_unused=True))
        analytic[loss_name] = {}
        for name, p in params.items():
            g = next(grads) if p.requires_grad else None
            analytic[loss_name][name] = (torch.zeros_like(p) if g is None else g.detach()).reshape(-1)

    errors: dict[str, dict[str, float]] = {k: {} for k in losses}
    zeros = {k: [n for n in params if not torch.any(analytic[k][n] != 0)] for k in losses}
    for name, p in params.items():
        if not p.requires_grad:
            continue
        picks: set[int] = set()
        for k in losses:
            picks |= set(torch.argsort(analytic[k][name].abs(), descending=True)[:coords].tolist())
        picks |= set(rng.choice(p.numel(), size=min(coords, p.numel()), replace=False).tolist())
        worst = dict.fromkeys(losses, 0.0)
        flat = p.data.view(-1)
        with torch.no_grad():
            for i in sorted(picks):
                orig = flat[i].item()
                flat[i] = orig + h
                up = _components(model, examples, config)
                flat[i] = orig - h
                down = _components(model, examples, config)
                flat[i] = orig
                for k in losses:
                    num = (up[k].item() - down[k].item()) / (2 * h)
                    an = analytic[k][name][i].item()
                    worst[k] = max(worst[k], abs(an - num) / max(abs(an), abs(num), floor))
        for k in losses:
            errors[k][name] = worst[k]
    return GradCheckReport(errors, zeros, h, time.perf_counter() - start)


# ----------------------------------------------------------------- experiments
ABLATIONS = {
    "full": {},
    "w/o PG": {"lambda_pg": 0.0},
    "w/o RA": {"lambda_ra": 0.0},
    "w/o GR": {"lambda_gr": 0.0},
}


def _run(config: TrainConfig, train_set: Dataset, valid: Dataset, early_stop: bool) -> tuple[TrainResult, EvalReport]:
    result = train(config, train_set, valid if early_stop else None)
    report, _ = evaluate_model(result.model, valid, config.eval_decoding, config.beam_size,
                               config.max_gen_len, config.length_penalty)
    return result, report


def ablate(config: TrainConfig, train_set: Dataset, valid: Dataset, seeds: Sequence[int] = (0,),
           variants: Sequence[str] = tuple(ABLATIONS), early_stop: bool = False) -> list[dict]:
    """Full model plus each single-loss-removed variant, every metric per (variant, seed)."""
    rows = []
    for seed in seeds:
        for variant in variants:
            cfg = replace(config, seed=seed, **ABLATIONS[variant])
            result, report = _run(cfg, train_set, valid, early_stop)
            rows.append({"variant": variant, "seed": seed, "steps": result.step,
                         **{k: v for k, v in report.to_dict().items() if k != "per_instance"}})
    return rows


def linearization_experiment(config: TrainConfig, train_set: Dataset, valid: Dataset,
                             strategies: Sequence[str] = STRATEGIES, seeds: Sequence[int] = (0,),
                             early_stop: bool = False) -> list[dict]:
    """Identical runs that differ only in the linearization strategy; BLEU-4 per run."""
    rows = []
    for seed in seeds:
        for strategy in strategies:
            cfg = replace(config, seed=seed, strategy=strategy)
            result, report = _run(cfg, train_set, valid, early_stop)
            rows.append({"strategy": strategy, "seed": seed, "steps": result.step, "bleu_4": report.bleu_4})
    return rows


def summarize(rows: Sequence[dict], key: str, metric: str = "bleu_4") -> dict[str, float]:
    """Mean of ``metric`` per value of ``key``."""
    groups: dict[str, list[float]] = {}
    for r in rows:
        groups.setdefault(r[key], []).append(r[metric])
    return {k: float(np.mean(v)) for k, v in groups.items()}


def smoothed(values: Sequence[float], window: int = 50) -> list[float]:
    out, acc = [], 0.0
    for i, v in enumerate(values):
        acc += v
        if i >= window:
            acc -= values[i - window]
        out.append(acc / min(i + 1, window))
    return out


def is_finite_history(history: Sequence[dict]) -> bool:
    return all(math.isfinite(r["total"]) for r in history)
