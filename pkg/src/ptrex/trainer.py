"""Optimization loop, model construction from a config, and the experiment grids."""

from __future__ import annotations

import copy
import logging
import math
import time
from dataclasses import asdict, dataclass, fields
from typing import Callable, Optional, Sequence, Union

import numpy as np
import torch

from .checkpoint import save_checkpoint
from .core import AnnotatedSentence, Vocabulary, build_vocabulary
from .encoder import EncoderConfig
from .evaluation import EvalReport, evaluate
from .pointer import DecoderConfig, PointerNetworkModel, step_loss
from .splits import DatasetSplit, nested_subsets, sample_k_shot, split_dataset
from .targets import GoldTargetSequence, build_targets
from .wdm import WdmConfig, WordDecoderModel, render_target

__all__ = [
    "TrainConfig",
    "TrainResult",
    "TrainingDiverged",
    "GoldTargetSequence",
    "build_targets",
    "step_loss",
    "build_model",
    "batch_loss",
    "train",
    "fit",
    "run_fraction_sweep",
    "run_kshot",
]

log = logging.getLogger(__name__)

DECODERS = ("pointer", "word")


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    decoder: str = "pointer"
    learning_rate: float = 0.001
    optimizer: str = "adam"
    dropout: float = 0.5
    hidden_dim: int = 300
    num_epochs: int = 50
    batch_size: int = 32
    seed: int = 0
    teacher_forcing: bool = True
    patience: Optional[int] = 10
    clip_norm: Optional[float] = 5.0
    word_dim: int = 100
    char_dim: int = 25
    char_feature_dim: int = 50
    pointer_hidden: int = 150
    relation_dim: int = 100
    token_dim: int = 100
    max_steps: int = 10
    max_span_len: int = 10
    max_len: int = 64

    def validate(self) -> list[str]:
        """Every problem with this config, so callers can report them together."""
        errors = []
        if self.decoder not in DECODERS:
            errors.append(f"decoder must be one of {DECODERS}, got {self.decoder!r}")
        if self.optimizer != "adam":
            errors.append(f"optimizer must be 'adam', got {self.optimizer!r}")
        if not (isinstance(self.learning_rate, (int, float)) and self.learning_rate >= 0 and math.isfinite(self.learning_rate)):
            errors.append(f"learning_rate must be a finite number >= 0, got {self.learning_rate!r}")
        if not 0 <= self.dropout < 1:
            errors.append(f"dropout must lie in [0, 1), got {self.dropout!r}")
        for name in ("hidden_dim", "num_epochs", "batch_size", "word_dim", "char_dim", "char_feature_dim",
                     "pointer_hidden", "relation_dim", "token_dim", "max_steps", "max_span_len", "max_len"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v <= 0:
                errors.append(f"{name} must be a positive integer, got {v!r}")
        if self.hidden_dim == 1:
            errors.append("hidden_dim must be at least 2")
        if self.patience is not None and (not isinstance(self.patience, int) or self.patience <= 0):
            errors.append(f"patience must be a positive integer or null, got {self.patience!r}")
        if self.clip_norm is not None and not self.clip_norm > 0:
            errors.append(f"clip_norm must be positive or null, got {self.clip_norm!r}")
        return errors

    def check(self) -> "TrainConfig":
        errors = self.validate()
        if errors:
            raise ValueError("invalid training config:\n  " + "\n  ".join(errors))
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(self.word_dim, self.char_dim, self.char_feature_dim, 3, self.hidden_dim, self.dropout)


@dataclass
class TrainResult:
    model: torch.nn.Module
    log: list[dict]
    best_epoch: int
    best_dev_f1: Optional[float]


def build_model(vocab: Vocabulary, config: TrainConfig, provider=None, provider_dim: int = 0):
    """Fresh model for ``config.decoder``; parameter init is seeded by ``config.seed``."""
    config.check()
    torch.manual_seed(config.seed)
    enc = config.encoder_config()
    if config.decoder == "pointer":
        dec = DecoderConfig(config.hidden_dim, config.pointer_hidden, config.relation_dim, config.max_steps, config.max_span_len)
        return PointerNetworkModel(vocab, enc, dec, provider, provider_dim)
    return WordDecoderModel(vocab, enc, WdmConfig(config.hidden_dim, config.token_dim, config.max_len), provider, provider_dim)


def batch_loss(model, batch: Sequence[AnnotatedSentence], teacher_forcing: bool = True) -> torch.Tensor:
    tokens = [a.sentence.tokens for a in batch]
    if model.kind == "pointer":
        return model.loss(tokens, [build_targets(a) for a in batch], teacher_forcing)
    return model.loss(tokens, [render_target(a) for a in batch])


def _as_parts(splits) -> tuple[Sequence[AnnotatedSentence], Sequence[AnnotatedSentence]]:
    if isinstance(splits, DatasetSplit):
        return splits.train, splits.dev
    train, dev = splits
    return train, dev


def train(
    model,
    splits: Union[DatasetSplit, tuple],
    config: TrainConfig,
    on_epoch: Optional[Callable[[dict], None]] = None,
    checkpoint_path=None,
) -> TrainResult:
    """Adam training with per-epoch dev scoring; the best-dev parameters are restored at the end.

    Without a dev set the final epoch is kept. Raises :class:`TrainingDiverged`
    on a non-finite loss.
    """
    config.check()
    train_data, dev_data = _as_parts(splits)
    if not train_data:
        raise ValueError("empty training set")
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    history: list[dict] = []
    best_state = None
    best_f1: Optional[float] = None
    best_epoch = 0
    since_best = 0
    for epoch in range(1, config.num_epochs + 1):
        t0 = time.perf_counter()
        model.train()
        order = rng.permutation(len(train_data))
        losses = []
        for i in range(0, len(order), config.batch_size):
            batch = [train_data[j] for j in order[i : i + config.batch_size]]
            opt.zero_grad()
            loss = batch_loss(model, batch, config.teacher_forcing)
            if not torch.isfinite(loss):
                raise TrainingDiverged(
                    f"loss became {loss.item()} at epoch {epoch}, batch {i // config.batch_size}; "
                    f"try a smaller learning rate (now {config.learning_rate})"
                )
            loss.backward()
            if config.clip_norm is not None:
                torch.nn.utils.clip_grad_norm_(model.parameters(), config.clip_norm)
            opt.step()
            losses.append(loss.item())
        entry = {"epoch": epoch, "loss": math.fsum(losses) / len(losses)}
        if dev_data:
            rep = evaluate(model, dev_data, batch_size=config.batch_size)
            entry["dev_macro_f1"] = rep.macro.f1
            entry["dev_weighted_f1"] = rep.weighted.f1
        entry["seconds"] = time.perf_counter() - t0
        history.append(entry)
        if on_epoch is not None:
            on_epoch(entry)
        log.info("epoch %d loss %.4f dev F1 %s", epoch, entry["loss"], entry.get("dev_macro_f1"))
        score = entry.get("dev_macro_f1")
        if score is None or best_f1 is None or score > best_f1:
            best_f1, best_epoch, since_best = score, epoch, 0
            best_state = copy.deepcopy(model.state_dict())
            if checkpoint_path is not None:
                save_checkpoint(model, checkpoint_path, {"train_config": config.to_dict(), "epoch": epoch})
        else:
            since_best += 1
            if config.patience is not None and since_best >= config.patience:
                log.info("early stop after epoch %d (best %d)", epoch, best_epoch)
                break
    model.load_state_dict(best_state)
    model.eval()
    return TrainResult(model, history, best_epoch, best_f1)


def fit(train_data: Sequence[AnnotatedSentence], dev_data: Sequence[AnnotatedSentence], config: TrainConfig, **kw) -> TrainResult:
    """Build a vocabulary from the training sentences, then a model, then train it."""
    vocab = build_vocabulary(a.sentence for a in train_data)
    model = build_model(vocab, config)
    return train(model, (train_data, dev_data), config, **kw)


def _split(dataset, seed: int) -> DatasetSplit:
    return dataset if isinstance(dataset, DatasetSplit) else split_dataset(dataset, seed=seed)


def run_fraction_sweep(
    dataset: Union[Sequence[AnnotatedSentence], DatasetSplit],
    fractions: Sequence[float] = (0.1, 0.3, 0.5, 0.7),
    config: Optional[TrainConfig] = None,
) -> dict[float, EvalReport]:
    """Train on nested subsets of the training split; score each on the same test split.

    A fraction is relative to the whole dataset, so with the default 70/10/20
    split fraction 0.7 uses the full training part.
    """
    config = config or TrainConfig()
    split = _split(dataset, config.seed)
    total = len(split.train) + len(split.dev) + len(split.test)
    subsets = nested_subsets(split.train, fractions, total, seed=config.seed)
    out = {}
    for f in fractions:
        res = fit(subsets[f], split.dev, config)
        rep = evaluate(res.model, split.test)
        rep.meta.update({"fraction": f, "train_size": len(subsets[f]), "best_epoch": res.best_epoch})
        out[f] = rep
    return out


def run_kshot(
    dataset: Union[Sequence[AnnotatedSentence], DatasetSplit],
    k: int,
    config: Optional[TrainConfig] = None,
) -> EvalReport:
    """Train on ``k`` triplets per relation drawn from the training split; score on the test split."""
    config = config or TrainConfig()
    split = _split(dataset, config.seed)
    support = sample_k_shot(split.train, k, seed=config.seed)
    res = fit(support, split.dev, config)
    rep = evaluate(res.model, split.test)
    rep.meta.update({"k": k, "n_triplets": sum(len(a.triplets) for a in support), "best_epoch": res.best_epoch})
    return rep
