"""Versioned model checkpoints tagged with the decoder kind and vocabulary hash."""

from __future__ import annotations

from pathlib import Path
from typing import Optional

import torch

from .core import Vocabulary
from .encoder import EncoderConfig
from .pointer import DecoderConfig, PointerNetworkModel
from .wdm import WdmConfig, WordDecoderModel

FORMAT = "ptrex-checkpoint"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


class VocabularyMismatch(CheckpointError):
    pass


def save_checkpoint(model, path, extra: Optional[dict] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = {
        "format": FORMAT,
        "version": VERSION,
        "kind": model.kind,
        "config": model.config_dict(),
        "vocab": model.vocab.to_dict(),
        "vocab_hash": model.vocab.content_hash(),
        "state_dict": model.state_dict(),
        "extra": extra or {},
    }
    torch.save(blob, path)
    return path


def read_header(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint {path} does not exist")
    blob = torch.load(path, map_location="cpu", weights_only=True)
    if not isinstance(blob, dict) or blob.get("format") != FORMAT:
        raise CheckpointError(f"{path} is not a model checkpoint")
    if blob.get("version") != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {blob.get('version')}")
    return blob


def load_checkpoint(path, expected_vocab_hash: Optional[str] = None, provider=None, provider_dim: int = 0):
    """Rebuild the model stored at ``path``.

    The stored vocabulary must reproduce the stored hash, and match
    ``expected_vocab_hash`` when one is given.
    """
    blob = read_header(path)
    try:
        vocab = Vocabulary.from_dict(blob["vocab"])
    except ValueError as exc:
        raise VocabularyMismatch(f"{path}: {exc}") from exc
    if vocab.content_hash() != blob["vocab_hash"]:
        raise VocabularyMismatch(f"{path}: stored vocabulary does not match its recorded hash")
    if expected_vocab_hash is not None and expected_vocab_hash != blob["vocab_hash"]:
        raise VocabularyMismatch(
            f"vocabulary hash {blob['vocab_hash'][:12]} of {path} differs from the expected "
            f"{expected_vocab_hash[:12]}; rebuild the vocabulary and retrain"
        )
    enc = EncoderConfig(**blob["config"]["encoder"])
    if blob["kind"] == "pointer":
        model = PointerNetworkModel(vocab, enc, DecoderConfig(**blob["config"]["decoder"]), provider, provider_dim)
    elif blob["kind"] == "word":
        model = WordDecoderModel(vocab, enc, WdmConfig(**blob["config"]["decoder"]), provider, provider_dim)
    else:
        raise CheckpointError(f"{path}: unknown decoder kind {blob['kind']!r}")
    model.load_state_dict(blob["state_dict"])
    model.eval()
    model.checkpoint_extra = blob.get("extra", {})
    return model
