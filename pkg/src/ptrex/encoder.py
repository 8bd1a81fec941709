"""Sentence encoders producing one contextual vector per token."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional, Protocol, Sequence

import numpy as np
import torch
import torch.nn as nn
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

from .core import Vocabulary


@dataclass
class EncoderConfig:
    word_dim: int = 100
    char_dim: int = 25
    char_feature_dim: int = 50
    char_kernel: int = 3
    hidden_dim: int = 300
    dropout: float = 0.5
    provider: str = "builtin"

    def __post_init__(self) -> None:
        for name in ("word_dim", "char_dim", "char_feature_dim", "char_kernel", "hidden_dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.hidden_dim < 2:
            raise ValueError("hidden_dim must be at least 2 for a bidirectional layer")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.provider not in ("builtin", "external"):
            raise ValueError(f"unknown encoder provider {self.provider!r}")

    @property
    def output_dim(self) -> int:
        return 2 * (self.hidden_dim // 2)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SentenceEncoding:
    """Batch of encoded sentences: ``vectors`` is (B, n, D), ``mask`` is (B, n) bool."""

    vectors: torch.Tensor
    mask: torch.Tensor

    @property
    def lengths(self) -> torch.Tensor:
        return self.mask.sum(dim=1)

    def __getitem__(self, i: int) -> "SentenceEncoding":
        return SentenceEncoding(self.vectors[i : i + 1], self.mask[i : i + 1])


@dataclass
class TokenBatch:
    word_ids: torch.Tensor  # (B, n) long
    char_ids: torch.Tensor  # (B, n, L) long, 0 = pad
    mask: torch.Tensor  # (B, n) bool
    tokens: list[tuple[str, ...]]


def make_token_batch(sentences: Sequence[Sequence[str]], vocab: Vocabulary) -> TokenBatch:
    """Index and pad a batch of token sequences."""
    if not sentences:
        raise ValueError("empty batch")
    n = max(len(s) for s in sentences)
    L = max(len(t) for s in sentences for t in s)
    word_ids = torch.full((len(sentences), n), vocab.unk_id, dtype=torch.long)
    char_ids = torch.zeros((len(sentences), n, L), dtype=torch.long)
    mask = torch.zeros((len(sentences), n), dtype=torch.bool)
    for b, toks in enumerate(sentences):
        if not toks:
            raise ValueError("empty sentence in batch")
        word_ids[b, : len(toks)] = torch.tensor(vocab.encode(toks))
        mask[b, : len(toks)] = True
        for i, tok in enumerate(toks):
            ids = vocab.char_ids(tok)
            char_ids[b, i, : len(ids)] = torch.tensor(ids)
    return TokenBatch(word_ids, char_ids, mask, [tuple(s) for s in sentences])


class CharCNN(nn.Module):
    """Character embeddings -> 1-D convolution -> max-pool over characters."""

    def __init__(self, n_chars: int, char_dim: int, out_dim: int, kernel: int = 3):
        super().__init__()
        self.embedding = nn.Embedding(n_chars, char_dim, padding_idx=0)
        self.conv = nn.Conv1d(char_dim, out_dim, kernel_size=kernel, padding=kernel // 2)

    def forward(self, char_ids: torch.Tensor) -> torch.Tensor:
        B, n, L = char_ids.shape
        flat = char_ids.view(B * n, L)
        x = self.embedding(flat).transpose(1, 2)  # (B*n, C, L)
        h = self.conv(x)[:, :, :L]
        pad = (flat == 0).unsqueeze(1)
        h = h.masked_fill(pad, float("-inf")).max(dim=2).values
        # padded token slots have no characters at all
        h = torch.where(torch.isinf(h), torch.zeros_like(h), h)
        return h.view(B, n, -1)


class TokenEmbedder(nn.Module):
    """Word vector concatenated with character-level features for every token."""

    def __init__(self, vocab: Vocabulary, config: EncoderConfig):
        super().__init__()
        self.word = nn.Embedding(len(vocab), config.word_dim)
        nn.init.uniform_(self.word.weight, -0.1, 0.1)
        self.chars = CharCNN(vocab.n_chars, config.char_dim, config.char_feature_dim, config.char_kernel)
        self.output_dim = config.word_dim + config.char_feature_dim

    def forward(self, word_ids: torch.Tensor, char_ids: torch.Tensor) -> torch.Tensor:
        return torch.cat([self.word(word_ids), self.chars(char_ids)], dim=-1)

    def load_word_vectors(self, vectors: dict[str, np.ndarray], vocab: Vocabulary) -> int:
        """Copy pretrained rows into the word table; returns how many rows were set."""
        hit = 0
        with torch.no_grad():
            for tok, vec in vectors.items():
                i = vocab.stoi.get(tok)
                if i is None:
                    continue
                if len(vec) != self.word.embedding_dim:
                    raise ValueError(f"vector for {tok!r} has dim {len(vec)}, expected {self.word.embedding_dim}")
                self.word.weight[i] = torch.as_tensor(vec, dtype=self.word.weight.dtype)
                hit += 1
        return hit


def read_word_vectors(path) -> dict[str, np.ndarray]:
    """Read a ``token v1 v2 ...`` text file."""
    out = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                continue
            vec = np.asarray(parts[1:], dtype=np.float64)
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise ValueError(f"{path}:{lineno}: expected {dim} values, got {len(vec)}")
            out[parts[0]] = vec
    return out


def run_bilstm(lstm: nn.LSTM, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Bidirectional LSTM over padded input; padded rows come back as exact zeros."""
    lengths = mask.sum(dim=1).cpu()
    packed = pack_padded_sequence(x, lengths, batch_first=True, enforce_sorted=False)
    out, _ = lstm(packed)
    out, _ = pad_packed_sequence(out, batch_first=True, total_length=x.shape[1])
    return out * mask.unsqueeze(-1).to(out.dtype)


class BiLSTMEncoder(nn.Module):
    """Word+character embeddings followed by one bidirectional LSTM layer."""

    def __init__(self, vocab: Vocabulary, config: EncoderConfig):
        super().__init__()
        self.config = config
        self.embedder = TokenEmbedder(vocab, config)
        self.dropout = nn.Dropout(config.dropout)
        self.lstm = nn.LSTM(self.embedder.output_dim, config.hidden_dim // 2, batch_first=True, bidirectional=True)
        self.output_dim = config.output_dim

    def embed(self, batch: TokenBatch) -> torch.Tensor:
        return self.embedder(batch.word_ids, batch.char_ids)

    def encode_embeddings(self, emb: torch.Tensor, mask: torch.Tensor) -> SentenceEncoding:
        if emb.shape[1] == 0:
            raise ValueError("cannot encode an empty sentence")
        h = run_bilstm(self.lstm, self.dropout(emb), mask)
        return SentenceEncoding(self.dropout(h) * mask.unsqueeze(-1).to(h.dtype), mask)

    def forward(self, batch: TokenBatch) -> SentenceEncoding:
        return self.encode_embeddings(self.embed(batch), batch.mask)


# ---------------------------------------------------------------------------
# external contextual providers


class ProviderError(RuntimeError):
    pass


class ContextualProvider(Protocol):
    """Anything that maps whitespace tokens to subword vectors.

    Returns ``(vectors, alignment)`` where ``vectors`` is (m, D) and
    ``alignment[j]`` is the index of the whitespace token subword ``j``
    belongs to (non-decreasing, every token covered).
    """

    name: str

    def __call__(self, tokens: Sequence[str]) -> tuple[np.ndarray, Sequence[int]]: ...


def external_provider_encode(tokens: Sequence[str], provider: ContextualProvider) -> SentenceEncoding:
    """Pool provider subword vectors to one vector per token (first subword)."""
    name = getattr(provider, "name", type(provider).__name__)
    try:
        vectors, alignment = provider(tokens)
    except Exception as exc:  # provider internals are opaque
        raise ProviderError(f"provider {name} failed: {exc}") from exc
    vectors = np.asarray(vectors, dtype=np.float64)
    alignment = list(alignment)
    if vectors.ndim != 2 or len(alignment) != vectors.shape[0]:
        raise ProviderError(f"provider {name}: {len(alignment)} alignment entries for {vectors.shape[0]} vectors")
    n = len(tokens)
    first: list[Optional[int]] = [None] * n
    prev = -1
    for j, w in enumerate(alignment):
        if not 0 <= w < n or w < prev:
            raise ProviderError(f"provider {name}: alignment entry {w} at subword {j} is out of order or range")
        if first[w] is None:
            first[w] = j
        prev = w
    missing = [i for i, j in enumerate(first) if j is None]
    if missing:
        raise ProviderError(f"provider {name}: tokens {missing} have no subword vectors")
    pooled = torch.as_tensor(vectors[first], dtype=torch.get_default_dtype())
    return SentenceEncoding(pooled.unsqueeze(0), torch.ones((1, n), dtype=torch.bool))


class ExternalEncoder(nn.Module):
    """Frozen provider vectors (cached per sentence) behind the encoder interface."""

    def __init__(self, provider: ContextualProvider, output_dim: int, dropout: float = 0.0):
        super().__init__()
        self.provider = provider
        self.output_dim = output_dim
        self.dropout = nn.Dropout(dropout)
        self._cache: dict[tuple[str, ...], torch.Tensor] = {}

    def _vectors(self, tokens: tuple[str, ...]) -> torch.Tensor:
        if tokens not in self._cache:
            enc = external_provider_encode(tokens, self.provider)
            if enc.vectors.shape[-1] != self.output_dim:
                raise ProviderError(f"provider returned dim {enc.vectors.shape[-1]}, expected {self.output_dim}")
            self._cache[tokens] = enc.vectors[0]
        return self._cache[tokens]

    def forward(self, batch: TokenBatch) -> SentenceEncoding:
        B, n = batch.mask.shape
        out = torch.zeros((B, n, self.output_dim))
        for b, toks in enumerate(batch.tokens):
            out[b, : len(toks)] = self._vectors(toks)
        return SentenceEncoding(self.dropout(out), batch.mask)


def build_encoder(vocab: Vocabulary, config: EncoderConfig, provider: Optional[ContextualProvider] = None, provider_dim: int = 0) -> nn.Module:
    if config.provider == "external":
        if provider is None:
            raise ValueError("external encoder requested but no provider registered")
        return ExternalEncoder(provider, provider_dim, config.dropout)
    return BiLSTMEncoder(vocab, config)

