"""Pointer-network triplet decoder.

Each decoding step attends over the encoded sentence, advances an LSTM
triplet generator, points at the begin/end tokens of the two entities with
two BiLSTM pointer networks, and classifies the relation from the pointed
spans and the generator state. Decoding stops on the EOT relation.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .core import EOT, RELATION_SET, EntitySpan, Sentence, Triplet, Vocabulary
from .encoder import EncoderConfig, SentenceEncoding, build_encoder, make_token_batch, run_bilstm
from .targets import GoldTargetSequence, target_tensors

EOT_INDEX = RELATION_SET.index(EOT)


@dataclass
class DecoderConfig:
    hidden_dim: int = 300
    pointer_hidden: int = 150
    relation_dim: int = 100
    max_steps: int = 10
    max_span_len: int = 10

    def __post_init__(self) -> None:
        for name in ("hidden_dim", "pointer_hidden", "relation_dim", "max_span_len"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")

    @property
    def tuple_dim(self) -> int:
        return 2 * self.relation_dim

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class DecoderState:
    hidden: torch.Tensor  # (B, D_h)
    cell: torch.Tensor  # (B, D_h)
    tuple_sum: torch.Tensor  # (B, D_tup): sum of all previous step tuples
    step: int = 0


@dataclass
class StepOutput:
    """Log-probabilities for one decoding step; masked positions hold -inf."""

    begin1: torch.Tensor
    end1: torch.Tensor
    begin2: torch.Tensor
    end2: torch.Tensor
    relation: torch.Tensor
    tuple_embedding: torch.Tensor
    attention: torch.Tensor = field(repr=False, default=None)

    def probs(self, name: str) -> torch.Tensor:
        return getattr(self, name).exp()


def masked_log_softmax(logits: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    return logits.masked_fill(~mask, float("-inf")).log_softmax(dim=-1)


class AdditiveAttention(nn.Module):
    """Bahdanau attention conditioned on the previous hidden state and tuple."""

    def __init__(self, hidden_dim: int, enc_dim: int, tuple_dim: int, attn_dim: Optional[int] = None):
        super().__init__()
        attn_dim = attn_dim or hidden_dim
        self.w_hidden = nn.Linear(hidden_dim, attn_dim, bias=False)
        self.w_tuple = nn.Linear(tuple_dim, attn_dim, bias=False)
        self.w_enc = nn.Linear(enc_dim, attn_dim)
        self.v = nn.Linear(attn_dim, 1, bias=False)

    def forward(self, prev_hidden, enc: SentenceEncoding, prev_tuple):
        if not bool(enc.mask.any(dim=1).all()):
            raise ValueError("attention over a fully masked sentence")
        query = self.w_hidden(prev_hidden) + self.w_tuple(prev_tuple)
        scores = self.v(torch.tanh(self.w_enc(enc.vectors) + query.unsqueeze(1))).squeeze(-1)
        weights = masked_log_softmax(scores, enc.mask).exp()
        context = torch.bmm(weights.unsqueeze(1), enc.vectors).squeeze(1)
        return context, weights


class PointerNetwork(nn.Module):
    """BiLSTM over token rows followed by begin and end scoring heads."""

    def __init__(self, input_dim: int, hidden: int):
        super().__init__()
        self.lstm = nn.LSTM(input_dim, hidden, batch_first=True, bidirectional=True)
        self.begin = nn.Linear(2 * hidden, 1)
        self.end = nn.Linear(2 * hidden, 1)

    def forward(self, rows: torch.Tensor, mask: torch.Tensor):
        h = run_bilstm(self.lstm, rows, mask)
        begin = masked_log_softmax(self.begin(h).squeeze(-1), mask)
        end = masked_log_softmax(self.end(h).squeeze(-1), mask)
        return begin, end, h


def select_span(begin_probs, end_probs, max_len: int = 10) -> tuple[int, int]:
    """Best ``(b, e)`` with ``b <= e <= b + max_len`` by ``begin[b] * end[e]``.

    Ties go to the smaller ``b``, then the smaller ``e``.
    """
    begin = np.asarray(begin_probs, dtype=np.float64)
    end = np.asarray(end_probs, dtype=np.float64)
    n = len(begin)
    if n == 0 or len(end) != n:
        raise ValueError("begin/end distributions must be non-empty and equally long")
    scores = np.outer(begin, end)
    b_idx, e_idx = np.indices((n, n))
    valid = (e_idx >= b_idx) & (e_idx <= b_idx + max_len)
    scores = np.where(valid, scores, -np.inf)
    flat = int(np.argmax(scores))  # first maximum in row-major order = tie rule
    return flat // n, flat % n


class PointerDecoder(nn.Module):
    def __init__(self, enc_dim: int, config: DecoderConfig, n_relations: int = len(RELATION_SET)):
        super().__init__()
        self.config = config
        D_h, D_bh, D_rel = config.hidden_dim, config.pointer_hidden, config.relation_dim
        self.attention = AdditiveAttention(D_h, enc_dim, config.tuple_dim)
        self.generator = nn.LSTMCell(enc_dim + config.tuple_dim, D_h)
        self.pointer1 = PointerNetwork(enc_dim + D_h, D_bh)
        self.pointer2 = PointerNetwork(2 * D_bh + D_h + enc_dim, D_bh)
        self.span_proj = nn.Linear(4 * enc_dim, D_rel)
        self.relation_embedding = nn.Embedding(n_relations, D_rel)
        self.relation_head = nn.Linear(D_rel + D_h, n_relations)

    def init_state(self, batch_size: int, like: torch.Tensor) -> DecoderState:
        z = like.new_zeros((batch_size, self.config.hidden_dim))
        return DecoderState(z, z.clone(), like.new_zeros((batch_size, self.config.tuple_dim)), 0)

    # -- the individual blocks ------------------------------------------------

    def attend(self, prev_hidden, enc: SentenceEncoding, prev_tuple):
        return self.attention(prev_hidden, enc, prev_tuple)

    def generator_step(self, context, prev_tuple, hidden, cell):
        return self.generator(torch.cat([context, prev_tuple], dim=-1), (hidden, cell))

    def pointer_first(self, hidden, enc: SentenceEncoding):
        n = enc.vectors.shape[1]
        rows = torch.cat([enc.vectors, hidden.unsqueeze(1).expand(-1, n, -1)], dim=-1)
        return self.pointer1(rows, enc.mask)

    def pointer_second(self, first_hidden, hidden, enc: SentenceEncoding):
        n = enc.vectors.shape[1]
        rows = torch.cat([first_hidden, hidden.unsqueeze(1).expand(-1, n, -1), enc.vectors], dim=-1)
        begin, end, _ = self.pointer2(rows, enc.mask)
        return begin, end

    def span_features(self, enc: SentenceEncoding, weights: Sequence[torch.Tensor]) -> torch.Tensor:
        """Project the four pointer-weighted mixtures of encoder rows."""
        mixes = [torch.bmm(w.unsqueeze(1), enc.vectors).squeeze(1) for w in weights]
        return self.span_proj(torch.cat(mixes, dim=-1))

    def classify_relation(self, span_feat, hidden) -> torch.Tensor:
        return self.relation_head(torch.cat([span_feat, hidden], dim=-1)).log_softmax(dim=-1)

    def decision_tuple(self, enc: SentenceEncoding, spans: torch.Tensor, relations: torch.Tensor) -> torch.Tensor:
        """Tuple vector of hard decisions: spans (B, 4) token indices, relations (B,)."""
        n = enc.vectors.shape[1]
        onehots = [F.one_hot(spans[:, k], n).to(enc.vectors.dtype) for k in range(4)]
        return torch.cat([self.span_features(enc, onehots), self.relation_embedding(relations)], dim=-1)

    def step(self, enc: SentenceEncoding, state: DecoderState) -> tuple[StepOutput, DecoderState]:
        context, attn = self.attend(state.hidden, enc, state.tuple_sum)
        h, c = self.generator_step(context, state.tuple_sum, state.hidden, state.cell)
        b1, e1, first_hidden = self.pointer_first(h, enc)
        b2, e2 = self.pointer_second(first_hidden, h, enc)
        span_feat = self.span_features(enc, [b1.exp(), e1.exp(), b2.exp(), e2.exp()])
        rel = self.classify_relation(span_feat, h)
        tup = torch.cat([span_feat, rel.exp() @ self.relation_embedding.weight], dim=-1)
        out = StepOutput(b1, e1, b2, e2, rel, tup, attn)
        return out, DecoderState(h, c, state.tuple_sum, state.step + 1)


def step_loss(out: StepOutput, gold, index: int = 0) -> torch.Tensor:
    """Negative log-likelihood of one gold step for batch row ``index``.

    ``gold`` is a :class:`~ptrex.core.PointerRecord` or the string ``"EOT"``;
    the EOT step is scored by the relation head only.
    """
    if gold == EOT:
        return -out.relation[index, EOT_INDEX]
    n = out.begin1.shape[-1]
    for pos in (gold.b1, gold.e1, gold.b2, gold.e2):
        if not 0 <= pos < n:
            raise IndexError(f"gold position {pos} outside sentence of width {n}")
    rel = RELATION_SET.index(gold.relation)
    return -(
        out.begin1[index, gold.b1]
        + out.end1[index, gold.e1]
        + out.begin2[index, gold.b2]
        + out.end2[index, gold.e2]
        + out.relation[index, rel]
    )


class PointerNetworkModel(nn.Module):
    """Encoder plus pointer decoder with training loss and greedy decoding."""

    kind = "pointer"

    def __init__(self, vocab: Vocabulary, encoder_config: EncoderConfig, decoder_config: DecoderConfig, provider=None, provider_dim: int = 0):
        super().__init__()
        self.vocab = vocab
        self.encoder_config = encoder_config
        self.decoder_config = decoder_config
        self.encoder = build_encoder(vocab, encoder_config, provider, provider_dim)
        self.decoder = PointerDecoder(self.encoder.output_dim, decoder_config)

    def config_dict(self) -> dict:
        return {"encoder": self.encoder_config.to_dict(), "decoder": self.decoder_config.to_dict()}

    def encode(self, token_lists: Sequence[Sequence[str]]) -> SentenceEncoding:
        return self.encoder(make_token_batch(token_lists, self.vocab))

    def loss(self, token_lists: Sequence[Sequence[str]], targets: Sequence[GoldTargetSequence], teacher_forcing: bool = True) -> torch.Tensor:
        """Summed step NLL per sentence, averaged over the batch."""
        enc = self.encode(token_lists)
        B = len(token_lists)
        rel, span, rel_active, span_active = target_tensors(targets)
        dec = self.decoder
        state = dec.init_state(B, enc.vectors)
        total = enc.vectors.new_zeros(())
        T = rel.shape[1]
        for t in range(T):
            out, state = dec.step(enc, state)
            nll_rel = -out.relation.gather(1, rel[:, t : t + 1]).squeeze(1)
            nll_span = -sum(
                getattr(out, head).gather(1, span[:, t, k : k + 1]).squeeze(1)
                for k, head in enumerate(("begin1", "end1", "begin2", "end2"))
            )
            total = total + (nll_rel * rel_active[:, t]).sum() + (nll_span * span_active[:, t]).sum()
            if t == T - 1:
                break
            live = span_active[:, t] > 0
            if teacher_forcing:
                spans, rels = span[:, t], rel[:, t]
            else:
                spans = torch.zeros((B, 4), dtype=torch.long)
                rels = torch.full((B,), EOT_INDEX, dtype=torch.long)
                lengths = enc.mask.sum(dim=1).tolist()
                for b in range(B):
                    if live[b]:
                        spans[b], rels[b] = self._greedy_choice(out, b, lengths[b])
            tup = dec.decision_tuple(enc, spans, rels) * live.unsqueeze(-1).to(enc.vectors.dtype)
            state = DecoderState(state.hidden, state.cell, state.tuple_sum + tup, state.step)
        return total / B

    def _greedy_choice(self, out: StepOutput, b: int, n: int):
        L = self.decoder_config.max_span_len
        p = {k: getattr(out, k)[b, :n].detach().exp().cpu().numpy() for k in ("begin1", "end1", "begin2", "end2")}
        s1 = select_span(p["begin1"], p["end1"], L)
        s2 = select_span(p["begin2"], p["end2"], L)
        rel = int(out.relation[b].argmax())
        return torch.tensor([s1[0], s1[1], s2[0], s2[1]]), rel

    @torch.no_grad()
    def decode(self, enc: SentenceEncoding, sentences: Sequence[Sentence]) -> list[list[Triplet]]:
        """Greedy decoding until EOT or ``max_steps``; duplicates dropped."""
        dec = self.decoder
        B = enc.vectors.shape[0]
        state = dec.init_state(B, enc.vectors)
        results: list[dict] = [dict() for _ in range(B)]
        done = [False] * B
        lengths = enc.mask.sum(dim=1).tolist()
        for _ in range(self.decoder_config.max_steps):
            out, state = dec.step(enc, state)
            spans = torch.zeros((B, 4), dtype=torch.long)
            rels = torch.full((B,), EOT_INDEX, dtype=torch.long)
            live = torch.zeros(B, dtype=torch.bool)
            for b in range(B):
                if done[b]:
                    continue
                span, rel = self._greedy_choice(out, b, lengths[b])
                if rel == EOT_INDEX:
                    done[b] = True
                    continue
                spans[b], rels[b], live[b] = span, rel, True
                s = sentences[b]
                b1, e1, b2, e2 = span.tolist()
                trip = Triplet(EntitySpan.of(s, b1, e1), RELATION_SET[rel], EntitySpan.of(s, b2, e2))
                results[b].setdefault(trip, None)
            if all(done):
                break
            tup = dec.decision_tuple(enc, spans, rels) * live.unsqueeze(-1).to(enc.vectors.dtype)
            state = DecoderState(state.hidden, state.cell, state.tuple_sum + tup, state.step)
        return [list(r) for r in results]

    def predict(self, sentences: Sequence[Sentence], batch_size: int = 32) -> list[list[Triplet]]:
        was_training = self.training
        self.eval()
        out: list[list[Triplet]] = []
        try:
            for i in range(0, len(sentences), batch_size):
                chunk = sentences[i : i + batch_size]
                with torch.no_grad():
                    enc = self.encode([s.tokens for s in chunk])
                out.extend(self.decode(enc, chunk))
        finally:
            self.train(was_training)
        return out
