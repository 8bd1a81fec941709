"""Word-decoding baseline: emits ``entity1 | Relation | entity2 ; ...`` as tokens."""

from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn as nn

from .core import (
    EOT,
    FIELD_SEP,
    RELATIONS,
    TRIPLET_SEP,
    UNK,
    AnnotatedSentence,
    EntitySpan,
    Sentence,
    Triplet,
    Vocabulary,
    BOT,
)
from .corpus import find_run
from .encoder import EncoderConfig, SentenceEncoding, build_encoder, make_token_batch
from .pointer import AdditiveAttention, masked_log_softmax


@dataclass
class WdmConfig:
    hidden_dim: int = 300
    token_dim: int = 100
    max_len: int = 64

    def __post_init__(self) -> None:
        if min(self.hidden_dim, self.token_dim, self.max_len) <= 0:
            raise ValueError("WDM dimensions and max_len must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


def render_triplets(triplets: Sequence[Triplet], sentence: Sentence) -> list[str]:
    """``e1 | Rel | e2 ; ...`` token form of ``triplets``, framed by BOT ... EOT."""
    toks = sentence.tokens
    out = [BOT]
    for i, t in enumerate(triplets):
        if i:
            out.append(TRIPLET_SEP)
        out.extend(toks[t.entity1.begin : t.entity1.end + 1])
        out += [FIELD_SEP, t.relation, FIELD_SEP]
        out.extend(toks[t.entity2.begin : t.entity2.end + 1])
    out.append(EOT)
    return out


def render_target(annotated: AnnotatedSentence) -> list[str]:
    """Gold decoder target in the same order as the pointer targets."""
    ordered = sorted(annotated.triplets, key=lambda t: (t.entity1.begin, t.entity2.begin, t.relation, t.entity1.end, t.entity2.end))
    return render_triplets(ordered, annotated.sentence)


def wdm_mask(vocab: Vocabulary, sentence: Sentence | Sequence[str]) -> set[int]:
    """Ids the decoder may emit for this sentence."""
    tokens = sentence.tokens if isinstance(sentence, Sentence) else sentence
    allowed = {vocab.lookup(t) for t in tokens}
    allowed.update(vocab.stoi[r] for r in RELATIONS)
    allowed.update((vocab.stoi[TRIPLET_SEP], vocab.stoi[FIELD_SEP], vocab.unk_id, vocab.eot_id))
    return allowed


def mask_tensor(vocab: Vocabulary, sentences: Sequence[Sequence[str]]) -> torch.Tensor:
    m = torch.zeros((len(sentences), len(vocab)), dtype=torch.bool)
    for b, toks in enumerate(sentences):
        m[b, sorted(wdm_mask(vocab, toks))] = True
    return m


def replace_unk(predicted: str, attention_weights, sentence: Sentence | Sequence[str]) -> str:
    """Swap UNK for the source token with the highest attention (leftmost on ties)."""
    if predicted != UNK:
        return predicted
    tokens = sentence.tokens if isinstance(sentence, Sentence) else sentence
    w = np.asarray(attention_weights, dtype=np.float64)[: len(tokens)]
    return tokens[int(np.argmax(w))]


def parse_wdm_output(tokens: Sequence[str], sentence: Sentence, stats: Optional[Counter] = None) -> list[Triplet]:
    """Ground emitted ``e1 | Rel | e2 ; ...`` text back to sentence spans.

    Tuples that do not split into three fields, name an unknown relation, or
    whose entities are not contiguous token runs of the sentence are dropped
    and counted in ``stats["dropped"]``.
    """
    stats = stats if stats is not None else Counter()
    body: list[str] = []
    for tok in tokens:
        if tok == EOT:
            break
        if tok != BOT:
            body.append(tok)
    groups: list[list[str]] = [[]]
    for tok in body:
        if tok == TRIPLET_SEP:
            groups.append([])
        else:
            groups[-1].append(tok)
    out: dict[Triplet, None] = {}
    for g in groups:
        if not g:
            continue
        fields: list[list[str]] = [[]]
        for tok in g:
            if tok == FIELD_SEP:
                fields.append([])
            else:
                fields[-1].append(tok)
        if len(fields) != 3 or len(fields[1]) != 1 or fields[1][0] not in RELATIONS:
            stats["dropped"] += 1
            continue
        b1 = find_run(sentence.tokens, fields[0])
        b2 = find_run(sentence.tokens, fields[2])
        if b1 < 0 or b2 < 0:
            stats["dropped"] += 1
            continue
        t = Triplet(
            EntitySpan.of(sentence, b1, b1 + len(fields[0]) - 1),
            fields[1][0],
            EntitySpan.of(sentence, b2, b2 + len(fields[2]) - 1),
        )
        if t in out:
            stats["duplicates"] += 1
        out.setdefault(t, None)
    return list(out)


class WordDecoderModel(nn.Module):
    """Encoder plus attention LSTM that generates the triplet text token by token."""

    kind = "word"

    def __init__(self, vocab: Vocabulary, encoder_config: EncoderConfig, decoder_config: WdmConfig, provider=None, provider_dim: int = 0):
        super().__init__()
        self.vocab = vocab
        self.encoder_config = encoder_config
        self.decoder_config = decoder_config
        self.encoder = build_encoder(vocab, encoder_config, provider, provider_dim)
        D_e, D_h, D_t = self.encoder.output_dim, decoder_config.hidden_dim, decoder_config.token_dim
        self.token_embedding = nn.Embedding(len(vocab), D_t)
        self.attention = AdditiveAttention(D_h, D_e, D_t)
        self.cell = nn.LSTMCell(D_e + D_t, D_h)
        self.out = nn.Linear(D_h, len(vocab))

    def config_dict(self) -> dict:
        return {"encoder": self.encoder_config.to_dict(), "decoder": self.decoder_config.to_dict()}

    def encode(self, token_lists: Sequence[Sequence[str]]) -> SentenceEncoding:
        return self.encoder(make_token_batch(token_lists, self.vocab))

    def wdm_step(self, prev_token_emb, context, hidden, cell, mask):
        """One decoder update; returns (log-probs over the vocabulary, hidden, cell)."""
        h, c = self.cell(torch.cat([context, prev_token_emb], dim=-1), (hidden, cell))
        return masked_log_softmax(self.out(h), mask), h, c

    def _init(self, B: int, enc: SentenceEncoding):
        z = enc.vectors.new_zeros((B, self.decoder_config.hidden_dim))
        return z, z.clone()

    def loss(self, token_lists: Sequence[Sequence[str]], targets: Sequence[Sequence[str]]) -> torch.Tensor:
        """Teacher-forced token NLL summed per sentence, averaged over the batch."""
        enc = self.encode(token_lists)
        B = len(token_lists)
        ids = [self.vocab.encode(t) for t in targets]
        T = max(len(x) for x in ids)
        tgt = torch.full((B, T), self.vocab.eot_id, dtype=torch.long)
        active = torch.zeros((B, T))
        for b, x in enumerate(ids):
            tgt[b, : len(x)] = torch.tensor(x)
            active[b, 1 : len(x)] = 1.0
        mask = mask_tensor(self.vocab, token_lists)
        h, c = self._init(B, enc)
        total = enc.vectors.new_zeros(())
        for t in range(1, T):
            prev = self.token_embedding(tgt[:, t - 1])
            context, _ = self.attention(h, enc, prev)
            logp, h, c = self.wdm_step(prev, context, h, c, mask)
            nll = -logp.gather(1, tgt[:, t : t + 1]).squeeze(1)
            # inactive rows may point at a masked id; zero them before summing
            nll = torch.where(active[:, t] > 0, nll, torch.zeros_like(nll))
            total = total + nll.sum()
        return total / B

    @torch.no_grad()
    def generate(self, enc: SentenceEncoding, token_lists: Sequence[Sequence[str]]) -> list[list[str]]:
        B = len(token_lists)
        mask = mask_tensor(self.vocab, token_lists)
        h, c = self._init(B, enc)
        prev_ids = torch.full((B,), self.vocab.bot_id, dtype=torch.long)
        outputs: list[list[str]] = [[] for _ in range(B)]
        done = [False] * B
        for _ in range(self.decoder_config.max_len):
            prev = self.token_embedding(prev_ids)
            context, attn = self.attention(h, enc, prev)
            logp, h, c = self.wdm_step(prev, context, h, c, mask)
            prev_ids = logp.argmax(dim=-1)
            for b in range(B):
                if done[b]:
                    continue
                tok = self.vocab.itos[int(prev_ids[b])]
                if tok == EOT:
                    done[b] = True
                tok = replace_unk(tok, attn[b].cpu().numpy(), token_lists[b])
                outputs[b].append(tok)
            if all(done):
                break
        return outputs

    def predict(self, sentences: Sequence[Sentence], batch_size: int = 32, stats: Optional[Counter] = None) -> list[list[Triplet]]:
        was_training = self.training
        self.eval()
        out: list[list[Triplet]] = []
        try:
            for i in range(0, len(sentences), batch_size):
                chunk = sentences[i : i + batch_size]
                toks = [s.tokens for s in chunk]
                with torch.no_grad():
                    enc = self.encode(toks)
                for s, seq in zip(chunk, self.generate(enc, toks)):
                    out.append(parse_wdm_output(seq, s, stats))
        finally:
            self.train(was_training)
        return out
