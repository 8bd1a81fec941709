"""Gold decoding targets for the pointer decoder."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import torch

from .core import EOT, RELATION_SET, AnnotatedSentence, PointerRecord

Step = Union[PointerRecord, str]


@dataclass(frozen=True)
class GoldTargetSequence:
    """Ordered pointer records followed by a terminal ``"EOT"`` step.

    The EOT step has no entity spans; its span targets are the sentinel
    position ``sentinel`` (the sentence length) and are never scored.
    """

    steps: tuple[Step, ...]
    sentinel: int

    @property
    def records(self) -> tuple[PointerRecord, ...]:
        return tuple(s for s in self.steps if s != EOT)


def build_targets(annotated: AnnotatedSentence) -> GoldTargetSequence:
    """Sort triplets by (entity1 begin, entity2 begin, relation) and append EOT."""
    records = sorted(annotated.pointer_records, key=lambda r: (r.b1, r.b2, r.relation, r.e1, r.e2))
    return GoldTargetSequence(tuple(records) + (EOT,), len(annotated.sentence))


def target_tensors(targets: Sequence[GoldTargetSequence]):
    """Padded tensors: relation ids (B, T), spans (B, T, 4) and float activity masks."""
    B = len(targets)
    T = max(len(t.steps) for t in targets)
    eot = RELATION_SET.index(EOT)
    rel = torch.full((B, T), eot, dtype=torch.long)
    span = torch.zeros((B, T, 4), dtype=torch.long)
    rel_active = torch.zeros((B, T))
    span_active = torch.zeros((B, T))
    for b, tgt in enumerate(targets):
        for t, step in enumerate(tgt.steps):
            rel_active[b, t] = 1.0
            if step == EOT:
                continue
            rel[b, t] = RELATION_SET.index(step.relation)
            span[b, t] = torch.tensor([step.b1, step.e1, step.b2, step.e2])
            span_active[b, t] = 1.0
    return rel, span, rel_active, span_active
