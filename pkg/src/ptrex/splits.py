"""Train/dev/test splits, few-shot sampling and annotator agreement."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable, Mapping, Optional, Sequence, TypeVar

import numpy as np

from .core import RELATIONS, AnnotatedSentence

T = TypeVar("T")

DEFAULT_FRACTIONS = (0.7, 0.1, 0.2)


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple
    dev: tuple
    test: tuple
    seed: int
    fractions: tuple[float, float, float] = DEFAULT_FRACTIONS
    fold: Optional[int] = None
    n_folds: Optional[int] = None

    def manifest(self, key=lambda r: r.sentence.id) -> dict:
        return {
            "seed": self.seed,
            "fractions": list(self.fractions),
            "fold": self.fold,
            "n_folds": self.n_folds,
            "sizes": [len(self.train), len(self.dev), len(self.test)],
            "test_ids": [key(r) for r in self.test],
        }


def split_dataset(
    records: Sequence[T],
    fractions: Sequence[float] = DEFAULT_FRACTIONS,
    seed: int = 0,
    fold: Optional[int] = None,
    n_folds: int = 5,
) -> DatasetSplit:
    """Shuffle under ``seed`` and cut into train/dev/test.

    With ``fold`` set, the test part is the ``fold``-th of ``n_folds``
    contiguous chunks of the shuffled order, so the folds' test sets are
    pairwise disjoint and together cover every record; dev is then taken
    from the remainder in the train:dev proportion.
    """
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must be three values summing to 1, got {fractions}")
    if any(f < 0 for f in fractions):
        raise ValueError("fractions must be non-negative")
    n = len(records)
    if n < 10:
        raise ValueError("dataset too small to split")
    order = np.random.default_rng(seed).permutation(n)
    f_train, f_dev, f_test = fractions
    if fold is None:
        n_test = int(round(n * f_test))
        n_dev = int(round(n * f_dev))
        test_idx = order[:n_test]
        rest = order[n_test:]
    else:
        if not 0 <= fold < n_folds:
            raise ValueError(f"fold {fold} outside 0..{n_folds - 1}")
        chunks = np.array_split(order, n_folds)
        test_idx = chunks[fold]
        rest = np.concatenate([c for i, c in enumerate(chunks) if i != fold])
        n_dev = int(round(len(rest) * f_dev / (f_train + f_dev))) if f_train + f_dev > 0 else 0
    dev_idx = rest[:n_dev]
    train_idx = rest[n_dev:]
    pick = lambda idx: tuple(records[i] for i in sorted(idx))  # noqa: E731
    return DatasetSplit(
        pick(train_idx),
        pick(dev_idx),
        pick(test_idx),
        seed,
        tuple(float(f) for f in fractions),
        fold,
        n_folds if fold is not None else None,
    )


def five_fold_splits(records: Sequence[T], seed: int = 0, n_folds: int = 5, fractions=DEFAULT_FRACTIONS) -> list[DatasetSplit]:
    return [split_dataset(records, fractions, seed, fold=k, n_folds=n_folds) for k in range(n_folds)]


def nested_subsets(train: Sequence[T], fractions: Sequence[float], total: int, seed: int = 0) -> dict[float, tuple]:
    """Nested training subsets: fraction ``f`` keeps ``round(f * total)`` items, capped at ``len(train)``.

    ``total`` is the size of the full dataset, so with a 70/10/20 split the
    0.7 subset is the whole training part.
    """
    order = np.random.default_rng(seed).permutation(len(train))
    out = {}
    for f in fractions:
        if not 0 < f <= 1:
            raise ValueError(f"fraction {f} outside (0, 1]")
        k = min(len(train), max(1, int(round(f * total))))
        out[f] = tuple(train[i] for i in sorted(order[:k]))
    return out


def sample_k_shot(
    train: Sequence[AnnotatedSentence],
    k: int,
    seed: int = 0,
    relations: Sequence[str] = RELATIONS,
) -> list[AnnotatedSentence]:
    """Pick exactly ``k`` triplets per relation.

    Returned sentences carry only their selected triplets; a sentence chosen
    for two relations appears once with both.
    """
    if k <= 0:
        raise ValueError("k must be positive")
    rng = np.random.default_rng(seed)
    chosen: dict[int, set[int]] = {}
    for rel in relations:
        pool = [(si, ti) for si, a in enumerate(train) for ti, t in enumerate(a.triplets) if t.relation == rel]
        if len(pool) < k:
            raise ValueError(f"relation {rel} has only {len(pool)} triplets, fewer than k={k}")
        for j in rng.permutation(len(pool))[:k]:
            si, ti = pool[j]
            chosen.setdefault(si, set()).add(ti)
    out = []
    for si in sorted(chosen):
        a = train[si]
        keep = tuple(t for ti, t in enumerate(a.triplets) if ti in chosen[si])
        out.append(AnnotatedSentence(a.sentence, keep))
    return out


def cohen_kappa(a: Sequence[Hashable], b: Sequence[Hashable]) -> float:
    if len(a) != len(b):
        raise ValueError("label sequences differ in length")
    n = len(a)
    if n == 0:
        raise ValueError("no items to compare")
    cats = sorted(set(a) | set(b), key=repr)
    p_o = sum(x == y for x, y in zip(a, b)) / n
    p_e = math.fsum((sum(x == c for x in a) / n) * (sum(y == c for y in b) / n) for c in cats)
    if p_e == 1.0:
        return 1.0
    return (p_o - p_e) / (1.0 - p_e)


def annotation_agreement(
    labels_a: Mapping[Hashable, Mapping[Hashable, bool]],
    labels_b: Mapping[Hashable, Mapping[Hashable, bool]],
) -> float:
    """Cohen's kappa over accept/reject decisions on each sentence's candidate triplets.

    Both mappings go sentence id -> {triplet: accepted}. Sentence ids and the
    candidate triplets judged for each sentence must agree.
    """
    if set(labels_a) != set(labels_b):
        raise ValueError("annotators labelled different sentence ids")
    xs: list[bool] = []
    ys: list[bool] = []
    for sid in sorted(labels_a, key=repr):
        da, db = labels_a[sid], labels_b[sid]
        if set(da) != set(db):
            raise ValueError(f"sentence {sid}: annotators judged different candidate triplets")
        for key in sorted(da, key=repr):
            xs.append(bool(da[key]))
            ys.append(bool(db[key]))
    return cohen_kappa(xs, ys)
