"""Exact-match triplet scoring, aggregation over relations and over runs."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .core import RELATIONS, AnnotatedSentence, Triplet

METRICS = ("precision", "recall", "f1")


@dataclass
class MatchCounts:
    """Per relation: ``[|tr ∩ p|, |tr|, |p|]``."""

    counts: dict[str, list[int]] = field(default_factory=lambda: {r: [0, 0, 0] for r in RELATIONS})

    def __add__(self, other: "MatchCounts") -> "MatchCounts":
        out = MatchCounts({r: list(c) for r, c in self.counts.items()})
        for r, (i, g, p) in other.counts.items():
            row = out.counts.setdefault(r, [0, 0, 0])
            row[0] += i
            row[1] += g
            row[2] += p
        return out

    def intersection(self, rel: str) -> int:
        return self.counts[rel][0]

    def gold(self, rel: str) -> int:
        return self.counts[rel][1]

    def predicted(self, rel: str) -> int:
        return self.counts[rel][2]

    @property
    def relations(self) -> list[str]:
        return list(self.counts)


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float

    def as_dict(self) -> dict[str, float]:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1}


def match(gold: Iterable[Triplet], pred: Iterable[Triplet], relations: Sequence[str] = RELATIONS) -> MatchCounts:
    """Exact-match counts for one sentence.

    Both spans and the relation must agree. Each gold triplet absorbs at most
    one prediction, so repeated predictions cannot inflate the intersection.
    """
    g = Counter(gold)
    p = Counter(pred)
    counts = {r: [0, 0, 0] for r in relations}
    for t, c in g.items():
        counts.setdefault(t.relation, [0, 0, 0])[1] += c
    for t, c in p.items():
        counts.setdefault(t.relation, [0, 0, 0])[2] += c
        counts[t.relation][0] += min(c, g.get(t, 0))
    return MatchCounts(counts)


def match_corpus(gold: Sequence[Iterable[Triplet]], pred: Sequence[Iterable[Triplet]], relations: Sequence[str] = RELATIONS) -> MatchCounts:
    """Sum of per-sentence counts; triplets of different sentences never match."""
    if len(gold) != len(pred):
        raise ValueError(f"{len(gold)} gold sentences but {len(pred)} predictions")
    total = MatchCounts({r: [0, 0, 0] for r in relations})
    for g, p in zip(gold, pred):
        total = total + match(g, p, relations)
    return total


def prf(inter: int, n_gold: int, n_pred: int) -> Metrics:
    pr = inter / n_pred if n_pred else 0.0
    re = inter / n_gold if n_gold else 0.0
    f1 = 2 * pr * re / (pr + re) if pr + re > 0 else 0.0
    return Metrics(pr, re, f1)


def precision_recall_f1(counts: MatchCounts) -> dict[str, Metrics]:
    return {r: prf(*c) for r, c in counts.counts.items()}


def aggregate(per_relation: Mapping[str, Metrics], supports: Mapping[str, int]) -> tuple[Metrics, Metrics]:
    """(support-weighted mean, unweighted macro mean) over the relations in ``per_relation``.

    Weights are ``support / max(support)`` so that equal supports reduce to
    exactly the macro computation.
    """
    rels = list(per_relation)
    if not rels:
        raise ValueError("no relations to aggregate")
    missing = [r for r in rels if r not in supports]
    if missing:
        raise ValueError(f"no support given for {missing}")
    if any(supports[r] < 0 for r in rels):
        raise ValueError("supports must be non-negative")
    top = max(supports[r] for r in rels)
    if top == 0:
        raise ValueError("total support is zero")
    w = [supports[r] / top for r in rels]
    wsum = sum(w)
    weighted = Metrics(*(sum(getattr(per_relation[r], m) * wi for r, wi in zip(rels, w)) / wsum for m in METRICS))
    macro = Metrics(*(sum(getattr(per_relation[r], m) for r in rels) / len(rels) for m in METRICS))
    return weighted, macro


def std_dev(values: Sequence[float]) -> float:
    """Sample standard deviation (N - 1 denominator)."""
    xs = [float(v) for v in values]
    n = len(xs)
    if n < 2:
        raise ValueError("standard deviation needs at least two values")
    mean = math.fsum(xs) / n
    return math.sqrt(math.fsum((x - mean) ** 2 for x in xs) / (n - 1))


def mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


@dataclass
class EvalReport:
    """Per-relation and aggregate scores; over several runs these are means with ``sd``.

    ``sd`` maps ``(row, metric)`` to the standard deviation across runs, where
    ``row`` is a relation name, ``"weighted"`` or ``"macro"``.
    """

    per_relation: dict[str, Metrics]
    supports: dict[str, int]
    weighted: Metrics
    macro: Metrics
    n_runs: int = 1
    sd: dict[tuple[str, str], float] = field(default_factory=dict)
    runs: list["EvalReport"] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def rows(self) -> dict[str, Metrics]:
        return {**self.per_relation, "weighted": self.weighted, "macro": self.macro}

    def records(self) -> list[dict]:
        """One record per (run, row, metric); ``run`` is ``"mean"`` for the aggregate block."""
        out = []
        for k, run in enumerate(self.runs):
            for row, m in run.rows().items():
                for name, v in m.as_dict().items():
                    out.append({"run": k, "row": row, "metric": name, "value": v})
        for row, m in self.rows().items():
            for name, v in m.as_dict().items():
                rec = {"run": "mean", "row": row, "metric": name, "value": v, "n_runs": self.n_runs}
                if (row, name) in self.sd:
                    rec["sd"] = self.sd[(row, name)]
                out.append(rec)
        return out

    def write_records(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.records():
                fh.write(json.dumps(rec) + "\n")

    def table(self) -> str:
        """Plain-text table: one row per relation, then the two aggregates."""
        head = f"{'Relation':<22}{'Pr':>16}{'Re':>16}{'F1':>16}{'Support':>9}"
        lines = [head, "-" * len(head)]

        def cell(row: str, metric: str, v: float) -> str:
            sd = self.sd.get((row, metric))
            return f"{v:.3f} ± {sd:.3f}" if sd is not None else f"{v:.3f}"

        for row, m in self.rows().items():
            sup = self.supports.get(row, sum(self.supports.values()))
            cells = "".join(f"{cell(row, name, v):>16}" for name, v in m.as_dict().items())
            lines.append(f"{row:<22}{cells}{sup:>9}")
        lines.append(f"runs: {self.n_runs}")
        return "\n".join(lines)


def report_from_counts(counts: MatchCounts, relations: Optional[Sequence[str]] = None) -> EvalReport:
    """Scores for one run.

    Aggregates cover the relations that occur in gold or predictions (or
    ``relations`` if given); a relation absent from both has no score to
    average.
    """
    per = precision_recall_f1(counts)
    if relations is None:
        relations = [r for r in counts.relations if counts.gold(r) or counts.predicted(r)]
    supports = {r: counts.gold(r) for r in counts.relations}
    if relations and any(supports[r] for r in relations):
        weighted, macro = aggregate({r: per[r] for r in relations}, supports)
    else:
        weighted = macro = Metrics(0.0, 0.0, 0.0)
    return EvalReport(per, supports, weighted, macro, meta={"counts": {r: list(c) for r, c in counts.counts.items()}})


def evaluate_predictions(gold: Sequence[Iterable[Triplet]], pred: Sequence[Iterable[Triplet]]) -> EvalReport:
    return report_from_counts(match_corpus(gold, pred))


def evaluate(model, data: Sequence[AnnotatedSentence], batch_size: int = 32) -> EvalReport:
    """Run ``model.predict`` on the sentences and score against their gold triplets."""
    pred = model.predict([a.sentence for a in data], batch_size=batch_size)
    return evaluate_predictions([a.triplets for a in data], pred)


def combine_reports(reports: Sequence[EvalReport]) -> EvalReport:
    """Mean of every score across runs, with sample sd when there are two or more runs."""
    if not reports:
        raise ValueError("no runs to combine")
    n = len(reports)
    rels = list(reports[0].per_relation)

    def avg(get) -> Metrics:
        return Metrics(*(mean([getattr(get(r), m) for r in reports]) for m in METRICS))

    per = {rel: avg(lambda r, rel=rel: r.per_relation[rel]) for rel in rels}
    weighted = avg(lambda r: r.weighted)
    macro = avg(lambda r: r.macro)
    sd = {}
    if n >= 2:
        for row in rels + ["weighted", "macro"]:
            for m in METRICS:
                sd[(row, m)] = std_dev([getattr(r.rows()[row], m) for r in reports])
    supports = {rel: sum(r.supports.get(rel, 0) for r in reports) for rel in rels}
    return EvalReport(per, supports, weighted, macro, n, sd, list(reports))


def five_run_protocol(
    dataset: Sequence[AnnotatedSentence],
    model_factory: Callable,
    config=None,
    seed: int = 0,
    n_folds: int = 5,
) -> EvalReport:
    """Train and test once per disjoint test fold; report mean and sd over the runs.

    ``model_factory(split, config)`` returns a model trained on ``split.train``
    (and may use ``split.dev``); it is evaluated on ``split.test``.
    """
    from .splits import five_fold_splits

    reports = []
    folds = []
    for split in five_fold_splits(dataset, seed=seed, n_folds=n_folds):
        model = model_factory(split, config)
        rep = evaluate(model, split.test)
        rep.meta["fold"] = split.fold
        reports.append(rep)
        folds.append(split.manifest())
    out = combine_reports(reports)
    out.meta["folds"] = folds
    return out
