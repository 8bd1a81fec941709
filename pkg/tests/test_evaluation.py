import math
import random

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linear_sum_assignment

from ptrex.core import RELATIONS, EntitySpan, Triplet
from ptrex.evaluation import (
    Metrics,
    aggregate,
    combine_reports,
    evaluate_predictions,
    five_run_protocol,
    match,
    match_corpus,
    prf,
    std_dev,
)
from ptrex.synthetic import synthetic_corpus


def _t(b1, e1, rel, b2, e2):
    return Triplet(EntitySpan(b1, e1), rel, EntitySpan(b2, e2))


T1 = _t(0, 0, "Voltage", 3, 4)
T2 = _t(0, 0, "Capacity", 6, 7)


def test_partial_recall_example():
    c = match([T1, T2], [T1])
    m = evaluate_predictions([[T1, T2]], [[T1]])
    assert c.intersection("Voltage") == 1 and c.gold("Capacity") == 1 and c.predicted("Capacity") == 0
    tot = prf(sum(c.intersection(r) for r in RELATIONS), 2, 1)
    assert (tot.precision, tot.recall) == (1.0, 0.5)
    assert tot.f1 == pytest.approx(2 / 3, abs=1e-12)
    assert m.per_relation["Voltage"].f1 == 1.0 and m.per_relation["Capacity"].f1 == 0.0


def test_wrong_relation_scores_zero():
    wrong = _t(0, 0, "Energy", 3, 4)
    c = match([T1], [wrong])
    assert all(c.intersection(r) == 0 for r in RELATIONS)
    rep = evaluate_predictions([[T1]], [[wrong]])
    assert rep.macro.f1 == 0.0 and rep.weighted.f1 == 0.0


def test_zero_denominators():
    assert prf(0, 0, 0) == Metrics(0.0, 0.0, 0.0)
    assert prf(0, 3, 0) == Metrics(0.0, 0.0, 0.0)
    assert prf(0, 0, 2) == Metrics(0.0, 0.0, 0.0)
    rep = evaluate_predictions([[]], [[]])
    assert rep.macro == Metrics(0.0, 0.0, 0.0)


def _random_triplets(rng, n, pool=4):
    return [
        _t(b, b, rng.choice(RELATIONS[:2]), b + 1, b + 1 + rng.randrange(2))
        for b in (rng.randrange(pool) for _ in range(n))
    ]


def _bipartite_count(gold, pred, rel):
    g = [t for t in gold if t.relation == rel]
    p = [t for t in pred if t.relation == rel]
    if not g or not p:
        return 0
    cost = np.array([[0.0 if a == b else 1.0 for b in p] for a in g])
    rows, cols = linear_sum_assignment(cost)
    return int(sum(cost[r, c] == 0 for r, c in zip(rows, cols)))


def test_match_vs_bipartite_oracle():
    rng = random.Random(0)
    for _ in range(200):
        gold = _random_triplets(rng, rng.randrange(6))
        pred = _random_triplets(rng, rng.randrange(6))
        c = match(gold, pred)
        for r in RELATIONS:
            assert c.intersection(r) == _bipartite_count(gold, pred, r)
            assert c.gold(r) == sum(t.relation == r for t in gold)
            assert c.predicted(r) == sum(t.relation == r for t in pred)


def test_corpus_counts_are_per_sentence():
    # the same spans in different sentences must not match
    c = match_corpus([[T1], []], [[], [T1]])
    assert c.intersection("Voltage") == 0 and c.gold("Voltage") == 1 and c.predicted("Voltage") == 1
    with pytest.raises(ValueError):
        match_corpus([[T1]], [])


def test_weighted_aggregate_by_hand():
    sup = dict(zip(RELATIONS, (122, 553, 378, 637, 103)))
    f1 = dict(zip(RELATIONS, (0.8, 0.6, 0.7, 0.9, 0.5)))
    per = {r: Metrics(f1[r], f1[r], f1[r]) for r in RELATIONS}
    w, m = aggregate(per, sup)
    want = (122 * 0.8 + 553 * 0.6 + 378 * 0.7 + 637 * 0.9 + 103 * 0.5) / 1793
    assert abs(w.f1 - want) < 1e-12
    assert abs(m.f1 - 0.7) < 1e-12


@settings(max_examples=200)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=5), st.integers(1, 1000))
def test_equal_supports_give_macro_bit_exactly(values, s):
    rels = RELATIONS[: len(values)]
    per = {r: Metrics(v, v, v) for r, v in zip(rels, values)}
    w, m = aggregate(per, {r: s for r in rels})
    assert w == m


def test_aggregate_errors():
    with pytest.raises(ValueError):
        aggregate({}, {})
    with pytest.raises(ValueError):
        aggregate({"Voltage": Metrics(1, 1, 1)}, {"Voltage": 0})


def test_std_dev():
    assert std_dev([2, 4]) == pytest.approx(math.sqrt(2), abs=1e-15)
    rng = random.Random(1)
    mpmath.mp.dps = 50
    for _ in range(50):
        xs = [rng.uniform(-1, 1) for _ in range(rng.randrange(2, 12))]
        mu = mpmath.fsum(xs) / len(xs)
        want = mpmath.sqrt(mpmath.fsum((mpmath.mpf(x) - mu) ** 2 for x in xs) / (len(xs) - 1))
        assert abs(std_dev(xs) - float(want)) < 1e-12
    with pytest.raises(ValueError):
        std_dev([1.0])


@settings(max_examples=200)
@given(st.integers(0, 10_000))
def test_swap_symmetry_and_bounds(seed):
    rng = random.Random(seed)
    gold = [_random_triplets(rng, rng.randrange(4)) for _ in range(3)]
    pred = [_random_triplets(rng, rng.randrange(4)) for _ in range(3)]
    a = evaluate_predictions(gold, pred)
    b = evaluate_predictions(pred, gold)
    for r in RELATIONS:
        assert a.per_relation[r].precision == b.per_relation[r].recall
        assert a.per_relation[r].recall == b.per_relation[r].precision
        assert a.per_relation[r].f1 == pytest.approx(b.per_relation[r].f1, abs=1e-12)
    for row in a.rows().values():
        for v in row.as_dict().values():
            assert 0.0 <= v <= 1.0
        lo, hi = sorted((row.precision, row.recall))
        if row is not a.weighted and row is not a.macro:
            assert lo - 1e-12 <= row.f1 <= hi + 1e-12


def test_aggregates_skip_absent_relations():
    rep = evaluate_predictions([[T1]], [[T1]])
    assert rep.macro.f1 == 1.0 and rep.weighted.f1 == 1.0
    assert rep.per_relation["Energy"] == Metrics(0.0, 0.0, 0.0)


class _Oracle:
    """Mock model whose predictions depend only on the gold it was handed."""

    def __init__(self, lookup, mode):
        self.lookup, self.mode = lookup, mode

    def predict(self, sentences, batch_size=32):
        if self.mode == "gold":
            return [list(self.lookup[s.id]) for s in sentences]
        if self.mode == "empty":
            return [[] for _ in sentences]
        # keep the first triplet of every sentence
        return [list(self.lookup[s.id])[:1] for s in sentences]


@pytest.fixture
def corpus():
    return synthetic_corpus(50, seed=3)


def _factory(corpus, mode):
    lookup = {a.sentence.id: a.triplets for a in corpus}
    return lambda split, config: _Oracle(lookup, mode)


def test_protocol_with_perfect_model(corpus):
    rep = five_run_protocol(corpus, _factory(corpus, "gold"), seed=0)
    assert rep.n_runs == 5 and len(rep.runs) == 5
    assert rep.macro.f1 == 1.0 and rep.weighted.f1 == 1.0
    assert rep.sd[("macro", "f1")] == 0.0
    tests = [set(f["test_ids"]) for f in rep.meta["folds"]]
    assert sum(map(len, tests)) == 50 and len(set().union(*tests)) == 50


def test_protocol_with_empty_model(corpus):
    rep = five_run_protocol(corpus, _factory(corpus, "empty"), seed=0)
    assert rep.macro == Metrics(0.0, 0.0, 0.0)


def test_protocol_mean_and_sd_match_runs(corpus):
    rep = five_run_protocol(corpus, _factory(corpus, "first"), seed=0)
    f1s = [r.macro.f1 for r in rep.runs]
    assert rep.macro.f1 == pytest.approx(sum(f1s) / 5, abs=1e-12)
    assert rep.sd[("macro", "f1")] == pytest.approx(float(np.std(f1s, ddof=1)), abs=1e-12)
    for r in rep.runs:
        # every prediction is a gold triplet
        counts = r.meta["counts"]
        assert all(c[0] == c[2] for c in counts.values())
    again = five_run_protocol(corpus, _factory(corpus, "first"), seed=0)
    assert again.records() == rep.records()


def test_table_and_records(corpus, tmp_path):
    rep = five_run_protocol(corpus, _factory(corpus, "first"), seed=0)
    table = rep.table()
    for r in RELATIONS:
        assert r in table
    assert "weighted" in table and "macro" in table and "±" in table and "runs: 5" in table
    recs = rep.records()
    assert len([x for x in recs if x["run"] == "mean"]) == (len(RELATIONS) + 2) * 3
    assert len(recs) == 6 * (len(RELATIONS) + 2) * 3
    p = tmp_path / "r.jsonl"
    rep.write_records(p)
    assert len(p.read_text().splitlines()) == len(recs)


def test_combine_single_run_has_no_sd():
    rep = combine_reports([evaluate_predictions([[T1]], [[T1]])])
    assert rep.sd == {} and "±" not in rep.table()
    with pytest.raises(ValueError):
        combine_reports([])
