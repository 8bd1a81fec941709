from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ptrex.core import Sentence, tokenize
from ptrex.corpus import (
    DEFAULT_INDICATORS,
    CandidateIndex,
    CandidateTriplet,
    build_corpus,
    deduplicate,
    distant_supervise,
    find_indicator,
    match_entity2,
    parse_battery_record,
    verify_annotation,
)
from ptrex.units import parse_unit, token_cover

from conftest import CE_TEXT, LICOO2_TEXT, TIO2_TEXT


def test_parse_capacity_record():
    rec = parse_battery_record(
        {"Property": "Capacity", "Name": "LiCoO2", "Raw_value": "130", "Raw_unit": "mAh/g", "Value": "130.0",
         "Unit": "Gram^(-1.0)  Hour^(1.0)  MilliAmpere^(1.0)", "DOI": "10.1016/x", "Tag": "CDE"}
    )
    assert rec.relation == "Capacity" and rec.name == "LiCoO2"
    c = CandidateTriplet.from_record(rec)
    assert (c.value, c.unit) == ("130", "mAh/g")
    assert ("Tag", "CDE") in rec.extra


def test_parse_minimal_and_rejections():
    assert parse_battery_record({"Property": "Voltage", "Name": "X", "Raw_value": "1", "Raw_unit": "V"}).relation == "Voltage"
    stats = Counter()
    assert parse_battery_record({"Property": "Hardness", "Name": "X", "Value": "1", "Unit": "GPa"}, stats) is None
    assert parse_battery_record({"Property": "Voltage", "Value": "1", "Unit": "V"}, stats) is None
    assert parse_battery_record({"Property": "Voltage", "Name": "X", "Value": "1", "Unit": "V", "Correctness": "F"}, stats) is None
    assert parse_battery_record({"Property": "Voltage", "Name": "X"}, stats) is None
    assert stats == Counter(unknown_property=1, missing_name=1, marked_incorrect=1, missing_value=1)


def test_coulombic_efficiency_gets_percent():
    rec = parse_battery_record({"Property": "Coulombic Efficiency", "Name": "X", "Raw_value": "91.0"})
    assert rec.relation == "Coulombic_Efficiency" and rec.raw_unit == "%"


def _cand(name, rel, value, unit):
    return CandidateTriplet(name, rel, value, unit)


def test_deduplicate_basics():
    t = _cand("A", "Voltage", "1", "V")
    assert deduplicate([t, t]) == [t]
    assert deduplicate([]) == []
    # normalised unit: same physical unit in a different rendering is a duplicate
    assert deduplicate([_cand("A", "Capacity", "1", "mAh/g"), _cand("A", "Capacity", "1", "mA h g-1")]) == [
        _cand("A", "Capacity", "1", "mAh/g")
    ]


def test_deduplicate_injected_duplicates():
    rng = np.random.default_rng(3)
    uniques = [_cand(f"M{i}", "Voltage", str(i), "V") for i in range(900)]
    dup_idx = rng.choice(900, size=100, replace=True)
    stream = uniques + [uniques[i] for i in dup_idx]
    order = rng.permutation(len(stream))
    shuffled = [stream[i] for i in order]
    out = deduplicate(shuffled)
    assert len(out) == 900 and set(out) == set(uniques)
    # first occurrences in original order
    expect = list(dict.fromkeys(shuffled))
    assert out == expect
    assert deduplicate(out) == out


def _oracle_entity2(tokens, value, unit, window=8):
    """Exhaustive window search: minimal by inclusion, leftmost, then decoration absorbed."""
    names = frozenset(n for n, _ in parse_unit(unit))
    n = len(tokens)

    def info(tok):
        if tok == value:
            return True, frozenset()
        if tok.startswith(value) and len(tok) > len(value) and not tok[len(value)].isdigit() and tok[len(value)] != ".":
            c = token_cover(tok[len(value):], names)
            if c:
                return True, c
        c = token_cover(tok, names)
        return False, (c or frozenset())

    infos = [info(t) for t in tokens]

    def valid(s, e):
        if e < s or e - s + 1 > window:
            return False
        has_v = any(infos[i][0] for i in range(s, e + 1))
        cov = frozenset().union(*(infos[i][1] for i in range(s, e + 1)))
        return has_v and cov >= names

    cands = [(s, e) for s in range(n) for e in range(s, n) if valid(s, e) and not valid(s + 1, e) and not valid(s, e - 1)]
    if not cands:
        return None
    s, e = min(cands)
    from ptrex.units import is_decoration

    if e + 1 < n and is_decoration(tokens[e + 1]) and infos[e][1]:
        e += 1
    return s, e


_FILLER = ["the", "cell", "shows", "at", "of", "and", "1", "(-1)", "g", "mA", "h", "S", "cm", "V", "%", "42.6", "7"]
_UNITS = ["mAh/g", "S/cm", "V", "Wh/kg", "%", "mA h g(-1)"]


@settings(max_examples=300, deadline=None)
@given(
    st.lists(st.sampled_from(_FILLER + ["Wh", "kg", "mAh/g", "150.7", "S/cm", "mAh"]), min_size=1, max_size=20),
    st.sampled_from(_UNITS),
    st.sampled_from(["42.6", "150.7", "7"]),
)
def test_match_entity2_vs_exhaustive(tokens, unit, value):
    got = match_entity2(tokens, value, unit)
    want = _oracle_entity2(tokens, value, unit)
    assert (None if got is None else (got.begin, got.end)) == want


def test_match_entity2_examples():
    toks = tokenize("the energy density reached 42.6 Wh kg 1 after cycling")
    i = toks.index("42.6")
    span = match_entity2(toks, "42.6", "Wh/kg")
    assert (span.begin, span.end) == (i, i + 3)
    toks = tokenize("a capacity of g(-1) mA h 150.7 was kept")
    assert match_entity2(toks, "150.7", "mAh/g") is not None
    assert match_entity2(tokenize("no value here V"), "3.96", "V") is None
    with pytest.raises(ValueError):
        match_entity2(["1"], "", "V")


def test_distant_supervise_licoo2():
    s = Sentence.from_text(LICOO2_TEXT)
    ann = distant_supervise(s, [_cand("LiCoO2", "Voltage", "3.96", "V")])
    assert len(ann.triplets) == 1
    t = ann.triplets[0]
    assert (t.entity1.surface, t.relation, t.entity2.surface) == ("LiCoO2", "Voltage", "3.96 V")


def test_distant_supervise_requires_indicator():
    s = Sentence.from_text("The pure LiCoO2 showed 3.96 V in the test .")
    assert distant_supervise(s, [_cand("LiCoO2", "Voltage", "3.96", "V")]) is None


def test_distant_supervise_coulombic_pair():
    s = Sentence.from_text(CE_TEXT)
    cands = [_cand("Cu0.02Ti0.94Nb2.04O7", "Coulombic_Efficiency", "91.0", "%"),
             _cand("TiNb2O7", "Coulombic_Efficiency", "81.6", "%")]
    ann = distant_supervise(s, cands)
    spans = [(t.entity1.begin, t.entity1.end, t.entity2.begin, t.entity2.end) for t in ann.triplets]
    assert spans == [(8, 8, 17, 18), (24, 24, 27, 28)]
    assert verify_annotation(ann, cands)


def test_find_indicator_noncontiguous():
    toks = tokenize("the efficiency was high and Coulombic losses small")
    assert find_indicator(toks, "Coulombic_Efficiency") == (-1, -1)
    assert find_indicator(tokenize("its voltage"), "Voltage") == (1, 1)
    assert find_indicator(tokenize("nothing"), "Voltage") is None


def test_candidate_index_lookup():
    c1, c2 = _cand("TiO2", "Voltage", "1.7", "V"), _cand("LiCoO2", "Voltage", "3.9", "V")
    idx = CandidateIndex([c1, c2])
    assert len(idx) == 2
    assert idx.lookup(Sentence.from_text(TIO2_TEXT)) == [c1]


def test_build_corpus_strictness_holds():
    records = [
        {"Property": "Voltage", "Name": "TiO2", "Value": "1.7", "Unit": "Volt^(1.0)"},
        {"Property": "Coulombic Efficiency", "Name": "TiNb2O7", "Raw_value": "81.6"},
        {"Property": "Coulombic Efficiency", "Name": "Cu0.02Ti0.94Nb2.04O7", "Raw_value": "91.0"},
    ]
    corpus, stats = build_corpus(records, [[TIO2_TEXT, "Unrelated ."], [CE_TEXT]])
    assert stats.matched_sentences == 2 and stats.triplets == 3
    assert stats.per_relation == Counter(Voltage=1, Coulombic_Efficiency=2)
    cands = [CandidateTriplet.from_record(parse_battery_record(r)) for r in records]
    for ann in corpus:
        assert verify_annotation(ann, cands, DEFAULT_INDICATORS)
    assert [a.sentence.id for a in corpus] == [0, 1]
