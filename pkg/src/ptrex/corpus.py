"""Battery-record ingestion and distant supervision over article sentences."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .core import RELATIONS, AnnotatedSentence, EntitySpan, Sentence, Triplet, tokenize
from .units import expand_unit_variants, is_decoration, parse_unit, token_cover, unit_signature

log = logging.getLogger(__name__)

DEFAULT_WINDOW = 8

_PROPERTY_ALIASES = {
    "voltage": "Voltage",
    "capacity": "Capacity",
    "conductivity": "Conductivity",
    "coulombic efficiency": "Coulombic_Efficiency",
    "coulombic_efficiency": "Coulombic_Efficiency",
    "energy": "Energy",
}

DEFAULT_INDICATORS: dict[str, tuple[str, ...]] = {
    "Voltage": ("voltage", "voltages"),
    "Capacity": ("capacity", "capacities"),
    "Conductivity": ("conductivity", "conductivities"),
    "Coulombic_Efficiency": ("coulombic efficiency", "coulombic efficiencies"),
    "Energy": ("energy", "energies"),
}

_EMPTY = {"", "none", "null", "nan"}


def normalize_relation(name: str) -> Optional[str]:
    return _PROPERTY_ALIASES.get(" ".join(name.replace("_", " ").split()).lower())


@dataclass(frozen=True)
class BatteryRecord:
    property: str
    name: str
    value: str
    raw_value: str
    raw_unit: str
    unit: str
    doi: str
    extra: tuple[tuple[str, str], ...] = field(default=(), compare=False)

    @property
    def relation(self) -> str:
        return self.property


def _field(record: Mapping, *names: str) -> str:
    for name in names:
        v = record.get(name)
        if v is not None and str(v).strip().lower() not in _EMPTY:
            return str(v).strip()
    return ""


def parse_battery_record(record: Mapping, stats: Optional[Counter] = None) -> Optional[BatteryRecord]:
    """Normalise one database record, or return None (logged and counted) if unusable."""
    stats = stats if stats is not None else Counter()
    prop = normalize_relation(_field(record, "Property", "property"))
    if prop is None:
        stats["unknown_property"] += 1
        log.warning("skipping record with property %r", record.get("Property"))
        return None
    name = _field(record, "Name", "name")
    if not name:
        stats["missing_name"] += 1
        return None
    if _field(record, "Correctness", "correctness").upper() == "F":
        stats["marked_incorrect"] += 1
        return None
    raw_value = _field(record, "Raw_value", "raw_value")
    raw_unit = _field(record, "Raw_unit", "raw_unit")
    value = _field(record, "Value", "value")
    unit = _field(record, "Unit", "unit")
    if prop == "Coulombic_Efficiency":
        raw_unit = raw_unit or "%"
        unit = unit or "%"
    if not ((raw_value and raw_unit) or (value and unit)):
        stats["missing_value"] += 1
        return None
    known = {"Property", "Name", "Value", "Raw_value", "Raw_unit", "Unit", "DOI"}
    extra = tuple((str(k), str(v)) for k, v in record.items() if k not in known)
    stats["accepted"] += 1
    return BatteryRecord(
        property=prop,
        name=name,
        value=value,
        raw_value=raw_value,
        raw_unit=raw_unit,
        unit=unit,
        doi=_field(record, "DOI", "doi"),
        extra=extra,
    )


@dataclass(frozen=True)
class CandidateTriplet:
    entity1_text: str
    relation: str
    value: str
    unit: str
    unit_variants: frozenset[str] = field(default=frozenset(), compare=False)
    original: str = field(default="", compare=False)

    @property
    def dedup_key(self) -> tuple[str, str, str, str]:
        return (self.entity1_text, self.relation, self.value, unit_signature(self.unit))

    @classmethod
    def from_record(cls, rec: BatteryRecord) -> "CandidateTriplet":
        # the raw value/unit pair reads like running text; fall back to the
        # normalised fields only when the raw ones are missing
        value, unit = (rec.raw_value, rec.raw_unit) if rec.raw_value and rec.raw_unit else (rec.value, rec.unit)
        original = f"{rec.value or value} {rec.unit or unit}".strip()
        return cls(rec.name, rec.property, value, unit, frozenset(expand_unit_variants(unit)), original)


def deduplicate(candidates: Iterable[CandidateTriplet]) -> list[CandidateTriplet]:
    """Drop repeats by (entity1, relation, value, normalised unit), keeping first occurrences."""
    seen: set = set()
    out = []
    for c in candidates:
        key = c.dedup_key
        if key not in seen:
            seen.add(key)
            out.append(c)
    return out


def find_run(tokens: Sequence[str], needle: Sequence[str], lower: bool = False) -> int:
    """Leftmost start index of ``needle`` as a contiguous run, or -1."""
    m = len(needle)
    if m == 0:
        return -1
    if lower:
        tokens = [t.lower() for t in tokens]
        needle = [t.lower() for t in needle]
    first = needle[0]
    for i in range(len(tokens) - m + 1):
        if tokens[i] == first and list(tokens[i : i + m]) == list(needle):
            return i
    return -1


def _value_hit(token: str, value: str, names: frozenset[str]) -> Optional[frozenset[str]]:
    """Components covered by a value token (possibly glued to its unit), else None."""
    if token == value:
        return frozenset()
    if token.startswith(value) and len(token) > len(value) and not token[len(value)].isdigit():
        rest = token[len(value) :]
        if rest[0] == ".":
            return None
        cover = token_cover(rest, names)
        if cover:
            return cover
    return None


def match_entity2(
    sentence: Sentence | Sequence[str],
    value: str,
    unit: str,
    window: int = DEFAULT_WINDOW,
) -> Optional[EntitySpan]:
    """Locate the value and all unit components as one contiguous window.

    Components may appear in any order and in any of their surface forms;
    the leftmost inclusion-minimal window of at most ``window`` tokens wins.
    A stand-alone exponent decoration (``1``, ``-1``, ``(-1)``) right after
    the window is absorbed into it.
    """
    if not value or not unit:
        raise ValueError("value and unit must be non-empty")
    tokens = sentence.tokens if isinstance(sentence, Sentence) else tuple(sentence)
    comps = parse_unit(unit)
    n = len(tokens)
    if comps is None:
        # unknown unit: literal token match right after the value
        unit_toks = tokenize(unit)
        for i, tok in enumerate(tokens):
            if tok == value and tuple(tokens[i + 1 : i + 1 + len(unit_toks)]) == tuple(unit_toks):
                end = i + len(unit_toks)
                return _span(tokens, i, end)
        return None
    names = frozenset(c for c, _ in comps)
    has_value = [False] * n
    cover: list[frozenset[str]] = [frozenset()] * n
    for i, tok in enumerate(tokens):
        hit = _value_hit(tok, value, names)
        if hit is not None:
            has_value[i] = True
            cover[i] = hit
            continue
        c = token_cover(tok, names)
        if c:
            cover[i] = c
    best: Optional[tuple[int, int]] = None
    for s in range(n):
        if not (has_value[s] or cover[s]):
            continue
        got: set[str] = set()
        seen_value = False
        for e in range(s, min(n, s + window)):
            got |= cover[e]
            seen_value = seen_value or has_value[e]
            if seen_value and got >= names:
                if _is_minimal(has_value, cover, names, s, e):
                    best = (s, e)
                break
        if best is not None:
            break
    if best is None:
        return None
    s, e = best
    if e + 1 < n and is_decoration(tokens[e + 1]) and cover[e]:
        e += 1
    return _span(tokens, s, e)


def _is_minimal(has_value, cover, names, s, e) -> bool:
    # dropping the first token must break the window (the last token is
    # necessary by construction of the scan)
    if s == e:
        return True
    got: set[str] = set()
    for i in range(s + 1, e + 1):
        got |= cover[i]
    return not (any(has_value[s + 1 : e + 1]) and got >= names)


def _span(tokens: Sequence[str], b: int, e: int) -> EntitySpan:
    return EntitySpan(b, e, " ".join(tokens[b : e + 1]))


def find_indicator(
    tokens: Sequence[str],
    relation: str,
    indicators: Mapping[str, Sequence[str]] = DEFAULT_INDICATORS,
) -> Optional[tuple[int, int]]:
    """Position of the relation indicator; (-1, -1) if present only non-contiguously; None if absent."""
    phrases = [tokenize(p) for p in indicators.get(relation, ())]
    if not phrases:
        phrases = [relation.replace("_", " ").split()]
    best = None
    for p in phrases:
        i = find_run(tokens, p, lower=True)
        if i >= 0 and (best is None or i < best[0]):
            best = (i, i + len(p) - 1)
    if best is not None:
        return best
    lowered = {t.lower() for t in tokens}
    for p in phrases:
        if all(t.lower() in lowered for t in p):
            return (-1, -1)
    return None


def distant_supervise(
    sentence: Sentence,
    candidates: Iterable[CandidateTriplet],
    indicators: Mapping[str, Sequence[str]] = DEFAULT_INDICATORS,
    window: int = DEFAULT_WINDOW,
) -> Optional[AnnotatedSentence]:
    """Attach every candidate whose three parts all occur in the sentence."""
    triplets = []
    for cand in candidates:
        e1_toks = tokenize(cand.entity1_text)
        b1 = find_run(sentence.tokens, e1_toks)
        if b1 < 0:
            continue
        rel_span = find_indicator(sentence.tokens, cand.relation, indicators)
        if rel_span is None:
            continue
        e2 = match_entity2(sentence, cand.value, cand.unit, window)
        if e2 is None:
            continue
        e1 = EntitySpan.of(sentence, b1, b1 + len(e1_toks) - 1)
        triplets.append(
            Triplet(e1, cand.relation, e2, entity2_original=cand.original or None, relation_span=rel_span)
        )
    if not triplets:
        return None
    return AnnotatedSentence(sentence, tuple(triplets))


class CandidateIndex:
    """Candidates bucketed by the first token of their material name."""

    def __init__(self, candidates: Iterable[CandidateTriplet]):
        self._by_token: dict[str, list[CandidateTriplet]] = {}
        for c in candidates:
            toks = tokenize(c.entity1_text)
            self._by_token.setdefault(toks[0], []).append(c)

    def __len__(self) -> int:
        return sum(len(v) for v in self._by_token.values())

    def lookup(self, sentence: Sentence) -> list[CandidateTriplet]:
        out: list[CandidateTriplet] = []
        for tok in dict.fromkeys(sentence.tokens):
            out.extend(self._by_token.get(tok, ()))
        return out


def verify_annotation(
    annotated: AnnotatedSentence,
    candidates: Iterable[CandidateTriplet],
    indicators: Mapping[str, Sequence[str]] = DEFAULT_INDICATORS,
    window: int = DEFAULT_WINDOW,
) -> bool:
    """Re-check that every triplet is backed by a candidate satisfying all strictness conditions."""
    toks = annotated.sentence.tokens
    by_key: dict[tuple[str, str], list[CandidateTriplet]] = {}
    for c in candidates:
        by_key.setdefault((c.entity1_text, c.relation), []).append(c)
    for t in annotated.triplets:
        if find_indicator(toks, t.relation, indicators) is None:
            return False
        ok = False
        for c in by_key.get((t.entity1.surface, t.relation), ()):
            if tuple(tokenize(c.entity1_text)) != tuple(toks[t.entity1.begin : t.entity1.end + 1]):
                continue
            if match_entity2(annotated.sentence, c.value, c.unit, window) == t.entity2:
                ok = True
                break
        if not ok:
            return False
    return True


@dataclass
class CorpusStats:
    articles: int = 0
    sentences: int = 0
    matched_sentences: int = 0
    triplets: int = 0
    candidates: int = 0
    records_accepted: int = 0
    per_relation: Counter = field(default_factory=Counter)
    rejected: Counter = field(default_factory=Counter)

    def to_dict(self) -> dict:
        return {
            "articles": self.articles,
            "sentences": self.sentences,
            "matched_sentences": self.matched_sentences,
            "triplets": self.triplets,
            "candidates": self.candidates,
            "records_accepted": self.records_accepted,
            "per_relation": {r: self.per_relation.get(r, 0) for r in RELATIONS},
            "rejected": dict(sorted(self.rejected.items())),
        }


def build_corpus(
    records: Iterable[Mapping],
    articles: Iterable[Sequence[str]],
    indicators: Mapping[str, Sequence[str]] = DEFAULT_INDICATORS,
    window: int = DEFAULT_WINDOW,
    stats: Optional[CorpusStats] = None,
) -> tuple[list[AnnotatedSentence], CorpusStats]:
    """Distantly supervise every article sentence against the de-duplicated record triplets.

    ``articles`` yields each article's sentence strings. Candidates are global:
    a sentence may match a record from any article.
    """
    stats = stats if stats is not None else CorpusStats()
    outcome: Counter = Counter()
    parsed = [parse_battery_record(r, outcome) for r in records]
    stats.records_accepted += outcome.pop("accepted", 0)
    stats.rejected.update(outcome)
    candidates = deduplicate(CandidateTriplet.from_record(r) for r in parsed if r is not None)
    stats.candidates = len(candidates)
    index = CandidateIndex(candidates)
    out: list[AnnotatedSentence] = []
    for doc_id, sentences in enumerate(articles):
        stats.articles += 1
        for text in sentences:
            try:
                sentence = Sentence.from_text(text, id=len(out), doc_id=doc_id)
            except ValueError:
                continue
            stats.sentences += 1
            annotated = distant_supervise(sentence, index.lookup(sentence), indicators, window)
            if annotated is None:
                continue
            out.append(annotated)
            stats.matched_sentences += 1
            stats.triplets += len(annotated.triplets)
            stats.per_relation.update(t.relation for t in annotated.triplets)
    return out, stats
