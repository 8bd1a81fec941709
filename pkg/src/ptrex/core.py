"""Shared domain types, tokenization and vocabulary."""

from __future__ import annotations

import hashlib
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

RELATIONS: tuple[str, ...] = (
    "Voltage",
    "Capacity",
    "Conductivity",
    "Coulombic_Efficiency",
    "Energy",
)
EOT = "EOT"
BOT = "BOT"
UNK = "UNK"
TRIPLET_SEP = ";"
FIELD_SEP = "|"

# relation inventory used by the pointer decoder; EOT terminates the sequence
RELATION_SET: tuple[str, ...] = RELATIONS + (EOT,)


# ---------------------------------------------------------------------------
# tokenization

_LEADING = "([{\"'“‘"
_TRAILING = ")]}\"'”’,;:!?."
_PAIRS = {"(": ")", "[": "]", "{": "}"}
_CLOSERS = {v: k for k, v in _PAIRS.items()}
_NUM_PERCENT = re.compile(r"^([+\-−]?\d+(?:\.\d+)?)(%)$")


def _matching_close(tok: str, start: int) -> int:
    opener, closer = tok[start], _PAIRS[tok[start]]
    depth = 0
    for i in range(start, len(tok)):
        if tok[i] == opener:
            depth += 1
        elif tok[i] == closer:
            depth -= 1
            if depth == 0:
                return i
    return -1


def _matching_open(tok: str, end: int) -> int:
    closer, opener = tok[end], _CLOSERS[tok[end]]
    depth = 0
    for i in range(end, -1, -1):
        if tok[i] == closer:
            depth += 1
        elif tok[i] == opener:
            depth -= 1
            if depth == 0:
                return i
    return -1


def _split_chunk(chunk: str) -> list[str]:
    prefix: list[str] = []
    suffix: list[str] = []
    tok = chunk
    changed = True
    while changed and len(tok) > 1:
        changed = False
        c = tok[0]
        if c in _LEADING:
            # "g(-1)"-style groups stay attached; only an opener that wraps
            # the whole rest of the token (or is unbalanced) is detached
            if c not in _PAIRS or _matching_close(tok, 0) in (-1, len(tok) - 1):
                prefix.append(c)
                tok = tok[1:]
                changed = True
                continue
        c = tok[-1]
        if c in _TRAILING:
            if c not in _CLOSERS or _matching_open(tok, len(tok) - 1) == -1:
                suffix.insert(0, c)
                tok = tok[:-1]
                changed = True
    out = prefix
    m = _NUM_PERCENT.match(tok)
    if m:
        out.extend([m.group(1), m.group(2)])
    else:
        out.append(tok)
    out.extend(suffix)
    return out


def tokenize(raw_text: str) -> list[str]:
    """Split text into word and punctuation tokens.

    Whitespace separates chunks; leading and trailing punctuation is then
    peeled off each chunk. Punctuation inside a chunk is never split, so
    chemical formulas such as ``Na0.35MnO2``, decimals, hyphenated words and
    compound units such as ``mAh/g`` or ``g(-1)`` stay single tokens.
    A percent sign glued to a number is detached (``91.0%`` -> ``91.0 %``).
    """
    if not raw_text or not raw_text.strip():
        raise ValueError("empty text")
    tokens: list[str] = []
    for chunk in raw_text.split():
        tokens.extend(_split_chunk(chunk))
    return tokens


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class Sentence:
    id: int
    doc_id: int
    tokens: tuple[str, ...]
    raw_text: str

    def __post_init__(self) -> None:
        if not self.tokens:
            raise ValueError("sentence has no tokens")

    @classmethod
    def from_text(cls, text: str, id: int = 0, doc_id: int = 0) -> "Sentence":
        toks = tuple(tokenize(text))
        return cls(id=id, doc_id=doc_id, tokens=toks, raw_text=" ".join(toks))

    @classmethod
    def from_tokens(cls, tokens: Sequence[str], id: int = 0, doc_id: int = 0) -> "Sentence":
        toks = tuple(tokens)
        return cls(id=id, doc_id=doc_id, tokens=toks, raw_text=" ".join(toks))

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class EntitySpan:
    """Inclusive token span ``[begin, end]``; equality ignores the surface."""

    begin: int
    end: int
    surface: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        if self.begin < 0 or self.end < self.begin:
            raise ValueError(f"invalid span {self.begin}..{self.end}")

    @classmethod
    def of(cls, sentence: Sentence, begin: int, end: int) -> "EntitySpan":
        return cls(begin, end, span_surface(sentence, begin, end))


def span_surface(sentence: Sentence, begin: int | EntitySpan, end: Optional[int] = None) -> str:
    """Space-joined tokens of an inclusive span."""
    if isinstance(begin, EntitySpan):
        begin, end = begin.begin, begin.end
    if end is None:
        end = begin
    n = len(sentence.tokens)
    for idx in (begin, end):
        if idx < 0 or idx >= n:
            raise IndexError(f"span index {idx} out of bounds for sentence of length {n}")
    if end < begin:
        raise IndexError(f"span end {end} precedes begin {begin}")
    return " ".join(sentence.tokens[begin : end + 1])


@dataclass(frozen=True)
class Triplet:
    entity1: EntitySpan
    relation: str
    entity2: EntitySpan
    entity2_original: Optional[str] = field(default=None, compare=False)
    # (relStartIndex, relEndIndex) of the indicator word, -1/-1 when absent
    relation_span: tuple[int, int] = field(default=(-1, -1), compare=False)

    def __post_init__(self) -> None:
        if self.relation == EOT:
            raise ValueError("EOT is a terminator, not an extractable relation")
        if self.relation not in RELATIONS:
            raise ValueError(f"unknown relation {self.relation!r}")

    @property
    def key(self) -> tuple[int, int, str, int, int]:
        return (self.entity1.begin, self.entity1.end, self.relation, self.entity2.begin, self.entity2.end)

    def to_pointer(self) -> "PointerRecord":
        return PointerRecord(self.entity1.begin, self.entity1.end, self.entity2.begin, self.entity2.end, self.relation)

    def render(self) -> str:
        return f"{self.entity1.surface} | {self.relation} | {self.entity2.surface}"


@dataclass(frozen=True)
class PointerRecord:
    b1: int
    e1: int
    b2: int
    e2: int
    relation: str

    def __post_init__(self) -> None:
        if min(self.b1, self.e1, self.b2, self.e2) < 0:
            raise ValueError("negative pointer index")
        if self.b1 > self.e1 or self.b2 > self.e2:
            raise ValueError(f"begin after end in {self}")
        if self.relation not in RELATIONS:
            raise ValueError(f"unknown relation {self.relation!r}")

    def format(self) -> str:
        return f"{self.b1} {self.e1} {self.b2} {self.e2} {self.relation}"

    @classmethod
    def parse(cls, text: str) -> "PointerRecord":
        parts = text.split()
        if len(parts) != 5:
            raise ValueError(f"malformed pointer record: {text!r}")
        b1, e1, b2, e2 = (int(p) for p in parts[:4])
        return cls(b1, e1, b2, e2, parts[4])

    def to_triplet(self, sentence: Sentence) -> Triplet:
        return Triplet(
            EntitySpan.of(sentence, self.b1, self.e1),
            self.relation,
            EntitySpan.of(sentence, self.b2, self.e2),
        )


def format_pointer_line(records: Iterable[PointerRecord]) -> str:
    return " | ".join(r.format() for r in records)


def parse_pointer_line(line: str) -> list[PointerRecord]:
    line = line.strip()
    if not line:
        return []
    return [PointerRecord.parse(part) for part in line.split("|")]


@dataclass(frozen=True)
class AnnotatedSentence:
    sentence: Sentence
    triplets: tuple[Triplet, ...]

    def __post_init__(self) -> None:
        n = len(self.sentence)
        for t in self.triplets:
            if t.entity1.end >= n or t.entity2.end >= n:
                raise ValueError(f"triplet {t.key} out of bounds for sentence {self.sentence.id}")
        deduped = tuple(dict.fromkeys(self.triplets))
        if len(deduped) != len(self.triplets):
            object.__setattr__(self, "triplets", deduped)

    @property
    def pointer_records(self) -> list[PointerRecord]:
        return [t.to_pointer() for t in self.triplets]


# ---------------------------------------------------------------------------
# vocabulary


class Vocabulary:
    """Token <-> id maps shared by the encoder and the word decoder.

    Reserved entries come first (``BOT``, ``EOT``, ``UNK``, the two
    separators and the relation names), followed by corpus tokens ordered by
    descending frequency then lexicographically, so ids are dense and stable.
    The character alphabet for the character-level encoder is kept alongside.
    """

    def __init__(self, tokens: Sequence[str], chars: Sequence[str] = ()):
        self.itos: list[str] = list(tokens)
        self.stoi: dict[str, int] = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("duplicate tokens in vocabulary")
        for t in reserved_tokens():
            if t not in self.stoi:
                raise ValueError(f"vocabulary lacks reserved token {t!r}")
        # char id 0 is padding, 1 is unknown
        self.chars: list[str] = list(chars)
        self.char_to_id: dict[str, int] = {c: i + 2 for i, c in enumerate(self.chars)}

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    @property
    def bot_id(self) -> int:
        return self.stoi[BOT]

    @property
    def eot_id(self) -> int:
        return self.stoi[EOT]

    @property
    def unk_id(self) -> int:
        return self.stoi[UNK]

    @property
    def n_chars(self) -> int:
        return len(self.chars) + 2

    def lookup(self, token: str) -> int:
        return self.stoi.get(token, self.unk_id)

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.lookup(t) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.itos[i] for i in ids]

    def char_ids(self, token: str) -> list[int]:
        return [self.char_to_id.get(c, 1) for c in token]

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update("\n".join(self.itos).encode("utf-8"))
        h.update(b"\x00")
        h.update("".join(self.chars).encode("utf-8"))
        return h.hexdigest()

    def to_dict(self) -> dict:
        return {"tokens": self.itos, "chars": self.chars, "hash": self.content_hash()}

    @classmethod
    def from_dict(cls, data: dict) -> "Vocabulary":
        vocab = cls(data["tokens"], data.get("chars", ()))
        if "hash" in data and data["hash"] != vocab.content_hash():
            raise ValueError("vocabulary hash does not match its contents")
        return vocab

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabulary) and self.itos == other.itos and self.chars == other.chars


def reserved_tokens(relations: Sequence[str] = RELATIONS) -> list[str]:
    return [BOT, EOT, UNK, FIELD_SEP, TRIPLET_SEP, *relations]


def build_vocabulary(
    sentences: Iterable[Sentence],
    relation_set: Sequence[str] = RELATIONS,
    min_count: int = 1,
) -> Vocabulary:
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: Counter[str] = Counter()
    chars: set[str] = set()
    n = 0
    for s in sentences:
        n += 1
        counts.update(s.tokens)
        for tok in s.tokens:
            chars.update(tok)
    if n == 0:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    rels = [r for r in relation_set if r != EOT]
    reserved = reserved_tokens(rels)
    seen = set(reserved)
    kept = sorted((t for t, c in counts.items() if c >= min_count and t not in seen), key=lambda t: (-counts[t], t))
    for tok in reserved:
        chars.update(tok)
    return Vocabulary(reserved + kept, sorted(chars))
