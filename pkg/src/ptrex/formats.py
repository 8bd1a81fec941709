"""On-disk formats: structured records, ``.sent``/``.pointer`` pairs, inputs."""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence, Union

from .core import (
    AnnotatedSentence,
    EntitySpan,
    Sentence,
    Triplet,
    format_pointer_line,
    parse_pointer_line,
    span_surface,
    tokenize,
)

log = logging.getLogger(__name__)

PathLike = Union[str, Path]


# ---------------------------------------------------------------------------
# structured records


def to_structured(annotated: AnnotatedSentence) -> dict:
    s = annotated.sentence
    mentions = []
    for t in annotated.triplets:
        mentions.append(
            {
                "arg1Text": t.entity1.surface or span_surface(s, t.entity1),
                "arg1StartIndex": t.entity1.begin,
                "arg1EndIndex": t.entity1.end,
                "relText": t.relation,
                "relStartIndex": t.relation_span[0],
                "relEndIndex": t.relation_span[1],
                "arg2Text": t.entity2.surface or span_surface(s, t.entity2),
                "arg2OriginalText": t.entity2_original,
                "arg2StartIndex": t.entity2.begin,
                "arg2EndIndex": t.entity2.end,
            }
        )
    return {
        "id": s.id,
        "docId": s.doc_id,
        "sentText": s.raw_text,
        "relationMentions": mentions,
        "numTriples": len(mentions),
    }


def from_structured(record: dict) -> AnnotatedSentence:
    """Parse and validate one structured record against ``tokenize(sentText)``."""
    sentence = Sentence(
        id=int(record["id"]),
        doc_id=int(record["docId"]),
        tokens=tuple(tokenize(record["sentText"])),
        raw_text=record["sentText"],
    )
    mentions = record["relationMentions"]
    if record.get("numTriples", len(mentions)) != len(mentions):
        raise ValueError(f"record {sentence.id}: numTriples disagrees with relationMentions")
    triplets = []
    for m in mentions:
        e1 = EntitySpan.of(sentence, m["arg1StartIndex"], m["arg1EndIndex"])
        e2 = EntitySpan.of(sentence, m["arg2StartIndex"], m["arg2EndIndex"])
        if e1.surface != m["arg1Text"] or e2.surface != m["arg2Text"]:
            raise ValueError(f"record {sentence.id}: argument text does not match its indices")
        triplets.append(
            Triplet(
                e1,
                m["relText"],
                e2,
                entity2_original=m.get("arg2OriginalText"),
                relation_span=(int(m.get("relStartIndex", -1)), int(m.get("relEndIndex", -1))),
            )
        )
    return AnnotatedSentence(sentence, tuple(triplets))


def dumps_structured(annotated: Iterable[AnnotatedSentence]) -> str:
    return "".join(json.dumps(to_structured(a), ensure_ascii=False) + "\n" for a in annotated)


def emit_structured(annotated: Iterable[AnnotatedSentence], path: PathLike) -> Path:
    """Write one structured record per line (UTF-8)."""
    path = Path(path)
    try:
        path.write_text(dumps_structured(annotated), encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write structured records to {path}: {exc}") from exc
    return path


def read_structured(path: PathLike) -> list[AnnotatedSentence]:
    path = Path(path)
    out = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(from_structured(json.loads(line)))
            except (KeyError, ValueError, IndexError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return out


# ---------------------------------------------------------------------------
# .sent / .pointer


def emit_sent_pointer(annotated: Sequence[AnnotatedSentence], basepath: PathLike) -> tuple[Path, Path]:
    """Write ``<base>.sent`` (tokens) and ``<base>.pointer`` (``b1 e1 b2 e2 Rel | ...``)."""
    base = Path(basepath)
    sent_path = base.with_name(base.name + ".sent")
    ptr_path = base.with_name(base.name + ".pointer")
    sent_lines = "".join(" ".join(a.sentence.tokens) + "\n" for a in annotated)
    ptr_lines = "".join(format_pointer_line(a.pointer_records) + "\n" for a in annotated)
    for p, text in ((sent_path, sent_lines), (ptr_path, ptr_lines)):
        try:
            p.write_text(text, encoding="utf-8")
        except OSError as exc:
            raise OSError(f"cannot write {p}: {exc}") from exc
    return sent_path, ptr_path


def read_sent_pointer(basepath: PathLike) -> list[AnnotatedSentence]:
    base = Path(basepath)
    sents = base.with_name(base.name + ".sent").read_text(encoding="utf-8").splitlines()
    ptrs = base.with_name(base.name + ".pointer").read_text(encoding="utf-8").splitlines()
    if len(sents) != len(ptrs):
        raise ValueError(f"{base}: {len(sents)} sentences but {len(ptrs)} pointer lines")
    out = []
    for i, (s, p) in enumerate(zip(sents, ptrs)):
        sentence = Sentence.from_tokens(s.split(" "), id=i)
        triplets = tuple(r.to_triplet(sentence) for r in parse_pointer_line(p))
        out.append(AnnotatedSentence(sentence, triplets))
    return out


# ---------------------------------------------------------------------------
# inputs


def read_battery_records(path: PathLike, stats: Optional[Counter] = None) -> list[dict]:
    """Load database records from a JSON array or a JSON-lines file.

    Malformed lines are skipped and counted under ``stats["malformed"]``.
    """
    stats = stats if stats is not None else Counter()
    text = Path(path).read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("["):
        data = json.loads(stripped)
        return [r for r in data if isinstance(r, dict)]
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError:
            stats["malformed"] += 1
            log.warning("%s:%d: malformed record skipped", path, lineno)
            continue
        if isinstance(rec, dict):
            out.append(rec)
        else:
            stats["malformed"] += 1
    return out


def read_article(path: PathLike) -> dict:
    """Load a parsed article (``title``, ``abstractText``, ``sections[].text``)."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f"cannot parse article {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ValueError(f"cannot parse article {path}: expected a JSON object")
    # some dumps wrap the parse under "metadata"
    if "metadata" in data and isinstance(data["metadata"], dict) and "sections" not in data:
        data = data["metadata"]
    return data


def article_texts(article: dict) -> Iterator[str]:
    if article.get("title"):
        yield str(article["title"])
    abstract = article.get("abstractText") or article.get("abstract")
    if abstract:
        yield str(abstract)
    for sec in article.get("sections") or ():
        if isinstance(sec, dict) and sec.get("text"):
            yield str(sec["text"])
        elif isinstance(sec, str):
            yield sec


_ABBREV = {"fig", "figs", "eq", "eqs", "ref", "refs", "al", "e.g", "i.e", "vs", "no", "ca", "approx", "resp", "cf", "etc"}
_BOUNDARY = re.compile(r"(?<=[.!?])\s+(?=[\"'(\[]?[A-Z0-9])")


def split_sentences(text: str) -> list[str]:
    """Rule-based sentence splitter tolerant of abbreviations and decimals."""
    pieces = _BOUNDARY.split(" ".join(text.split()))
    out: list[str] = []
    for piece in pieces:
        if out:
            last_word = out[-1].rsplit(" ", 1)[-1].rstrip(".").lower()
            if last_word in _ABBREV:
                out[-1] = out[-1] + " " + piece
                continue
        out.append(piece)
    return [p for p in out if p.strip()]


def article_sentences(article: dict) -> list[str]:
    return [s for text in article_texts(article) for s in split_sentences(text)]
