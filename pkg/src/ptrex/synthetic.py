"""Template-generated battery sentences with known gold triplets.

Used for desk-scale experiments where the real distantly supervised corpus
is unavailable. Every sentence carries exact spans by construction; some
templates share one material across two relations (overlapping entities).
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .core import AnnotatedSentence, EntitySpan, Sentence, Triplet, tokenize

_ELEMENTS_A = ["Li", "Na", "K", "Mg", "Zn"]
_ELEMENTS_B = ["Co", "Ni", "Mn", "Fe", "Ti", "V", "Cu", "Nb", "Sn", "Mo"]
_ANIONS = ["O2", "O4", "PO4", "S2", "O7", "P3", "SiO4", "F3"]

UNITS = {
    "Voltage": ["V", "mV"],
    "Capacity": ["mAh/g", "mA h g-1", "mAh g 1"],
    "Conductivity": ["S/cm", "S cm-1", "mS cm 1"],
    "Coulombic_Efficiency": ["%"],
    "Energy": ["Wh/kg", "Wh kg-1", "Wh kg 1"],
}

_PHRASE = {
    "Voltage": ["voltage", "average voltage", "working voltage", "cutoff voltage"],
    "Capacity": ["capacity", "discharge capacity", "specific capacity", "reversible capacity"],
    "Conductivity": ["conductivity", "ionic conductivity", "electrical conductivity"],
    "Coulombic_Efficiency": ["Coulombic efficiency", "first-cycle Coulombic efficiency", "initial Coulombic efficiency"],
    "Energy": ["energy density", "specific energy", "energy"],
}

# (text with {M0}/{M1} material slots and {V0}/{V1}/{V2} value slots,
#  triplets as (material slot, relation slot, value slot))
_TEMPLATES_1 = [
    "The {M0} electrode delivers a {R0} of {V0} after 100 cycles .",
    "A {R0} of {V0} was obtained for {M0} at room temperature .",
    "{M0} exhibits a high {R0} ( {V0} ) compared with previous reports .",
    "Nevertheless , the pure {M0} showed a higher {R0} ( {V0} ) than the mixture .",
]
_TEMPLATES_2_SHARED = [
    "The {M0} cathode delivers a {R0} of {V0} and a {R1} of {V1} .",
    "{M0} shows a {R0} of {V0} , while its {R1} reaches {V1} at 0.1 C .",
    "For {M0} , the {R0} is {V0} and the {R1} is about {V1} .",
]
_TEMPLATES_2_PAIR = [
    "However , the {M0} sample exhibits a larger {R0} ( {V0} ) than that of the {M1} sample ( {V1} ) .",
    "The {R0} of {M0} is {V0} whereas {M1} only reaches {V1} .",
    "Compared with {M1} ( {V1} ) , {M0} shows an improved {R0} of {V0} .",
]
_TEMPLATES_3 = [
    "The {M0} anode delivers a {R0} of {V0} , a {R1} of {V1} and a {R2} of {V2} .",
]


def random_material(rng: np.random.Generator) -> str:
    a = rng.choice(_ELEMENTS_A)
    b = rng.choice(_ELEMENTS_B)
    x = ["", "0.5", "0.35", "2", "0.8", "1.2"][rng.integers(6)]
    c = ""
    if rng.random() < 0.4:
        c = str(rng.choice(_ELEMENTS_B)) + ["0.2", "0.1", "0.05", ""][rng.integers(4)]
    return f"{a}{x}{b}{c}{rng.choice(_ANIONS)}"


def random_value(rng: np.random.Generator, relation: str) -> str:
    lo, hi, digits = {
        "Voltage": (0.5, 5.0, 2),
        "Capacity": (50, 1200, 1),
        "Conductivity": (0.001, 50, 3),
        "Coulombic_Efficiency": (50, 99.9, 1),
        "Energy": (20, 600, 1),
    }[relation]
    return f"{rng.uniform(lo, hi):.{digits}f}"


def _render(template: str, materials: list[str], rels: list[str], values: list[str], units: list[str], rng):
    tokens: list[str] = []
    mat_spans: dict[int, tuple[int, int]] = {}
    val_spans: dict[int, tuple[int, int]] = {}
    for piece in template.split():
        if piece.startswith("{M"):
            k = int(piece[2])
            mat_spans.setdefault(k, (len(tokens), len(tokens)))
            tokens.append(materials[k])
        elif piece.startswith("{V"):
            k = int(piece[2])
            vt = [values[k], *tokenize(units[k])]
            val_spans[k] = (len(tokens), len(tokens) + len(vt) - 1)
            tokens.extend(vt)
        elif piece.startswith("{R"):
            k = int(piece[2])
            tokens.extend(tokenize(str(rng.choice(_PHRASE[rels[k]]))))
        else:
            tokens.append(piece)
    return tokens, mat_spans, val_spans


def generate_sentence(rng: np.random.Generator, kind: str, sid: int = 0) -> AnnotatedSentence:
    relations = list(UNITS)
    if kind == "one":
        template = str(rng.choice(_TEMPLATES_1))
        rels = [str(rng.choice(relations))]
        links = [(0, 0, 0)]
    elif kind == "shared":
        template = str(rng.choice(_TEMPLATES_2_SHARED))
        r = rng.choice(len(relations), size=2, replace=False)
        rels = [relations[i] for i in r]
        links = [(0, 0, 0), (0, 1, 1)]
    elif kind == "pair":
        template = str(rng.choice(_TEMPLATES_2_PAIR))
        rel = str(rng.choice(relations))
        rels = [rel, rel]
        links = [(0, 0, 0), (1, 0, 1)]
    elif kind == "three":
        template = str(rng.choice(_TEMPLATES_3))
        r = rng.choice(len(relations), size=3, replace=False)
        rels = [relations[i] for i in r]
        links = [(0, 0, 0), (0, 1, 1), (0, 2, 2)]
    else:
        raise ValueError(f"unknown sentence kind {kind!r}")
    materials = [random_material(rng), random_material(rng)]
    while materials[1] == materials[0]:
        materials[1] = random_material(rng)
    value_rels = [rels[r] for _, r, _ in links]
    values = [random_value(rng, vr) for vr in value_rels]
    units = [str(rng.choice(UNITS[vr])) for vr in value_rels]
    tokens, mat_spans, val_spans = _render(template, materials, rels, values, units, rng)
    sentence = Sentence.from_tokens(tokens, id=sid, doc_id=sid)
    triplets = []
    for m, r, v in links:
        e1 = EntitySpan.of(sentence, *mat_spans[m])
        e2 = EntitySpan.of(sentence, *val_spans[v])
        triplets.append(Triplet(e1, rels[r], e2, entity2_original=f"{values[v]} {units[v]}"))
    return AnnotatedSentence(sentence, tuple(triplets))


def synthetic_corpus(
    n: int,
    seed: int = 0,
    triplets_per_sentence: Optional[int] = None,
) -> list[AnnotatedSentence]:
    """``n`` sentences; with ``triplets_per_sentence=2`` half share a material (overlap)."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        if triplets_per_sentence == 2:
            kind = "shared" if i % 2 == 0 else "pair"
        elif triplets_per_sentence == 1:
            kind = "one"
        elif triplets_per_sentence is None:
            kind = str(rng.choice(["one", "one", "shared", "pair", "three"]))
        else:
            raise ValueError("triplets_per_sentence must be 1, 2 or None")
        out.append(generate_sentence(rng, kind, sid=i))
    return out
