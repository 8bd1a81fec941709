"""Unit surface forms and order-free unit matching.

A unit string such as ``mAh/g`` is decomposed into components
(``milliampere``, ``hour``, ``gram^-1``). Each component has a closed set of
surface forms, and a token can cover several components at once
(``mAh`` covers milliampere and hour). Exponent decorations such as ``-1``,
``(-1)`` or a bare ``1`` left over from PDF extraction of superscripts are
recognised either glued to a symbol or as a separate token.
"""

from __future__ import annotations

import itertools
import re
from functools import lru_cache
from typing import Optional

# canonical name -> surface forms; the first form is the preferred symbol
BASE_UNITS: dict[str, tuple[str, ...]] = {
    "ampere": ("A", "amp", "amps", "ampere", "amperes"),
    "volt": ("V", "volt", "volts"),
    "watt": ("W", "watt", "watts"),
    "hour": ("h", "hr", "hrs", "hour", "hours"),
    "gram": ("g", "gram", "grams"),
    "siemens": ("S", "siemens"),
    "meter": ("m", "meter", "meters", "metre", "metres"),
    "centimeter": ("cm", "centimeter", "centimeters", "centimetre", "centimetres"),
    "electronvolt": ("eV", "electronvolt", "electronvolts"),
    "percent": ("%", "percent", "pct"),
    "second": ("s", "sec", "second", "seconds"),
}

_PREFIXES = {"milli": "m", "kilo": "k"}
_PREFIXABLE = ("ampere", "volt", "watt", "gram", "siemens", "electronvolt")


def _build_table() -> dict[str, tuple[str, ...]]:
    table = dict(BASE_UNITS)
    for prefix, sym in _PREFIXES.items():
        for base in _PREFIXABLE:
            forms = BASE_UNITS[base]
            words = [prefix + f for f in forms[1:]]
            table[prefix + base] = (sym + forms[0], *words)
    return table


UNIT_TABLE: dict[str, tuple[str, ...]] = _build_table()

# surface form -> canonical name. Symbols are case-sensitive ("S" siemens vs
# "s" second); spelled-out words are matched case-insensitively.
_SYMBOLS: dict[str, str] = {}
_WORDS: dict[str, str] = {}
for _name, _forms in UNIT_TABLE.items():
    _SYMBOLS.setdefault(_forms[0], _name)
    for _f in _forms[1:]:
        _WORDS.setdefault(_f.lower(), _name)
    _WORDS.setdefault(_name, _name)

_MINUS = "-−–"
_DECORATION = re.compile(r"^\^?\(?[" + _MINUS + r"+]?\d+(?:\.\d+)?\)?$")
_TRAILING_EXP = re.compile(r"^(.*?[A-Za-z%])(\^?\(?([" + _MINUS + r"+]?)\d+(?:\.\d+)?\)?)$")
_CDE_COMPONENT = re.compile(r"([A-Za-z]+)\^\(([-+]?\d+(?:\.\d+)?)\)")


def is_decoration(token: str) -> bool:
    """True for stand-alone exponent leftovers like ``1``, ``-1``, ``(-1)``."""
    return bool(_DECORATION.match(token))


@lru_cache(maxsize=4096)
def _segment(letters: str) -> Optional[tuple[str, ...]]:
    """Split glued unit symbols (``mAh`` -> milliampere, hour)."""
    if not letters:
        return ()
    word = _WORDS.get(letters.lower())
    if word is not None:
        return (word,)
    # longest symbol first so "mA" wins over "m" + "A"
    for cut in range(min(len(letters), 3), 0, -1):
        head = letters[:cut]
        name = _SYMBOLS.get(head)
        if name is None:
            continue
        rest = _segment(letters[cut:])
        if rest is not None:
            return (name, *rest)
    return None


def _parse_piece(piece: str, sign: int) -> Optional[list[tuple[str, int]]]:
    exp = sign
    m = _TRAILING_EXP.match(piece)
    if m:
        piece = m.group(1)
        if m.group(3) and m.group(3) in _MINUS:
            exp = -sign
    names = _segment(piece)
    if names is None:
        return None
    return [(n, exp) for n in names]


@lru_cache(maxsize=4096)
def parse_unit(unit: str) -> Optional[tuple[tuple[str, int], ...]]:
    """Decompose a unit string into ``(canonical name, exponent sign)`` pairs.

    Accepts plain strings (``mAh/g``, ``S cm-1``, ``mA h g(-1)``) and the
    database's normalised form (``Gram^(-1.0)  Hour^(1.0)  MilliAmpere^(1.0)``).
    Returns None when any part is not a known unit.
    """
    unit = unit.strip()
    if not unit:
        return None
    cde = _CDE_COMPONENT.findall(unit)
    if cde and _CDE_COMPONENT.sub("", unit).strip() == "":
        out = []
        for name, exp in cde:
            canon = _WORDS.get(name.lower())
            if canon is None:
                return None
            out.append((canon, -1 if float(exp) < 0 else 1))
        return tuple(out)
    comps: list[tuple[str, int]] = []
    for k, part in enumerate(unit.split("/")):
        sign = 1 if k == 0 else -1
        pieces = [p for p in re.split(r"[\s·*]+", part) if p]
        if not pieces:
            return None
        for piece in pieces:
            if is_decoration(piece):
                continue
            parsed = _parse_piece(piece, sign)
            if parsed is None:
                return None
            comps.extend(parsed)
    return tuple(comps) if comps else None


def _symbol(name: str) -> str:
    return UNIT_TABLE[name][0]


def expand_unit_variants(unit: str) -> set[str]:
    """All surface renderings of ``unit`` to look for in text.

    A single known unit yields its full form set (``ampere`` ->
    ``A``, ``amp``, ``amps``, ``ampere``, ``amperes``). Compound units yield
    symbol renderings with the usual exponent notations. Unknown units come
    back unchanged.
    """
    comps = parse_unit(unit)
    if comps is None:
        return {unit}
    if len(comps) == 1 and comps[0][1] > 0:
        return set(UNIT_TABLE[comps[0][0]]) | {unit}
    num = [_symbol(n) for n, e in comps if e > 0]
    den = [_symbol(n) for n, e in comps if e < 0]
    out = {unit}
    if num and den:
        out.add("".join(num) + "/" + "/".join(den))
        out.add(" ".join(num) + "/" + " ".join(den))
    for style in ("-1", "−1", "(-1)", "^-1", " 1", " -1", "(−1)"):
        neg = [d + style for d in den]
        out.add(" ".join(num + neg))
        if num:
            out.add(" ".join(["".join(num)] + neg))
    return out


def token_cover(token: str, unit_names: frozenset[str]) -> Optional[frozenset[str]]:
    """Canonical unit names covered by ``token``, or None if it is not a unit token."""
    if "/" in token:
        parsed = parse_unit(token)
    else:
        parsed = _parse_piece(token, 1)
        parsed = tuple(parsed) if parsed is not None else None
    if parsed is None:
        return None
    return frozenset(n for n, _ in parsed if n in unit_names)


def unit_signature(unit: str) -> str:
    """Normalised unit key used for de-duplication."""
    comps = parse_unit(unit)
    if comps is None:
        return unit.strip()
    return " ".join(f"{n}^{e}" for n, e in sorted(comps))


def component_permutations(unit: str) -> list[str]:
    """Space-separated symbol orderings of a compound unit (test helper for order-free matching)."""
    comps = parse_unit(unit) or ()
    syms = [_symbol(n) + ("(-1)" if e < 0 else "") for n, e in comps]
    return [" ".join(p) for p in itertools.permutations(syms)]
