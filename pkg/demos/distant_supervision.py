"""Label article sentences from database records and inspect the result.

Run from the repository root:  python3 demos/distant_supervision.py
"""

from ptrex.core import format_pointer_line
from ptrex.corpus import build_corpus
from ptrex.formats import to_structured

records = [
    {"Property": "Voltage", "Name": "TiO2", "Value": "1.7", "Unit": "Volt^(1.0)"},
    {"Property": "Coulombic Efficiency", "Name": "Cu0.02Ti0.94Nb2.04O7", "Raw_value": "91.0"},
    {"Property": "Coulombic Efficiency", "Name": "TiNb2O7", "Raw_value": "81.6"},
]
articles = [
    ["The voltage plateau at around 2.0 and 1.7 V are verified the lithium ion insertion / extraction of anatase TiO2 ."],
    [
        "However, at the same C-rate, the Cu0.02Ti0.94Nb2.04O7 sample exhibits a larger first-cycle Coulombic "
        "efficiency (91.0%) than that of the TiNb2O7 sample (81.6%) probably due to the smaller particle size.",
        "TiO2 was annealed at 450 C.",  # no relation indicator, so no label
    ],
]

corpus, stats = build_corpus(records, articles)
print(stats.to_dict())
for ann in corpus:
    print()
    print(" ".join(f"{i}:{t}" for i, t in enumerate(ann.sentence.tokens)))
    print("pointer:", format_pointer_line(ann.pointer_records))
    for m in to_structured(ann)["relationMentions"]:
        print(f"  {m['arg1Text']} [{m['arg1StartIndex']}] --{m['relText']}--> {m['arg2Text']} "
              f"[{m['arg2StartIndex']}..{m['arg2EndIndex']}]")
