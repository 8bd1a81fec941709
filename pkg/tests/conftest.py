import json
from pathlib import Path

import pytest
import torch

from ptrex.core import AnnotatedSentence, EntitySpan, Sentence, Triplet

FIXTURES = Path(__file__).parent / "fixtures"

CE_TEXT = (
    "However, at the same C-rate, the Cu0.02Ti0.94Nb2.04O7 sample exhibits a larger first-cycle "
    "Coulombic efficiency (91.0%) than that of the TiNb2O7 sample (81.6%) probably due to the smaller "
    "particle size and larger (electronic and ionic) conductivity of Cu0.02Ti0.94Nb2.04O7 [6, 38]."
)
TIO2_TEXT = (
    "The voltage plateau at around 2.0 and 1.7 V are verified the lithium ion insertion / "
    "extraction of anatase TiO2 ."
)
LICOO2_TEXT = (
    "Nevertheless, the pure LiCoO2 showed a higher working voltage (3.96 V) than the mixture "
    "containing LiNi0.8Co0.17Al0.03O2 and LiCoO2."
)

# small dimensions keep CPU training quick
TINY = dict(word_dim=16, char_dim=8, char_feature_dim=8, hidden_dim=32, pointer_hidden=16, relation_dim=16, token_dim=16)


@pytest.fixture
def ce_sentence():
    return Sentence.from_text(CE_TEXT, id=1, doc_id=1)


@pytest.fixture
def ce_annotated(ce_sentence):
    s = ce_sentence
    return AnnotatedSentence(
        s,
        (
            Triplet(EntitySpan.of(s, 8, 8), "Coulombic_Efficiency", EntitySpan.of(s, 17, 18)),
            Triplet(EntitySpan.of(s, 24, 24), "Coulombic_Efficiency", EntitySpan.of(s, 27, 28)),
        ),
    )


@pytest.fixture
def tio2_sentence():
    return Sentence.from_text(TIO2_TEXT, id=5507, doc_id=2011)


@pytest.fixture(autouse=True)
def _torch_threads():
    torch.set_num_threads(1)
    yield


@pytest.fixture
def f64():
    old = torch.get_default_dtype()
    torch.set_default_dtype(torch.float64)
    yield
    torch.set_default_dtype(old)


def load_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


# one PASS/FAIL line per acceptance criterion, shown after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
