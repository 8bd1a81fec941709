import pytest
import torch

from ptrex.checkpoint import CheckpointError, VocabularyMismatch, load_checkpoint, read_header, save_checkpoint
from ptrex.evaluation import evaluate
from ptrex.synthetic import synthetic_corpus
from ptrex.trainer import TrainConfig, fit

from conftest import TINY


@pytest.fixture(scope="module", params=["pointer", "word"])
def trained(request):
    data = synthetic_corpus(30, seed=9)
    cfg = TrainConfig(**TINY, decoder=request.param, dropout=0.0, num_epochs=2, batch_size=8, patience=None)
    return fit(data[:20], data[20:25], cfg).model, data[25:]


def test_round_trip_is_bit_identical(trained, tmp_path):
    model, test = trained
    path = save_checkpoint(model, tmp_path / "m.pt", {"note": 1})
    again = load_checkpoint(path)
    assert again.kind == model.kind and again.vocab == model.vocab
    for k, v in model.state_dict().items():
        assert torch.equal(v, again.state_dict()[k])
    assert evaluate(again, test).records() == evaluate(model, test).records()
    assert again.checkpoint_extra == {"note": 1}
    assert read_header(path)["kind"] == model.kind


def test_vocab_hash_mismatch(trained, tmp_path):
    model, _ = trained
    path = save_checkpoint(model, tmp_path / "m.pt")
    load_checkpoint(path, expected_vocab_hash=model.vocab.content_hash())
    with pytest.raises(VocabularyMismatch, match="rebuild the vocabulary"):
        load_checkpoint(path, expected_vocab_hash="0" * 64)


def test_bad_files(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_header(tmp_path / "none.pt")
    p = tmp_path / "x.pt"
    torch.save({"format": "other"}, p)
    with pytest.raises(CheckpointError):
        load_checkpoint(p)
