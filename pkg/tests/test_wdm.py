import math
from collections import Counter

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from ptrex.core import BOT, EOT, FIELD_SEP, RELATIONS, TRIPLET_SEP, UNK, Sentence, build_vocabulary
from ptrex.encoder import EncoderConfig
from ptrex.pointer import masked_log_softmax
from ptrex.synthetic import synthetic_corpus
from ptrex.wdm import (
    WdmConfig,
    WordDecoderModel,
    mask_tensor,
    parse_wdm_output,
    render_target,
    render_triplets,
    replace_unk,
    wdm_mask,
)

import oracles

from conftest import LICOO2_TEXT


def _model(sentences, seed=0, **kw):
    torch.manual_seed(seed)
    vocab = build_vocabulary(sentences)
    enc = EncoderConfig(word_dim=6, char_dim=4, char_feature_dim=4, hidden_dim=8, dropout=0.0)
    return WordDecoderModel(vocab, enc, WdmConfig(**{**dict(hidden_dim=7, token_dim=5), **kw}))


def test_mask_example():
    vocab = build_vocabulary([Sentence.from_tokens(["a", "b", "c"])])
    allowed = wdm_mask(vocab, ["a", "b"])
    want = {vocab.stoi[t] for t in ["a", "b", *RELATIONS, TRIPLET_SEP, FIELD_SEP, UNK, EOT]}
    assert allowed == want
    assert vocab.bot_id not in allowed and vocab.stoi["c"] not in allowed
    m = mask_tensor(vocab, [["a", "b"], ["c"]])
    assert m[0].sum() == len(want) and m[1, vocab.stoi["c"]] and not m[1, vocab.stoi["a"]]


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 30).flatmap(lambda n: st.tuples(
    st.lists(st.floats(-20, 20), min_size=n, max_size=n),
    st.lists(st.booleans(), min_size=n, max_size=n),
)))
def test_masked_softmax_is_renormalized_softmax(args):
    scores, keep = args
    keep[0] = True
    got = masked_log_softmax(torch.tensor([scores], dtype=torch.float64), torch.tensor([keep])).exp()[0].tolist()
    want = oracles.softmax(scores, keep)
    assert np.allclose(got, want, atol=1e-12)
    assert all(g == 0.0 for g, k in zip(got, keep) if not k)
    assert math.isclose(sum(got), 1.0, abs_tol=1e-9)


def test_single_allowed_id_has_probability_one():
    keep = torch.zeros((1, 9), dtype=torch.bool)
    keep[0, 4] = True
    p = masked_log_softmax(torch.randn(1, 9), keep).exp()
    assert p[0, 4].item() == 1.0 and p.sum().item() == 1.0


def test_wdm_step_matches_scalar_oracle(f64):
    sents = [Sentence.from_tokens(["LiCoO2", "shows", "3.9", "V"])]
    model = _model(sents).eval()
    toks = [sents[0].tokens]
    enc = model.encode(toks)
    g = torch.Generator().manual_seed(3)
    h = torch.randn(1, 7, generator=g)
    c = torch.randn(1, 7, generator=g)
    prev = model.token_embedding(torch.tensor([model.vocab.bot_id]))
    context, attn = model.attention(h, enc, prev)
    mask = mask_tensor(model.vocab, toks)
    logp, h2, c2 = model.wdm_step(prev, context, h, c, mask)

    xs = [enc.vectors[0, i].tolist() for i in range(4)]
    ctx_o, w_o = oracles.additive_attention(model.attention, h[0].tolist(), prev[0].tolist(), xs)
    assert np.allclose(attn[0, :4].tolist(), w_o, atol=1e-6)
    assert np.allclose(context[0].tolist(), ctx_o, atol=1e-6)
    h_o, c_o = oracles.lstm_cell(
        ctx_o + prev[0].tolist(), h[0].tolist(), c[0].tolist(),
        *[oracles.tolist(getattr(model.cell, n)) for n in ("weight_ih", "weight_hh", "bias_ih", "bias_hh")],
    )
    assert np.allclose(h2[0].tolist(), h_o, atol=1e-6)
    assert np.allclose(c2[0].tolist(), c_o, atol=1e-6)
    probs = oracles.softmax(oracles.linear(model.out, h_o), mask[0].tolist())
    assert np.allclose(logp[0].exp().tolist(), probs, atol=1e-6)


def test_replace_unk():
    toks = ["x", "y", "z"]
    assert replace_unk(UNK, [0.1, 0.7, 0.2], toks) == "y"
    assert replace_unk(UNK, [0.5, 0.5], ["p", "q"]) == "p"
    assert replace_unk("Voltage", [0.1, 0.7, 0.2], toks) == "Voltage"


def test_parse_examples():
    s = Sentence.from_text(LICOO2_TEXT)
    stats = Counter()
    got = parse_wdm_output(["LiCoO2", "|", "Voltage", "|", "3.96", "V", ";", EOT], s, stats)
    assert len(got) == 1
    t = got[0]
    assert s.tokens[t.entity1.begin] == "LiCoO2" and t.entity1.begin == t.entity1.end
    assert t.entity1.begin == s.tokens.index("LiCoO2")  # leftmost occurrence
    assert list(s.tokens[t.entity2.begin : t.entity2.end + 1]) == ["3.96", "V"]
    assert t.relation == "Voltage"
    assert parse_wdm_output([EOT], s) == []
    dup = ["LiCoO2", "|", "Voltage", "|", "3.96", "V"]
    assert len(parse_wdm_output(dup + [";"] + dup + [EOT], s)) == 1
    bad = ["LiCoO2", "|", "Voltage", ";", "LiCoO2", "|", "Hardness", "|", "3.96", ";", "nowhere", "|", "Voltage", "|", "V", EOT]
    stats = Counter()
    assert parse_wdm_output(bad, s, stats) == []
    assert stats["dropped"] == 3


def test_render_then_parse_is_identity():
    for a in synthetic_corpus(100, seed=4):
        seq = render_target(a)
        assert seq[0] == BOT and seq[-1] == EOT
        got = parse_wdm_output(seq, a.sentence)
        # the same leftmost-run grounding applied to the gold
        again = parse_wdm_output(render_triplets(got, a.sentence), a.sentence)
        assert got == again
        assert len(got) == len(set(a.triplets))


def test_render_order_matches_pointer_order():
    a = synthetic_corpus(10, seed=1, triplets_per_sentence=2)[0]
    rev = type(a)(a.sentence, tuple(reversed(a.triplets)))
    assert render_target(a) == render_target(rev)


@pytest.mark.parametrize("n", [1, 7, 64])
def test_generation_distributions_and_bounds(n):
    toks = [f"t{i % 5}" for i in range(n)]
    sents = [Sentence.from_tokens(toks)]
    model = _model(sents, max_len=12).eval()
    mask = mask_tensor(model.vocab, [toks])
    enc = model.encode([toks])
    h, c = model._init(1, enc)
    prev = model.token_embedding(torch.tensor([model.vocab.bot_id]))
    context, attn = model.attention(h, enc, prev)
    logp, _, _ = model.wdm_step(prev, context, h, c, mask)
    p = logp.exp()
    assert (p >= 0).all() and abs(p.sum().item() - 1) < 1e-5
    assert (p[~mask] == 0).all()
    assert abs(attn[0, :n].sum().item() - 1) < 1e-5
    out = model.generate(enc, [toks])[0]
    assert 1 <= len(out) <= 12
    allowed = set(toks) | set(RELATIONS) | {TRIPLET_SEP, FIELD_SEP, EOT}
    assert set(out) <= allowed  # UNK is always substituted


def test_loss_is_sum_of_step_nll(f64):
    sents = synthetic_corpus(3, seed=0)
    model = _model([a.sentence for a in sents]).eval()
    toks = [a.sentence.tokens for a in sents]
    tgts = [render_target(a) for a in sents]
    batched = model.loss(toks, tgts).item()
    single = sum(model.loss([t], [g]).item() for t, g in zip(toks, tgts)) / len(toks)
    assert abs(batched - single) < 1e-9


def test_loss_gradients_match_finite_differences(f64):
    sents = synthetic_corpus(2, seed=0)
    model = _model([a.sentence for a in sents]).eval()
    toks = [a.sentence.tokens for a in sents]
    tgts = [render_target(a) for a in sents]

    def loss():
        return model.loss(toks, tgts)

    for p in (model.out.weight, model.cell.weight_hh, model.attention.v.weight, model.token_embedding.weight):
        assert oracles.central_difference_check(loss, p, n_entries=40) < 1e-3


def test_memorizes_one_sentence():
    a = synthetic_corpus(1, seed=5, triplets_per_sentence=2)[0]
    model = _model([a.sentence], hidden_dim=32, token_dim=16)
    opt = torch.optim.Adam(model.parameters(), lr=0.01)
    for _ in range(100):
        opt.zero_grad()
        model.loss([a.sentence.tokens], [render_target(a)]).backward()
        opt.step()
    pred = model.predict([a.sentence])[0]
    assert set(pred) == set(a.triplets)
