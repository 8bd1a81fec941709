"""Pure-Python scalar reference implementations (lists and ``math`` only)."""

import math


def tolist(t):
    return t.detach().cpu().double().tolist()


def sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


def matvec(W, x):
    return [sum(W[i][j] * x[j] for j in range(len(x))) for i in range(len(W))]


def affine(W, b, x):
    y = matvec(W, x)
    return [y[i] + (b[i] if b is not None else 0.0) for i in range(len(y))]


def softmax(xs, mask=None):
    idx = [i for i in range(len(xs)) if mask is None or mask[i]]
    m = max(xs[i] for i in idx)
    ex = {i: math.exp(xs[i] - m) for i in idx}
    z = sum(ex.values())
    return [ex[i] / z if i in ex else 0.0 for i in range(len(xs))]


def lstm_cell(x, h, c, W_ih, W_hh, b_ih, b_hh):
    """PyTorch gate layout: input, forget, cell, output."""
    H = len(h)
    g = [a + b for a, b in zip(affine(W_ih, b_ih, x), affine(W_hh, b_hh, h))]
    i = [sigmoid(v) for v in g[0:H]]
    f = [sigmoid(v) for v in g[H : 2 * H]]
    gg = [math.tanh(v) for v in g[2 * H : 3 * H]]
    o = [sigmoid(v) for v in g[3 * H : 4 * H]]
    c2 = [f[k] * c[k] + i[k] * gg[k] for k in range(H)]
    h2 = [o[k] * math.tanh(c2[k]) for k in range(H)]
    return h2, c2


def lstm_params(lstm, suffix=""):
    return [tolist(getattr(lstm, f"{n}{suffix}")) for n in ("weight_ih_l0", "weight_hh_l0", "bias_ih_l0", "bias_hh_l0")]


def bilstm(lstm, xs):
    """Single-layer bidirectional LSTM over a list of input vectors."""
    H = lstm.hidden_size
    fw = lstm_params(lstm)
    bw = lstm_params(lstm, "_reverse")
    h, c = [0.0] * H, [0.0] * H
    out_f = []
    for x in xs:
        h, c = lstm_cell(x, h, c, *fw)
        out_f.append(h)
    h, c = [0.0] * H, [0.0] * H
    out_b = [None] * len(xs)
    for t in range(len(xs) - 1, -1, -1):
        h, c = lstm_cell(xs[t], h, c, *bw)
        out_b[t] = h
    return [f + b for f, b in zip(out_f, out_b)]


def linear(layer, x):
    return affine(tolist(layer.weight), tolist(layer.bias) if layer.bias is not None else None, x)


def additive_attention(att, h, tup, xs):
    q = [a + b for a, b in zip(linear(att.w_hidden, h), linear(att.w_tuple, tup))]
    v = tolist(att.v.weight)[0]
    scores = []
    for x in xs:
        e = linear(att.w_enc, x)
        scores.append(sum(v[k] * math.tanh(e[k] + q[k]) for k in range(len(q))))
    w = softmax(scores)
    ctx = [sum(w[i] * xs[i][d] for i in range(len(xs))) for d in range(len(xs[0]))]
    return ctx, w


def pointer_network(net, rows):
    hs = bilstm(net.lstm, rows)
    begin = softmax([linear(net.begin, h)[0] for h in hs])
    end = softmax([linear(net.end, h)[0] for h in hs])
    return begin, end, hs


def char_cnn(cnn, char_ids):
    """One token's character ids (no padding) -> pooled feature vector."""
    E = tolist(cnn.embedding.weight)
    W = tolist(cnn.conv.weight)  # (out, in, k)
    b = tolist(cnn.conv.bias)
    k = len(W[0][0])
    pad = k // 2
    L = len(char_ids)
    emb = [E[c] for c in char_ids]
    feats = []
    for o in range(len(W)):
        best = -math.inf
        for t in range(L):
            s = b[o]
            for j in range(k):
                pos = t + j - pad
                if 0 <= pos < L:
                    s += sum(W[o][ci][j] * emb[pos][ci] for ci in range(len(emb[pos])))
            best = max(best, s)
        feats.append(best)
    return feats


def central_difference_check(loss_fn, param, n_entries=None, eps=1e-6, seed=0):
    """Relative error ||g_analytic - g_numeric|| / max(norms) over (a subset of) ``param`` entries."""
    import torch

    param.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = param.grad.detach().clone().view(-1)
    flat = param.data.view(-1)
    idx = list(range(flat.numel()))
    if n_entries is not None and n_entries < len(idx):
        g = torch.Generator().manual_seed(seed)
        idx = torch.randperm(len(idx), generator=g)[:n_entries].tolist()
    num, ana = [], []
    with torch.no_grad():
        for i in idx:
            old = flat[i].item()
            flat[i] = old + eps
            up = loss_fn().item()
            flat[i] = old - eps
            down = loss_fn().item()
            flat[i] = old
            num.append((up - down) / (2 * eps))
            ana.append(analytic[i].item())
    diff = math.sqrt(sum((a - n) ** 2 for a, n in zip(ana, num)))
    scale = max(math.sqrt(sum(a * a for a in ana)), math.sqrt(sum(n * n for n in num)), 1e-12)
    return diff / scale
