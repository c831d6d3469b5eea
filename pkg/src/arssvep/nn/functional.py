"""Forward/backward kernels on plain arrays.

Each ``*_forward`` returns ``(output, cache)`` and the matching ``*_backward``
takes the upstream gradient and that cache.
"""
from __future__ import annotations

import numpy as np

from ..errors import ShapeError


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def softmax(z, axis=-1):
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


# -- convolution -----------------------------------------------------------

def conv1d_forward(x, w, b, stride=1):
    """Valid cross-correlation: x[B, Cin, L], w[Cout, Cin, K] -> [B, Cout, L_out]."""
    if x.ndim != 3 or w.ndim != 3:
        raise ShapeError("conv1d expects x[B, Cin, L] and w[Cout, Cin, K]")
    B, cin, L = x.shape
    cout, wcin, K = w.shape
    if wcin != cin:
        raise ShapeError(f"input has {cin} channels, kernel expects {wcin}")
    if K > L:
        raise ShapeError(f"kernel size {K} exceeds input length {L}")
    if b.shape != (cout,):
        raise ShapeError(f"bias shape {b.shape} != ({cout},)")
    l_out = (L - K) // stride + 1
    idx = np.arange(l_out)[:, None] * stride + np.arange(K)
    cols = x[:, :, idx].transpose(0, 2, 1, 3).reshape(B, l_out, cin * K)
    w2 = w.reshape(cout, cin * K)
    y = cols @ w2.T + b
    return y.transpose(0, 2, 1), (x.shape, cols, w, stride, l_out)


def conv1d_backward(dy, cache):
    (B, cin, L), cols, w, stride, l_out = cache
    cout, _, K = w.shape
    dyt = dy.transpose(0, 2, 1)  # [B, l_out, cout]
    dw = (dyt.reshape(-1, cout).T @ cols.reshape(-1, cin * K)).reshape(w.shape)
    db = dyt.sum(axis=(0, 1))
    dcols = (dyt @ w.reshape(cout, cin * K)).reshape(B, l_out, cin, K)
    dx = np.zeros((B, cin, L), dtype=dy.dtype)
    stop = stride * (l_out - 1) + 1
    for k in range(K):
        dx[:, :, k:k + stop:stride] += dcols[:, :, :, k].transpose(0, 2, 1)
    return dx, dw, db


# -- recurrent -------------------------------------------------------------

def lstm_cell_forward(xw_t, h, c, wh):
    """One LSTM step given the pre-computed input projection ``x_t @ Wx + b``.

    Gate layout along the last axis is (input, forget, candidate, output).
    Leading axes broadcast, so both directions of a BiLSTM can step together.
    """
    H = h.shape[-1]
    z = xw_t + h @ wh
    s = sigmoid(z)
    i, f, o = s[..., :H], s[..., H:2 * H], s[..., 3 * H:]
    g = np.tanh(z[..., 2 * H:3 * H])
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    h_new = o * tc
    return h_new, c_new, (h, c, i, f, g, o, tc)


def lstm_cell_backward(dh, dc, cache, wh):
    """Returns ``(dz, dh_prev, dc_prev)`` where ``dz`` is d/d(pre-activation)."""
    h, c, i, f, g, o, tc = cache
    do = dh * tc
    dc = dc + dh * o * (1.0 - tc * tc)
    dz = np.concatenate([dc * g * i * (1.0 - i),
                         dc * c * f * (1.0 - f),
                         dc * i * (1.0 - g * g),
                         do * o * (1.0 - o)], axis=-1)
    return dz, dz @ np.swapaxes(wh, -1, -2), dc * f


def lstm_forward(x, wx, wh, b):
    """LSTM over x[..., B, T, D] from zero state -> h[..., B, T, H].

    Weights may carry a leading stack axis matching that of ``x``.
    """
    T = x.shape[-2]
    H = wh.shape[-2]
    lead = x.shape[:-2]
    if wx.ndim == 3:
        xw = x @ wx[:, None] + b[:, None, None]
    else:
        xw = x @ wx + b
    h = np.zeros(lead + (H,), dtype=x.dtype)
    c = np.zeros(lead + (H,), dtype=x.dtype)
    out = np.empty(lead + (T, H), dtype=x.dtype)
    caches = []
    for t in range(T):
        h, c, cache = lstm_cell_forward(xw[..., t, :], h, c, wh)
        out[..., t, :] = h
        caches.append(cache)
    return out, (x, wx, wh, caches)


def lstm_backward(dout, cache):
    x, wx, wh, caches = cache
    T, D = x.shape[-2:]
    H = wh.shape[-2]
    lead = x.shape[:-2]
    dxw = np.empty(lead + (T, 4 * H), dtype=dout.dtype)
    dh = np.zeros(lead + (H,), dtype=dout.dtype)
    dc = np.zeros(lead + (H,), dtype=dout.dtype)
    dwh = np.zeros_like(wh)
    for t in range(T - 1, -1, -1):
        dz, dh, dc = lstm_cell_backward(dout[..., t, :] + dh, dc, caches[t], wh)
        dxw[..., t, :] = dz
        dwh += np.swapaxes(caches[t][0], -1, -2) @ dz
    if wx.ndim == 3:
        k = wx.shape[0]
        flat = dxw.reshape(k, -1, 4 * H)
        dwx = np.swapaxes(x.reshape(k, -1, D), -1, -2) @ flat
        db = flat.sum(axis=1)
        dx = dxw @ np.swapaxes(wx, -1, -2)[:, None]
    else:
        flat = dxw.reshape(-1, 4 * H)
        dwx = x.reshape(-1, D).T @ flat
        db = flat.sum(axis=0)
        dx = dxw @ wx.T
    return dx, dwx, dwh, db


def bilstm_stacked_forward(x, wx, wh, b):
    """BiLSTM with direction-stacked weights ``wx[2, D, 4H]``, ``wh[2, H, 4H]``, ``b[2, 4H]``.

    Index 0 runs forward in time, index 1 runs over the reversed sequence;
    the output concatenates both (re-aligned in time) into [B, T, 2H].
    """
    both = np.stack([x, x[:, ::-1]])
    hs, cache = lstm_forward(both, wx, wh, b)
    return np.concatenate([hs[0], hs[1, :, ::-1]], axis=-1), (cache, wh.shape[-2])


def bilstm_stacked_backward(dout, cache):
    cache, H = cache
    dboth = np.stack([dout[..., :H], dout[:, ::-1, H:]])
    dx, dwx, dwh, db = lstm_backward(dboth, cache)
    return dx[0] + dx[1, :, ::-1], dwx, dwh, db


def bilstm_forward(x, fwd, bwd):
    """``fwd``/``bwd`` are independent (Wx, Wh, b) triples; output is [B, T, 2H]."""
    stacked = tuple(np.stack([p, q]) for p, q in zip(fwd, bwd))
    return bilstm_stacked_forward(x, *stacked)


def bilstm_backward(dout, cache):
    """Returns ``(dx, fwd_grads, bwd_grads)``."""
    dx, *grads = bilstm_stacked_backward(dout, cache)
    return dx, tuple(g[0] for g in grads), tuple(g[1] for g in grads)


# -- attention -------------------------------------------------------------

def attention_forward(q, k, v):
    """softmax(q k^T / sqrt(d_k)) v over the last two axes; returns (out, weights, cache)."""
    dk = q.shape[-1]
    scores = q @ np.swapaxes(k, -1, -2) / np.sqrt(dk)
    a = softmax(scores, axis=-1)
    return a @ v, a, (q, k, v, a)


def attention_backward(dout, cache):
    q, k, v, a = cache
    dk = q.shape[-1]
    da = dout @ np.swapaxes(v, -1, -2)
    dv = np.swapaxes(a, -1, -2) @ dout
    ds = a * (da - np.sum(da * a, axis=-1, keepdims=True)) / np.sqrt(dk)
    return ds @ k, np.swapaxes(ds, -1, -2) @ q, dv


def _split_heads(x, n_heads):
    B, T, D = x.shape
    return x.reshape(B, T, n_heads, D // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    B, nh, T, dk = x.shape
    return x.transpose(0, 2, 1, 3).reshape(B, T, nh * dk)


def mha_forward(x, params, n_heads):
    """Multi-head self-attention; ``params`` = (Wq, bq, Wk, bk, Wv, bv, Wo, bo)."""
    wq, bq, wk, bk, wv, bv, wo, bo = params
    D = x.shape[-1]
    if D % n_heads or wq.shape != (D, D):
        raise ShapeError(f"model dimension {D} incompatible with {n_heads} heads / Wq {wq.shape}")
    qh = _split_heads(x @ wq + bq, n_heads)
    kh = _split_heads(x @ wk + bk, n_heads)
    vh = _split_heads(x @ wv + bv, n_heads)
    oh, a, acache = attention_forward(qh, kh, vh)
    o = _merge_heads(oh)
    return o @ wo + bo, (x, params, n_heads, o, acache)


def mha_backward(dy, cache):
    x, (wq, bq, wk, bk, wv, bv, wo, bo), n_heads, o, acache = cache
    D = x.shape[-1]
    xf = x.reshape(-1, D)
    dyf = dy.reshape(-1, D)
    dwo = o.reshape(-1, D).T @ dyf
    dbo = dyf.sum(axis=0)
    doh = _split_heads(dy @ wo.T, n_heads)
    dqh, dkh, dvh = attention_backward(doh, acache)
    dq, dk, dv = (_merge_heads(t).reshape(-1, D) for t in (dqh, dkh, dvh))
    dx = (dq @ wq.T + dk @ wk.T + dv @ wv.T).reshape(x.shape)
    grads = (xf.T @ dq, dq.sum(0), xf.T @ dk, dk.sum(0), xf.T @ dv, dv.sum(0), dwo, dbo)
    return dx, grads


def attention_weights(x, params, n_heads):
    wq, bq, wk, bk = params[:4]
    qh = _split_heads(x @ wq + bq, n_heads)
    kh = _split_heads(x @ wk + bk, n_heads)
    return attention_forward(qh, kh, kh)[1]


# -- loss ------------------------------------------------------------------

def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    labels = np.asarray(labels)
    B = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(B), labels].mean()
    grad = np.exp(logp)
    grad[np.arange(B), labels] -= 1.0
    return float(loss), grad / B
