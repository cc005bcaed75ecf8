"""Camadas básicas com backward derivado à mão.

Toda função forward devolve ``(out, cache)`` e o backward correspondente
recebe ``(dout, cache)``. Todos os arrays são float64.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def relu_forward(x):
    return np.maximum(x, 0.0), x


def relu_backward(dout, cache):
    return dout * (cache > 0)


def dense_forward(x, w, b):
    return x @ w + b, x


def dense_backward(dout, cache, w):
    x = cache
    return dout @ w.T, x.T @ dout, dout.sum(axis=0)


def softmax_cross_entropy(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Entropia cruzada média e seu gradiente em relação aos logits (estabilizada com log-sum-exp)."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    n = logits.shape[0]
    loss = -log_probs[np.arange(n), targets].mean()
    dlogits = np.exp(log_probs)
    dlogits[np.arange(n), targets] -= 1.0
    return float(loss), dlogits / n


def conv2d_forward(x, w, b):
    """Convolução 3x3 'same'.

    Entradas:
    - x: (C_in, T, D)
    - w: (C_out, C_in, k, k), k ímpar
    - b: (C_out,)

    Devolve (C_out, T, D) e o cache do im2col.
    """
    c_in, t, d = x.shape
    c_out, _, k, _ = w.shape
    pad = k // 2
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    cols = sliding_window_view(xp, (k, k), axis=(1, 2))
    cols = cols.transpose(1, 2, 0, 3, 4).reshape(t * d, c_in * k * k)
    out = cols @ w.reshape(c_out, -1).T + b
    return out.T.reshape(c_out, t, d), (x.shape, cols)


def conv2d_backward(dout, cache, w):
    x_shape, cols = cache
    c_in, t, d = x_shape
    c_out, _, k, _ = w.shape
    pad = k // 2
    dflat = dout.reshape(c_out, t * d)
    dw = (dflat @ cols).reshape(w.shape)
    db = dflat.sum(axis=1)
    dxp = np.zeros((c_in, t + 2 * pad, d + 2 * pad))
    for i in range(k):
        for j in range(k):
            dxp[:, i : i + t, j : j + d] += np.tensordot(w[:, :, i, j], dout, axes=([0], [0]))
    return dxp[:, pad : pad + t, pad : pad + d], dw, db


def maxpool2x2_forward(x):
    """Max-pool 2x2 com passo 2; a última linha/coluna ímpar é descartada."""
    c, t, d = x.shape
    t2, d2 = t // 2, d // 2
    blocks = x[:, : 2 * t2, : 2 * d2].reshape(c, t2, 2, d2, 2).transpose(0, 1, 3, 2, 4).reshape(c, t2, d2, 4)
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
    return out, (x.shape, arg)


def maxpool2x2_backward(dout, cache):
    x_shape, arg = cache
    c, t, d = x_shape
    _, t2, d2 = dout.shape
    dblocks = np.zeros((c, t2, d2, 4))
    np.put_along_axis(dblocks, arg[..., None], dout[..., None], axis=-1)
    dx = np.zeros(x_shape)
    dx[:, : 2 * t2, : 2 * d2] = dblocks.reshape(c, t2, d2, 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, 2 * t2, 2 * d2)
    return dx


def gru_forward(x, wzx, wzh, bz, wax, war, ba):
    """GRU de uma camada sobre uma sequência, h0 = 0.

    Entradas:
    - x: (T, D)
    - wzx: (D, 2H), wzh: (H, 2H), bz: (2H,)   portas de atualização e reset
    - wax: (D, H), war: (H, H), ba: (H,)        estado candidato

    Devolve os estados ocultos (T, H) e o cache. A porta de reset multiplica o
    estado anterior antes do matmul recorrente do candidato.
    """
    t_len = x.shape[0]
    h_dim = ba.shape[0]
    gates_x = x @ wzx + bz
    cand_x = x @ wax + ba
    h = np.zeros((t_len, h_dim))
    steps = []
    h_prev = np.zeros(h_dim)
    for t in range(t_len):
        gates = sigmoid(gates_x[t] + h_prev @ wzh)
        z, r = gates[:h_dim], gates[h_dim:]
        rh = r * h_prev
        cand = np.tanh(cand_x[t] + rh @ war)
        h_t = (1.0 - z) * h_prev + z * cand
        steps.append((h_prev, z, r, rh, cand))
        h[t] = h_t
        h_prev = h_t
    return h, (x, steps)


def gru_backward(dh, cache, wzx, wzh, wax, war):
    """Retropropagação no tempo; dh é o gradiente vindo de cima em cada estado oculto (T, H)."""
    x, steps = cache
    h_dim = war.shape[0]
    dgates_x = np.zeros((x.shape[0], 2 * h_dim))
    dcand_x = np.zeros((x.shape[0], h_dim))
    dwzh = np.zeros_like(wzh)
    dwar = np.zeros_like(war)
    dh_next = np.zeros(h_dim)
    for t in range(x.shape[0] - 1, -1, -1):
        h_prev, z, r, rh, cand = steps[t]
        dh_t = dh[t] + dh_next
        dz = dh_t * (cand - h_prev)
        dcand_pre = dh_t * z * (1.0 - cand**2)
        dh_prev = dh_t * (1.0 - z)

        dcand_x[t] = dcand_pre
        dwar += np.outer(rh, dcand_pre)
        drh = dcand_pre @ war.T
        dr = drh * h_prev
        dh_prev += drh * r

        dgates = np.concatenate([dz * z * (1.0 - z), dr * r * (1.0 - r)])
        dgates_x[t] = dgates
        dwzh += np.outer(h_prev, dgates)
        dh_prev += dgates @ wzh.T
        dh_next = dh_prev

    dx = dgates_x @ wzx.T + dcand_x @ wax.T
    return dx, x.T @ dgates_x, dwzh, dgates_x.sum(axis=0), x.T @ dcand_x, dwar, dcand_x.sum(axis=0)
