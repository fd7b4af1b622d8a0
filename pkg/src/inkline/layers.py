"""Neural layers with fused forward/backward passes.

Each layer is a single graph node with a hand-derived vector-Jacobian product,
which keeps graphs small enough that numpy does the heavy lifting instead of
Python dispatch. Correctness of every backward here is pinned down by the
finite-difference suite in the tests.
"""

from __future__ import annotations

import logging

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .autodiff import Tensor

log = logging.getLogger(__name__)


def _conv_patches(x: np.ndarray, kh: int, kw: int, sh: int, sw: int) -> np.ndarray:
    """Strided view (C, kh, kw, Hout, Wout) of all valid windows. Read-only."""
    c, h, w = x.shape
    hout = (h - kh) // sh + 1
    wout = (w - kw) // sw + 1
    sc, srow, scol = x.strides
    return as_strided(
        x,
        shape=(c, kh, kw, hout, wout),
        strides=(sc, srow, scol, srow * sh, scol * sw),
        writeable=False,
    )


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: tuple[int, int]) -> Tensor:
    """Valid (unpadded) 2-D convolution of a single-image tensor.

    x: (Cin, H, W), weight: (Cout, Cin, kh, kw), bias: (Cout,) -> (Cout, Hout, Wout)
    """
    sh, sw = stride
    cout, cin, kh, kw = weight.data.shape
    patches = _conv_patches(x.data, kh, kw, sh, sw)
    out = np.tensordot(weight.data, patches, axes=([1, 2, 3], [0, 1, 2]))
    out += bias.data[:, None, None]

    def vjp(g):
        dw = np.tensordot(g, patches, axes=([1, 2], [3, 4]))
        db = g.sum(axis=(1, 2))
        dx = np.zeros_like(x.data)
        hout, wout = g.shape[1], g.shape[2]
        for i in range(kh):
            for j in range(kw):
                # each kernel offset contributes to a strided slice of the input
                contrib = np.tensordot(weight.data[:, :, i, j], g, axes=(0, 0))
                dx[:, i : i + sh * hout : sh, j : j + sw * wout : sw] += contrib
        return dx, dw, db

    return Tensor(out, (x, weight, bias), vjp)


def maxpool2d(x: Tensor, kernel: tuple[int, int], stride: tuple[int, int]) -> Tensor:
    """Valid max pooling; gradient routes to the first maximum in each window."""
    kh, kw = kernel
    sh, sw = stride
    patches = _conv_patches(x.data, kh, kw, sh, sw)
    c, _, _, hout, wout = patches.shape
    flat = patches.reshape(c, kh * kw, hout, wout)
    arg = flat.argmax(axis=1)
    out = np.take_along_axis(flat, arg[:, None], axis=1)[:, 0]

    def vjp(g):
        dx = np.zeros_like(x.data)
        ci, hi, wi = np.meshgrid(
            np.arange(c), np.arange(hout), np.arange(wout), indexing="ij"
        )
        rows = hi * sh + arg // kw
        cols = wi * sw + arg % kw
        np.add.at(dx, (ci, rows, cols), g)
        return (dx,)

    return Tensor(out, (x,), vjp)


def group_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-6) -> Tensor:
    """Single-group normalization over all of (C, H, W), per-channel affine."""
    mu = x.data.mean()
    var = x.data.var()
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = gamma.data[:, None, None] * xhat + beta.data[:, None, None]
    n = x.data.size

    def vjp(g):
        dgamma = (g * xhat).sum(axis=(1, 2))
        dbeta = g.sum(axis=(1, 2))
        dxhat = g * gamma.data[:, None, None]
        dx = inv * (dxhat - dxhat.mean() - xhat * (dxhat * xhat).sum() / n)
        return dx, dgamma, dbeta

    return Tensor(out, (x, gamma, beta), vjp)


def lstm_pass(x: Tensor, w_in: Tensor, w_rec: Tensor, bias: Tensor) -> Tensor:
    """One direction of an LSTM over a full sequence.

    x: (T, D), w_in: (4H, D), w_rec: (4H, H), bias: (4H,) -> hidden states (T, H).
    Gate order in the stacked weight rows is input, forget, cell, output.
    """
    t_steps, _ = x.data.shape
    hidden = w_rec.data.shape[1]
    pre = x.data @ w_in.data.T + bias.data

    gi = np.empty((t_steps, hidden), dtype=x.data.dtype)
    gf = np.empty_like(gi)
    gc = np.empty_like(gi)
    go = np.empty_like(gi)
    cells = np.empty_like(gi)
    hs = np.empty_like(gi)

    h = np.zeros(hidden, dtype=x.data.dtype)
    c = np.zeros(hidden, dtype=x.data.dtype)
    for t in range(t_steps):
        a = pre[t] + w_rec.data @ h
        i = 1.0 / (1.0 + np.exp(-a[:hidden]))
        f = 1.0 / (1.0 + np.exp(-a[hidden : 2 * hidden]))
        g_ = np.tanh(a[2 * hidden : 3 * hidden])
        o = 1.0 / (1.0 + np.exp(-a[3 * hidden :]))
        c = f * c + i * g_
        h = o * np.tanh(c)
        gi[t], gf[t], gc[t], go[t] = i, f, g_, o
        cells[t] = c
        hs[t] = h

    def vjp(gout):
        da_all = np.empty((t_steps, 4 * hidden), dtype=x.data.dtype)
        dh_next = np.zeros(hidden, dtype=x.data.dtype)
        dc_next = np.zeros(hidden, dtype=x.data.dtype)
        for t in range(t_steps - 1, -1, -1):
            i, f, g_, o = gi[t], gf[t], gc[t], go[t]
            tc = np.tanh(cells[t])
            c_prev = cells[t - 1] if t > 0 else np.zeros(hidden, dtype=x.data.dtype)
            dh = gout[t] + dh_next
            dc = dh * o * (1.0 - tc * tc) + dc_next
            da = da_all[t]
            da[:hidden] = dc * g_ * i * (1.0 - i)
            da[hidden : 2 * hidden] = dc * c_prev * f * (1.0 - f)
            da[2 * hidden : 3 * hidden] = dc * i * (1.0 - g_ * g_)
            da[3 * hidden :] = dh * tc * o * (1.0 - o)
            dh_next = w_rec.data.T @ da
            dc_next = dc * f
        dx = da_all @ w_in.data
        dw_in = da_all.T @ x.data
        h_prev = np.vstack([np.zeros((1, hidden), dtype=x.data.dtype), hs[:-1]])
        dw_rec = da_all.T @ h_prev
        db = da_all.sum(axis=0)
        return dx, dw_in, dw_rec, db

    return Tensor(hs, (x, w_in, w_rec, bias), vjp)


def cosine_pairs(u: Tensor, v: Tensor) -> Tensor:
    """Row-wise cosine similarity of two (M, D) tensors -> (M,).

    Rows where either vector has zero norm score 0 by definition and pass no
    gradient; such rows are logged because they indicate a degenerate
    projection.
    """
    nu = np.sqrt((u.data * u.data).sum(axis=1))
    nv = np.sqrt((v.data * v.data).sum(axis=1))
    denom = nu * nv
    bad = denom == 0.0
    if bad.any():
        log.warning("cosine similarity hit %d zero-norm vector pair(s)", int(bad.sum()))
    safe = np.where(bad, 1.0, denom)
    dots = (u.data * v.data).sum(axis=1)
    s = np.where(bad, 0.0, dots / safe)

    def vjp(g):
        gs = np.where(bad, 0.0, g / safe)
        nu2 = np.where(bad, 1.0, nu * nu)
        nv2 = np.where(bad, 1.0, nv * nv)
        du = gs[:, None] * (v.data - (s * denom / nu2)[:, None] * u.data)
        dv = gs[:, None] * (u.data - (s * denom / nv2)[:, None] * v.data)
        return du, dv

    return Tensor(s, (u, v), vjp)
