"""Numba-compiled hot kernels (default backend)."""

import numpy as np
from numba import njit


@njit(cache=True)
def segment_sum_1d(values, ids, num_segments):
    out = np.zeros(num_segments, dtype=np.float64)
    for r in range(values.shape[0]):
        out[ids[r]] += values[r]
    return out


@njit(cache=True)
def segment_sum_2d(values, ids, num_segments):
    out = np.zeros((num_segments, values.shape[1]), dtype=np.float64)
    for r in range(values.shape[0]):
        i = ids[r]
        for c in range(values.shape[1]):
            out[i, c] += values[r, c]
    return out


@njit(cache=True)
def segment_max_1d(values, ids, num_segments):
    out = np.full(num_segments, -np.inf, dtype=np.float64)
    for r in range(values.shape[0]):
        i = ids[r]
        if values[r] > out[i]:
            out[i] = values[r]
    return out


@njit(cache=True)
def weighted_scatter(values, src, dst, scale, n_out):
    """out[dst[e]] += scale[e] * values[src[e]] over all edges e."""
    out = np.zeros((n_out, values.shape[1]), dtype=np.float64)
    for e in range(src.shape[0]):
        s = scale[e]
        vs = src[e]
        vd = dst[e]
        for c in range(values.shape[1]):
            out[vd, c] += s * values[vs, c]
    return out


@njit(cache=True)
def weighted_scatter_scale_grad(values, gout, src, dst):
    """d(out)/d(scale): per-edge dot of gathered values and output grads."""
    gs = np.empty(src.shape[0], dtype=np.float64)
    for e in range(src.shape[0]):
        s = 0.0
        vs = src[e]
        vd = dst[e]
        for c in range(values.shape[1]):
            s += values[vs, c] * gout[vd, c]
        gs[e] = s
    return gs


@njit(cache=True)
def col2im_add(gcols, l_pad):
    """Scatter (N, L_out, C_in, K) window grads back onto (N, C_in, L_pad)."""
    n, l_out, c_in, k = gcols.shape
    gx = np.zeros((n, c_in, l_pad), dtype=np.float64)
    for b in range(n):
        for t in range(l_out):
            for ci in range(c_in):
                for kk in range(k):
                    gx[b, ci, t + kk] += gcols[b, t, ci, kk]
    return gx


@njit(cache=True)
def gru_forward(x, h0, wz, uz, bz, wr, ur, br, wc, uc, bc):
    """Full GRU sequence over scalar inputs.

    x: (R, L); h0: (R, H).  Returns hidden states H (R, L+1, Hd) plus the
    gate activations Z, Rg, C needed for backpropagation through time.
    """
    rows, length = x.shape
    h = h0.shape[1]
    hs = np.empty((rows, length + 1, h), dtype=np.float64)
    zs = np.empty((rows, length, h), dtype=np.float64)
    rs = np.empty((rows, length, h), dtype=np.float64)
    cs = np.empty((rows, length, h), dtype=np.float64)
    # row-major traversal: each row's states stay resident in cache
    for i in range(rows):
        for j in range(h):
            hs[i, 0, j] = h0[i, j]
        for t in range(length):
            xt = x[i, t]
            for j in range(h):
                az = bz[j] + xt * wz[0, j]
                ar = br[j] + xt * wr[0, j]
                for k in range(h):
                    az += hs[i, t, k] * uz[k, j]
                    ar += hs[i, t, k] * ur[k, j]
                zs[i, t, j] = 1.0 / (1.0 + np.exp(-az))
                rs[i, t, j] = 1.0 / (1.0 + np.exp(-ar))
            for j in range(h):
                ac = bc[j] + xt * wc[0, j]
                for k in range(h):
                    ac += rs[i, t, k] * hs[i, t, k] * uc[k, j]
                cs[i, t, j] = np.tanh(ac)
            for j in range(h):
                z = zs[i, t, j]
                hs[i, t + 1, j] = (1.0 - z) * hs[i, t, j] + z * cs[i, t, j]
    return hs, zs, rs, cs


@njit(cache=True)
def gru_backward(x, hs, zs, rs, cs, wz, uz, wr, ur, wc, uc, gfinal):
    """Backpropagation through time; returns grads for x, h0, and all
    nine weight matrices in declaration order."""
    rows, length = x.shape
    h = hs.shape[2]
    gx = np.zeros((rows, length), dtype=np.float64)
    gh0 = np.zeros((rows, h), dtype=np.float64)
    gwz = np.zeros((1, h), dtype=np.float64)
    guz = np.zeros((h, h), dtype=np.float64)
    gbz = np.zeros(h, dtype=np.float64)
    gwr = np.zeros((1, h), dtype=np.float64)
    gur = np.zeros((h, h), dtype=np.float64)
    gbr = np.zeros(h, dtype=np.float64)
    gwc = np.zeros((1, h), dtype=np.float64)
    guc = np.zeros((h, h), dtype=np.float64)
    gbc = np.zeros(h, dtype=np.float64)

    gh = np.empty(h, dtype=np.float64)
    ghp = np.empty(h, dtype=np.float64)
    gaz = np.empty(h, dtype=np.float64)
    gar = np.empty(h, dtype=np.float64)
    gac = np.empty(h, dtype=np.float64)
    grh = np.empty(h, dtype=np.float64)

    for i in range(rows):
        for j in range(h):
            gh[j] = gfinal[i, j]
        for t in range(length - 1, -1, -1):
            xt = x[i, t]
            for j in range(h):
                z = zs[i, t, j]
                c = cs[i, t, j]
                hp = hs[i, t, j]
                gz = gh[j] * (c - hp)
                gc = gh[j] * z
                ghp[j] = gh[j] * (1.0 - z)
                gac[j] = gc * (1.0 - c * c)
                gaz[j] = gz * z * (1.0 - z)
            for j in range(h):
                s = 0.0
                for k in range(h):
                    s += gac[k] * uc[j, k]
                grh[j] = s
            for j in range(h):
                r = rs[i, t, j]
                gr = grh[j] * hs[i, t, j]
                gar[j] = gr * r * (1.0 - r)
                ghp[j] += grh[j] * r
            for j in range(h):
                gwz[0, j] += xt * gaz[j]
                gwr[0, j] += xt * gar[j]
                gwc[0, j] += xt * gac[j]
                gbz[j] += gaz[j]
                gbr[j] += gar[j]
                gbc[j] += gac[j]
            for k in range(h):
                hk = hs[i, t, k]
                rhk = rs[i, t, k] * hk
                for j in range(h):
                    guz[k, j] += hk * gaz[j]
                    gur[k, j] += hk * gar[j]
                    guc[k, j] += rhk * gac[j]
            for j in range(h):
                s = 0.0
                for k in range(h):
                    s += gaz[k] * uz[j, k] + gar[k] * ur[j, k]
                ghp[j] += s
            s = 0.0
            for j in range(h):
                s += gaz[j] * wz[0, j] + gar[j] * wr[0, j] + gac[j] * wc[0, j]
            gx[i, t] = s
            for j in range(h):
                gh[j] = ghp[j]
        for j in range(h):
            gh0[i, j] = gh[j]
    return gx, gh0, gwz, guz, gbz, gwr, gur, gbr, gwc, guc, gbc
