"""Pure-numpy hot kernels (fallback backend)."""

import numpy as np


def segment_sum_1d(values, ids, num_segments):
    out = np.zeros(num_segments, dtype=np.float64)
    np.add.at(out, ids, values)
    return out


def segment_sum_2d(values, ids, num_segments):
    out = np.zeros((num_segments, values.shape[1]), dtype=np.float64)
    np.add.at(out, ids, values)
    return out


def segment_max_1d(values, ids, num_segments):
    out = np.full(num_segments, -np.inf, dtype=np.float64)
    np.maximum.at(out, ids, values)
    return out


def weighted_scatter(values, src, dst, scale, n_out):
    out = np.zeros((n_out, values.shape[1]), dtype=np.float64)
    np.add.at(out, dst, scale[:, None] * values[src])
    return out


def weighted_scatter_scale_grad(values, gout, src, dst):
    return np.einsum("ec,ec->e", values[src], gout[dst])


def col2im_add(gcols, l_pad):
    n, l_out, c_in, k = gcols.shape
    gx = np.zeros((n, c_in, l_pad), dtype=np.float64)
    for kk in range(k):
        gx[:, :, kk : kk + l_out] += gcols[:, :, :, kk].transpose(0, 2, 1)
    return gx


def _sigmoid(a):
    return 1.0 / (1.0 + np.exp(-a))


def _sigmoid_inplace(a):
    np.negative(a, out=a)
    np.exp(a, out=a)
    a += 1.0
    np.reciprocal(a, out=a)


def gru_forward(x, h0, wz, uz, bz, wr, ur, br, wc, uc, bc):
    rows, length = x.shape
    h = h0.shape[1]
    hs = np.empty((rows, length + 1, h), dtype=np.float64)
    zs = np.empty((rows, length, h), dtype=np.float64)
    rs = np.empty((rows, length, h), dtype=np.float64)
    cs = np.empty((rows, length, h), dtype=np.float64)
    hs[:, 0] = h0
    # all arithmetic runs in contiguous (rows, h) buffers; the strided
    # (rows, length, h) outputs are touched once per step
    shape = (rows, h)
    hp = np.ascontiguousarray(h0)
    z = np.empty(shape)
    r = np.empty(shape)
    c = np.empty(shape)
    tmp = np.empty(shape)
    for t in range(length):
        xt = x[:, t : t + 1]
        np.matmul(hp, uz, out=z)
        np.multiply(xt, wz[0], out=tmp)
        z += tmp
        z += bz
        _sigmoid_inplace(z)
        np.matmul(hp, ur, out=r)
        np.multiply(xt, wr[0], out=tmp)
        r += tmp
        r += br
        _sigmoid_inplace(r)
        np.multiply(r, hp, out=tmp)
        np.matmul(tmp, uc, out=c)
        np.multiply(xt, wc[0], out=tmp)
        c += tmp
        c += bc
        np.tanh(c, out=c)
        zs[:, t] = z
        rs[:, t] = r
        cs[:, t] = c
        np.subtract(c, hp, out=tmp)
        tmp *= z
        hp += tmp
        hs[:, t + 1] = hp
    return hs, zs, rs, cs


def gru_backward(x, hs, zs, rs, cs, wz, uz, wr, ur, wc, uc, gfinal):
    rows, length = x.shape
    h = hs.shape[2]
    gx = np.zeros((rows, length), dtype=np.float64)
    gwz = np.zeros((1, h))
    guz = np.zeros((h, h))
    gbz = np.zeros(h)
    gwr = np.zeros((1, h))
    gur = np.zeros((h, h))
    gbr = np.zeros(h)
    gwc = np.zeros((1, h))
    guc = np.zeros((h, h))
    gbc = np.zeros(h)
    gh = gfinal.copy()
    rows_h = (rows, h)
    hp = np.empty(rows_h)
    z = np.empty(rows_h)
    r = np.empty(rows_h)
    c = np.empty(rows_h)
    gaz = np.empty(rows_h)
    gar = np.empty(rows_h)
    gac = np.empty(rows_h)
    grh = np.empty(rows_h)
    ghp = np.empty(rows_h)
    tmp = np.empty(rows_h)
    # stage each step's strided time-slices into contiguous buffers, then
    # run the arithmetic entirely on contiguous arrays
    for t in range(length - 1, -1, -1):
        xt = x[:, t : t + 1]
        hp[...] = hs[:, t]
        z[...] = zs[:, t]
        r[...] = rs[:, t]
        c[...] = cs[:, t]
        np.subtract(c, hp, out=gaz)
        gaz *= gh
        gaz *= z
        np.subtract(1.0, z, out=tmp)
        gaz *= tmp
        np.multiply(gh, tmp, out=ghp)
        np.multiply(gh, z, out=gac)
        np.multiply(c, c, out=tmp)
        np.subtract(1.0, tmp, out=tmp)
        gac *= tmp
        np.matmul(gac, uc.T, out=grh)
        np.multiply(grh, hp, out=gar)
        gar *= r
        np.subtract(1.0, r, out=tmp)
        gar *= tmp
        np.multiply(grh, r, out=tmp)
        ghp += tmp
        np.multiply(xt, gaz, out=tmp)
        gwz[0] += tmp.sum(axis=0)
        np.multiply(xt, gar, out=tmp)
        gwr[0] += tmp.sum(axis=0)
        np.multiply(xt, gac, out=tmp)
        gwc[0] += tmp.sum(axis=0)
        gbz += gaz.sum(axis=0)
        gbr += gar.sum(axis=0)
        gbc += gac.sum(axis=0)
        guz += hp.T @ gaz
        gur += hp.T @ gar
        np.multiply(r, hp, out=tmp)
        guc += tmp.T @ gac
        np.matmul(gaz, uz.T, out=tmp)
        ghp += tmp
        np.matmul(gar, ur.T, out=tmp)
        ghp += tmp
        gx[:, t] = gaz @ wz[0] + gar @ wr[0] + gac @ wc[0]
        gh, ghp = ghp, gh
    return gx, gh, gwz, guz, gbz, gwr, gur, gbr, gwc, guc, gbc
