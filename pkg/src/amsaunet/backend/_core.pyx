# Compiled hot kernels: im2col/col2im for convolutions, batched radix-2 FFT,
# fixed 2x bilinear resampling, and the quadratic attention core.
# Contracts mirror fallback.py exactly; all arrays C-contiguous float64.

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, sin, exp
from libc.stdlib cimport free, malloc

cnp.import_array()

NAME = "compiled"

ctypedef Py_ssize_t isize


# ---------------------------------------------------------------------------
# im2col / col2im
# ---------------------------------------------------------------------------

def im2col(cnp.ndarray[double, ndim=4] x, int k, int stride, int pad):
    cdef isize n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef isize ho = (h + 2 * pad - k) // stride + 1
    cdef isize wo = (w + 2 * pad - k) // stride + 1
    cdef cnp.ndarray[double, ndim=3] cols = np.empty((n, c * k * k, ho * wo))
    cdef double[:, :, :, ::1] xv = x
    cdef double[:, :, ::1] cv = cols
    cdef isize b, ci, kh, kw, oy, ox, iy, ix, row
    with nogil:
        for b in range(n):
            for ci in range(c):
                for kh in range(k):
                    for kw in range(k):
                        row = (ci * k + kh) * k + kw
                        for oy in range(ho):
                            iy = oy * stride + kh - pad
                            if iy < 0 or iy >= h:
                                for ox in range(wo):
                                    cv[b, row, oy * wo + ox] = 0.0
                                continue
                            for ox in range(wo):
                                ix = ox * stride + kw - pad
                                if ix < 0 or ix >= w:
                                    cv[b, row, oy * wo + ox] = 0.0
                                else:
                                    cv[b, row, oy * wo + ox] = xv[b, ci, iy, ix]
    return cols


def col2im(cnp.ndarray[double, ndim=3] cols, int c, int h, int w,
           int k, int stride, int pad):
    cdef isize n = cols.shape[0]
    cdef isize ho = (h + 2 * pad - k) // stride + 1
    cdef isize wo = (w + 2 * pad - k) // stride + 1
    cdef cnp.ndarray[double, ndim=4] out = np.zeros((n, c, h, w))
    cdef double[:, :, ::1] cv = cols
    cdef double[:, :, :, ::1] ov = out
    cdef isize b, ci, kh, kw, oy, ox, iy, ix, row
    with nogil:
        for b in range(n):
            for ci in range(c):
                for kh in range(k):
                    for kw in range(k):
                        row = (ci * k + kh) * k + kw
                        for oy in range(ho):
                            iy = oy * stride + kh - pad
                            if iy < 0 or iy >= h:
                                continue
                            for ox in range(wo):
                                ix = ox * stride + kw - pad
                                if 0 <= ix < w:
                                    ov[b, ci, iy, ix] += cv[b, row, oy * wo + ox]
    return out


# ---------------------------------------------------------------------------
# Depthwise conv, stride 1, "same" zero padding (odd kernel)
# ---------------------------------------------------------------------------

def dwconv_fwd(cnp.ndarray[double, ndim=4] x, cnp.ndarray[double, ndim=4] w):
    cdef isize n = x.shape[0], c = x.shape[1], h = x.shape[2], ww = x.shape[3]
    cdef isize k = w.shape[2], p = w.shape[2] // 2
    cdef cnp.ndarray[double, ndim=4] out = np.zeros((n, c, h, ww))
    cdef double[:, :, :, ::1] xv = x, ov = out
    cdef double[:, :, :, ::1] wv = w
    cdef isize b, ci, oy, ox, kh, kw, iy, ix
    cdef double acc, wt
    with nogil:
        for b in range(n):
            for ci in range(c):
                for kh in range(k):
                    for kw in range(k):
                        wt = wv[ci, 0, kh, kw]
                        for oy in range(h):
                            iy = oy + kh - p
                            if iy < 0 or iy >= h:
                                continue
                            for ox in range(ww):
                                ix = ox + kw - p
                                if 0 <= ix < ww:
                                    ov[b, ci, oy, ox] += wt * xv[b, ci, iy, ix]
    return out


def dwconv_gx(cnp.ndarray[double, ndim=4] gy, cnp.ndarray[double, ndim=4] w):
    return dwconv_fwd(gy, np.ascontiguousarray(w[:, :, ::-1, ::-1]))


def dwconv_gw(cnp.ndarray[double, ndim=4] x, cnp.ndarray[double, ndim=4] gy,
              int k):
    cdef isize n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef isize p = k // 2
    cdef cnp.ndarray[double, ndim=4] gw = np.zeros((c, 1, k, k))
    cdef double[:, :, :, ::1] xv = x, gv = gy, gwv = gw
    cdef isize b, ci, oy, ox, kh, kw, iy, ix
    cdef double acc
    with nogil:
        for ci in range(c):
            for kh in range(k):
                for kw in range(k):
                    acc = 0.0
                    for b in range(n):
                        for oy in range(h):
                            iy = oy + kh - p
                            if iy < 0 or iy >= h:
                                continue
                            for ox in range(w):
                                ix = ox + kw - p
                                if 0 <= ix < w:
                                    acc += gv[b, ci, oy, ox] * xv[b, ci, iy, ix]
                    gwv[ci, 0, kh, kw] = acc
    return gw


# ---------------------------------------------------------------------------
# Radix-2 FFT, batched
# ---------------------------------------------------------------------------

cdef void _fft1d(double* re, double* im, isize n, isize stride,
                 double* twr, double* twi, isize* rev) noexcept nogil:
    cdef isize i, j, span, step, base, p, a, b
    cdef double tr, ti, wr, wi, xr, xi, yr, yi
    for i in range(n):
        j = rev[i]
        if j > i:
            tr = re[i * stride]; re[i * stride] = re[j * stride]; re[j * stride] = tr
            ti = im[i * stride]; im[i * stride] = im[j * stride]; im[j * stride] = ti
    span = 1
    while span < n:
        step = n // (2 * span)
        base = 0
        while base < n:
            for p in range(span):
                wr = twr[p * step]
                wi = twi[p * step]
                a = (base + p) * stride
                b = (base + p + span) * stride
                xr = re[a]; xi = im[a]
                yr = re[b] * wr - im[b] * wi
                yi = re[b] * wi + im[b] * wr
                re[a] = xr + yr; im[a] = xi + yi
                re[b] = xr - yr; im[b] = xi - yi
            base += 2 * span
        span *= 2


cdef int _fill_tables(isize n, double sign, double* twr, double* twi,
                      isize* rev) noexcept nogil:
    cdef isize i, r, v, nbits = 0, m = n
    cdef double ang
    while m > 1:
        nbits += 1
        m >>= 1
    for i in range(n // 2):
        ang = sign * 2.0 * 3.141592653589793238462643383279502884 * i / n
        twr[i] = cos(ang)
        twi[i] = sin(ang)
    for i in range(n):
        r = 0
        v = i
        for m in range(nbits):
            r = (r << 1) | (v & 1)
            v >>= 1
        rev[i] = r
    return 0


def fft2_many(cnp.ndarray[double, ndim=3] re, cnp.ndarray[double, ndim=3] im,
              bint inverse):
    cdef isize nb = re.shape[0], h = re.shape[1], w = re.shape[2]
    cdef cnp.ndarray[double, ndim=3] outr = np.array(re)
    cdef cnp.ndarray[double, ndim=3] outi = np.array(im)
    cdef double[:, :, ::1] rv = outr
    cdef double[:, :, ::1] iv = outi
    cdef double sign = 1.0 if inverse else -1.0
    cdef double scale = 1.0 / (h * w)
    cdef double* twr_w = <double*> malloc(sizeof(double) * max(w // 2, 1))
    cdef double* twi_w = <double*> malloc(sizeof(double) * max(w // 2, 1))
    cdef isize* rev_w = <isize*> malloc(sizeof(isize) * w)
    cdef double* twr_h = <double*> malloc(sizeof(double) * max(h // 2, 1))
    cdef double* twi_h = <double*> malloc(sizeof(double) * max(h // 2, 1))
    cdef isize* rev_h = <isize*> malloc(sizeof(isize) * h)
    cdef isize b, y, x, i
    try:
        with nogil:
            _fill_tables(w, sign, twr_w, twi_w, rev_w)
            _fill_tables(h, sign, twr_h, twi_h, rev_h)
            for b in range(nb):
                for y in range(h):
                    _fft1d(&rv[b, y, 0], &iv[b, y, 0], w, 1, twr_w, twi_w, rev_w)
                for x in range(w):
                    _fft1d(&rv[b, 0, x], &iv[b, 0, x], h, w, twr_h, twi_h, rev_h)
            if inverse:
                for b in range(nb):
                    for y in range(h):
                        for x in range(w):
                            rv[b, y, x] *= scale
                            iv[b, y, x] *= scale
    finally:
        free(twr_w); free(twi_w); free(rev_w)
        free(twr_h); free(twi_h); free(rev_h)
    return outr, outi


def fft2_patched_many(cnp.ndarray[double, ndim=3] re,
                      cnp.ndarray[double, ndim=3] im, int patch, bint inverse):
    cdef isize nb = re.shape[0], h = re.shape[1], w = re.shape[2]
    cdef isize p = patch
    cdef cnp.ndarray[double, ndim=3] outr = np.array(re)
    cdef cnp.ndarray[double, ndim=3] outi = np.array(im)
    cdef double[:, :, ::1] rv = outr
    cdef double[:, :, ::1] iv = outi
    cdef double sign = 1.0 if inverse else -1.0
    cdef double scale = 1.0 / (p * p)
    cdef double* twr = <double*> malloc(sizeof(double) * max(p // 2, 1))
    cdef double* twi = <double*> malloc(sizeof(double) * max(p // 2, 1))
    cdef isize* rev = <isize*> malloc(sizeof(isize) * p)
    cdef isize b, py, px, y, x
    try:
        with nogil:
            _fill_tables(p, sign, twr, twi, rev)
            for b in range(nb):
                for py in range(h // p):
                    for px in range(w // p):
                        for y in range(p):
                            _fft1d(&rv[b, py * p + y, px * p],
                                   &iv[b, py * p + y, px * p], p, 1, twr, twi, rev)
                        for x in range(p):
                            _fft1d(&rv[b, py * p, px * p + x],
                                   &iv[b, py * p, px * p + x], p, w, twr, twi, rev)
            if inverse:
                for b in range(nb):
                    for y in range(h):
                        for x in range(w):
                            rv[b, y, x] *= scale
                            iv[b, y, x] *= scale
    finally:
        free(twr); free(twi); free(rev)
    return outr, outi


# ---------------------------------------------------------------------------
# Complex per-(channel, frequency) gate on patch-layout spectra
# ---------------------------------------------------------------------------

def cgate_fwd(cnp.ndarray[double, ndim=4] ar, cnp.ndarray[double, ndim=4] ai,
              cnp.ndarray[double, ndim=3] wr, cnp.ndarray[double, ndim=3] wi):
    cdef isize n = ar.shape[0], c = ar.shape[1], h = ar.shape[2], w = ar.shape[3]
    cdef isize p = wr.shape[1]
    cdef cnp.ndarray[double, ndim=4] cr = np.empty((n, c, h, w))
    cdef cnp.ndarray[double, ndim=4] ci = np.empty((n, c, h, w))
    cdef double[:, :, :, ::1] arv = ar, aiv = ai, crv = cr, civ = ci
    cdef double[:, :, ::1] wrv = wr, wiv = wi
    cdef isize b, ch, y, x
    cdef double gr_, gi_, xr, xi
    with nogil:
        for b in range(n):
            for ch in range(c):
                for y in range(h):
                    for x in range(w):
                        gr_ = wrv[ch, y % p, x % p]
                        gi_ = wiv[ch, y % p, x % p]
                        xr = arv[b, ch, y, x]
                        xi = aiv[b, ch, y, x]
                        crv[b, ch, y, x] = xr * gr_ - xi * gi_
                        civ[b, ch, y, x] = xr * gi_ + xi * gr_
    return cr, ci


def cgate_bw(cnp.ndarray[double, ndim=4] gr, cnp.ndarray[double, ndim=4] gi,
             cnp.ndarray[double, ndim=4] ar, cnp.ndarray[double, ndim=4] ai,
             cnp.ndarray[double, ndim=3] wr, cnp.ndarray[double, ndim=3] wi):
    cdef isize n = ar.shape[0], c = ar.shape[1], h = ar.shape[2], w = ar.shape[3]
    cdef isize p = wr.shape[1]
    cdef cnp.ndarray[double, ndim=4] gar = np.empty((n, c, h, w))
    cdef cnp.ndarray[double, ndim=4] gai = np.empty((n, c, h, w))
    cdef cnp.ndarray[double, ndim=3] gwr = np.zeros((c, p, p))
    cdef cnp.ndarray[double, ndim=3] gwi = np.zeros((c, p, p))
    cdef double[:, :, :, ::1] grv = gr, giv = gi, arv = ar, aiv = ai
    cdef double[:, :, :, ::1] garv = gar, gaiv = gai
    cdef double[:, :, ::1] wrv = wr, wiv = wi, gwrv = gwr, gwiv = gwi
    cdef isize b, ch, y, x, wy, wx
    cdef double g_r, g_i, a_r, a_i, w_r, w_i
    with nogil:
        for b in range(n):
            for ch in range(c):
                for y in range(h):
                    wy = y % p
                    for x in range(w):
                        wx = x % p
                        g_r = grv[b, ch, y, x]
                        g_i = giv[b, ch, y, x]
                        a_r = arv[b, ch, y, x]
                        a_i = aiv[b, ch, y, x]
                        w_r = wrv[ch, wy, wx]
                        w_i = wiv[ch, wy, wx]
                        garv[b, ch, y, x] = g_r * w_r + g_i * w_i
                        gaiv[b, ch, y, x] = -g_r * w_i + g_i * w_r
                        gwrv[ch, wy, wx] += g_r * a_r + g_i * a_i
                        gwiv[ch, wy, wx] += -g_r * a_i + g_i * a_r
    return gar, gai, gwr, gwi


# ---------------------------------------------------------------------------
# Fixed bilinear 2x resampling
# ---------------------------------------------------------------------------

def bilinear_down2(cnp.ndarray[double, ndim=4] x):
    cdef isize n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef cnp.ndarray[double, ndim=4] out = np.empty((n, c, h // 2, w // 2))
    cdef double[:, :, :, ::1] xv = x
    cdef double[:, :, :, ::1] ov = out
    cdef isize b, ci, y, z
    with nogil:
        for b in range(n):
            for ci in range(c):
                for y in range(h // 2):
                    for z in range(w // 2):
                        ov[b, ci, y, z] = 0.25 * (
                            xv[b, ci, 2 * y, 2 * z] + xv[b, ci, 2 * y, 2 * z + 1]
                            + xv[b, ci, 2 * y + 1, 2 * z] + xv[b, ci, 2 * y + 1, 2 * z + 1])
    return out


def bilinear_down2_adjoint(cnp.ndarray[double, ndim=4] g):
    cdef isize n = g.shape[0], c = g.shape[1], h = g.shape[2], w = g.shape[3]
    cdef cnp.ndarray[double, ndim=4] out = np.empty((n, c, 2 * h, 2 * w))
    cdef double[:, :, :, ::1] gv = g
    cdef double[:, :, :, ::1] ov = out
    cdef isize b, ci, y, z
    cdef double q
    with nogil:
        for b in range(n):
            for ci in range(c):
                for y in range(h):
                    for z in range(w):
                        q = 0.25 * gv[b, ci, y, z]
                        ov[b, ci, 2 * y, 2 * z] = q
                        ov[b, ci, 2 * y, 2 * z + 1] = q
                        ov[b, ci, 2 * y + 1, 2 * z] = q
                        ov[b, ci, 2 * y + 1, 2 * z + 1] = q
    return out


cdef void _up2_axis(isize size, isize* lo, isize* hi, double* wl) noexcept nogil:
    # Output centers at (j + 0.5)/2 - 0.5 in source coordinates; clamped edges.
    cdef isize j, l
    cdef double pos, frac
    for j in range(2 * size):
        pos = (j + 0.5) / 2.0 - 0.5
        l = <isize> pos
        if pos < 0:
            l = -1
        frac = pos - l
        lo[j] = min(max(l, 0), size - 1)
        hi[j] = min(max(l + 1, 0), size - 1)
        wl[j] = 1.0 - frac


def bilinear_up2(cnp.ndarray[double, ndim=4] x):
    cdef isize n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef cnp.ndarray[double, ndim=4] out = np.empty((n, c, 2 * h, 2 * w))
    cdef double[:, :, :, ::1] xv = x
    cdef double[:, :, :, ::1] ov = out
    cdef isize* lo_h = <isize*> malloc(sizeof(isize) * 2 * h)
    cdef isize* hi_h = <isize*> malloc(sizeof(isize) * 2 * h)
    cdef double* wl_h = <double*> malloc(sizeof(double) * 2 * h)
    cdef isize* lo_w = <isize*> malloc(sizeof(isize) * 2 * w)
    cdef isize* hi_w = <isize*> malloc(sizeof(isize) * 2 * w)
    cdef double* wl_w = <double*> malloc(sizeof(double) * 2 * w)
    cdef isize b, ci, y, z
    cdef double top, bot, wy
    try:
        with nogil:
            _up2_axis(h, lo_h, hi_h, wl_h)
            _up2_axis(w, lo_w, hi_w, wl_w)
            for b in range(n):
                for ci in range(c):
                    for y in range(2 * h):
                        wy = wl_h[y]
                        for z in range(2 * w):
                            top = xv[b, ci, lo_h[y], lo_w[z]] * wl_w[z] + \
                                xv[b, ci, lo_h[y], hi_w[z]] * (1.0 - wl_w[z])
                            bot = xv[b, ci, hi_h[y], lo_w[z]] * wl_w[z] + \
                                xv[b, ci, hi_h[y], hi_w[z]] * (1.0 - wl_w[z])
                            ov[b, ci, y, z] = wy * top + (1.0 - wy) * bot
    finally:
        free(lo_h); free(hi_h); free(wl_h)
        free(lo_w); free(hi_w); free(wl_w)
    return out


def bilinear_up2_adjoint(cnp.ndarray[double, ndim=4] g):
    cdef isize n = g.shape[0], c = g.shape[1], h2 = g.shape[2], w2 = g.shape[3]
    cdef isize h = h2 // 2, w = w2 // 2
    cdef cnp.ndarray[double, ndim=4] out = np.zeros((n, c, h, w))
    cdef double[:, :, :, ::1] gv = g
    cdef double[:, :, :, ::1] ov = out
    cdef isize* lo_h = <isize*> malloc(sizeof(isize) * h2)
    cdef isize* hi_h = <isize*> malloc(sizeof(isize) * h2)
    cdef double* wl_h = <double*> malloc(sizeof(double) * h2)
    cdef isize* lo_w = <isize*> malloc(sizeof(isize) * w2)
    cdef isize* hi_w = <isize*> malloc(sizeof(isize) * w2)
    cdef double* wl_w = <double*> malloc(sizeof(double) * w2)
    cdef isize b, ci, y, z
    cdef double gy, wy
    try:
        with nogil:
            _up2_axis(h, lo_h, hi_h, wl_h)
            _up2_axis(w, lo_w, hi_w, wl_w)
            for b in range(n):
                for ci in range(c):
                    for y in range(h2):
                        wy = wl_h[y]
                        for z in range(w2):
                            gy = gv[b, ci, y, z]
                            ov[b, ci, lo_h[y], lo_w[z]] += gy * wy * wl_w[z]
                            ov[b, ci, lo_h[y], hi_w[z]] += gy * wy * (1.0 - wl_w[z])
                            ov[b, ci, hi_h[y], lo_w[z]] += gy * (1.0 - wy) * wl_w[z]
                            ov[b, ci, hi_h[y], hi_w[z]] += gy * (1.0 - wy) * (1.0 - wl_w[z])
    finally:
        free(lo_h); free(hi_h); free(wl_h)
        free(lo_w); free(hi_w); free(wl_w)
    return out


# ---------------------------------------------------------------------------
# Scaled dot-product attention core over token matrices
# ---------------------------------------------------------------------------

def attention_tokens(cnp.ndarray[double, ndim=3] q,
                     cnp.ndarray[double, ndim=3] k,
                     cnp.ndarray[double, ndim=3] v, double scale):
    cdef isize nb = q.shape[0], n = q.shape[1], c = q.shape[2]
    cdef cnp.ndarray[double, ndim=3] out = np.empty((nb, n, c))
    cdef cnp.ndarray[double, ndim=1] rowbuf = np.empty(n)
    cdef double[:, :, ::1] qv = q, kv = k, vv = v, ov = out
    cdef double[::1] row = rowbuf
    cdef isize b, i, j, d
    cdef double acc, mx, s, inv
    with nogil:
        for b in range(nb):
            for i in range(n):
                mx = -1e300
                for j in range(n):
                    acc = 0.0
                    for d in range(c):
                        acc += qv[b, i, d] * kv[b, j, d]
                    acc /= scale
                    row[j] = acc
                    if acc > mx:
                        mx = acc
                s = 0.0
                for j in range(n):
                    row[j] = exp(row[j] - mx)
                    s += row[j]
                inv = 1.0 / s
                for d in range(c):
                    acc = 0.0
                    for j in range(n):
                        acc += row[j] * vv[b, j, d]
                    ov[b, i, d] = acc * inv
    return out


def patch_attention(cnp.ndarray[double, ndim=4] q,
                    cnp.ndarray[double, ndim=4] k,
                    cnp.ndarray[double, ndim=4] v, int patch, double scale):
    """Per-patch token attention on the (N,C,H,W) layout, fused end to end."""
    cdef isize n = q.shape[0], c = q.shape[1], h = q.shape[2], w = q.shape[3]
    cdef isize p = patch, nt = patch * patch
    cdef cnp.ndarray[double, ndim=4] out = np.empty((n, c, h, w))
    cdef cnp.ndarray[double, ndim=2] qb = np.empty((nt, c))
    cdef cnp.ndarray[double, ndim=2] kb = np.empty((nt, c))
    cdef cnp.ndarray[double, ndim=2] vb = np.empty((nt, c))
    cdef cnp.ndarray[double, ndim=1] row = np.empty(nt)
    cdef double[:, :, :, ::1] qv = q, kv = k, vv = v, ov = out
    cdef double[:, ::1] qbv = qb, kbv = kb, vbv = vb
    cdef double[::1] rv = row
    cdef isize b, py, px, i, j, d, yy, xx
    cdef double acc, mx, s, inv
    with nogil:
        for b in range(n):
            for py in range(h // p):
                for px in range(w // p):
                    for i in range(nt):
                        yy = py * p + i // p
                        xx = px * p + i % p
                        for d in range(c):
                            qbv[i, d] = qv[b, d, yy, xx]
                            kbv[i, d] = kv[b, d, yy, xx]
                            vbv[i, d] = vv[b, d, yy, xx]
                    for i in range(nt):
                        mx = -1e300
                        for j in range(nt):
                            acc = 0.0
                            for d in range(c):
                                acc += qbv[i, d] * kbv[j, d]
                            acc /= scale
                            rv[j] = acc
                            if acc > mx:
                                mx = acc
                        s = 0.0
                        for j in range(nt):
                            rv[j] = exp(rv[j] - mx)
                            s += rv[j]
                        inv = 1.0 / s
                        yy = py * p + i // p
                        xx = px * p + i % p
                        for d in range(c):
                            acc = 0.0
                            for j in range(nt):
                                acc += rv[j] * vbv[j, d]
                            ov[b, d, yy, xx] = acc * inv
    return out


# ---------------------------------------------------------------------------
# Naive DFT (timing reference; quadratic in pixel count by construction)
# ---------------------------------------------------------------------------

def naive_dft2(cnp.ndarray[double, ndim=2] re, cnp.ndarray[double, ndim=2] im,
               bint inverse):
    cdef isize h = re.shape[0], w = re.shape[1]
    cdef cnp.ndarray[double, ndim=2] outr = np.empty((h, w))
    cdef cnp.ndarray[double, ndim=2] outi = np.empty((h, w))
    cdef cnp.ndarray[double, ndim=1] phr = np.empty(h), phi = np.empty(h)
    cdef cnp.ndarray[double, ndim=1] pwr = np.empty(w), pwi = np.empty(w)
    cdef double[:, ::1] rv = re, iv = im, orv = outr, oiv = outi
    cdef double[::1] phrv = phr, phiv = phi, pwrv = pwr, pwiv = pwi
    cdef double sign = 1.0 if inverse else -1.0
    cdef double pi = 3.141592653589793238462643383279502884
    cdef isize u, vv_, y, x
    cdef double ar, ai, fr, fi, br, bi, zr, zi, scale
    with nogil:
        for y in range(h):
            phrv[y] = cos(sign * 2.0 * pi * y / h)
            phiv[y] = sin(sign * 2.0 * pi * y / h)
        for x in range(w):
            pwrv[x] = cos(sign * 2.0 * pi * x / w)
            pwiv[x] = sin(sign * 2.0 * pi * x / w)
        for u in range(h):
            for vv_ in range(w):
                ar = 0.0
                ai = 0.0
                for y in range(h):
                    fr = phrv[(u * y) % h]
                    fi = phiv[(u * y) % h]
                    for x in range(w):
                        br = pwrv[(vv_ * x) % w]
                        bi = pwiv[(vv_ * x) % w]
                        zr = fr * br - fi * bi
                        zi = fr * bi + fi * br
                        ar += rv[y, x] * zr - iv[y, x] * zi
                        ai += rv[y, x] * zi + iv[y, x] * zr
                orv[u, vv_] = ar
                oiv[u, vv_] = ai
        if inverse:
            scale = 1.0 / (h * w)
            for u in range(h):
                for vv_ in range(w):
                    orv[u, vv_] *= scale
                    oiv[u, vv_] *= scale
    return outr, outi
