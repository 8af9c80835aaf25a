"""Pure-numpy implementations of the hot kernels.

Same contracts as the compiled module in ``_core.pyx``; selected at import
time by ``amsaunet.backend`` when the extension is unavailable or when
AMSAUNET_BACKEND=python is set. All arrays are C-contiguous float64.
"""

import numpy as np

NAME = "python"


# ---------------------------------------------------------------------------
# im2col / col2im
# ---------------------------------------------------------------------------

def im2col(x, k, stride, pad):
    """Unfold (N,C,H,W) into patch columns (N, C*k*k, Ho*Wo)."""
    n, c, h, w = x.shape
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    if pad > 0:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    sn, sc, sh, sw = x.strides
    windows = np.lib.stride_tricks.as_strided(
        x,
        shape=(n, c, k, k, ho, wo),
        strides=(sn, sc, sh, sw, sh * stride, sw * stride),
        writeable=False,
    )
    return np.ascontiguousarray(windows.reshape(n, c * k * k, ho * wo))


def col2im(cols, c, h, w, k, stride, pad):
    """Adjoint of im2col: scatter-add columns back onto an (N,C,H,W) grid."""
    n = cols.shape[0]
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    out = np.zeros((n, c, h + 2 * pad, w + 2 * pad))
    cols = cols.reshape(n, c, k, k, ho, wo)
    for kh in range(k):
        he = kh + stride * ho
        for kw in range(k):
            we = kw + stride * wo
            out[:, :, kh:he:stride, kw:we:stride] += cols[:, :, kh, kw]
    if pad > 0:
        out = out[:, :, pad:pad + h, pad:pad + w]
    return np.ascontiguousarray(out)


# ---------------------------------------------------------------------------
# Depthwise conv, stride 1, "same" zero padding (odd kernel)
# ---------------------------------------------------------------------------

def dwconv_fwd(x, w):
    """Depthwise conv: x (N,C,H,W), w (C,1,k,k), stride 1, pad k//2."""
    n, c, h, ww = x.shape
    k = w.shape[2]
    p = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    out = np.zeros((n, c, h, ww))
    for kh in range(k):
        for kw in range(k):
            out += xp[:, :, kh:kh + h, kw:kw + ww] * w[None, :, 0, kh, kw, None, None]
    return out


def dwconv_gx(gy, w):
    """Input gradient of dwconv_fwd: same conv with a flipped kernel."""
    return dwconv_fwd(gy, w[:, :, ::-1, ::-1])


def dwconv_gw(x, gy, k):
    """Weight gradient of dwconv_fwd: per-tap reductions over batch and space."""
    n, c, h, w = x.shape
    p = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    gw = np.empty((c, 1, k, k))
    for kh in range(k):
        for kw in range(k):
            gw[:, 0, kh, kw] = (gy * xp[:, :, kh:kh + h, kw:kw + w]).sum(axis=(0, 2, 3))
    return gw


# ---------------------------------------------------------------------------
# Radix-2 FFT, batched over leading axis
# ---------------------------------------------------------------------------

def _bit_reversal(nbits):
    n = 1 << nbits
    idx = np.zeros(n, dtype=np.intp)
    for i in range(n):
        r = 0
        v = i
        for _ in range(nbits):
            r = (r << 1) | (v & 1)
            v >>= 1
        idx[i] = r
    return idx


def _fft1d_lastaxis(z, inverse):
    """Iterative radix-2 butterflies along the last axis (power of two)."""
    n = z.shape[-1]
    nbits = n.bit_length() - 1
    z = z[..., _bit_reversal(nbits)]
    sign = 1.0 if inverse else -1.0
    span = 1
    while span < n:
        tw = np.exp(sign * 2j * np.pi * np.arange(span) / (2 * span))
        blocks = z.reshape(*z.shape[:-1], n // (2 * span), 2 * span)
        even = blocks[..., :span]
        odd = blocks[..., span:] * tw
        z = np.concatenate([even + odd, even - odd], axis=-1).reshape(z.shape)
        span *= 2
    return z


def fft2_many(re, im, inverse):
    """2-D transform of a batch of grids.

    re, im: (B, H, W). Forward is unnormalized; inverse applies 1/(H*W).
    Returns new (re, im) arrays.
    """
    b, h, w = re.shape
    z = re + 1j * im
    z = _fft1d_lastaxis(z, inverse)
    z = _fft1d_lastaxis(z.transpose(0, 2, 1), inverse).transpose(0, 2, 1)
    if inverse:
        z = z / (h * w)
    return (
        np.ascontiguousarray(z.real),
        np.ascontiguousarray(z.imag),
    )


def fft2_patched_many(re, im, patch, inverse):
    """Independent 2-D transforms of each patch x patch tile, layout kept.

    re, im: (B, H, W) with H, W divisible by patch. Same normalization
    convention as fft2_many.
    """
    b, h, w = re.shape
    p = patch
    z = (re + 1j * im).reshape(b, h // p, p, w // p, p).transpose(0, 1, 3, 2, 4)
    z = _fft1d_lastaxis(z, inverse)
    z = _fft1d_lastaxis(z.swapaxes(-1, -2), inverse).swapaxes(-1, -2)
    if inverse:
        z = z / (p * p)
    z = z.transpose(0, 1, 3, 2, 4).reshape(b, h, w)
    return np.ascontiguousarray(z.real), np.ascontiguousarray(z.imag)


def cgate_fwd(ar, ai, wr, wi):
    """Complex gate per (channel, frequency): spectra (N,C,H,W), gate (C,p,p)."""
    n, c, h, w = ar.shape
    p = wr.shape[1]
    wr6 = wr.reshape(1, c, 1, p, 1, p)
    wi6 = wi.reshape(1, c, 1, p, 1, p)
    a_r = ar.reshape(n, c, h // p, p, w // p, p)
    a_i = ai.reshape(n, c, h // p, p, w // p, p)
    cr = a_r * wr6 - a_i * wi6
    ci = a_r * wi6 + a_i * wr6
    return (np.ascontiguousarray(cr.reshape(ar.shape)),
            np.ascontiguousarray(ci.reshape(ar.shape)))


def cgate_bw(gr, gi, ar, ai, wr, wi):
    """Adjoints of cgate_fwd for both the spectra and the gate."""
    n, c, h, w = ar.shape
    p = wr.shape[1]
    shape6 = (n, c, h // p, p, w // p, p)
    wr6 = wr.reshape(1, c, 1, p, 1, p)
    wi6 = wi.reshape(1, c, 1, p, 1, p)
    gr6, gi6 = gr.reshape(shape6), gi.reshape(shape6)
    a_r, a_i = ar.reshape(shape6), ai.reshape(shape6)
    gar = gr6 * wr6 + gi6 * wi6
    gai = -gr6 * wi6 + gi6 * wr6
    gwr = (gr6 * a_r + gi6 * a_i).sum(axis=(0, 2, 4))
    gwi = (-gr6 * a_i + gi6 * a_r).sum(axis=(0, 2, 4))
    return (np.ascontiguousarray(gar.reshape(ar.shape)),
            np.ascontiguousarray(gai.reshape(ar.shape)),
            np.ascontiguousarray(gwr), np.ascontiguousarray(gwi))


# ---------------------------------------------------------------------------
# Fixed bilinear 2x resampling
# ---------------------------------------------------------------------------

def bilinear_down2(x):
    """2x bilinear reduction = mean over each 2x2 block."""
    n, c, h, w = x.shape
    v = x.reshape(n, c, h // 2, 2, w // 2, 2)
    return np.ascontiguousarray(v.mean(axis=(3, 5)))


def bilinear_down2_adjoint(g):
    """Transpose of bilinear_down2: spread each gradient over its block / 4."""
    n, c, h, w = g.shape
    out = np.repeat(np.repeat(g, 2, axis=2), 2, axis=3)
    return np.ascontiguousarray(out * 0.25)


def _up2_weights_1d(size):
    # Output sample 2i sits at source offset i - 0.25, sample 2i+1 at i + 0.25
    # (half-pixel centers); edges clamp, so weights are (0.75, 0.25) inside.
    src_lo = np.empty(2 * size, dtype=np.intp)
    src_hi = np.empty(2 * size, dtype=np.intp)
    w_lo = np.empty(2 * size)
    for j in range(2 * size):
        pos = (j + 0.5) / 2.0 - 0.5
        lo = int(np.floor(pos))
        frac = pos - lo
        hi = lo + 1
        lo = min(max(lo, 0), size - 1)
        hi = min(max(hi, 0), size - 1)
        src_lo[j] = lo
        src_hi[j] = hi
        w_lo[j] = 1.0 - frac
    return src_lo, src_hi, w_lo


def bilinear_up2(x):
    """2x bilinear upsampling with half-pixel centers and clamped edges."""
    n, c, h, w = x.shape
    lo_h, hi_h, wl_h = _up2_weights_1d(h)
    lo_w, hi_w, wl_w = _up2_weights_1d(w)
    rows = x[:, :, lo_h] * wl_h[None, None, :, None] + x[:, :, hi_h] * (1.0 - wl_h)[None, None, :, None]
    out = rows[:, :, :, lo_w] * wl_w + rows[:, :, :, hi_w] * (1.0 - wl_w)
    return np.ascontiguousarray(out)


def bilinear_up2_adjoint(g):
    """Transpose of bilinear_up2: scatter output gradients back with the same weights."""
    n, c, h2, w2 = g.shape
    h, w = h2 // 2, w2 // 2
    lo_w, hi_w, wl_w = _up2_weights_1d(w)
    rows = np.zeros((n, c, h2, w))
    np.add.at(rows, (slice(None), slice(None), slice(None), lo_w), g * wl_w)
    np.add.at(rows, (slice(None), slice(None), slice(None), hi_w), g * (1.0 - wl_w))
    lo_h, hi_h, wl_h = _up2_weights_1d(h)
    out = np.zeros((n, c, h, w))
    np.add.at(out, (slice(None), slice(None), lo_h), rows * wl_h[None, None, :, None])
    np.add.at(out, (slice(None), slice(None), hi_h), rows * (1.0 - wl_h)[None, None, :, None])
    return np.ascontiguousarray(out)


# ---------------------------------------------------------------------------
# Scaled dot-product attention core over token matrices
# ---------------------------------------------------------------------------

def attention_tokens(q, k, v, scale):
    """softmax(q @ k^T / scale) @ v for a batch of (n, c) token matrices."""
    scores = np.matmul(q, k.transpose(0, 2, 1)) / scale
    scores -= scores.max(axis=-1, keepdims=True)
    e = np.exp(scores)
    attn = e / e.sum(axis=-1, keepdims=True)
    return np.matmul(attn, v)


def _to_tokens(x, p):
    n, c, h, w = x.shape
    v = x.reshape(n, c, h // p, p, w // p, p).transpose(0, 2, 4, 3, 5, 1)
    return np.ascontiguousarray(v.reshape(-1, p * p, c))


def patch_attention(q, k, v, patch, scale):
    """Per-patch token attention on the (N,C,H,W) layout."""
    n, c, h, w = q.shape
    p = patch
    out = attention_tokens(_to_tokens(q, p), _to_tokens(k, p),
                           _to_tokens(v, p), scale)
    out = out.reshape(n, h // p, w // p, p, p, c).transpose(0, 5, 1, 3, 2, 4)
    return np.ascontiguousarray(out.reshape(n, c, h, w))


# ---------------------------------------------------------------------------
# Naive DFT (timing reference; quadratic in pixel count by construction)
# ---------------------------------------------------------------------------

def naive_dft2(re, im, inverse):
    """Direct double-sum 2-D DFT of one grid. O(n^2) in pixel count."""
    h, w = re.shape
    z = re + 1j * im
    sign = 2j * np.pi if inverse else -2j * np.pi
    ph = np.exp(sign * np.outer(np.arange(h), np.arange(h)) / h)
    pw = np.exp(sign * np.outer(np.arange(w), np.arange(w)) / w)
    out = np.empty((h, w), dtype=complex)
    for u in range(h):
        for vv in range(w):
            out[u, vv] = np.sum(z * np.outer(ph[u], pw[vv]))
    if inverse:
        out /= h * w
    return np.ascontiguousarray(out.real), np.ascontiguousarray(out.imag)
