"""Dense rank-4 tensors with a recorded operation tape and reverse-mode diff.

Tensors are (batch, channel, height, width) float64 arrays, immutable after
construction except for gradient buffers. Ops executed inside a ``record()``
context append nodes to the active tape; ``Tape.backward`` replays the nodes
in exact reverse recording order, summing adjoint contributions, then
discards the graph. Complex-valued intermediates (FFT spectra) travel as
(re, im) tensor pairs.
"""

import math

import numpy as np

from amsaunet import backend as bk
from amsaunet.errors import ContractError, DimensionError

_AXIS_NAMES = ("batch", "channel", "height", "width")

_debug_checks = False


def set_debug_checks(enabled):
    """Toggle post-op finiteness assertions (slow; intended for tests)."""
    global _debug_checks
    _debug_checks = bool(enabled)


def debug_checks_enabled():
    return _debug_checks


class Tensor:
    """Rank-4 float64 tensor, optionally gradient-tracked."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad=False):
        arr = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
        if arr.ndim != 4:
            raise DimensionError(
                f"tensors are rank-4 (N,C,H,W); got rank {arr.ndim}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        if self.data.size != 1:
            raise ContractError(f"item() needs a scalar tensor, shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self):
        t = Tensor(self.data)
        return t

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def zeros(shape, requires_grad=False):
    return Tensor(np.zeros(shape), requires_grad=requires_grad)


def ones(shape, requires_grad=False):
    return Tensor(np.ones(shape), requires_grad=requires_grad)


def scalar(value):
    return Tensor(np.full((1, 1, 1, 1), float(value)))


# ---------------------------------------------------------------------------
# Tape
# ---------------------------------------------------------------------------

class _Node:
    __slots__ = ("name", "inputs", "outputs", "backward_fn")

    def __init__(self, name, inputs, outputs, backward_fn):
        self.name = name
        self.inputs = inputs
        self.outputs = outputs
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of forward ops; topological order = recording order."""

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _tape_stack.append(self)
        return self

    def __exit__(self, *exc):
        _tape_stack.pop()
        return False

    def backward(self, loss):
        """Populate .grad on every gradient-tracked tensor reachable from loss.

        The loss must be a scalar produced by ops recorded on this tape.
        The node list is cleared afterwards; double backward is unsupported.
        """
        if loss.shape != (1, 1, 1, 1):
            raise ContractError(
                f"backward requires a scalar loss of shape (1,1,1,1), got {loss.shape}")
        produced = {id(out) for node in self.nodes for out in node.outputs}
        if id(loss) not in produced:
            raise ContractError("loss was not produced by ops recorded on this tape")

        # Contributions are appended while walking the tape backwards, then
        # summed in forward recording order so that grad(f + g) equals
        # grad-from-f plus grad-from-g bitwise.
        contribs = {id(loss): [np.ones((1, 1, 1, 1))]}

        def finalize(key):
            parts = contribs.get(key)
            if parts is None:
                return None
            total = parts[-1]
            for part in reversed(parts[:-1]):
                total = total + part
            return total

        for node in reversed(self.nodes):
            if not any(id(out) in contribs for out in node.outputs):
                continue
            gouts = [finalize(id(out)) for out in node.outputs]
            gouts = [
                g if g is not None else np.zeros(out.shape)
                for g, out in zip(gouts, node.outputs)
            ]
            gins = node.backward_fn(*gouts)
            for tin, gin in zip(node.inputs, gins):
                if gin is None or not tin.requires_grad:
                    continue
                contribs.setdefault(id(tin), []).append(gin)
        seen = {}
        for node in self.nodes:
            for t in node.inputs + node.outputs:
                seen[id(t)] = t
        seen[id(loss)] = loss
        for key, t in seen.items():
            if t.requires_grad and key in contribs:
                total = finalize(key)
                t.grad = total if t.grad is None else t.grad + total
        self.nodes.clear()


_tape_stack = []


def record():
    """Open a fresh tape: ``with record() as tape: ... ; tape.backward(loss)``."""
    return Tape()


def _active_tape():
    return _tape_stack[-1] if _tape_stack else None


# ---------------------------------------------------------------------------
# Multiply-accumulate instrumentation (used by the flop-count cross-check)
# ---------------------------------------------------------------------------

_mac_counter = None


class count_macs:
    """Context manager accumulating per-op multiply-add counts into .total."""

    def __init__(self):
        self.total = 0

    def __enter__(self):
        global _mac_counter
        self._prev = _mac_counter
        _mac_counter = self
        return self

    def __exit__(self, *exc):
        global _mac_counter
        _mac_counter = self._prev
        return False


def _count(n):
    if _mac_counter is not None:
        _mac_counter.total += int(n)


# ---------------------------------------------------------------------------
# Op plumbing
# ---------------------------------------------------------------------------

def _finish(name, inputs, outputs, backward_fn):
    """Register a node if recording and any input is gradient-tracked."""
    if _debug_checks:
        for out in outputs:
            if not np.isfinite(out.data).all():
                raise FloatingPointError(f"non-finite values produced by {name}")
    tape = _active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        for out in outputs:
            out.requires_grad = True
        tape.nodes.append(_Node(name, list(inputs), list(outputs), backward_fn))


def _require_same_shape(a, b, op):
    if a.shape != b.shape:
        for i, (da, db) in enumerate(zip(a.shape, b.shape)):
            if da != db:
                raise DimensionError(
                    f"{op}: {_AXIS_NAMES[i]} axis mismatch ({da} vs {db})")
    return a.shape


# ---------------------------------------------------------------------------
# Elementwise / pointwise ops
# ---------------------------------------------------------------------------

def add(a, b):
    _require_same_shape(a, b, "add")
    out = Tensor(a.data + b.data)
    _finish("add", (a, b), (out,), lambda g: (g, g))
    return out


def sub(a, b):
    _require_same_shape(a, b, "sub")
    out = Tensor(a.data - b.data)
    _finish("sub", (a, b), (out,), lambda g: (g, -g))
    return out


def mul(a, b):
    _require_same_shape(a, b, "mul")
    _count(a.size)
    out = Tensor(a.data * b.data)
    ad, bd = a.data, b.data
    _finish("mul", (a, b), (out,), lambda g: (g * bd, g * ad))
    return out


def scalar_mul(a, c):
    c = float(c)
    _count(a.size)
    out = Tensor(a.data * c)
    _finish("scalar_mul", (a,), (out,), lambda g: (g * c,))
    return out


def relu(a):
    out = Tensor(np.maximum(a.data, 0.0))
    mask = a.data > 0.0
    _finish("relu", (a,), (out,), lambda g: (g * mask,))
    return out


def sigmoid(a):
    s = 1.0 / (1.0 + np.exp(-a.data))
    out = Tensor(s)
    _finish("sigmoid", (a,), (out,), lambda g: (g * s * (1.0 - s),))
    return out


_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


def gelu(a):
    # tanh form; self-consistent forward/derivative pair, no erf dependency.
    x = a.data
    u = x * x
    u *= _GELU_A
    u += 1.0
    u *= _GELU_C
    u *= x
    t = np.tanh(u)
    y = t + 1.0
    y *= x
    y *= 0.5
    out = Tensor(y)

    def bw(g):
        du = x * x
        du *= 3.0 * _GELU_A
        du += 1.0
        du *= _GELU_C
        sech2 = t * t
        np.subtract(1.0, sech2, out=sech2)
        dx = x * sech2
        dx *= du
        dx += 1.0 + t
        dx *= 0.5
        dx *= g
        return (dx,)

    _finish("gelu", (a,), (out,), bw)
    return out


def softmax_lastdim(a):
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)
    _count(a.size)
    out = Tensor(s)

    def bw(g):
        dot = (g * s).sum(axis=-1, keepdims=True)
        return (s * (g - dot),)

    _finish("softmax_lastdim", (a,), (out,), bw)
    return out


def layer_norm_channels(x, gamma, beta, eps=1e-12):
    """Normalize each spatial position across channels; scale/shift per channel."""
    if gamma.shape != (1, x.shape[1], 1, 1) or beta.shape != (1, x.shape[1], 1, 1):
        raise DimensionError(
            f"layer_norm_channels: scale/shift must be (1,{x.shape[1]},1,1)")
    mu = x.data.mean(axis=1, keepdims=True)
    xc = x.data - mu
    var = (xc ** 2).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    _count(3 * x.size)
    out = Tensor(xhat * gamma.data + beta.data)

    def bw(g):
        dxhat = g * gamma.data
        m1 = dxhat.mean(axis=1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=1, keepdims=True)
        gx = inv * (dxhat - m1 - xhat * m2)
        ggamma = (g * xhat).sum(axis=(0, 2, 3), keepdims=True)
        gbeta = g.sum(axis=(0, 2, 3), keepdims=True)
        return (gx, ggamma, gbeta)

    _finish("layer_norm_channels", (x, gamma, beta), (out,), bw)
    return out


def abs_val(a):
    out = Tensor(np.abs(a.data))
    sign = np.sign(a.data)
    _finish("abs", (a,), (out,), lambda g: (g * sign,))
    return out


def sum_all(a):
    out = Tensor(np.full((1, 1, 1, 1), a.data.sum()))
    shape = a.shape
    _finish("sum_all", (a,), (out,),
            lambda g: (np.full(shape, g.reshape(-1)[0]),))
    return out


def mean_all(a):
    n = a.size
    out = Tensor(np.full((1, 1, 1, 1), a.data.mean()))
    shape = a.shape
    _finish("mean_all", (a,), (out,),
            lambda g: (np.full(shape, g.reshape(-1)[0] / n),))
    return out


# ---------------------------------------------------------------------------
# Shape ops
# ---------------------------------------------------------------------------

def reshape(a, shape):
    if int(np.prod(shape)) != a.size or len(shape) != 4:
        raise DimensionError(
            f"reshape: cannot view {a.shape} as {tuple(shape)}")
    out = Tensor(a.data.reshape(shape))
    old = a.shape
    _finish("reshape", (a,), (out,), lambda g: (g.reshape(old),))
    return out


def transpose_hw(a):
    out = Tensor(np.ascontiguousarray(a.data.transpose(0, 1, 3, 2)))
    _finish("transpose_hw", (a,), (out,),
            lambda g: (np.ascontiguousarray(g.transpose(0, 1, 3, 2)),))
    return out


def concat_channels(tensors):
    base = tensors[0].shape
    for t in tensors[1:]:
        if (t.shape[0], t.shape[2], t.shape[3]) != (base[0], base[2], base[3]):
            raise DimensionError(
                f"concat_channels: non-channel axes differ ({t.shape} vs {base})")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=1))
    sizes = [t.shape[1] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=1))

    _finish("concat_channels", tuple(tensors), (out,), bw)
    return out


def split_channels(a, sizes):
    if sum(sizes) != a.shape[1]:
        raise DimensionError(
            f"split_channels: sizes {sizes} do not sum to channel axis {a.shape[1]}")
    splits = np.cumsum(sizes)[:-1]
    parts = [Tensor(np.ascontiguousarray(p)) for p in np.split(a.data, splits, axis=1)]

    def bw(*gs):
        return (np.concatenate(gs, axis=1),)

    _finish("split_channels", (a,), tuple(parts), bw)
    return parts


# ---------------------------------------------------------------------------
# Convolutions
# ---------------------------------------------------------------------------

def _conv_out(h, pad, k, stride):
    return (h + 2 * pad - k) // stride + 1


def conv2d(x, weight, bias, stride=1, padding=0, groups=1):
    """Cross-correlation with zero padding; weight (C_out, C_in/groups, k, k)."""
    n, cin, h, w = x.shape
    cout, cin_g, kh, kw = weight.shape
    if kh != kw:
        raise DimensionError(f"conv2d: kernel must be square, got {kh}x{kw}")
    if cin % groups != 0 or cout % groups != 0:
        raise DimensionError(
            f"conv2d: channel axis ({cin} in / {cout} out) not divisible by groups={groups}")
    if cin_g != cin // groups:
        raise DimensionError(
            f"conv2d: weight channel axis is {cin_g}, expected {cin // groups}")
    if padding < 0 or stride < 1:
        raise ContractError("conv2d: padding must be >= 0 and stride >= 1")
    k = kh
    ho, wo = _conv_out(h, padding, k, stride), _conv_out(w, padding, k, stride)
    if ho < 1 or wo < 1:
        raise DimensionError(
            f"conv2d: height/width {h}x{w} too small for kernel {k} at stride {stride}")
    _count(n * cout * ho * wo * cin_g * k * k)

    depthwise = (groups == cin and cout == cin and stride == 1 and k > 1
                 and k % 2 == 1 and padding == k // 2)
    if depthwise:
        y = bk.dwconv_fwd(x.data, weight.data)
        if bias is not None:
            if bias.shape != (1, cout, 1, 1):
                raise DimensionError(
                    f"conv2d: bias channel axis must be (1,{cout},1,1), got {bias.shape}")
            y += bias.data
        out = Tensor(y)
        xd, wd = x.data, weight.data

        def bw_dw(gy):
            gy = np.ascontiguousarray(gy)
            gx = bk.dwconv_gx(gy, wd)
            gw = bk.dwconv_gw(xd, gy, k)
            if bias is None:
                return (gx, gw)
            return (gx, gw, gy.sum(axis=(0, 2, 3)).reshape(1, cout, 1, 1))

        inputs = (x, weight) if bias is None else (x, weight, bias)
        _finish("conv2d", inputs, (out,), bw_dw)
        return out

    if k == 1 and stride == 1 and padding == 0:
        cols = x.data.reshape(n, cin, h * w)
    else:
        cols = bk.im2col(x.data, k, stride, padding)
    g = groups
    if g == 1:
        y = np.matmul(weight.data.reshape(cout, -1), cols)
    else:
        colsg = cols.reshape(n, g, cin_g * k * k, ho * wo)
        wg = weight.data.reshape(g, cout // g, cin_g * k * k)
        y = np.matmul(wg[None], colsg).reshape(n, cout, ho * wo)
    y = y.reshape(n, cout, ho, wo)
    if bias is not None:
        if bias.shape != (1, cout, 1, 1):
            raise DimensionError(
                f"conv2d: bias channel axis must be (1,{cout},1,1), got {bias.shape}")
        y = y + bias.data
    out = Tensor(y)

    xd, wd = x.data, weight.data

    def bw(gy):
        gf = gy.reshape(n, cout, ho * wo)
        # input gradient: scatter W^T @ gy back through im2col geometry
        if g == 1:
            gcols = np.matmul(wd.reshape(cout, -1).T, gf)
        else:
            gfg = gf.reshape(n, g, cout // g, ho * wo)
            wg_ = wd.reshape(g, cout // g, cin_g * k * k)
            gcols = np.matmul(wg_.transpose(0, 2, 1)[None], gfg).reshape(
                n, cin * k * k, ho * wo)
        if k == 1 and stride == 1 and padding == 0:
            gx = gcols.reshape(n, cin, h, w)
        else:
            gx = bk.col2im(np.ascontiguousarray(gcols), cin, h, w, k, stride, padding)
        # weight gradient: gy @ cols^T, summed over batch (cols kept from forward)
        cols_b = cols
        if g == 1:
            gw = np.matmul(gf, cols_b.transpose(0, 2, 1)).sum(axis=0).reshape(wd.shape)
        else:
            gfg = gf.reshape(n, g, cout // g, ho * wo)
            colsg_b = cols_b.reshape(n, g, cin_g * k * k, ho * wo)
            gw = np.matmul(gfg, colsg_b.transpose(0, 1, 3, 2)).sum(axis=0).reshape(wd.shape)
        gb = gy.sum(axis=(0, 2, 3)).reshape(1, cout, 1, 1) if bias is not None else None
        if bias is None:
            return (np.ascontiguousarray(gx), gw)
        return (np.ascontiguousarray(gx), gw, gb)

    inputs = (x, weight) if bias is None else (x, weight, bias)
    _finish("conv2d", inputs, (out,), bw)
    return out


def conv_transpose2d(x, weight, bias, stride):
    """Transposed convolution; weight (C_in, C_out, k, k), padding = stride // 2.

    With k = 2*stride (the upsampling configuration) spatial dims multiply by
    exactly ``stride``.
    """
    if stride < 1:
        raise ContractError("conv_transpose2d: stride must be >= 1")
    n, cin, h, w = x.shape
    wcin, cout, kh, kw = weight.shape
    if kh != kw:
        raise DimensionError(f"conv_transpose2d: kernel must be square, got {kh}x{kw}")
    if wcin != cin:
        raise DimensionError(
            f"conv_transpose2d: weight channel axis is {wcin}, expected {cin}")
    k = kh
    pad = stride // 2
    ho = (h - 1) * stride - 2 * pad + k
    wo = (w - 1) * stride - 2 * pad + k
    _count(n * cin * cout * k * k * h * w)

    # Forward is the adjoint of a stride-`stride` conv: matmul then col2im.
    wmat = weight.data.reshape(cin, cout * k * k)
    cols = np.matmul(wmat.T, x.data.reshape(n, cin, h * w))
    y = bk.col2im(np.ascontiguousarray(cols), cout, ho, wo, k, stride, pad)
    if bias is not None:
        if bias.shape != (1, cout, 1, 1):
            raise DimensionError(
                f"conv_transpose2d: bias must be (1,{cout},1,1), got {bias.shape}")
        y = y + bias.data
    out = Tensor(y)

    xd, wd = x.data, weight.data

    def bw(gy):
        gcols = bk.im2col(gy, k, stride, pad)
        gx = np.matmul(wmat, gcols).reshape(n, cin, h, w)
        gw = np.matmul(xd.reshape(n, cin, h * w), gcols.transpose(0, 2, 1)).sum(
            axis=0).reshape(wd.shape)
        if bias is None:
            return (np.ascontiguousarray(gx), gw)
        gb = gy.sum(axis=(0, 2, 3)).reshape(1, cout, 1, 1)
        return (np.ascontiguousarray(gx), gw, gb)

    inputs = (x, weight) if bias is None else (x, weight, bias)
    _finish("conv_transpose2d", inputs, (out,), bw)
    return out


def downsample_bilinear2x(x):
    """Fixed 2x bilinear reduction (mean over 2x2 blocks). H, W must be even."""
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise DimensionError(
            f"downsample_bilinear2x: height/width must be even, got {h}x{w}")
    out = Tensor(bk.bilinear_down2(x.data))
    _finish("downsample_bilinear2x", (x,), (out,),
            lambda g: (bk.bilinear_down2_adjoint(np.ascontiguousarray(g)),))
    return out


def upsample_bilinear2x(x):
    """Fixed 2x bilinear upsampling (half-pixel centers, clamped edges)."""
    out = Tensor(bk.bilinear_up2(x.data))
    _finish("upsample_bilinear2x", (x,), (out,),
            lambda g: (bk.bilinear_up2_adjoint(np.ascontiguousarray(g)),))
    return out


# ---------------------------------------------------------------------------
# Batched matmul over the trailing two axes
# ---------------------------------------------------------------------------

def matmul(a, b):
    """(N,C,n,m) @ (N,C,m,p) -> (N,C,n,p)."""
    if a.shape[:2] != b.shape[:2] or a.shape[3] != b.shape[2]:
        raise DimensionError(
            f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    _count(a.shape[0] * a.shape[1] * a.shape[2] * a.shape[3] * b.shape[3])
    out = Tensor(np.matmul(a.data, b.data))
    ad, bd = a.data, b.data

    def bw(g):
        return (np.matmul(g, bd.transpose(0, 1, 3, 2)),
                np.matmul(ad.transpose(0, 1, 3, 2), g))

    _finish("matmul", (a, b), (out,), bw)
    return out


# ---------------------------------------------------------------------------
# Patch FFT ops (complex values travel as re/im tensor pairs)
# ---------------------------------------------------------------------------

def _check_patch(shape, patch, op):
    n, c, h, w = shape
    if patch < 1 or (patch & (patch - 1)) != 0:
        raise DimensionError(f"{op}: patch size {patch} is not a power of two")
    if h % patch or w % patch:
        raise DimensionError(
            f"{op}: height/width {h}x{w} not divisible by patch {patch}")


def _fft_macs(shape, p):
    # 2*n*log2(n) real multiplies per p x p transform, n = p*p.
    n = p * p
    count = shape[0] * shape[1] * (shape[2] // p) * (shape[3] // p)
    return count * 2 * n * int(math.log2(n)) if n > 1 else 0


def fft2_patches(x, patch):
    """Per-patch unnormalized forward 2-D FFT of a real tensor.

    Returns (re, im) tensors of the same shape as x, spectra stored in the
    patch positions they came from. Differentiable; power-of-two patches.
    """
    _check_patch(x.shape, patch, "fft2_patches")
    _count(_fft_macs(x.shape, patch))
    shape = x.shape
    flat = x.data.reshape(-1, shape[2], shape[3])
    fr, fi = bk.fft2_patched_many(flat, np.zeros_like(flat), patch, False)
    re = Tensor(fr.reshape(shape))
    im = Tensor(fi.reshape(shape))
    nelem = patch * patch

    def bw(gre, gim):
        # adjoint of the unnormalized DFT = unnormalized inverse DFT, real part
        br, _ = bk.fft2_patched_many(
            np.ascontiguousarray(gre).reshape(-1, shape[2], shape[3]),
            np.ascontiguousarray(gim).reshape(-1, shape[2], shape[3]),
            patch, True)
        br *= nelem
        return (br.reshape(shape),)

    _finish("fft2_patches", (x,), (re, im), bw)
    return re, im


def ifft2_patches(re, im, patch):
    """Per-patch normalized inverse FFT, real part.

    Discarding the imaginary part makes the op equivalent to symmetrizing the
    spectrum first, which keeps gated spectra differentiable.
    """
    _require_same_shape(re, im, "ifft2_patches")
    _check_patch(re.shape, patch, "ifft2_patches")
    _count(_fft_macs(re.shape, patch))
    shape = re.shape
    br, _ = bk.fft2_patched_many(
        re.data.reshape(-1, shape[2], shape[3]),
        im.data.reshape(-1, shape[2], shape[3]), patch, True)
    out = Tensor(br.reshape(shape))
    nelem = patch * patch

    def bw(g):
        gf = np.ascontiguousarray(g).reshape(-1, shape[2], shape[3])
        tr, ti = bk.fft2_patched_many(gf, np.zeros_like(gf), patch, False)
        tr /= nelem
        ti /= nelem
        return (tr.reshape(shape), ti.reshape(shape))

    _finish("ifft2_patches", (re, im), (out,), bw)
    return out


def complex_mul(ar, ai, br, bi, conjugate_b=False):
    """Elementwise complex product of two (re, im) pairs.

    With conjugate_b the product is a * conj(b) (cross-correlation flavour).
    """
    for t in (ai, br, bi):
        _require_same_shape(ar, t, "complex_mul")
    _count(4 * ar.size)
    a_r, a_i, b_r, b_i = ar.data, ai.data, br.data, bi.data
    if conjugate_b:
        cr = a_r * b_r + a_i * b_i
        ci = a_i * b_r - a_r * b_i
    else:
        cr = a_r * b_r - a_i * b_i
        ci = a_r * b_i + a_i * b_r
    outr, outi = Tensor(cr), Tensor(ci)

    def bw(gr, gi):
        if conjugate_b:
            gar = gr * b_r - gi * b_i
            gai = gr * b_i + gi * b_r
            gbr = gr * a_r + gi * a_i
            gbi = gr * a_i - gi * a_r
        else:
            gar = gr * b_r + gi * b_i
            gai = -gr * b_i + gi * b_r
            gbr = gr * a_r + gi * a_i
            gbi = -gr * a_i + gi * a_r
        return (gar, gai, gbr, gbi)

    _finish("complex_mul", (ar, ai, br, bi), (outr, outi), bw)
    return outr, outi


def complex_patch_gate(ar, ai, wr, wi, patch):
    """Multiply per-patch spectra by a per-(channel, frequency) complex gate.

    Gate tensors are (1, C, patch, patch) and broadcast over batch and patch
    grid positions.
    """
    _require_same_shape(ar, ai, "complex_patch_gate")
    _check_patch(ar.shape, patch, "complex_patch_gate")
    n, c, h, w = ar.shape
    if wr.shape != (1, c, patch, patch) or wi.shape != (1, c, patch, patch):
        raise DimensionError(
            f"complex_patch_gate: gate must be (1,{c},{patch},{patch})")
    _count(4 * ar.size)
    p = patch
    ard, aid = ar.data, ai.data
    wrd, wid = wr.data.reshape(c, p, p), wi.data.reshape(c, p, p)
    cr, ci = bk.cgate_fwd(ard, aid, wrd, wid)
    outr, outi = Tensor(cr), Tensor(ci)

    def bw(gr, gi):
        gar, gai, gwr, gwi = bk.cgate_bw(
            np.ascontiguousarray(gr), np.ascontiguousarray(gi),
            ard, aid, wrd, wid)
        return (gar, gai, gwr.reshape(1, c, p, p), gwi.reshape(1, c, p, p))

    _finish("complex_patch_gate", (ar, ai, wr, wi), (outr, outi), bw)
    return outr, outi


def complex_abs(re, im):
    """Pointwise complex magnitude sqrt(re^2 + im^2)."""
    _require_same_shape(re, im, "complex_abs")
    _count(2 * re.size)
    mag = np.sqrt(re.data ** 2 + im.data ** 2)
    out = Tensor(mag)
    rd, idd = re.data, im.data

    def bw(g):
        safe = np.where(mag == 0.0, 1.0, mag)
        scale = g / safe
        return (scale * rd, scale * idd)

    _finish("complex_abs", (re, im), (out,), bw)
    return out


# ---------------------------------------------------------------------------
# Patch <-> token reshuffles for the quadratic attention baseline
# ---------------------------------------------------------------------------

def patches_to_tokens(x, patch):
    """(N,C,H,W) -> (N*numpatches, 1, patch*patch, C) token matrices."""
    _check_patch(x.shape, patch, "patches_to_tokens")
    n, c, h, w = x.shape
    p = patch

    def fwd(arr):
        v = arr.reshape(n, c, h // p, p, w // p, p).transpose(0, 2, 4, 3, 5, 1)
        return np.ascontiguousarray(v.reshape(-1, 1, p * p, c))

    out = Tensor(fwd(x.data))
    shape = x.shape

    def bw(g):
        v = g.reshape(n, h // p, w // p, p, p, c).transpose(0, 5, 1, 3, 2, 4)
        return (np.ascontiguousarray(v.reshape(shape)),)

    _finish("patches_to_tokens", (x,), (out,), bw)
    return out


def tokens_to_patches(t, patch, shape):
    """Inverse of patches_to_tokens back onto the (N,C,H,W) grid."""
    n, c, h, w = shape
    p = patch
    if t.shape != ((h // p) * (w // p) * n, 1, p * p, c):
        raise DimensionError(
            f"tokens_to_patches: token tensor {t.shape} does not match grid {shape}")
    v = t.data.reshape(n, h // p, w // p, p, p, c).transpose(0, 5, 1, 3, 2, 4)
    out = Tensor(np.ascontiguousarray(v.reshape(shape)))
    tshape = t.shape

    def bw(g):
        v_ = g.reshape(n, c, h // p, p, w // p, p).transpose(0, 2, 4, 3, 5, 1)
        return (np.ascontiguousarray(v_.reshape(tshape)),)

    _finish("tokens_to_patches", (t,), (out,), bw)
    return out
