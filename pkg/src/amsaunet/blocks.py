"""Network building blocks.

SCM feeds downsampled input images into the encoder; FAM fuses them with the
previous encoder scale. DFFN is a feed-forward path whose FFT coefficients
are gated by a learnable complex matrix; FSAS replaces the quadratic QK^T
attention product with an elementwise spectral product per patch. AFF mixes
all encoder scales for a decoder level and Fuse combines that with the
upsampled lower decoder output. BaselineAttention is the quadratic
scaled-dot-product reference used only as an oracle and benchmark baseline.

Blocks register their parameters in a ParamStore under stable dotted paths
and are stateless given those parameters.
"""

import math

import numpy as np

from amsaunet import backend as bk
from amsaunet import tensor as T
from amsaunet.errors import ContractError, DimensionError


class ParamStore:
    """Ordered, named registry of learnable tensors with seeded init."""

    def __init__(self, seed=0):
        self._tensors = {}
        self._rng = np.random.default_rng(seed)

    def register(self, path, array, requires_grad=True):
        if path in self._tensors:
            raise ContractError(f"parameter path {path!r} registered twice")
        t = T.Tensor(array, requires_grad=requires_grad)
        self._tensors[path] = t
        return t

    def uniform(self, path, shape, fan_in):
        bound = 1.0 / math.sqrt(fan_in)
        return self.register(path, self._rng.uniform(-bound, bound, shape))

    def zeros(self, path, shape):
        return self.register(path, np.zeros(shape))

    def ones(self, path, shape):
        return self.register(path, np.ones(shape))

    def __getitem__(self, path):
        return self._tensors[path]

    def __contains__(self, path):
        return path in self._tensors

    def __len__(self):
        return len(self._tensors)

    def names(self):
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def tensors(self):
        return list(self._tensors.values())

    def total_size(self):
        return sum(t.size for t in self._tensors.values())

    def zero_grads(self):
        for t in self._tensors.values():
            t.grad = None

    def load_arrays(self, arrays):
        """Overwrite parameter data from a {path: ndarray} mapping."""
        missing = [p for p in self._tensors if p not in arrays]
        if missing:
            raise ContractError(f"missing parameters in checkpoint: {missing[:3]}")
        for path, t in self._tensors.items():
            arr = np.ascontiguousarray(np.asarray(arrays[path], dtype=np.float64))
            if arr.shape != t.shape:
                raise DimensionError(
                    f"parameter {path}: stored shape {arr.shape} != model shape {t.shape}")
            t.data = arr


class Conv:
    """Conv layer wrapper registering weight/bias under ``path``."""

    def __init__(self, store, path, cin, cout, k, stride=1, padding=None,
                 groups=1):
        self.stride = stride
        self.padding = k // 2 if padding is None else padding
        self.groups = groups
        self.weight = store.uniform(
            f"{path}.weight", (cout, cin // groups, k, k), (cin // groups) * k * k)
        self.bias = store.zeros(f"{path}.bias", (1, cout, 1, 1))

    def __call__(self, x):
        return T.conv2d(x, self.weight, self.bias, self.stride, self.padding,
                        self.groups)


class ConvTranspose:
    """Learned 2x upsampling: kernel 2*stride, padding stride//2."""

    def __init__(self, store, path, cin, cout, stride=2):
        k = 2 * stride
        self.stride = stride
        self.weight = store.uniform(
            f"{path}.weight", (cin, cout, k, k), cin * k * k)
        self.bias = store.zeros(f"{path}.bias", (1, cout, 1, 1))

    def __call__(self, x):
        return T.conv_transpose2d(x, self.weight, self.bias, self.stride)


class ChannelLayerNorm:
    def __init__(self, store, path, dim):
        self.gamma = store.ones(f"{path}.gamma", (1, dim, 1, 1))
        self.beta = store.zeros(f"{path}.beta", (1, dim, 1, 1))

    def __call__(self, x):
        return T.layer_norm_channels(x, self.gamma, self.beta)


class SCM:
    """Shallow feature extractor for a downsampled input image.

    Two (3x3, 1x1) conv pairs with GELU, concatenation with the raw 3-channel
    input, and a final 1x1 projection to the level width.
    """

    def __init__(self, store, path, width):
        inner = width // 2
        self.conv0 = Conv(store, f"{path}.conv0", 3, width // 4, 3)
        self.conv1 = Conv(store, f"{path}.conv1", width // 4, inner, 1)
        self.conv2 = Conv(store, f"{path}.conv2", inner, inner, 3)
        self.conv3 = Conv(store, f"{path}.conv3", inner, width - 3, 1)
        self.proj = Conv(store, f"{path}.proj", width, width, 1)

    def __call__(self, image):
        if image.shape[1] != 3:
            raise DimensionError(
                f"SCM expects a 3-channel image, got channel axis {image.shape[1]}")
        h = T.gelu(self.conv0(image))
        h = T.gelu(self.conv1(h))
        h = T.gelu(self.conv2(h))
        h = T.gelu(self.conv3(h))
        return self.proj(T.concat_channels([h, image]))


class FAM:
    """Modulate the downsampled previous scale with SCM features.

    Elementwise product of the two inputs, a 3x3 conv, and a residual add of
    the previous-scale features.
    """

    def __init__(self, store, path, width):
        self.conv = Conv(store, f"{path}.conv", width, width, 3)

    def __call__(self, scm_out, enc_prev_down):
        if scm_out.shape != enc_prev_down.shape:
            raise DimensionError(
                f"FAM inputs must share shape, got {scm_out.shape} vs "
                f"{enc_prev_down.shape}")
        return T.add(self.conv(T.mul(scm_out, enc_prev_down)), enc_prev_down)


class DFFN:
    """Feed-forward path gated in the frequency domain.

    norm -> 1x1 expand (x2) -> 3x3 depthwise -> per-patch FFT -> learnable
    complex gate per (channel, frequency) -> inverse FFT -> GELU -> 1x1
    contract, added residually to the input. The gate starts at (1, 0), the
    identity, so training begins from a plain conv feed-forward.
    """

    def __init__(self, store, path, dim, patch):
        self.patch = patch
        hidden = dim * 2
        self.norm = ChannelLayerNorm(store, f"{path}.norm", dim)
        self.expand = Conv(store, f"{path}.expand", dim, hidden, 1)
        self.dw = Conv(store, f"{path}.dw", hidden, hidden, 3, groups=hidden)
        self.gate_re = store.ones(f"{path}.gate_re", (1, hidden, patch, patch))
        self.gate_im = store.zeros(f"{path}.gate_im", (1, hidden, patch, patch))
        self.contract = Conv(store, f"{path}.contract", hidden, dim, 1)

    def __call__(self, x):
        p = self.patch
        h = self.dw(self.expand(self.norm(x)))
        re, im = T.fft2_patches(h, p)
        re, im = T.complex_patch_gate(re, im, self.gate_re, self.gate_im, p)
        h = T.ifft2_patches(re, im, p)
        return T.add(x, self.contract(T.gelu(h)))


def fsas_attention_map(q, k, patch, conjugate=True):
    """Spectral attention map: ifft(fft(Q) * fft(K)) / patch area.

    With ``conjugate`` the product conjugates K, giving circular
    cross-correlation; without it, circular convolution.
    """
    qr, qi = T.fft2_patches(q, patch)
    kr, ki = T.fft2_patches(k, patch)
    ar, ai = T.complex_mul(qr, qi, kr, ki, conjugate_b=conjugate)
    a = T.ifft2_patches(ar, ai, patch)
    return T.scalar_mul(a, 1.0 / (patch * patch))


class FSAS:
    """Self-attention with the QK^T product replaced by a spectral product."""

    def __init__(self, store, path, dim, patch, conjugate=True):
        self.dim = dim
        self.patch = patch
        self.conjugate = conjugate
        self.norm = ChannelLayerNorm(store, f"{path}.norm", dim)
        self.qkv = Conv(store, f"{path}.qkv", dim, dim * 3, 1)
        self.dw = Conv(store, f"{path}.dw", dim * 3, dim * 3, 3, groups=dim * 3)
        self.proj = Conv(store, f"{path}.proj", dim, dim, 1)

    def __call__(self, x):
        d = self.dim
        h = self.dw(self.qkv(self.norm(x)))
        q, k, v = T.split_channels(h, [d, d, d])
        a = fsas_attention_map(q, k, self.patch, self.conjugate)
        return T.add(x, self.proj(T.mul(a, v)))


class BaselineAttention:
    """Quadratic scaled dot-product attention over per-patch token matrices.

    Same projection structure as FSAS; the core computes
    softmax(Q K^T / sqrt(C * Hp * Wp)) V per patch. Oracle and benchmark
    baseline only; not part of the deblurring network.
    """

    def __init__(self, store, path, dim, patch):
        self.dim = dim
        self.patch = patch
        self.norm = ChannelLayerNorm(store, f"{path}.norm", dim)
        self.qkv = Conv(store, f"{path}.qkv", dim, dim * 3, 1)
        self.dw = Conv(store, f"{path}.dw", dim * 3, dim * 3, 3, groups=dim * 3)
        self.proj = Conv(store, f"{path}.proj", dim, dim, 1)

    def __call__(self, x, use_fused=None):
        d, p = self.dim, self.patch
        if x.shape[2] % p or x.shape[3] % p:
            raise DimensionError(
                f"BaselineAttention: {x.shape[2]}x{x.shape[3]} not divisible by patch {p}")
        h = self.dw(self.qkv(self.norm(x)))
        q, k, v = T.split_channels(h, [d, d, d])
        scale = math.sqrt(d * p * p)
        if use_fused is None:
            use_fused = T._active_tape() is None
        if use_fused:
            # single fused call; tape recording uses the composable path
            nt = p * p
            npatch = q.shape[0] * (q.shape[2] // p) * (q.shape[3] // p)
            T._count(2 * npatch * nt * nt * d)
            att = T.Tensor(bk.patch_attention(q.data, k.data, v.data, p, scale))
        else:
            qt = T.patches_to_tokens(q, p)
            kt = T.patches_to_tokens(k, p)
            vt = T.patches_to_tokens(v, p)
            scores = T.scalar_mul(T.matmul(qt, T.transpose_hw(kt)), 1.0 / scale)
            out = T.matmul(T.softmax_lastdim(scores), vt)
            att = T.tokens_to_patches(out, p, q.shape)
        return T.add(x, self.proj(att))


class AFF:
    """Mix the three encoder scales into one decoder-level input.

    Sources are resampled to the target scale with fixed bilinear 2x steps,
    concatenated, then projected by a 1x1 conv followed by a 3x3 conv.
    """

    def __init__(self, store, path, widths, target_level, target_width):
        self.target_level = target_level
        total = sum(widths)
        self.conv1 = Conv(store, f"{path}.conv1", total, target_width, 1)
        self.conv3 = Conv(store, f"{path}.conv3", target_width, target_width, 3)

    def _resample(self, x, source_level):
        steps = source_level - self.target_level
        while steps > 0:
            x = T.upsample_bilinear2x(x)
            steps -= 1
        while steps < 0:
            x = T.downsample_bilinear2x(x)
            steps += 1
        return x

    def __call__(self, enc1, enc2, enc3):
        if not (enc1.shape[0] == enc2.shape[0] == enc3.shape[0]):
            raise DimensionError(
                "AFF: batch axis differs across encoder outputs "
                f"({enc1.shape[0]}, {enc2.shape[0]}, {enc3.shape[0]})")
        parts = [
            self._resample(enc, lvl)
            for enc, lvl in ((enc1, 1), (enc2, 2), (enc3, 3))
        ]
        return self.conv3(self.conv1(T.concat_channels(parts)))


class Fuse:
    """Combine AFF output with the upsampled lower decoder output.

    Channel concatenation, a double-width DFFN, then the two halves of its
    output are summed back to the level width.
    """

    def __init__(self, store, path, width, patch):
        self.width = width
        self.dffn = DFFN(store, f"{path}.dffn", width * 2, patch)

    def __call__(self, aff_out, dec_below_up):
        if aff_out.shape[2:] != dec_below_up.shape[2:]:
            raise DimensionError(
                f"Fuse inputs must share spatial dims, got {aff_out.shape} vs "
                f"{dec_below_up.shape}")
        y = self.dffn(T.concat_channels([aff_out, dec_below_up]))
        a, b = T.split_channels(y, [self.width, self.width])
        return T.add(a, b)
