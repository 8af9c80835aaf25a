"""Complexity benchmarks and analytic multiply-add counts.

``bench_attention`` times the spectral attention block against the quadratic
scaled-dot-product baseline on identical inputs and fits log-log slopes over
patch pixel counts. The analytic counters below enumerate the same
multiply-add classes the instrumented counter in ``tensor`` records (convs,
matmuls, FFT butterflies, complex products, elementwise products,
normalization scaling); additions, activations, and resampling are excluded
by convention on both sides, so analytic and instrumented totals match
exactly.

``bench_kernels`` compares the compiled kernel extension against the
pure-numpy fallback on the hot kernels.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from amsaunet import backend as bk
from amsaunet import tensor as T
from amsaunet.blocks import FSAS, BaselineAttention, ParamStore
from amsaunet.errors import ContractError


def loglog_slope(ns, ts):
    """Least-squares slope of log(t) against log(n)."""
    return float(np.polyfit(np.log(np.asarray(ns, dtype=float)),
                            np.log(np.asarray(ts, dtype=float)), 1)[0])


def _median_time_ns(fn, repeats):
    fn()  # warm-up, discarded
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter_ns()
        fn()
        times.append(time.perf_counter_ns() - t0)
    return int(np.median(times))


# ---------------------------------------------------------------------------
# Attention complexity benchmark
# ---------------------------------------------------------------------------

@dataclass
class AttentionBenchReport:
    sizes: list
    channels: int
    repeats: int
    median_ns: dict = field(default_factory=dict)  # method -> [ns per size]
    slopes: dict = field(default_factory=dict)

    def rows(self):
        out = []
        for method in ("baseline", "fsas"):
            for n, ns in zip(self.sizes, self.median_ns[method]):
                out.append((method, n, ns, self.slopes[method]))
        return out

    def write_csv(self, fh):
        fh.write("method,n,median_ns,slope\n")
        for method, n, ns, slope in self.rows():
            fh.write(f"{method},{n},{ns},{slope!r}\n")


def bench_attention(sizes, repeats=5, channels=4, seed=0):
    """Median wall time of fsas vs baseline attention per patch pixel count.

    Sizes are patch pixel counts and must be squares of powers of two; each
    run uses a single patch spanning the whole input. Single-threaded
    compiled kernels keep the timings stable.
    """
    if repeats < 5:
        raise ContractError(f"repeats must be >= 5, got {repeats}")
    report = AttentionBenchReport(list(sizes), channels, repeats)
    blocks = {}
    rng = np.random.default_rng(seed)
    for n in sizes:
        p = math.isqrt(n)
        if p * p != n or p < 2 or (p & (p - 1)):
            raise ContractError(
                f"size {n} is not the square of a power of two")
        store = ParamStore(seed)
        blocks[n] = (
            FSAS(store, f"fsas{p}", channels, p),
            BaselineAttention(store, f"base{p}", channels, p),
            T.Tensor(rng.uniform(-1.0, 1.0, (1, channels, p, p))),
        )
    for method in ("baseline", "fsas"):
        times = []
        for n in sizes:
            fsas, base, x = blocks[n]
            block = base if method == "baseline" else fsas
            times.append(_median_time_ns(lambda: block(x), repeats))
        report.median_ns[method] = times
        report.slopes[method] = loglog_slope(sizes, times)
    return report


# ---------------------------------------------------------------------------
# Analytic multiply-add counts (mirror of the instrumented op counters)
# ---------------------------------------------------------------------------

def conv_macs(n, cin, cout, k, ho, wo, groups=1):
    return n * cout * ho * wo * (cin // groups) * k * k


def conv_transpose_macs(n, cin, cout, k, h, w):
    return n * cin * cout * k * k * h * w


def fft_macs(n, c, h, w, p):
    grids = n * c * (h // p) * (w // p)
    pixels = p * p
    return grids * 2 * pixels * int(math.log2(pixels))


def layer_norm_macs(n, c, h, w):
    return 3 * n * c * h * w


def dffn_macs(n, dim, h, w, p):
    hidden = 2 * dim
    return (layer_norm_macs(n, dim, h, w)
            + conv_macs(n, dim, hidden, 1, h, w)
            + conv_macs(n, hidden, hidden, 3, h, w, groups=hidden)
            + 2 * fft_macs(n, hidden, h, w, p)
            + 4 * n * hidden * h * w          # complex gate
            + conv_macs(n, hidden, dim, 1, h, w))


def fsas_macs(n, dim, h, w, p):
    return (layer_norm_macs(n, dim, h, w)
            + conv_macs(n, dim, 3 * dim, 1, h, w)
            + conv_macs(n, 3 * dim, 3 * dim, 3, h, w, groups=3 * dim)
            + 3 * fft_macs(n, dim, h, w, p)   # fft(Q), fft(K), ifft
            + 4 * n * dim * h * w             # spectral product
            + 2 * n * dim * h * w             # area normalization + A * V
            + conv_macs(n, dim, dim, 1, h, w))


def baseline_attention_macs(n, dim, h, w, p):
    patches = n * (h // p) * (w // p)
    tokens = p * p
    return (layer_norm_macs(n, dim, h, w)
            + conv_macs(n, dim, 3 * dim, 1, h, w)
            + conv_macs(n, 3 * dim, 3 * dim, 3, h, w, groups=3 * dim)
            + 2 * patches * tokens * tokens * dim   # QK^T and AV
            + conv_macs(n, dim, dim, 1, h, w))


def scm_macs(n, width, h, w):
    return (conv_macs(n, 3, width // 4, 3, h, w)
            + conv_macs(n, width // 4, width // 2, 1, h, w)
            + conv_macs(n, width // 2, width // 2, 3, h, w)
            + conv_macs(n, width // 2, width - 3, 1, h, w)
            + conv_macs(n, width, width, 1, h, w))


def fam_macs(n, width, h, w):
    return n * width * h * w + conv_macs(n, width, width, 3, h, w)


def aff_macs(n, widths, target_width, h, w):
    return (conv_macs(n, sum(widths), target_width, 1, h, w)
            + conv_macs(n, target_width, target_width, 3, h, w))


def fuse_macs(n, width, h, w, p):
    return dffn_macs(n, 2 * width, h, w, p)


def _stage_macs(n, width, h, w, p, blocks, with_attention):
    per = dffn_macs(n, width, h, w, p)
    if with_attention:
        per += fsas_macs(n, width, h, w, p)
    return blocks * per


def network_macs(config, h, w, batch=1):
    """Analytic forward multiply-add total for one input of h x w pixels."""
    n = batch
    c1, c2, c3 = config.widths
    p = config.patch
    bpl = config.blocks_per_level
    h2, w2, h4, w4 = h // 2, w // 2, h // 4, w // 4
    enc_attn = config.symmetric_mode

    total = conv_macs(n, 3, c1, 3, h, w)
    total += _stage_macs(n, c1, h, w, p, bpl, enc_attn)
    total += conv_macs(n, c1, c2, 3, h2, w2)          # strided feature down
    total += scm_macs(n, c2, h2, w2) + fam_macs(n, c2, h2, w2)
    total += _stage_macs(n, c2, h2, w2, p, bpl, enc_attn)
    total += conv_macs(n, c2, c3, 3, h4, w4)
    total += scm_macs(n, c3, h4, w4) + fam_macs(n, c3, h4, w4)
    total += _stage_macs(n, c3, h4, w4, p, bpl, enc_attn)

    total += _stage_macs(n, c3, h4, w4, p, bpl, True)
    total += conv_macs(n, c3, 3, 3, h4, w4)           # head
    total += conv_transpose_macs(n, c3, c2, 4, h4, w4)
    if config.use_aff:
        total += aff_macs(n, config.widths, c2, h2, w2)
        total += fuse_macs(n, c2, h2, w2, p)
    total += _stage_macs(n, c2, h2, w2, p, bpl, True)
    total += conv_macs(n, c2, 3, 3, h2, w2)
    total += conv_transpose_macs(n, c2, c1, 4, h2, w2)
    if config.use_aff:
        total += aff_macs(n, config.widths, c1, h, w)
        total += fuse_macs(n, c1, h, w, p)
    total += _stage_macs(n, c1, h, w, p, bpl, True)
    total += conv_macs(n, c1, 3, 3, h, w)
    return total


def flop_count(config, method, h=64, w=64, batch=1):
    """Analytic multiply-add count for a named forward pass."""
    if method == "network":
        return network_macs(config, h, w, batch)
    if method == "fsas":
        return fsas_macs(batch, config.base_channels, h, w, config.patch)
    if method == "baseline":
        return baseline_attention_macs(batch, config.base_channels, h, w,
                                       config.patch)
    raise ContractError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# Compiled vs pure-python kernel benchmark
# ---------------------------------------------------------------------------

def bench_kernels(repeats=9, seed=0):
    """Median wall times of each hot kernel under both backends.

    Returns rows (kernel, backend, median_ns). The python rows fall back to
    vectorized numpy; the compiled rows require the extension.
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((4, 16, 64, 64))
    cols = rng.standard_normal((4, 16 * 9, 64 * 64))
    dw_x = rng.standard_normal((4, 32, 64, 64))
    dw_w = rng.standard_normal((32, 1, 3, 3))
    fr = rng.standard_normal((64, 64, 64))
    fi = rng.standard_normal((64, 64, 64))
    up = rng.standard_normal((4, 16, 32, 32))
    q = rng.standard_normal((16, 64, 8))

    cases = {
        "im2col_3x3": lambda m: m.im2col(x, 3, 1, 1),
        "col2im_3x3": lambda m: m.col2im(cols, 16, 64, 64, 3, 1, 1),
        "dwconv_3x3": lambda m: m.dwconv_fwd(dw_x, dw_w),
        "fft2_patch8": lambda m: m.fft2_patched_many(fr, fi, 8, False),
        "fft2_full": lambda m: m.fft2_many(fr, fi, False),
        "bilinear_up2": lambda m: m.bilinear_up2(up),
        "attention_tokens": lambda m: m.attention_tokens(q, q, q, 8.0),
    }
    rows = []
    for name, fn in cases.items():
        for backend_name in ("compiled", "python"):
            try:
                mod = bk.get_backend(backend_name)
            except ImportError:
                continue
            rows.append((name, backend_name,
                         _median_time_ns(lambda: fn(mod), repeats)))
    return rows


def write_kernel_csv(rows, fh):
    fh.write("kernel,backend,median_ns\n")
    for name, backend_name, ns in rows:
        fh.write(f"{name},{backend_name},{ns}\n")
