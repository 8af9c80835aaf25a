"""2-D FFT over complex grids and feature-map patches.

Radix-2 iterative transforms; grid sides must be powers of two (callers pad).
The forward transform is unnormalized, the inverse applies 1/(H*W). Single
grids travel as ComplexGrid; batched per-patch transforms of tensors are
differentiable and travel as (re, im) tensor pairs.
"""

import numpy as np

from amsaunet import backend as bk
from amsaunet import tensor as T
from amsaunet.errors import DimensionError


class ComplexGrid:
    """H x W complex values as separate row-major float64 planes."""

    __slots__ = ("height", "width", "re", "im")

    def __init__(self, re, im=None):
        re = np.ascontiguousarray(np.asarray(re, dtype=np.float64))
        if re.ndim != 2:
            raise DimensionError(f"ComplexGrid expects a 2-D grid, got rank {re.ndim}")
        if im is None:
            im = np.zeros_like(re)
        else:
            im = np.ascontiguousarray(np.asarray(im, dtype=np.float64))
            if im.shape != re.shape:
                raise DimensionError(
                    f"ComplexGrid: re {re.shape} and im {im.shape} differ")
        self.height, self.width = re.shape
        self.re = re
        self.im = im

    def to_complex(self):
        return self.re + 1j * self.im

    def __repr__(self):
        return f"ComplexGrid({self.height}x{self.width})"


def _require_pow2(h, w, op):
    for name, v in (("height", h), ("width", w)):
        if v < 1 or (v & (v - 1)) != 0:
            raise DimensionError(
                f"{op}: {name} {v} is not a power of two; pad the input first")


def fft2(grid):
    """Unnormalized forward DFT of a real 2-D grid (power-of-two sides)."""
    arr = np.ascontiguousarray(np.asarray(grid, dtype=np.float64))
    if arr.ndim != 2:
        raise DimensionError(f"fft2 expects a 2-D grid, got rank {arr.ndim}")
    h, w = arr.shape
    _require_pow2(h, w, "fft2")
    re, im = bk.fft2_many(arr[None], np.zeros((1, h, w)), False)
    return ComplexGrid(re[0], im[0])


def ifft2(spectrum):
    """Inverse transform with 1/(H*W) normalization; returns the real plane.

    For spectra of real signals the imaginary residue is numerical noise; in
    debug mode it is asserted to stay below 1e-10 instead of being silently
    discarded.
    """
    h, w = spectrum.height, spectrum.width
    _require_pow2(h, w, "ifft2")
    re, im = bk.fft2_many(spectrum.re[None], spectrum.im[None], True)
    if T.debug_checks_enabled():
        residue = np.abs(im[0]).max()
        if residue > 1e-10:
            raise FloatingPointError(
                f"ifft2: imaginary residue {residue:.3e} exceeds 1e-10; "
                "spectrum is not conjugate-symmetric")
    return re[0]


def freq_elementwise_product(a, b, conjugate_b=False):
    """Complex Hadamard product; conjugate_b turns convolution into correlation."""
    if (a.height, a.width) != (b.height, b.width):
        raise DimensionError(
            f"freq_elementwise_product: grids {a.height}x{a.width} and "
            f"{b.height}x{b.width} differ")
    br, bi = (b.re, -b.im) if conjugate_b else (b.re, b.im)
    return ComplexGrid(a.re * br - a.im * bi, a.re * bi + a.im * br)


def fft2_batched(x, patch):
    """Independent per-(batch, channel, patch) forward FFTs of a tensor.

    Differentiable; returns (re, im) tensors with each patch spectrum stored
    in place. Use ``extract_patch_grids`` to view individual spectra.
    """
    return T.fft2_patches(x, patch)


def ifft2_batched(re, im, patch):
    """Inverse of fft2_batched; returns the real plane as a tensor."""
    return T.ifft2_patches(re, im, patch)


def patch_grid_count(shape, patch):
    """Number of ComplexGrids produced per batch item by fft2_batched."""
    n, c, h, w = shape
    if h % patch or w % patch:
        raise DimensionError(
            f"patch_grid_count: {h}x{w} not divisible by patch {patch}")
    return c * (h // patch) * (w // patch)


def extract_patch_grids(re, im, patch):
    """Materialize the per-(batch, channel, patch) ComplexGrids as a list."""
    n, c, h, w = re.shape
    grids = []
    for b in range(n):
        for ch in range(c):
            for py in range(h // patch):
                for px in range(w // patch):
                    sl = (b, ch, slice(py * patch, (py + 1) * patch),
                          slice(px * patch, (px + 1) * patch))
                    grids.append(ComplexGrid(re.data[sl], im.data[sl]))
    return grids
