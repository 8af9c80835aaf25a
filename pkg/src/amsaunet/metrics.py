"""PSNR and single-scale SSIM over 8-bit image buffers."""

import math

import numpy as np

from amsaunet.errors import ContractError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
DYNAMIC_RANGE = 255.0

REC601_WEIGHTS = (0.299, 0.587, 0.114)


def _check_pair(a, b, op):
    if (a.width, a.height, a.channels) != (b.width, b.height, b.channels):
        raise ContractError(
            f"{op}: image dims differ ({a.width}x{a.height}x{a.channels} vs "
            f"{b.width}x{b.height}x{b.channels})")


def psnr(a, b):
    """Peak signal-to-noise ratio in dB; +inf for identical images."""
    _check_pair(a, b, "psnr")
    diff = a.pixels.astype(np.float64) - b.pixels.astype(np.float64)
    mse = np.mean(diff * diff)
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(DYNAMIC_RANGE ** 2 / mse)


def _luma(buf):
    px = buf.pixels.astype(np.float64)
    if buf.channels == 1:
        return px[:, :, 0]
    r, g, b = REC601_WEIGHTS
    return r * px[:, :, 0] + g * px[:, :, 1] + b * px[:, :, 2]


def _gaussian1d(size, sigma):
    half = (size - 1) / 2.0
    x = np.arange(size) - half
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img, kern):
    """Separable weighted sums over valid windows."""
    v = np.lib.stride_tricks.sliding_window_view(img, kern.size, axis=0)
    rows = v @ kern
    v = np.lib.stride_tricks.sliding_window_view(rows, kern.size, axis=1)
    return v @ kern


def ssim(a, b):
    """Mean structural similarity (Gaussian 11x11 window, sigma 1.5, L=255).

    RGB inputs are reduced to Rec.601 luma first.
    """
    _check_pair(a, b, "ssim")
    if a.width < SSIM_WINDOW or a.height < SSIM_WINDOW:
        raise ContractError(
            f"ssim: image must be at least {SSIM_WINDOW}x{SSIM_WINDOW}, got "
            f"{a.width}x{a.height}")
    x = _luma(a)
    y = _luma(b)
    kern = _gaussian1d(SSIM_WINDOW, SSIM_SIGMA)
    c1 = (SSIM_K1 * DYNAMIC_RANGE) ** 2
    c2 = (SSIM_K2 * DYNAMIC_RANGE) ** 2
    mu_x = _filter_valid(x, kern)
    mu_y = _filter_valid(y, kern)
    sxx = _filter_valid(x * x, kern) - mu_x * mu_x
    syy = _filter_valid(y * y, kern) - mu_y * mu_y
    sxy = _filter_valid(x * y, kern) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * sxy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))
