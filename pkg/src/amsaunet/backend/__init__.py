"""Kernel backend selection.

The compiled extension (``amsaunet.backend._core``) is preferred; the numpy
fallback is used when it is missing. Set AMSAUNET_BACKEND=python or
AMSAUNET_BACKEND=compiled to force one side (the latter raises if the
extension failed to build).
"""

import os
import warnings

_requested = os.environ.get("AMSAUNET_BACKEND", "").lower()
if _requested not in ("", "compiled", "python"):
    raise RuntimeError(
        f"AMSAUNET_BACKEND must be 'compiled' or 'python', got {_requested!r}")

if _requested == "python":
    from amsaunet.backend import fallback as _impl
else:
    try:
        from amsaunet.backend import _core as _impl
    except ImportError:
        if _requested == "compiled":
            raise
        warnings.warn(
            "compiled kernel extension not available; using the slower "
            "pure-python backend", RuntimeWarning)
        from amsaunet.backend import fallback as _impl

NAME = _impl.NAME
COMPILED = NAME == "compiled"

im2col = _impl.im2col
col2im = _impl.col2im
dwconv_fwd = _impl.dwconv_fwd
dwconv_gx = _impl.dwconv_gx
dwconv_gw = _impl.dwconv_gw
fft2_many = _impl.fft2_many
fft2_patched_many = _impl.fft2_patched_many
cgate_fwd = _impl.cgate_fwd
cgate_bw = _impl.cgate_bw
bilinear_down2 = _impl.bilinear_down2
bilinear_down2_adjoint = _impl.bilinear_down2_adjoint
bilinear_up2 = _impl.bilinear_up2
bilinear_up2_adjoint = _impl.bilinear_up2_adjoint
attention_tokens = _impl.attention_tokens
patch_attention = _impl.patch_attention
naive_dft2 = _impl.naive_dft2


def get_backend(name):
    """Return the kernel module for ``name`` ('compiled' or 'python')."""
    if name == "python":
        from amsaunet.backend import fallback
        return fallback
    if name == "compiled":
        from amsaunet.backend import _core
        return _core
    raise ValueError(f"unknown backend {name!r}")
