"""Asymmetric multi-scale U-Net for motion deblurring.

Frequency-domain self-attention (FSAS) and a gated frequency feed-forward
network (DFFN) on top of a small self-contained float64 tensor engine with
reverse-mode differentiation. Hot kernels run through a compiled extension
when available, with a pure-numpy fallback.
"""

__version__ = "0.1.0"
