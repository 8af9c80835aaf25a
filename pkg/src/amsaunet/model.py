"""Three-scale asymmetric U-Net assembly.

Encoder levels run DFFN stacks only; decoder levels run FSAS followed by
DFFN, so long-range attention is spent where features are already sharp.
``symmetric_mode`` (ablation) adds FSAS to the encoder as well; ``use_aff``
(ablation) switches the decoder inputs between the multi-scale AFF/Fuse path
and plain upsampling of the level below. Each decoder level emits a restored
image at its own scale, added residually to the blurred pyramid level.
"""

from dataclasses import dataclass, field

from amsaunet import tensor as T
from amsaunet.blocks import (AFF, DFFN, FSAS, Conv, ConvTranspose, Fuse,
                             ParamStore, SCM, FAM)
from amsaunet.errors import ContractError, DimensionError


@dataclass
class ModelConfig:
    levels: int = 3
    base_channels: int = 16
    blocks_per_level: int = 2
    patch: int = 8
    symmetric_mode: bool = False
    use_aff: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.levels != 3:
            raise ContractError(
                f"the architecture is three-scale; levels={self.levels} rejected")
        if not (4 <= self.base_channels <= 64):
            raise ContractError(
                f"base_channels must be in [4, 64], got {self.base_channels}")
        if self.base_channels % 4:
            raise ContractError("base_channels must be a multiple of 4")
        if self.patch < 2 or (self.patch & (self.patch - 1)):
            raise ContractError(f"patch must be a power of two >= 2, got {self.patch}")
        if self.blocks_per_level < 1:
            raise ContractError("blocks_per_level must be >= 1")

    @property
    def widths(self):
        return (self.base_channels, self.base_channels * 2, self.base_channels * 4)


@dataclass
class ModelOutputs:
    restored: list = field(default_factory=list)  # [full, 1/2, 1/4] scales


class _Stage:
    """A stack of (optional FSAS ->) DFFN blocks at one width."""

    def __init__(self, store, prefix, width, patch, count, with_attention):
        self.blocks = []
        for i in range(count):
            fsas = (FSAS(store, f"{prefix}.block{i}.fsas", width, patch)
                    if with_attention else None)
            dffn = DFFN(store, f"{prefix}.block{i}.dffn", width, patch)
            self.blocks.append((fsas, dffn))

    def __call__(self, x):
        for fsas, dffn in self.blocks:
            if fsas is not None:
                x = fsas(x)
            x = dffn(x)
        return x


class AMSAUNet:
    """Asymmetric multi-scale U-Net; construction order fixes parameter paths."""

    def __init__(self, config):
        self.config = config
        self.params = ParamStore(config.seed)
        store = self.params
        c1, c2, c3 = config.widths
        bpl = config.blocks_per_level
        p = config.patch
        enc_attn = config.symmetric_mode

        self.stem = Conv(store, "enc1.stem", 3, c1, 3)
        self.enc1 = _Stage(store, "enc1", c1, p, bpl, enc_attn)
        self.enc2_down = Conv(store, "enc2.down", c1, c2, 3, stride=2)
        self.enc2_scm = SCM(store, "enc2.scm", c2)
        self.enc2_fam = FAM(store, "enc2.fam", c2)
        self.enc2 = _Stage(store, "enc2", c2, p, bpl, enc_attn)
        self.enc3_down = Conv(store, "enc3.down", c2, c3, 3, stride=2)
        self.enc3_scm = SCM(store, "enc3.scm", c3)
        self.enc3_fam = FAM(store, "enc3.fam", c3)
        self.enc3 = _Stage(store, "enc3", c3, p, bpl, enc_attn)

        self.dec3 = _Stage(store, "dec3", c3, p, bpl, True)
        self.head3 = Conv(store, "dec3.head", c3, 3, 3)
        self.up3 = ConvTranspose(store, "dec3.up", c3, c2, stride=2)
        if config.use_aff:
            self.aff2 = AFF(store, "dec2.aff", (c1, c2, c3), 2, c2)
            self.fuse2 = Fuse(store, "dec2.fuse", c2, p)
        self.dec2 = _Stage(store, "dec2", c2, p, bpl, True)
        self.head2 = Conv(store, "dec2.head", c2, 3, 3)
        self.up2 = ConvTranspose(store, "dec2.up", c2, c1, stride=2)
        if config.use_aff:
            self.aff1 = AFF(store, "dec1.aff", (c1, c2, c3), 1, c1)
            self.fuse1 = Fuse(store, "dec1.fuse", c1, p)
        self.dec1 = _Stage(store, "dec1", c1, p, bpl, True)
        self.head1 = Conv(store, "dec1.head", c1, 3, 3)

    def _check_input(self, image):
        n, c, h, w = image.shape
        if c != 3:
            raise DimensionError(f"input must have 3 channels, got {c}")
        multiple = 4 * self.config.patch
        if h % multiple or w % multiple:
            raise DimensionError(
                f"input height/width must be divisible by {multiple}, got {h}x{w}")

    def pyramid(self, image):
        """Blurred-input pyramid at scales 1, 1/2, 1/4."""
        half = T.downsample_bilinear2x(image)
        quarter = T.downsample_bilinear2x(half)
        return [image, half, quarter]

    def encode(self, image):
        """Multi-input encoder; returns (enc1, enc2, enc3, pyramid)."""
        self._check_input(image)
        pyr = self.pyramid(image)
        e1 = self.enc1(self.stem(pyr[0]))
        z2 = self.enc2_fam(self.enc2_scm(pyr[1]), self.enc2_down(e1))
        e2 = self.enc2(z2)
        z3 = self.enc3_fam(self.enc3_scm(pyr[2]), self.enc3_down(e2))
        e3 = self.enc3(z3)
        return e1, e2, e3, pyr

    def decode(self, enc1, enc2, enc3, pyramid):
        """Multi-output decoder; one restored image per scale."""
        cfg = self.config
        d3 = self.dec3(enc3)
        r2 = T.add(self.head3(d3), pyramid[2])
        u3 = self.up3(d3)
        if cfg.use_aff:
            in2 = self.fuse2(self.aff2(enc1, enc2, enc3), u3)
        else:
            in2 = u3
        d2 = self.dec2(in2)
        r1 = T.add(self.head2(d2), pyramid[1])
        u2 = self.up2(d2)
        if cfg.use_aff:
            in1 = self.fuse1(self.aff1(enc1, enc2, enc3), u2)
        else:
            in1 = u2
        d1 = self.dec1(in1)
        r0 = T.add(self.head1(d1), pyramid[0])
        return ModelOutputs(restored=[r0, r1, r2])

    def forward(self, image):
        e1, e2, e3, pyr = self.encode(image)
        return self.decode(e1, e2, e3, pyr)

    __call__ = forward
