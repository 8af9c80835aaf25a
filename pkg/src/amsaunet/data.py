"""Image I/O, synthetic motion blur, pyramids, crops, and dataset iteration.

Only binary netpbm formats (P5 grayscale / P6 RGB, maxval 255) are
supported: bit-exact round trips with no codec dependencies. Pixels are
normalized to [0, 1] at the tensor boundary and de-normalized with clamping
on the way out. All randomness flows through explicitly seeded generators.
"""

import os
from dataclasses import dataclass

import numpy as np

from amsaunet import tensor as T
from amsaunet.errors import ContractError, DatasetError, DimensionError, ParseError

MAX_BLUR_OFFSET = 8


class ImageBuffer:
    """8-bit interleaved raster: pixels (height, width, channels) uint8."""

    __slots__ = ("width", "height", "channels", "pixels")

    def __init__(self, pixels):
        pixels = np.ascontiguousarray(np.asarray(pixels, dtype=np.uint8))
        if pixels.ndim == 2:
            pixels = pixels[:, :, None]
        if pixels.ndim != 3 or pixels.shape[2] not in (1, 3):
            raise DimensionError(
                f"ImageBuffer expects (H, W) or (H, W, 1|3), got {pixels.shape}")
        self.height, self.width, self.channels = pixels.shape
        self.pixels = pixels

    def to_rgb(self):
        """Replicate a grayscale buffer to 3 channels; RGB passes through."""
        if self.channels == 3:
            return self
        return ImageBuffer(np.repeat(self.pixels, 3, axis=2))

    def __eq__(self, other):
        return (isinstance(other, ImageBuffer)
                and self.pixels.shape == other.pixels.shape
                and bool(np.array_equal(self.pixels, other.pixels)))

    def __repr__(self):
        return f"ImageBuffer({self.width}x{self.height}x{self.channels})"


# ---------------------------------------------------------------------------
# Binary PGM (P5) / PPM (P6)
# ---------------------------------------------------------------------------

def _parse_header(blob, path):
    """Parse 'P5|P6 <w> <h> <maxval>' allowing comments; return fields + offset."""
    if len(blob) < 2:
        raise ParseError(f"{path}: truncated header", len(blob))
    magic = blob[:2]
    if magic not in (b"P5", b"P6"):
        raise ParseError(f"{path}: unsupported magic {magic!r}", 0)
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos:pos + 1] == b"#":
            while pos < len(blob) and blob[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(blob) and blob[pos:pos + 1].isdigit():
            pos += 1
        if pos == start:
            raise ParseError(f"{path}: expected integer in header", pos)
        fields.append(int(blob[start:pos]))
    if pos >= len(blob) or not blob[pos:pos + 1].isspace():
        raise ParseError(f"{path}: missing whitespace after maxval", pos)
    pos += 1
    width, height, maxval = fields
    if maxval != 255:
        raise ParseError(f"{path}: unsupported maxval {maxval} (must be 255)",
                         pos - 1)
    if width < 1 or height < 1:
        raise ParseError(f"{path}: non-positive dimensions {width}x{height}", pos)
    return magic, width, height, pos


def read_image(path):
    """Read a binary PGM/PPM file into an ImageBuffer (exact pixel recovery)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    magic, width, height, offset = _parse_header(blob, path)
    channels = 3 if magic == b"P6" else 1
    need = width * height * channels
    payload = blob[offset:offset + need]
    if len(payload) < need:
        raise ParseError(
            f"{path}: truncated payload ({len(payload)} of {need} bytes)",
            offset + len(payload))
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels)
    return ImageBuffer(pixels)


def write_image(buf, path):
    """Write an ImageBuffer as binary PPM (3ch) or PGM (1ch), maxval 255."""
    magic = b"P6" if buf.channels == 3 else b"P5"
    header = magic + b"\n%d %d\n255\n" % (buf.width, buf.height)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(buf.pixels.tobytes())


# ---------------------------------------------------------------------------
# Synthetic motion blur (frame averaging along a trajectory)
# ---------------------------------------------------------------------------

@dataclass
class BlurSpec:
    frames: int
    trajectory: list  # [(dx, dy)] integer offsets, length == frames
    seed: int = 0

    def __post_init__(self):
        if self.frames < 1:
            raise ContractError(f"frames must be >= 1, got {self.frames}")
        if len(self.trajectory) != self.frames:
            raise ContractError(
                f"trajectory length {len(self.trajectory)} != frames {self.frames}")
        for dx, dy in self.trajectory:
            if abs(dx) > MAX_BLUR_OFFSET or abs(dy) > MAX_BLUR_OFFSET:
                raise ContractError(
                    f"offset ({dx},{dy}) exceeds +-{MAX_BLUR_OFFSET} pixels")


def linear_trajectory(frames, step):
    """Straight line with per-frame step (sx, sy): offsets i*(sx, sy)."""
    sx, sy = step
    return [(i * sx, i * sy) for i in range(frames)]


def random_blur_spec(frames, rng):
    """Random straight-line BlurSpec with a unit step in one of 8 directions."""
    directions = [(1, 0), (-1, 0), (0, 1), (0, -1),
                  (1, 1), (1, -1), (-1, 1), (-1, -1)]
    step = directions[int(rng.integers(0, len(directions)))]
    return BlurSpec(frames, linear_trajectory(frames, step))


def _shift_clamped(pixels, dx, dy):
    """Translate content by (dx, dy) with edge clamping."""
    h, w = pixels.shape[:2]
    ys = np.clip(np.arange(h) - dy, 0, h - 1)
    xs = np.clip(np.arange(w) - dx, 0, w - 1)
    return pixels[np.ix_(ys, xs)]


def round_half_away(values):
    """Round half away from zero (values assumed non-negative here)."""
    return np.floor(values + 0.5)


def synthesize_blur(sharp, spec):
    """Average ``spec.frames`` edge-clamped shifts of the sharp image.

    Frames are accumulated in float and rounded half away from zero back
    to 8 bits.
    """
    acc = np.zeros(sharp.pixels.shape, dtype=np.float64)
    for dx, dy in spec.trajectory:
        acc += _shift_clamped(sharp.pixels, dx, dy)
    acc /= spec.frames
    return ImageBuffer(round_half_away(acc).astype(np.uint8))


# ---------------------------------------------------------------------------
# Tensor boundary
# ---------------------------------------------------------------------------

def to_tensor(buf):
    """ImageBuffer -> (1, C, H, W) tensor in [0, 1]."""
    arr = buf.pixels.astype(np.float64) / 255.0
    return T.Tensor(arr.transpose(2, 0, 1)[None])


def batch_to_tensor(bufs):
    arrs = [b.pixels.astype(np.float64).transpose(2, 0, 1) / 255.0 for b in bufs]
    return T.Tensor(np.stack(arrs))


def from_tensor(t, index=0):
    """(N, C, H, W) tensor in [0, 1] -> ImageBuffer (clamped, rounded)."""
    arr = np.clip(t.data[index], 0.0, 1.0) * 255.0
    return ImageBuffer(round_half_away(arr).astype(np.uint8).transpose(1, 2, 0))


def build_pyramid(image):
    """Tensor pyramid at scales 1, 1/2, 1/4 via bilinear downsampling."""
    n, c, h, w = image.shape
    if h % 4 or w % 4:
        raise DimensionError(
            f"build_pyramid: height/width must be divisible by 4, got {h}x{w}")
    half = T.downsample_bilinear2x(image)
    quarter = T.downsample_bilinear2x(half)
    return [image, half, quarter]


def random_crop_pair(blur, sharp, size, rng):
    """Identical random crop window applied to a blur/sharp pair."""
    if (blur.width, blur.height) != (sharp.width, sharp.height):
        raise ContractError(
            f"pair dims differ: {blur.width}x{blur.height} vs "
            f"{sharp.width}x{sharp.height}")
    if blur.width < size or blur.height < size:
        raise ContractError(
            f"image {blur.width}x{blur.height} smaller than crop {size}")
    y0 = int(rng.integers(0, blur.height - size + 1))
    x0 = int(rng.integers(0, blur.width - size + 1))
    bwin = ImageBuffer(blur.pixels[y0:y0 + size, x0:x0 + size])
    swin = ImageBuffer(sharp.pixels[y0:y0 + size, x0:x0 + size])
    return to_tensor(bwin), to_tensor(swin)


# ---------------------------------------------------------------------------
# Paired dataset over two directories
# ---------------------------------------------------------------------------

class PairDataset:
    """Blur/sharp file pairs matched by filename across two directories."""

    def __init__(self, dir_blur, dir_sharp):
        self.dir_blur = dir_blur
        self.dir_sharp = dir_sharp
        blur_files = sorted(
            f for f in os.listdir(dir_blur) if f.endswith((".ppm", ".pgm")))
        sharp_files = set(
            f for f in os.listdir(dir_sharp) if f.endswith((".ppm", ".pgm")))
        if not blur_files:
            raise DatasetError(f"no .ppm/.pgm files in {dir_blur}")
        for f in blur_files:
            if f not in sharp_files:
                raise DatasetError(f"missing sharp counterpart for {f}")
        for f in sorted(sharp_files):
            if f not in blur_files:
                raise DatasetError(f"missing blur counterpart for {f}")
        self.names = blur_files

    def __len__(self):
        return len(self.names)

    def subset(self, names):
        """Same directories, restricted to ``names`` (order preserved)."""
        sub = PairDataset.__new__(PairDataset)
        sub.dir_blur, sub.dir_sharp = self.dir_blur, self.dir_sharp
        sub.names = list(names)
        return sub

    def load_pair(self, name):
        blur = read_image(os.path.join(self.dir_blur, name)).to_rgb()
        sharp = read_image(os.path.join(self.dir_sharp, name)).to_rgb()
        return blur, sharp

    def epoch_order(self, seed, epoch):
        """Shuffled name order for one epoch; a pure function of (seed, epoch)."""
        rng = np.random.default_rng([seed, epoch])
        order = list(self.names)
        rng.shuffle(order)
        return order

    def iter_epoch(self, seed, epoch, batch, crop):
        """Yield (blur, sharp) crop batches; the last partial batch is dropped."""
        order = self.epoch_order(seed, epoch)
        crop_rng = np.random.default_rng([seed, epoch, 1])
        for start in range(0, len(order) - batch + 1, batch):
            bs, ss = [], []
            for name in order[start:start + batch]:
                blur, sharp = self.load_pair(name)
                bt, st = random_crop_pair(blur, sharp, crop, crop_rng)
                bs.append(bt.data[0])
                ss.append(st.data[0])
            yield T.Tensor(np.stack(bs)), T.Tensor(np.stack(ss))


# ---------------------------------------------------------------------------
# Procedural textures for the synthetic dataset
# ---------------------------------------------------------------------------

def random_texture(size, rng):
    """Edge-rich random RGB test card: gradient background, boxes, disks."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / size
    img = np.empty((size, size, 3))
    for ch in range(3):
        gx, gy = rng.uniform(-1, 1, 2)
        img[:, :, ch] = 0.5 + 0.25 * (gx * xx + gy * yy)
    for _ in range(int(rng.integers(6, 12))):
        color = rng.uniform(0, 1, 3)
        if rng.integers(0, 2) == 0:
            y0, x0 = rng.integers(0, size, 2)
            hh, ww = rng.integers(size // 8, size // 2, 2)
            img[y0:y0 + hh, x0:x0 + ww] = color
        else:
            cy, cx = rng.integers(0, size, 2)
            r = int(rng.integers(size // 10, size // 3))
            mask = (yy * size - cy) ** 2 + (xx * size - cx) ** 2 <= r * r
            img[mask] = color
    img = np.clip(img, 0.0, 1.0) * 255.0
    return ImageBuffer(round_half_away(img).astype(np.uint8))
