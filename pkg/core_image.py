"""
Image representation and pixel-domain utilities.

Images are H x W x 3 arrays of 8-bit RGB channel values, row-major. PNG is the
only file format; it is lossless on the RGB plane so every bit a watermark writes
survives a save/load cycle.
"""

import logging
import math
import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import List, Union

import numpy as np
from PIL import Image as PILImage
from PIL import ImageDraw
from scipy.fft import dctn, idctn

logger = logging.getLogger(__name__)

CHANNELS = 3
PSNR_IDENTICAL = math.inf
MAX_VALUE = 255.0

# ITU-R BT.601 luma weights
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114], dtype=np.float64)

BLOCK_SIZE = 8

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
PNG_COLOR_RGB = 2
PNG_COLOR_RGBA = 6

DEFAULT_CORPUS_SIZE = 256

PathLike = Union[str, Path]


class ImageFormatError(ValueError):
    """Raised for files that are not 8-bit RGB/RGBA PNGs."""


class DimensionMismatchError(ValueError):
    """Raised when two images must share dimensions and do not."""


class ImageTooSmallError(ValueError):
    """Raised when an image has too few pixels to carry a payload."""


class Image:
    """
    Immutable RGB image with 8-bit channel values.

    The pixel array is copied on construction and marked read-only, so Image
    values can be shared between threads.
    """

    __slots__ = ("_pixels",)

    def __init__(self, pixels: np.ndarray) -> None:
        array = np.asarray(pixels)
        if array.ndim != 3 or array.shape[2] != CHANNELS:
            raise ValueError(f"Image must be H x W x 3, got shape {array.shape}")
        if array.shape[0] < 1 or array.shape[1] < 1:
            raise ValueError(f"Image dimensions must be positive, got {array.shape[:2]}")
        if array.dtype != np.uint8:
            if np.any(array < 0) or np.any(array > 255) or np.any(array != np.round(array)):
                raise ValueError("Image channel values must be integers in [0, 255]")
            array = array.astype(np.uint8)
        array = np.array(array, dtype=np.uint8, copy=True, order="C")
        array.setflags(write=False)
        self._pixels = array

    @classmethod
    def from_array(cls, values: np.ndarray) -> "Image":
        """Round and clamp a real-valued H x W x 3 array into an image."""
        return cls(clamp_to_uint8(values))

    @classmethod
    def from_bytes(cls, width: int, height: int, data: bytes) -> "Image":
        """
        Build an image from row-major RGB bytes.

        Args:
            width: Width in pixels
            height: Height in pixels
            data: width * height * 3 bytes

        Returns:
            Image
        """
        expected = width * height * CHANNELS
        if len(data) != expected:
            raise ValueError(f"Invalid data length: {len(data)} bytes (expected {expected})")
        return cls(np.frombuffer(data, dtype=np.uint8).reshape(height, width, CHANNELS))

    @property
    def pixels(self) -> np.ndarray:
        return self._pixels

    @property
    def width(self) -> int:
        return self._pixels.shape[1]

    @property
    def height(self) -> int:
        return self._pixels.shape[0]

    @property
    def channels(self) -> int:
        return CHANNELS

    @property
    def size(self) -> int:
        """Number of channel values (width * height * 3)."""
        return self._pixels.size

    def to_bytes(self) -> bytes:
        return self._pixels.tobytes()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Image):
            return NotImplemented
        return self._pixels.shape == other._pixels.shape and np.array_equal(
            self._pixels, other._pixels
        )

    __hash__ = None

    def __repr__(self) -> str:
        return f"Image({self.width}x{self.height})"


def _read_png_header(path: Path) -> tuple:
    """
    Read width, height, bit depth and color type from the PNG IHDR chunk.
    """
    with open(path, "rb") as f:
        header = f.read(33)
    if len(header) < 33 or header[:8] != PNG_SIGNATURE or header[12:16] != b"IHDR":
        raise ImageFormatError(f"{path}: not a PNG file")
    # IHDR body: width, height (uint32 BE), bit depth, color type
    width, height, bit_depth, color_type = struct.unpack(">IIBB", header[16:26])
    return width, height, bit_depth, color_type


def load_png(path: PathLike) -> Image:
    """
    Load an 8-bit RGB or RGBA PNG. Alpha is dropped; no color management is applied.

    Args:
        path: PNG file path

    Returns:
        Image with the exact stored pixel values

    Raises:
        OSError: If the file cannot be read
        ImageFormatError: If the file is not an 8-bit RGB/RGBA PNG
    """
    path = Path(path)
    _, _, bit_depth, color_type = _read_png_header(path)
    if bit_depth != 8:
        raise ImageFormatError(f"{path}: unsupported bit depth {bit_depth} (only 8-bit PNGs)")
    if color_type not in (PNG_COLOR_RGB, PNG_COLOR_RGBA):
        raise ImageFormatError(f"{path}: unsupported PNG color type {color_type}")

    with PILImage.open(path) as pil_image:
        pil_image.load()
        if pil_image.mode == "RGBA":
            pil_image = pil_image.convert("RGB")
        elif pil_image.mode != "RGB":
            raise ImageFormatError(f"{path}: unsupported image mode {pil_image.mode}")
        pixels = np.asarray(pil_image, dtype=np.uint8)

    logger.debug("Loaded %s (%dx%d)", path, pixels.shape[1], pixels.shape[0])
    return Image(pixels)


def save_png(img: Image, path: PathLike) -> None:
    """
    Write an image as a lossless 8-bit RGB PNG.

    Raises:
        OSError: On I/O failure
    """
    PILImage.fromarray(img.pixels).save(Path(path), format="PNG")
    logger.debug("Saved %s (%dx%d)", path, img.width, img.height)


def psnr(a: Image, b: Image) -> float:
    """
    Peak signal-to-noise ratio in dB, 10 * log10(255^2 / MSE) over all channel values.

    Returns:
        float: PSNR, or PSNR_IDENTICAL (+inf) for identical images

    Raises:
        DimensionMismatchError: If the images differ in size
    """
    if a.pixels.shape != b.pixels.shape:
        raise DimensionMismatchError(
            f"PSNR needs equal dimensions: {a.width}x{a.height} vs {b.width}x{b.height}"
        )
    diff = a.pixels.astype(np.float64) - b.pixels.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return PSNR_IDENTICAL
    return 10.0 * math.log10(MAX_VALUE * MAX_VALUE / mse)


def lsb_plane(img: Image) -> np.ndarray:
    """Least significant bit of every channel value, raster order."""
    return img.pixels.reshape(-1) & 1


def to_luma(pixels: np.ndarray) -> np.ndarray:
    """BT.601 luma of an H x W x 3 array, as float64."""
    return np.asarray(pixels, dtype=np.float64) @ LUMA_WEIGHTS


def clamp_to_uint8(values: np.ndarray) -> np.ndarray:
    """Round to nearest and clamp into [0, 255]."""
    return np.clip(np.rint(values), 0, 255).astype(np.uint8)


@lru_cache(maxsize=64)
def resize_matrix(n_in: int, n_out: int) -> np.ndarray:
    """
    Bilinear (triangle filter) interpolation matrix of shape (n_out, n_in).

    When shrinking, the filter support widens with the scale factor so every
    input sample contributes (antialiased bilinear). Rows sum to 1 and the
    n_in == n_out matrix is the identity.
    """
    if n_in < 1 or n_out < 1:
        raise ValueError(f"Resize lengths must be positive, got {n_in} -> {n_out}")
    scale = n_in / n_out
    filter_scale = max(scale, 1.0)
    support = filter_scale
    matrix = np.zeros((n_out, n_in), dtype=np.float64)
    for i in range(n_out):
        center = (i + 0.5) * scale
        lo = max(int(center - support + 0.5), 0)
        hi = min(int(center + support + 0.5), n_in)
        xs = np.arange(lo, hi)
        weights = np.maximum(0.0, 1.0 - np.abs((xs + 0.5 - center) / filter_scale))
        total = weights.sum()
        if total == 0.0:
            # Degenerate window; fall back to the nearest sample
            matrix[i, min(int(center), n_in - 1)] = 1.0
        else:
            matrix[i, lo:hi] = weights / total
    matrix.setflags(write=False)
    return matrix


def resize_array(values: np.ndarray, out_height: int, out_width: int) -> np.ndarray:
    """
    Resize a 2-D plane or an H x W x C array with separable bilinear filtering.

    Returns:
        np.ndarray: float64 array of shape (out_height, out_width[, C])
    """
    values = np.asarray(values, dtype=np.float64)
    rows = resize_matrix(values.shape[0], out_height)
    cols = resize_matrix(values.shape[1], out_width)
    if values.ndim == 2:
        return rows @ values @ cols.T
    return np.einsum("ij,jkc,lk->ilc", rows, values, cols, optimize=True)


def block_dct(plane: np.ndarray, block: int = BLOCK_SIZE) -> np.ndarray:
    """
    Orthonormal block DCT-II of a 2-D plane whose sides are multiples of `block`.

    Returns:
        np.ndarray: shape (rows // block, cols // block, block, block)
    """
    h, w = plane.shape
    if h % block or w % block:
        raise ValueError(f"Plane {h}x{w} is not a multiple of the {block}x{block} block")
    blocks = plane.reshape(h // block, block, w // block, block).transpose(0, 2, 1, 3)
    return dctn(blocks, axes=(2, 3), norm="ortho")


def block_idct(coefficients: np.ndarray) -> np.ndarray:
    """Inverse of block_dct, returning the 2-D plane."""
    nbr, nbc, block, _ = coefficients.shape
    blocks = idctn(coefficients, axes=(2, 3), norm="ortho")
    return blocks.transpose(0, 2, 1, 3).reshape(nbr * block, nbc * block)


@dataclass(frozen=True)
class CorpusSpec:
    """
    Seeded description of a synthetic corpus. Identical specs give bit-identical images.
    """

    seed: int
    count: int
    width: int = DEFAULT_CORPUS_SIZE
    height: int = DEFAULT_CORPUS_SIZE

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"Corpus seed must be a 64-bit unsigned value, got {self.seed}")
        if self.count < 0:
            raise ValueError(f"Corpus count must be non-negative, got {self.count}")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"Corpus dimensions must be positive, got {self.width}x{self.height}")


# Low-contrast band around mid-grey; a 10% brightness shift plus the watermark stays
# inside [0, 255]
COLOR_SPREAD = 16
COLOR_LOW = 128 - COLOR_SPREAD // 2
COLOR_HIGH = 128 + COLOR_SPREAD // 2


def _random_color(rng: np.random.Generator) -> tuple:
    return tuple(int(c) for c in rng.integers(COLOR_LOW, COLOR_HIGH + 1, size=3))


def _synthetic_image(rng: np.random.Generator, width: int, height: int) -> Image:
    """
    Procedural image: a soft linear gradient with random rectangles and ellipses on top.
    """
    start = np.array(_random_color(rng), dtype=np.float64)
    drift = rng.uniform(-COLOR_SPREAD / 2, COLOR_SPREAD / 2, size=3)
    end = np.clip(start + drift, COLOR_LOW, COLOR_HIGH)
    angle = rng.uniform(0, 2 * math.pi)

    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    u = xs / max(width - 1, 1) - 0.5
    v = ys / max(height - 1, 1) - 0.5
    t = u * math.cos(angle) + v * math.sin(angle)
    t = (t - t.min()) / max(t.max() - t.min(), 1e-12)
    background = start + t[..., None] * (end - start)

    canvas = PILImage.fromarray(clamp_to_uint8(background))
    draw = ImageDraw.Draw(canvas)
    for _ in range(int(rng.integers(4, 10))):
        w = int(rng.integers(max(width // 8, 1), max(width // 2, 2)))
        h = int(rng.integers(max(height // 8, 1), max(height // 2, 2)))
        x0 = int(rng.integers(-w // 4, max(width - w // 2, 1)))
        y0 = int(rng.integers(-h // 4, max(height - h // 2, 1)))
        box = [x0, y0, x0 + w, y0 + h]
        if rng.random() < 0.5:
            draw.rectangle(box, fill=_random_color(rng))
        else:
            draw.ellipse(box, fill=_random_color(rng))
    return Image(np.asarray(canvas, dtype=np.uint8))


def generate_corpus(spec: CorpusSpec) -> List[Image]:
    """
    Generate the deterministic synthetic corpus described by `spec`.

    Each image draws from its own child seed, so image i does not depend on count.
    """
    children = np.random.SeedSequence(spec.seed).spawn(spec.count)
    corpus = [
        _synthetic_image(np.random.default_rng(child), spec.width, spec.height)
        for child in children
    ]
    logger.info(
        "Generated synthetic corpus: seed=%d count=%d size=%dx%d",
        spec.seed,
        spec.count,
        spec.width,
        spec.height,
    )
    return corpus
