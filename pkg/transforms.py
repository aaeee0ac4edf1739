"""
Deterministic image transformations for robustness measurement and positive pairs.

Every transform preserves the input dimensions: resize and crop scale back to the
original size so downstream bit layouts still line up.
"""

import enum
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass
from pathlib import Path
from typing import List, Union

import numpy as np
import tomli_w

from core_image import BLOCK_SIZE, Image, block_dct, block_idct, clamp_to_uint8, resize_array

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

MAX_SCALE = 4.0
MAX_BRIGHTNESS_DELTA = 64.0
BRIGHTNESS_STEP = 0.1 * 255  # +/- 10% of full scale
JPEG_COMMON_MIN_QUALITY = 85
NOISE_COMMON_MAX_SIGMA = 2.0

# ITU-T T.81 Annex K example quantization tables
LUMA_QUANT_TABLE = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)
CHROMA_QUANT_TABLE = np.array(
    [
        [17, 18, 24, 47, 99, 99, 99, 99],
        [18, 21, 26, 66, 99, 99, 99, 99],
        [24, 26, 56, 99, 99, 99, 99, 99],
        [47, 66, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
    ],
    dtype=np.float64,
)

# JFIF full-range YCbCr
RGB_TO_YCBCR = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168736, -0.331264, 0.5],
        [0.5, -0.418688, -0.081312],
    ]
)
YCBCR_TO_RGB = np.array(
    [
        [1.0, 0.0, 1.402],
        [1.0, -0.344136, -0.714136],
        [1.0, 1.772, 0.0],
    ]
)
CHROMA_OFFSET = np.array([0.0, 128.0, 128.0])
MCU_SIZE = 2 * BLOCK_SIZE


class TransformParameterError(ValueError):
    """Raised when a transform parameter is outside its declared range."""


class TransformKind(str, enum.Enum):
    IDENTITY = "identity"
    JPEG = "jpeg"
    GAUSSIAN_NOISE = "gaussian_noise"
    RESIZE = "resize"
    CENTER_CROP = "center_crop"
    BRIGHTNESS = "brightness"


# Parameters each kind reads; anything else must stay at its default
_KIND_PARAMS = {
    TransformKind.IDENTITY: (),
    TransformKind.JPEG: ("quality",),
    TransformKind.GAUSSIAN_NOISE: ("sigma", "seed"),
    TransformKind.RESIZE: ("scale",),
    TransformKind.CENTER_CROP: ("keep_fraction",),
    TransformKind.BRIGHTNESS: ("delta",),
}


@dataclass(frozen=True)
class TransformSpec:
    """
    One parameterized transformation. Fully determines the output for a given input.
    """

    kind: TransformKind = TransformKind.IDENTITY
    quality: int = 90
    sigma: float = 1.0
    seed: int = 0
    scale: float = 1.0
    keep_fraction: float = 1.0
    delta: float = 0.0

    def __post_init__(self):
        try:
            kind = TransformKind(self.kind)
        except ValueError as e:
            raise TransformParameterError(f"Unknown transform kind {self.kind!r}") from e
        object.__setattr__(self, "kind", kind)

        if kind is TransformKind.JPEG and not 1 <= self.quality <= 100:
            raise TransformParameterError(f"JPEG quality must be in [1, 100], got {self.quality}")
        if kind is TransformKind.GAUSSIAN_NOISE:
            if not self.sigma > 0:
                raise TransformParameterError(f"Noise sigma must be positive, got {self.sigma}")
            if not 0 <= self.seed < 2**64:
                raise TransformParameterError(f"Noise seed must be a 64-bit value, got {self.seed}")
        if kind is TransformKind.RESIZE and not 0 < self.scale <= MAX_SCALE:
            raise TransformParameterError(
                f"Resize scale must be in (0, {MAX_SCALE}], got {self.scale}"
            )
        if kind is TransformKind.CENTER_CROP and not 0 < self.keep_fraction <= 1:
            raise TransformParameterError(
                f"Crop keep_fraction must be in (0, 1], got {self.keep_fraction}"
            )
        if kind is TransformKind.BRIGHTNESS and not abs(self.delta) <= MAX_BRIGHTNESS_DELTA:
            raise TransformParameterError(
                f"Brightness delta must be in [-{MAX_BRIGHTNESS_DELTA}, "
                f"{MAX_BRIGHTNESS_DELTA}], got {self.delta}"
            )

    @property
    def name(self) -> str:
        """Stable short label used in reports, e.g. jpeg_q90."""
        if self.kind is TransformKind.JPEG:
            return f"jpeg_q{self.quality}"
        if self.kind is TransformKind.GAUSSIAN_NOISE:
            return f"noise_s{self.sigma:g}"
        if self.kind is TransformKind.RESIZE:
            return f"resize_{self.scale:g}"
        if self.kind is TransformKind.CENTER_CROP:
            return f"crop_{self.keep_fraction:g}"
        if self.kind is TransformKind.BRIGHTNESS:
            return f"brightness_{self.delta:+g}"
        return "identity"

    @property
    def is_common(self) -> bool:
        """True if the transform lies in both the embedding and the channel robustness sets."""
        if self.kind is TransformKind.IDENTITY:
            return True
        if self.kind is TransformKind.JPEG:
            return self.quality >= JPEG_COMMON_MIN_QUALITY
        if self.kind is TransformKind.GAUSSIAN_NOISE:
            return self.sigma <= NOISE_COMMON_MAX_SIGMA
        if self.kind is TransformKind.BRIGHTNESS:
            return abs(self.delta) <= BRIGHTNESS_STEP + 1e-9
        return False

    def to_dict(self) -> dict:
        data = {"kind": self.kind.value}
        for param in _KIND_PARAMS[self.kind]:
            data[param] = getattr(self, param)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "TransformSpec":
        data = dict(data)
        kind = data.get("kind", TransformKind.IDENTITY.value)
        try:
            allowed = _KIND_PARAMS[TransformKind(kind)]
        except ValueError as e:
            raise TransformParameterError(f"Unknown transform kind {kind!r}") from e
        extra = set(data) - set(allowed) - {"kind"}
        if extra:
            raise TransformParameterError(
                f"Unexpected parameters for {kind}: {', '.join(sorted(extra))}"
            )
        return cls(**data)


def _quality_scaled_table(table: np.ndarray, quality: int) -> np.ndarray:
    """IJG quality scaling of a base quantization table."""
    factor = 5000 / quality if quality < 50 else 200 - 2 * quality
    return np.clip(np.floor((table * factor + 50) / 100), 1, 255)


def _code_plane(plane: np.ndarray, table: np.ndarray) -> np.ndarray:
    """DCT-quantize-dequantize one level-shifted plane."""
    coefficients = block_dct(plane - 128.0)
    coefficients = np.round(coefficients / table) * table
    return np.clip(np.round(block_idct(coefficients) + 128.0), 0, 255)


def jpeg_roundtrip(pixels: np.ndarray, quality: int) -> np.ndarray:
    """
    Baseline-JPEG-like compression round trip (4:2:0 chroma, Annex K tables).

    Entropy coding is lossless and therefore skipped.

    Args:
        pixels: H x W x 3 uint8 array
        quality: 1..100, IJG scaling

    Returns:
        np.ndarray: H x W x 3 uint8 array
    """
    height, width, _ = pixels.shape
    ycbcr = pixels.astype(np.float64) @ RGB_TO_YCBCR.T + CHROMA_OFFSET
    ycbcr = np.clip(np.round(ycbcr), 0, 255)

    pad_h = -height % MCU_SIZE
    pad_w = -width % MCU_SIZE
    ycbcr = np.pad(ycbcr, ((0, pad_h), (0, pad_w), (0, 0)), mode="edge")
    full_h, full_w, _ = ycbcr.shape

    luma = _code_plane(ycbcr[..., 0], _quality_scaled_table(LUMA_QUANT_TABLE, quality))
    chroma_table = _quality_scaled_table(CHROMA_QUANT_TABLE, quality)
    planes = [luma]
    for c in (1, 2):
        small = ycbcr[..., c].reshape(full_h // 2, 2, full_w // 2, 2).mean(axis=(1, 3))
        coded = _code_plane(small, chroma_table)
        planes.append(np.repeat(np.repeat(coded, 2, axis=0), 2, axis=1))

    decoded = np.stack(planes, axis=-1)[:height, :width]
    rgb = (decoded - CHROMA_OFFSET) @ YCBCR_TO_RGB.T
    return clamp_to_uint8(rgb)


def _scaled_size(n: int, factor: float) -> int:
    return max(1, int(round(n * factor)))


def apply(spec: TransformSpec, img: Image) -> Image:
    """
    Apply a transform. Output dimensions always equal the input dimensions.
    """
    pixels = img.pixels
    height, width = img.height, img.width

    if spec.kind is TransformKind.IDENTITY:
        return img
    if spec.kind is TransformKind.JPEG:
        return Image(jpeg_roundtrip(pixels, spec.quality))
    if spec.kind is TransformKind.GAUSSIAN_NOISE:
        rng = np.random.default_rng(spec.seed)
        noisy = pixels.astype(np.float64) + rng.normal(0.0, spec.sigma, size=pixels.shape)
        return Image.from_array(noisy)
    if spec.kind is TransformKind.RESIZE:
        if spec.scale == 1.0:
            return img
        out_h = _scaled_size(height, spec.scale)
        out_w = _scaled_size(width, spec.scale)
        small = resize_array(pixels, out_h, out_w)
        return Image.from_array(resize_array(small, height, width))
    if spec.kind is TransformKind.CENTER_CROP:
        crop_h = _scaled_size(height, spec.keep_fraction)
        crop_w = _scaled_size(width, spec.keep_fraction)
        top = (height - crop_h) // 2
        left = (width - crop_w) // 2
        cropped = pixels[top : top + crop_h, left : left + crop_w]
        if cropped.shape[:2] == (height, width):
            return img
        return Image.from_array(resize_array(cropped, height, width))
    if spec.kind is TransformKind.BRIGHTNESS:
        return Image.from_array(pixels.astype(np.float64) + spec.delta)
    raise TransformParameterError(f"Unhandled transform kind {spec.kind}")


def standard_suite() -> List[TransformSpec]:
    """The fixed, versioned transformation suite reported with every result."""
    return [
        TransformSpec(TransformKind.IDENTITY),
        TransformSpec(TransformKind.JPEG, quality=95),
        TransformSpec(TransformKind.JPEG, quality=90),
        TransformSpec(TransformKind.JPEG, quality=85),
        TransformSpec(TransformKind.GAUSSIAN_NOISE, sigma=1.0, seed=0),
        TransformSpec(TransformKind.GAUSSIAN_NOISE, sigma=2.0, seed=0),
        TransformSpec(TransformKind.RESIZE, scale=0.75),
        TransformSpec(TransformKind.RESIZE, scale=1.25),
        TransformSpec(TransformKind.CENTER_CROP, keep_fraction=0.9),
        TransformSpec(TransformKind.BRIGHTNESS, delta=BRIGHTNESS_STEP),
    ]


COMMON_TRANSFORMS = tuple(spec.name for spec in standard_suite() if spec.is_common)


def dump_suite(suite: List[TransformSpec], path: PathLike) -> None:
    """Write a transform suite as a TOML array of [[transform]] tables."""
    document = {"transform": [spec.to_dict() for spec in suite]}
    with open(path, "wb") as f:
        tomli_w.dump(document, f)
    logger.info("Wrote %d-transform suite to %s", len(suite), path)


def load_suite(path: PathLike) -> List[TransformSpec]:
    """
    Read a suite written by dump_suite.

    Raises:
        TransformParameterError: If an entry is malformed
    """
    with open(path, "rb") as f:
        document = tomllib.load(f)
    entries = document.get("transform", [])
    if not isinstance(entries, list):
        raise TransformParameterError(f"{path}: 'transform' must be an array of tables")
    return [TransformSpec.from_dict(entry) for entry in entries]
