"""
Robust embedding: a 64-bit DCT perceptual hash with a Hamming-distance Compare,
and the real-valued surrogate (pre-threshold coefficients) the attack harness scores
and differentiates.

Pipeline: BT.601 luma -> bilinear resize to 32x32 -> 2-D DCT-II -> top-left 8x8
block -> drop DC (63 values) -> threshold at the median. Every stage before the
threshold is linear, so the gradient of the normalized dot product is closed-form.
"""

import enum
import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.fft import dct, dctn

from core_image import LUMA_WEIGHTS, Image, resize_matrix, to_luma

logger = logging.getLogger(__name__)

HASH_BITS = 64
HASH_BYTES = HASH_BITS // 8
HASH_SIZE = 8
RESIZE = 32
SURROGATE_SIZE = HASH_BITS - 1
DEFAULT_TAU = 10

# Values within this distance of the median count as ties (bit 0)
TIE_TOLERANCE = 1e-9

# Transformations the embedding is calibrated against
DECLARED_TRANSFORMS = (
    "jpeg quality >= 85",
    "gaussian noise sigma <= 2",
    "resize scale 0.75 .. 1.25",
    "brightness +/- 10%",
)


class Direction(enum.IntEnum):
    """Gradient direction for surrogate_gradient."""

    ASCENT = 1
    DESCENT = -1


@dataclass(frozen=True)
class CompareParams:
    """Hamming-distance threshold for ref_compare (inclusive)."""

    tau: int = DEFAULT_TAU

    def __post_init__(self):
        if not 0 <= self.tau < HASH_BITS:
            raise ValueError(f"tau must be in [0, {HASH_BITS}), got {self.tau}")


@dataclass(frozen=True, eq=False)
class Embedding:
    """64-bit perceptual hash; bit 0 is the DC slot and always 0."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8).reshape(-1)
        if bits.size != HASH_BITS or np.any(bits > 1):
            raise ValueError(f"Embedding needs {HASH_BITS} binary values")
        bits = bits.copy()
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    def to_bytes(self) -> bytes:
        """8 bytes, MSB-first."""
        return np.packbits(self.bits).tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Embedding":
        if len(data) != HASH_BYTES:
            raise ValueError(f"Embedding needs {HASH_BYTES} bytes, got {len(data)}")
        return cls(np.unpackbits(np.frombuffer(data, dtype=np.uint8)))

    def to_hex(self) -> str:
        return self.to_bytes().hex()

    @classmethod
    def from_hex(cls, text: str) -> "Embedding":
        return cls.from_bytes(bytes.fromhex(text.strip()))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Embedding):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    __hash__ = None

    def __repr__(self) -> str:
        return f"Embedding({self.to_hex()})"


@dataclass(frozen=True, eq=False)
class SurrogateVector:
    """The 63 pre-threshold AC coefficients of the embedding pipeline."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if values.size != SURROGATE_SIZE:
            raise ValueError(f"Surrogate needs {SURROGATE_SIZE} values, got {values.size}")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


def hamming_distance(a: Embedding, b: Embedding) -> int:
    return int(np.count_nonzero(a.bits != b.bits))


def bits_from_values(values: np.ndarray) -> np.ndarray:
    """
    Threshold surrogate values at their median (ties -> 0) and prepend the DC bit.
    """
    values = np.asarray(values, dtype=np.float64)
    median = np.median(values)
    ac_bits = (values - median > TIE_TOLERANCE).astype(np.uint8)
    return np.concatenate([np.zeros(1, dtype=np.uint8), ac_bits])


@lru_cache(maxsize=1)
def _dct_matrix() -> np.ndarray:
    """Orthonormal DCT-II matrix D with D @ x == dct(x, norm='ortho')."""
    matrix = dct(np.eye(RESIZE), norm="ortho", axis=0)
    matrix.setflags(write=False)
    return matrix


def surrogate_values(pixels: np.ndarray) -> np.ndarray:
    """
    Surrogate coefficients of an H x W x 3 array (any numeric dtype, float allowed).
    """
    luma = to_luma(pixels)
    rows = resize_matrix(luma.shape[0], RESIZE)
    cols = resize_matrix(luma.shape[1], RESIZE)
    small = rows @ luma @ cols.T
    coefficients = dctn(small, norm="ortho")
    return coefficients[:HASH_SIZE, :HASH_SIZE].reshape(-1)[1:]


def ref_surrogate(img: Image) -> SurrogateVector:
    return SurrogateVector(surrogate_values(img.pixels))


def ref_embed(img: Image) -> Embedding:
    """
    Perceptual hash of an image of any size.
    """
    return Embedding(bits_from_values(surrogate_values(img.pixels)))


def ref_compare(a: Embedding, b: Embedding, params: CompareParams = CompareParams()) -> bool:
    """True iff the Hamming distance is at most tau."""
    return hamming_distance(a, b) <= params.tau


def _as_values(v) -> np.ndarray:
    if isinstance(v, SurrogateVector):
        return v.values
    return np.asarray(v, dtype=np.float64)


def score(a, b) -> float:
    """
    L2-normalized dot product of two surrogate vectors; 0 if either has zero norm.
    """
    a = _as_values(a)
    b = _as_values(b)
    norm_a = np.linalg.norm(a)
    norm_b = np.linalg.norm(b)
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    return float(np.dot(a, b) / (norm_a * norm_b))


def hamming_score(a: Embedding, b: Embedding) -> float:
    """Compare-based pair score: 1 - distance / 64."""
    return 1.0 - hamming_distance(a, b) / HASH_BITS


def score_gradient(pixels: np.ndarray, other) -> np.ndarray:
    """
    Exact gradient of score(surrogate_values(pixels), other) w.r.t. every channel value.

    Returns:
        np.ndarray: float64 array with the shape of `pixels`
    """
    pixels = np.asarray(pixels, dtype=np.float64)
    a = surrogate_values(pixels)
    b = _as_values(other)
    norm_a = np.linalg.norm(a)
    norm_b = np.linalg.norm(b)
    if norm_a == 0.0 or norm_b == 0.0:
        return np.zeros_like(pixels)

    s = np.dot(a, b) / (norm_a * norm_b)
    d_values = b / (norm_a * norm_b) - s * a / (norm_a * norm_a)

    d_block = np.zeros(HASH_SIZE * HASH_SIZE)
    d_block[1:] = d_values
    d_coefficients = np.zeros((RESIZE, RESIZE))
    d_coefficients[:HASH_SIZE, :HASH_SIZE] = d_block.reshape(HASH_SIZE, HASH_SIZE)
    # coefficients = D @ small @ D.T, small = R @ luma @ C.T; transpose each map back
    dct_matrix = _dct_matrix()
    d_small = dct_matrix.T @ d_coefficients @ dct_matrix
    rows = resize_matrix(pixels.shape[0], RESIZE)
    cols = resize_matrix(pixels.shape[1], RESIZE)
    d_luma = rows.T @ d_small @ cols
    return d_luma[..., None] * LUMA_WEIGHTS


def surrogate_gradient(
    img: Image, other: SurrogateVector, direction: Direction = Direction.ASCENT
) -> np.ndarray:
    """
    Per-pixel gradient of score(ref_surrogate(img), other), signed by direction.

    Returns:
        np.ndarray: H x W x 3 float64 gradient (zero when either surrogate has zero norm)
    """
    return int(direction) * score_gradient(img.pixels, other)
