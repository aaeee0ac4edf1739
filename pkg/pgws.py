"""
Post-hoc watermark channel: block-DCT quantization index modulation on luma.

Each 8x8 luma block offers one carrier slot per configured mid-frequency
coefficient. A seeded permutation spreads k copies of every message bit over the
slots; a copy of bit b is written by quantizing the coefficient onto the lattice
b * step/2 + j * step. Decoding scores each slot by its distance to the two
lattices and sums the scores over the k copies, so one badly disturbed copy
is outvoted by two confident ones.
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence, Tuple

import numpy as np

from core_image import BLOCK_SIZE, Image, ImageTooSmallError, block_dct, block_idct
from core_image import clamp_to_uint8, to_luma
from ref import HASH_BITS
from sig import SIGNATURE_BITS, SUPPORTED_SECURITY, UnsupportedSecurityError

logger = logging.getLogger(__name__)

MIN_CAPACITY = SIGNATURE_BITS + HASH_BITS  # 576
DEFAULT_CAPACITY = 1024
DEFAULT_QIM_STEP = 18.0
DEFAULT_REPETITION = 3
DEFAULT_CARRIERS = ((2, 1), (1, 2), (3, 1), (1, 3))
DEFAULT_PRNG_SEED = 0x68616C6C6D61726B
DEFAULT_MIN_SIZE = 256

# Transformations the channel is calibrated against
DECLARED_TRANSFORMS = (
    "jpeg quality >= 85",
    "gaussian noise sigma <= 2",
    "brightness +/- 10%",
)


class CapacityError(ValueError):
    """Raised when the message does not fit the carrier slots of the minimum image size."""


@dataclass(frozen=True)
class PgwsParams:
    """
    Public parameters of a channel instance. Encoder and decoder must share them.

    carrier_coefficients are (u, v) = (row, column) indices inside each DCT block.
    """

    capacity: int = DEFAULT_CAPACITY
    block_size: int = BLOCK_SIZE
    qim_step: float = DEFAULT_QIM_STEP
    repetition: int = DEFAULT_REPETITION
    carrier_coefficients: Tuple[Tuple[int, int], ...] = field(default=DEFAULT_CARRIERS)
    prng_seed: int = DEFAULT_PRNG_SEED
    min_size: int = DEFAULT_MIN_SIZE

    def __post_init__(self):
        carriers = tuple((int(u), int(v)) for u, v in self.carrier_coefficients)
        object.__setattr__(self, "carrier_coefficients", carriers)
        if self.block_size != BLOCK_SIZE:
            raise ValueError(f"Only {BLOCK_SIZE}x{BLOCK_SIZE} blocks are supported")
        if self.capacity < MIN_CAPACITY:
            raise CapacityError(
                f"Capacity {self.capacity} bits is below signature + embedding ({MIN_CAPACITY})"
            )
        if self.repetition < 1 or self.repetition % 2 == 0:
            raise ValueError(f"Repetition must be an odd positive integer, got {self.repetition}")
        if self.qim_step <= 0:
            raise ValueError(f"QIM step must be positive, got {self.qim_step}")
        if not carriers or len(set(carriers)) != len(carriers):
            raise ValueError("Carrier coefficients must be a non-empty list without duplicates")
        for u, v in carriers:
            if not (0 <= u < self.block_size and 0 <= v < self.block_size) or (u, v) == (0, 0):
                raise ValueError(f"Invalid carrier coefficient {(u, v)}")
        if not 0 <= self.prng_seed < 2**64:
            raise ValueError(f"PRNG seed must be a 64-bit unsigned value, got {self.prng_seed}")
        if self.min_size < self.block_size:
            raise ValueError(f"Minimum image size must be at least {self.block_size}")
        needed = self.capacity * self.repetition
        available = self.slots_for(self.min_size, self.min_size)
        if needed > available:
            raise CapacityError(
                f"{self.capacity} bits x {self.repetition} copies = {needed} slots, but a "
                f"{self.min_size}x{self.min_size} image only has {available}"
            )

    def slots_for(self, height: int, width: int) -> int:
        """Carrier slots available in an image of the given size."""
        blocks = (height // self.block_size) * (width // self.block_size)
        return blocks * len(self.carrier_coefficients)

    def to_dict(self) -> dict:
        return {
            "capacity": self.capacity,
            "block_size": self.block_size,
            "qim_step": self.qim_step,
            "repetition": self.repetition,
            "carrier_coefficients": [list(c) for c in self.carrier_coefficients],
            "prng_seed": self.prng_seed,
            "min_size": self.min_size,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PgwsParams":
        data = dict(data)
        if "carrier_coefficients" in data:
            data["carrier_coefficients"] = tuple(tuple(c) for c in data["carrier_coefficients"])
        if "qim_step" in data:
            data["qim_step"] = float(data["qim_step"])
        return cls(**data)


def qim_quantize(values: np.ndarray, bits: np.ndarray, step: float) -> np.ndarray:
    """Move each value to the nearest point of the lattice for its bit."""
    offset = np.asarray(bits, dtype=np.float64) * (step / 2.0)
    return offset + step * np.round((values - offset) / step)


def qim_read(values: np.ndarray, step: float) -> np.ndarray:
    """Bit of the nearer lattice for each value."""
    return (np.round(values / (step / 2.0)).astype(np.int64) % 2).astype(np.uint8)


def qim_confidence(values: np.ndarray, step: float) -> np.ndarray:
    """
    Soft read of each value in [-step/2, step/2]: positive favours bit 1, negative bit 0.

    The magnitude grows with the distance from the decision boundary at step/4.
    """
    values = np.asarray(values, dtype=np.float64)
    offset = np.abs(values - step * np.round(values / step))
    return 2.0 * offset - step / 2.0


def bit_error_rate(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a).reshape(-1)
    b = np.asarray(b).reshape(-1)
    if a.size != b.size:
        raise ValueError(f"Bit strings differ in length: {a.size} vs {b.size}")
    return float(np.count_nonzero(a != b)) / max(a.size, 1)


class PgwsScheme:
    """
    Encode/decode handles sharing one PgwsParams instance. Immutable after construction.
    """

    def __init__(self, params: PgwsParams = PgwsParams()):
        self.params = params
        self._us = np.array([u for u, _ in params.carrier_coefficients])
        self._vs = np.array([v for _, v in params.carrier_coefficients])
        self.transforms = DECLARED_TRANSFORMS

    @property
    def capacity(self) -> int:
        return self.params.capacity

    @property
    def capacity_slots(self) -> int:
        """Slots used by one message (capacity * repetition)."""
        return self.params.capacity * self.params.repetition

    def slot_permutation(self, height: int, width: int) -> np.ndarray:
        """Seeded slot order for an image size; same seed and size give the same order."""
        return _slot_permutation(self.params.prng_seed, self.params.slots_for(height, width))

    def _check_size(self, img: Image) -> None:
        size = self.params.min_size
        if img.height < size or img.width < size:
            raise ImageTooSmallError(
                f"Image {img.width}x{img.height} is smaller than the {size}x{size} minimum"
            )

    def _carrier_view(self, luma: np.ndarray) -> Tuple[np.ndarray, Tuple[int, int]]:
        block = self.params.block_size
        h = (luma.shape[0] // block) * block
        w = (luma.shape[1] // block) * block
        coefficients = block_dct(luma[:h, :w], block)
        return coefficients, (h, w)

    def _selected_slots(self, img: Image) -> np.ndarray:
        return self.slot_permutation(img.height, img.width)[: self.capacity_slots]

    def _fit_block_range(self, marked: np.ndarray) -> np.ndarray:
        """
        Shift each block that the mark pushes past 0 or 255 back into range.

        A uniform shift of a block only moves its DC coefficient, so the carriers keep
        their lattice points instead of being cut by the final clamp. Blocks that
        overflow on both ends are left to the clamp.
        """
        block = self.params.block_size
        h, w, channels = marked.shape
        blocks = marked.reshape(h // block, block, w // block, block, channels)
        over = np.maximum(blocks.max(axis=(1, 3, 4)) - 255.0, 0.0)
        under = np.maximum(-blocks.min(axis=(1, 3, 4)), 0.0)
        shift = np.where(under == 0.0, -over, np.where(over == 0.0, under, 0.0))
        if not shift.any():
            return marked
        logger.debug("Shifted %d saturated blocks back into range", np.count_nonzero(shift))
        blocks = blocks + shift[:, None, :, None, None]
        return blocks.reshape(h, w, channels)

    def encode(self, img: Image, message: np.ndarray) -> Image:
        """
        Plant a capacity-bit message in the image.

        Raises:
            ImageTooSmallError: If the image is below the minimum size
            ValueError: If the message is not exactly capacity bits
        """
        self._check_size(img)
        message = np.asarray(message, dtype=np.uint8).reshape(-1)
        if message.size != self.params.capacity or np.any(message > 1):
            raise ValueError(
                f"Message must be {self.params.capacity} binary values, got {message.size}"
            )

        luma = to_luma(img.pixels)
        coefficients, (h, w) = self._carrier_view(luma)
        carriers = coefficients[:, :, self._us, self._vs].reshape(-1)

        slots = self._selected_slots(img)
        # Copy r of bit j sits at slots[r * capacity + j]
        copies = np.tile(message, self.params.repetition)
        carriers[slots] = qim_quantize(carriers[slots], copies, self.params.qim_step)
        coefficients[:, :, self._us, self._vs] = carriers.reshape(
            coefficients.shape[0], coefficients.shape[1], -1
        )

        delta = np.zeros_like(luma)
        delta[:h, :w] = block_idct(coefficients) - luma[:h, :w]
        # Equal shifts on R, G, B change luma by exactly delta and leave chroma alone
        marked = img.pixels.astype(np.float64) + delta[..., None]
        marked[:h, :w] = self._fit_block_range(marked[:h, :w])
        logger.debug("PGWS encoded %d bits into %dx%d image", message.size, img.width, img.height)
        return Image(clamp_to_uint8(marked))

    def decode(self, img: Image) -> np.ndarray:
        """
        Recover capacity bits. Total: unwatermarked images decode to arbitrary bits.

        Raises:
            ImageTooSmallError: If the image is below the minimum size
        """
        self._check_size(img)
        luma = to_luma(img.pixels)
        coefficients, _ = self._carrier_view(luma)
        carriers = coefficients[:, :, self._us, self._vs].reshape(-1)

        scores = qim_confidence(carriers[self._selected_slots(img)], self.params.qim_step)
        scores = scores.reshape(self.params.repetition, self.params.capacity)
        return (scores.sum(axis=0) > 0).astype(np.uint8)


@lru_cache(maxsize=16)
def _slot_permutation(seed: int, n_slots: int) -> np.ndarray:
    permutation = np.random.default_rng(seed).permutation(n_slots)
    permutation.setflags(write=False)
    return permutation


def pgws_generate(
    security: int = SUPPORTED_SECURITY,
    params: PgwsParams = PgwsParams(),
    transforms: Sequence[str] = DECLARED_TRANSFORMS,
) -> Tuple[Callable[[Image, np.ndarray], Image], Callable[[Image], np.ndarray]]:
    """
    Build encode and decode handles for a channel instance.

    Capacity feasibility is checked when params is constructed.

    Returns:
        tuple: (encode, decode) bound to one PgwsScheme
    """
    if security != SUPPORTED_SECURITY:
        raise UnsupportedSecurityError(f"Unsupported security level {security}")
    scheme = PgwsScheme(params)
    scheme.transforms = tuple(transforms)
    logger.debug(
        "PGWS instance: capacity=%d repetition=%d step=%.2f transforms=%s",
        params.capacity,
        params.repetition,
        params.qim_step,
        ", ".join(scheme.transforms),
    )
    return scheme.encode, scheme.decode


_DEFAULT_SCHEME = PgwsScheme()


def pgws_encode(img: Image, message: np.ndarray) -> Image:
    """Encode with the default parameters."""
    return _DEFAULT_SCHEME.encode(img, message)


def pgws_decode(img: Image) -> np.ndarray:
    """Decode with the default parameters."""
    return _DEFAULT_SCHEME.decode(img)
