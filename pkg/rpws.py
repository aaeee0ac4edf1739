"""
Robust publicly-detectable watermark.

Watermark: e = ref_embed(x), sigma = sign(sk, e), plant version || sigma || e || crc
through the QIM channel. Detect: decode the frame, verify the signature over the
carried embedding (b1) and compare the carried embedding with a fresh one (b2).
"""

import json
import logging
import struct
import zlib
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from core_image import Image, ImageTooSmallError
from pgws import PgwsParams, PgwsScheme
from ref import CompareParams, Embedding, hamming_distance, ref_compare, ref_embed
from sig import SUPPORTED_SECURITY, PublicKey, SecretKey, Signature, generate, sign, verify

logger = logging.getLogger(__name__)

RPWS_VERSION = 0x02

# Frame layout (big-endian): version, signature, embedding, crc32
# Format: >B64s8sI = uint8, 64 bytes, 8 bytes, uint32
FRAME_FORMAT = ">B64s8sI"
FRAME_BYTES = struct.calcsize(FRAME_FORMAT)  # 77
FRAME_BITS = FRAME_BYTES * 8  # 616
CRC_COVERED_BYTES = FRAME_BYTES - 4

REASON_OK = "ok"
REASON_NO_PAYLOAD = "no payload"
REASON_SIGNATURE = "signature invalid"
REASON_EMBEDDING = "embedding mismatch"


class PayloadError(ValueError):
    """Raised when decoded bits do not hold a valid frame."""


@dataclass(frozen=True)
class RpwsPayload:
    """Signature and embedding carried in the image."""

    signature: Signature
    embedding: Embedding
    version: int = RPWS_VERSION


def encode_payload(payload: RpwsPayload, capacity: int) -> np.ndarray:
    """
    Frame a payload and zero-pad it to the channel capacity.

    Returns:
        np.ndarray: capacity bits (uint8 0/1), MSB-first

    Raises:
        ValueError: If the frame does not fit the capacity
    """
    if capacity < FRAME_BITS:
        raise ValueError(f"Capacity {capacity} bits cannot hold a {FRAME_BITS}-bit frame")
    body = struct.pack(
        ">B64s8s", payload.version, payload.signature.data, payload.embedding.to_bytes()
    )
    frame = body + struct.pack(">I", zlib.crc32(body))
    bits = np.zeros(capacity, dtype=np.uint8)
    bits[:FRAME_BITS] = np.unpackbits(np.frombuffer(frame, dtype=np.uint8))
    return bits


def decode_payload(bits: np.ndarray) -> RpwsPayload:
    """
    Parse a frame from decoded channel bits. Padding after the frame is ignored.

    Raises:
        PayloadError: On short input, wrong version, or checksum mismatch
    """
    bits = np.asarray(bits, dtype=np.uint8).reshape(-1)
    if bits.size < FRAME_BITS:
        raise PayloadError(f"Need at least {FRAME_BITS} bits, got {bits.size}")
    frame = np.packbits(bits[:FRAME_BITS]).tobytes()
    version, signature, embedding, crc = struct.unpack(FRAME_FORMAT, frame)
    if version != RPWS_VERSION:
        raise PayloadError(f"Unknown payload version 0x{version:02x}")
    expected = zlib.crc32(frame[:CRC_COVERED_BYTES])
    if crc != expected:
        raise PayloadError(f"CRC mismatch: 0x{crc:08x} != 0x{expected:08x}")
    return RpwsPayload(Signature(signature), Embedding.from_bytes(embedding), version)


@dataclass(frozen=True)
class DetectionReport:
    """
    Detect outcome with component bits. overall = sig_ok and embed_ok.

    hamming is None when no payload was recovered.
    """

    overall: bool
    sig_ok: bool
    embed_ok: bool
    hamming: Optional[int]
    reason: str

    @property
    def detected(self) -> bool:
        return self.overall

    def to_dict(self) -> dict:
        return {
            "overall": self.overall,
            "sig_ok": self.sig_ok,
            "embed_ok": self.embed_ok,
            "hamming": self.hamming,
            "reason": self.reason,
        }

    def to_json_line(self) -> str:
        return json.dumps(self.to_dict())


NO_PAYLOAD_REPORT = DetectionReport(False, False, False, None, REASON_NO_PAYLOAD)


class RpwsScheme:
    """
    Fixed public scheme parameters (channel + compare threshold). Keys are per call.
    """

    def __init__(
        self,
        pgws_params: PgwsParams = PgwsParams(),
        compare_params: CompareParams = CompareParams(),
    ):
        self.channel = PgwsScheme(pgws_params)
        self.compare_params = compare_params

    def embed_payload(self, img: Image, payload: RpwsPayload) -> Image:
        """Plant an already-built payload (used for honest marking and copy-attack tests)."""
        return self.channel.encode(img, encode_payload(payload, self.channel.capacity))

    def extract_payload(self, img: Image) -> Optional[RpwsPayload]:
        """Decoded payload, or None if the image carries no valid frame."""
        try:
            return decode_payload(self.channel.decode(img))
        except (PayloadError, ImageTooSmallError) as e:
            logger.debug("No payload: %s", e)
            return None

    def watermark(self, sk: SecretKey, img: Image) -> Image:
        """
        Sign the image's embedding and plant signature and embedding.

        Raises:
            ImageTooSmallError: If the image is below the channel's minimum size
        """
        embedding = ref_embed(img)
        signature = sign(sk, embedding.to_bytes())
        marked = self.embed_payload(img, RpwsPayload(signature, embedding))
        logger.debug("RPWS watermark: embedding=%s", embedding.to_hex())
        return marked

    def detect(self, pk: PublicKey, img: Image) -> DetectionReport:
        """Public detection. Never raises on image content."""
        payload = self.extract_payload(img)
        if payload is None:
            return NO_PAYLOAD_REPORT

        sig_ok = verify(pk, payload.embedding.to_bytes(), payload.signature)
        fresh = ref_embed(img)
        embed_ok = ref_compare(fresh, payload.embedding, self.compare_params)
        distance = hamming_distance(fresh, payload.embedding)

        failures = []
        if not sig_ok:
            failures.append(REASON_SIGNATURE)
        if not embed_ok:
            failures.append(REASON_EMBEDDING)
        reason = "; ".join(failures) if failures else REASON_OK
        return DetectionReport(sig_ok and embed_ok, sig_ok, embed_ok, distance, reason)


def rpws_generate(security: int = SUPPORTED_SECURITY) -> Tuple[SecretKey, PublicKey]:
    """Keypair for the scheme; channel and embedding are fixed public parameters."""
    return generate(security)


_DEFAULT_SCHEME = RpwsScheme()


def rpws_watermark(sk: SecretKey, img: Image) -> Image:
    return _DEFAULT_SCHEME.watermark(sk, img)


def rpws_detect(pk: PublicKey, img: Image) -> DetectionReport:
    return _DEFAULT_SCHEME.detect(pk, img)
