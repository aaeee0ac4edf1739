"""
Fragile publicly-detectable watermark: a signature over the high bits of every
channel value, written into the least significant bits.

LSB layout (raster order over all channel values, R, G, B per pixel):
    [8-bit version = 0x01][512 signature bits, MSB-first][0 for every remaining LSB]

Setting an LSB never changes value // 2, so the signed hash is identical before and
after watermarking and any detector can recompute it.
"""

import logging

import numpy as np

from core_image import Image, ImageTooSmallError
from sig import SIGNATURE_BITS, PublicKey, SecretKey, Signature, sign, verify

logger = logging.getLogger(__name__)

LSB_VERSION = 0x01
VERSION_BITS = 8
PAYLOAD_BITS = VERSION_BITS + SIGNATURE_BITS  # 520


def high_bit_hash(img: Image) -> bytes:
    """
    Concatenate value // 2 of every channel value as 7-bit big-endian fields.

    Returns:
        bytes: ceil(width * height * 3 * 7 / 8) bytes, zero-padded in the last byte
    """
    high = (img.pixels.reshape(-1) >> 1).astype(np.uint8)
    # Drop the leading (always zero) bit of each byte to get the 7-bit fields
    bits = np.unpackbits(high[:, None], axis=1)[:, 1:]
    return np.packbits(bits.reshape(-1)).tobytes()


def _layout_bits(sig: Signature) -> np.ndarray:
    version = np.unpackbits(np.array([LSB_VERSION], dtype=np.uint8))
    return np.concatenate([version, sig.bits])


def lsb_watermark(sk: SecretKey, img: Image) -> Image:
    """
    Sign the high-bit hash and write version + signature into the LSB plane.

    Every channel value changes by at most 1, so PSNR >= 48.13 dB.

    Raises:
        ImageTooSmallError: If the image has fewer than 520 channel values
    """
    if img.size < PAYLOAD_BITS:
        raise ImageTooSmallError(
            f"Image {img.width}x{img.height} has {img.size} channel values, "
            f"LSB payload needs {PAYLOAD_BITS}"
        )
    sigma = sign(sk, high_bit_hash(img))

    lsb = np.zeros(img.size, dtype=np.uint8)
    lsb[:PAYLOAD_BITS] = _layout_bits(sigma)

    flat = img.pixels.reshape(-1)
    marked = (flat & 0xFE) | lsb
    logger.debug("LSB watermark written (%dx%d)", img.width, img.height)
    return Image(marked.reshape(img.pixels.shape))


def read_lsb_signature(img: Image):
    """
    Read the version byte and signature from the LSB plane.

    Returns:
        Signature, or None if the image is too small or the version byte is wrong
    """
    if img.size < PAYLOAD_BITS:
        return None
    lsb = img.pixels.reshape(-1)[:PAYLOAD_BITS] & 1
    version = int(np.packbits(lsb[:VERSION_BITS])[0])
    if version != LSB_VERSION:
        return None
    return Signature.from_bits(lsb[VERSION_BITS:])


def lsb_detect(pk: PublicKey, img: Image) -> bool:
    """
    Public detection: verify the LSB signature against the recomputed high-bit hash.

    All failures (undersized image, wrong version, bad signature) return False.
    """
    sigma = read_lsb_signature(img)
    if sigma is None:
        return False
    return verify(pk, high_bit_hash(img), sigma)
