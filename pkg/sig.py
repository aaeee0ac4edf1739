"""
Digital signatures with fixed-length keys and 512-bit signatures.

Ed25519 (deterministic Schnorr signatures over a 255-bit prime-order curve):
32-byte keys, 64-byte signatures, 128-bit security.
"""

import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

logger = logging.getLogger(__name__)

SUPPORTED_SECURITY = 128
KEY_BYTES = 32
SIGNATURE_BYTES = 64
SIGNATURE_BITS = SIGNATURE_BYTES * 8
MAX_MESSAGE_BYTES = 2**32

PathLike = Union[str, Path]


class UnsupportedSecurityError(ValueError):
    """Raised for security levels other than SUPPORTED_SECURITY."""


class KeyFormatError(ValueError):
    """Raised when a key or signature encoding is malformed."""


def _parse_hex(text: str, n_bytes: int, what: str) -> bytes:
    text = text.strip()
    if len(text) != 2 * n_bytes or text != text.lower():
        raise KeyFormatError(f"{what} must be {2 * n_bytes} lowercase hex characters")
    try:
        return bytes.fromhex(text)
    except ValueError as e:
        raise KeyFormatError(f"{what} is not valid hex: {e}") from e


@dataclass(frozen=True)
class PublicKey:
    """Encoded 256-bit Ed25519 verification key."""

    key: bytes

    def __post_init__(self):
        if len(self.key) != KEY_BYTES:
            raise KeyFormatError(f"Public key must be {KEY_BYTES} bytes, got {len(self.key)}")

    def to_hex(self) -> str:
        return self.key.hex()

    @classmethod
    def from_hex(cls, text: str) -> "PublicKey":
        return cls(_parse_hex(text, KEY_BYTES, "Public key"))


@dataclass(frozen=True)
class SecretKey:
    """256-bit Ed25519 seed. Never written into images or payloads."""

    seed: bytes

    def __post_init__(self):
        if len(self.seed) != KEY_BYTES:
            raise KeyFormatError(f"Secret key must be {KEY_BYTES} bytes, got {len(self.seed)}")

    def __repr__(self) -> str:
        return "SecretKey(<redacted>)"

    def _private_key(self) -> Ed25519PrivateKey:
        return Ed25519PrivateKey.from_private_bytes(self.seed)

    def public_key(self) -> PublicKey:
        raw = self._private_key().public_key().public_bytes(
            encoding=serialization.Encoding.Raw, format=serialization.PublicFormat.Raw
        )
        return PublicKey(raw)

    def to_hex(self) -> str:
        return self.seed.hex()

    @classmethod
    def from_hex(cls, text: str) -> "SecretKey":
        return cls(_parse_hex(text, KEY_BYTES, "Secret key"))


@dataclass(frozen=True)
class Signature:
    """Exactly SIGNATURE_BITS bits, stored as bytes."""

    data: bytes

    def __post_init__(self):
        if len(self.data) != SIGNATURE_BYTES:
            raise KeyFormatError(
                f"Signature must be {SIGNATURE_BYTES} bytes, got {len(self.data)}"
            )

    @property
    def bits(self) -> np.ndarray:
        """Signature bits, MSB-first, as a uint8 array of 0/1."""
        return np.unpackbits(np.frombuffer(self.data, dtype=np.uint8))

    @classmethod
    def from_bits(cls, bits: np.ndarray) -> "Signature":
        bits = np.asarray(bits, dtype=np.uint8)
        if bits.size != SIGNATURE_BITS:
            raise KeyFormatError(f"Signature needs {SIGNATURE_BITS} bits, got {bits.size}")
        return cls(np.packbits(bits).tobytes())

    def to_hex(self) -> str:
        return self.data.hex()

    @classmethod
    def from_hex(cls, text: str) -> "Signature":
        return cls(_parse_hex(text, SIGNATURE_BYTES, "Signature"))


def generate(security: int = SUPPORTED_SECURITY) -> Tuple[SecretKey, PublicKey]:
    """
    Generate a fresh keypair from the operating system's CSPRNG.

    Args:
        security: Target security in bits; only 128 is supported

    Returns:
        tuple: (SecretKey, PublicKey)

    Raises:
        UnsupportedSecurityError: If security != 128
    """
    if security != SUPPORTED_SECURITY:
        raise UnsupportedSecurityError(
            f"Unsupported security level {security} (only {SUPPORTED_SECURITY} bits)"
        )
    private = Ed25519PrivateKey.generate()
    sk = SecretKey(
        private.private_bytes(
            encoding=serialization.Encoding.Raw,
            format=serialization.PrivateFormat.Raw,
            encryption_algorithm=serialization.NoEncryption(),
        )
    )
    return sk, sk.public_key()


def derive_secret_key(material: bytes) -> SecretKey:
    """
    Deterministic key from seed material (SHA-256). For reproducible evaluation runs only.
    """
    return SecretKey(hashlib.sha256(material).digest())


def sign(sk: SecretKey, message: bytes) -> Signature:
    """
    Sign a message. Deterministic: the same key and message give the same signature.

    Raises:
        ValueError: If the message is longer than MAX_MESSAGE_BYTES
    """
    if len(message) > MAX_MESSAGE_BYTES:
        raise ValueError(f"Message too long: {len(message)} bytes (max {MAX_MESSAGE_BYTES})")
    return Signature(sk._private_key().sign(bytes(message)))


def verify(pk: PublicKey, message: bytes, sig: Signature) -> bool:
    """
    Check a signature. Malformed keys or signatures verify as False, never raise.
    """
    try:
        Ed25519PublicKey.from_public_bytes(pk.key).verify(sig.data, bytes(message))
        return True
    except (InvalidSignature, ValueError):
        return False


def _write_key_file(path: Path, text: str, force: bool) -> None:
    if path.exists() and not force:
        raise FileExistsError(f"Refusing to overwrite existing key file {path}")
    path.write_text(text + "\n", encoding="ascii")


def write_secret_key(sk: SecretKey, path: PathLike, force: bool = False) -> None:
    """Write a secret key as 64 lowercase hex characters plus newline."""
    _write_key_file(Path(path), sk.to_hex(), force)


def write_public_key(pk: PublicKey, path: PathLike, force: bool = False) -> None:
    """Write a public key as 64 lowercase hex characters plus newline."""
    _write_key_file(Path(path), pk.to_hex(), force)


def read_secret_key(path: PathLike) -> SecretKey:
    return SecretKey.from_hex(Path(path).read_text(encoding="ascii"))


def read_public_key(path: PathLike) -> PublicKey:
    return PublicKey.from_hex(Path(path).read_text(encoding="ascii"))
