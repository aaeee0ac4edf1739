"""
Shared fixtures: small seeded synthetic corpora and deterministic keypairs.
"""

import numpy as np
import pytest

from core_image import CorpusSpec, generate_corpus
from sig import derive_secret_key


@pytest.fixture(scope="session")
def corpus():
    """Six 256x256 images, the smallest size the watermark channel accepts."""
    return generate_corpus(CorpusSpec(seed=7, count=6))


@pytest.fixture(scope="session")
def small_corpus():
    """Eight 64x64 images for embedding and evaluation tests."""
    return generate_corpus(CorpusSpec(seed=11, count=8, width=64, height=64))


@pytest.fixture(scope="session")
def keypair():
    sk = derive_secret_key(b"hallmark test key 1")
    return sk, sk.public_key()


@pytest.fixture(scope="session")
def other_keypair():
    sk = derive_secret_key(b"hallmark test key 2")
    return sk, sk.public_key()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
