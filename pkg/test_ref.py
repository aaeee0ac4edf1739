#!/usr/bin/env python3
"""
Test suite for the perceptual embedding, its Compare predicate, the surrogate score
and the closed-form surrogate gradient.
"""

import math

import numpy as np
import pytest

from core_image import CorpusSpec, Image, generate_corpus
from ref import (
    HASH_BITS,
    RESIZE,
    CompareParams,
    Direction,
    Embedding,
    hamming_distance,
    ref_compare,
    ref_embed,
    ref_surrogate,
    score,
    score_gradient,
    surrogate_gradient,
    surrogate_values,
)
from transforms import TransformKind, TransformSpec, apply


def _naive_triangle_weights(n_in: int, n_out: int) -> np.ndarray:
    """Antialiased bilinear weights, one output sample at a time."""
    scale = n_in / n_out
    width = max(scale, 1.0)
    weights = np.zeros((n_out, n_in))
    for i in range(n_out):
        center = (i + 0.5) * scale
        for x in range(n_in):
            weights[i, x] = max(0.0, 1.0 - abs(x + 0.5 - center) / width)
        weights[i] /= weights[i].sum()
    return weights


def _naive_embedding_bits(img: Image) -> np.ndarray:
    """Straight-line reference: explicit luma sum and filter, quadruple-sum DCT, sorted median."""
    pixels = img.pixels.astype(np.float64)
    luma = 0.299 * pixels[..., 0] + 0.587 * pixels[..., 1] + 0.114 * pixels[..., 2]
    rows = _naive_triangle_weights(luma.shape[0], RESIZE)
    cols = _naive_triangle_weights(luma.shape[1], RESIZE)
    small = rows @ luma @ cols.T
    n = RESIZE
    positions = np.arange(n)
    values = []
    for u in range(8):
        for v in range(8):
            if u == 0 and v == 0:
                continue
            au = math.sqrt(1.0 / n) if u == 0 else math.sqrt(2.0 / n)
            av = math.sqrt(1.0 / n) if v == 0 else math.sqrt(2.0 / n)
            total = 0.0
            for x in range(n):
                row = np.cos((2 * positions + 1) * v * math.pi / (2 * n))
                total += math.cos((2 * x + 1) * u * math.pi / (2 * n)) * float(small[x] @ row)
            values.append(au * av * total)
    median = sorted(values)[len(values) // 2]
    return np.array([0] + [1 if value > median else 0 for value in values], dtype=np.uint8)


class TestEmbed:
    """ref_embed pipeline"""

    def test_constant_image_is_all_zero(self):
        img = Image(np.full((64, 64, 3), 128, dtype=np.uint8))
        assert not ref_embed(img).bits.any(), "Constant image must embed to all zeros"

    def test_dc_bit_is_zero(self, small_corpus):
        for img in small_corpus:
            bits = ref_embed(img).bits
            assert bits[0] == 0, "DC slot must be 0"
            assert bits.size == HASH_BITS, f"Embedding has {bits.size} bits"

    def test_naive_oracle(self):
        images = generate_corpus(CorpusSpec(seed=99, count=50, width=64, height=64))
        for n, img in enumerate(images):
            expected = _naive_embedding_bits(img)
            actual = ref_embed(img).bits
            assert np.array_equal(actual, expected), f"Image {n}: {actual} != {expected}"

    def test_any_size(self):
        img = Image(np.random.default_rng(3).integers(0, 256, (37, 91, 3), dtype=np.uint8))
        assert ref_embed(img).bits.size == HASH_BITS, "Odd-sized image must still embed"

    def test_byte_and_hex_round_trip(self, small_corpus):
        e = ref_embed(small_corpus[0])
        assert Embedding.from_bytes(e.to_bytes()) == e, "Bytes round trip failed"
        assert Embedding.from_hex(e.to_hex()) == e, "Hex round trip failed"
        assert len(e.to_bytes()) == 8, "Embedding must pack into 8 bytes"


class TestCompare:
    """ref_compare threshold semantics"""

    def test_identity(self, small_corpus):
        e = ref_embed(small_corpus[0])
        assert ref_compare(e, e), "An embedding must match itself"

    def test_complement(self, small_corpus):
        e = ref_embed(small_corpus[0])
        complement = Embedding(1 - e.bits)
        assert hamming_distance(e, complement) == HASH_BITS, "Complement distance must be 64"
        assert not ref_compare(e, complement), "Complement must not match"

    def test_tau_is_inclusive(self):
        params = CompareParams(tau=10)
        zero = Embedding(np.zeros(HASH_BITS, dtype=np.uint8))
        at_tau = np.zeros(HASH_BITS, dtype=np.uint8)
        at_tau[:10] = 1
        past_tau = at_tau.copy()
        past_tau[10] = 1
        assert ref_compare(zero, Embedding(at_tau), params), "Distance tau must match"
        assert not ref_compare(zero, Embedding(past_tau), params), "Distance tau+1 must not match"

    def test_params_validated(self):
        with pytest.raises(ValueError):
            CompareParams(tau=-1)
        with pytest.raises(ValueError):
            CompareParams(tau=64)


class TestScore:
    """Normalized dot product on surrogate vectors"""

    def test_self_and_negation(self, small_corpus):
        v = ref_surrogate(small_corpus[0]).values
        assert score(v, v) == pytest.approx(1.0), "score(v, v) must be 1"
        assert score(v, -v) == pytest.approx(-1.0), "score(v, -v) must be -1"

    def test_scale_invariance(self, small_corpus):
        a = ref_surrogate(small_corpus[0]).values
        b = ref_surrogate(small_corpus[1]).values
        assert score(3.7 * a, b) == pytest.approx(score(a, b)), "Score must be scale invariant"

    def test_zero_norm(self, small_corpus):
        constant = ref_surrogate(Image(np.full((64, 64, 3), 128, dtype=np.uint8)))
        other = ref_surrogate(small_corpus[0])
        assert constant.norm == pytest.approx(0.0, abs=1e-9), "Constant image surrogate not zero"
        assert score(np.zeros(63), other) == 0.0, "Zero vector must score 0"


class TestGradient:
    """Closed-form gradient of the surrogate score"""

    def test_finite_differences(self, small_corpus):
        rng = np.random.default_rng(5)
        h = 0.5
        for n in range(len(small_corpus) - 1):
            pixels = small_corpus[n].pixels.astype(np.float64)
            other = ref_surrogate(small_corpus[n + 1])
            gradient = score_gradient(pixels, other)
            for _ in range(20):
                index = tuple(int(rng.integers(s)) for s in pixels.shape)
                up = pixels.copy()
                down = pixels.copy()
                up[index] += h
                down[index] -= h
                numeric = (
                    score(surrogate_values(up), other) - score(surrogate_values(down), other)
                ) / (2 * h)
                assert gradient[index] == pytest.approx(numeric, rel=1e-3, abs=1e-10), (
                    f"Image {n} {index}: analytic {gradient[index]} vs numeric {numeric}"
                )

    def test_orthogonal_to_scaling_and_offset(self, small_corpus):
        pixels = small_corpus[0].pixels.astype(np.float64)
        gradient = score_gradient(pixels, ref_surrogate(small_corpus[1]))
        scale = np.abs(gradient).sum() * 255
        assert abs(np.sum(gradient * pixels)) <= 1e-9 * scale, "Score is invariant to scaling"
        assert abs(np.sum(gradient)) <= 1e-9 * scale, "Score is invariant to a global offset"

    def test_zero_other(self, small_corpus):
        gradient = surrogate_gradient(small_corpus[0], np.zeros(63))
        assert not gradient.any(), "Zero target must give a zero gradient"

    def test_direction(self, small_corpus):
        target = ref_surrogate(small_corpus[1])
        ascent = surrogate_gradient(small_corpus[0], target, Direction.ASCENT)
        descent = surrogate_gradient(small_corpus[0], target, Direction.DESCENT)
        assert ascent.shape == small_corpus[0].pixels.shape, f"Wrong shape {ascent.shape}"
        assert np.array_equal(descent, -ascent), "Descent must be the negated ascent"

    def test_infinitesimal_step(self, small_corpus):
        target = ref_surrogate(small_corpus[1])
        for img in small_corpus[2:]:
            pixels = img.pixels.astype(np.float64)
            before = score(surrogate_values(pixels), target)
            gradient = score_gradient(pixels, target)
            step = 1e-3 * np.sign(gradient)
            ascended = score(surrogate_values(pixels + step), target)
            descended = score(surrogate_values(pixels - step), target)
            assert ascended >= before, f"Ascent step lowered the score: {before} -> {ascended}"
            assert descended <= before, f"Descent step raised the score: {before} -> {descended}"


@pytest.mark.slow
class TestCalibration:
    """Embedding stability over the declared transformations"""

    @pytest.fixture(scope="class")
    def images(self):
        return generate_corpus(CorpusSpec(seed=0, count=100))

    @pytest.mark.parametrize(
        "spec",
        [
            TransformSpec(TransformKind.JPEG, quality=90),
            TransformSpec(TransformKind.JPEG, quality=85),
            TransformSpec(TransformKind.GAUSSIAN_NOISE, sigma=2.0),
            TransformSpec(TransformKind.RESIZE, scale=0.75),
            TransformSpec(TransformKind.BRIGHTNESS, delta=25.5),
        ],
        ids=lambda spec: spec.name,
    )
    def test_compare_rate(self, images, spec):
        matches = [ref_compare(ref_embed(img), ref_embed(apply(spec, img))) for img in images]
        rate = sum(matches) / len(matches)
        assert rate >= 0.95, f"{spec.name}: only {rate:.2f} of embeddings survive"

    def test_jpeg_score(self, images):
        jpeg = TransformSpec(TransformKind.JPEG, quality=90)
        scores = [score(ref_surrogate(img), ref_surrogate(apply(jpeg, img))) for img in images]
        rate = np.mean(np.array(scores) >= 0.9)
        assert rate >= 0.95, f"Only {rate:.2f} of q90 pairs score >= 0.9"
