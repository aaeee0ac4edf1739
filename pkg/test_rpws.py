#!/usr/bin/env python3
"""
Test suite for the robust publicly-detectable watermark and its payload frame.
"""

import json

import numpy as np
import pytest

from core_image import CorpusSpec, Image, ImageTooSmallError, generate_corpus, psnr
from pgws import DEFAULT_CAPACITY
from ref import Embedding, ref_embed
from rpws import (
    FRAME_BITS,
    NO_PAYLOAD_REPORT,
    REASON_EMBEDDING,
    REASON_NO_PAYLOAD,
    REASON_OK,
    REASON_SIGNATURE,
    RPWS_VERSION,
    PayloadError,
    RpwsPayload,
    RpwsScheme,
    decode_payload,
    encode_payload,
    rpws_detect,
    rpws_generate,
    rpws_watermark,
)
from sig import derive_secret_key, sign
from transforms import TransformKind, TransformSpec, apply


@pytest.fixture(scope="module")
def scheme():
    return RpwsScheme()


@pytest.fixture(scope="module")
def marked(corpus, keypair):
    sk, _ = keypair
    return [rpws_watermark(sk, img) for img in corpus]


def _payload(sk, seed: int = 0) -> RpwsPayload:
    bits = np.random.default_rng(seed).integers(0, 2, size=64, dtype=np.uint8)
    embedding = Embedding(bits)
    return RpwsPayload(sign(sk, embedding.to_bytes()), embedding)


class TestPayloadFrame:
    """Version, signature, embedding and CRC framing"""

    def test_frame_fits_capacity(self):
        assert FRAME_BITS == 616, f"Frame is {FRAME_BITS} bits"
        assert FRAME_BITS <= DEFAULT_CAPACITY, "Frame must fit the default channel"

    def test_round_trip_ignores_padding(self, keypair):
        payload = _payload(keypair[0])
        bits = encode_payload(payload, DEFAULT_CAPACITY)
        assert bits.size == DEFAULT_CAPACITY, f"Got {bits.size} bits"
        assert not bits[FRAME_BITS:].any(), "Padding must be zero"
        bits[FRAME_BITS:] = 1
        assert decode_payload(bits) == payload, "Padding content must not matter"

    def test_crc_detects_corruption(self, keypair):
        bits = encode_payload(_payload(keypair[0]), DEFAULT_CAPACITY)
        for position in (8, 300, 530, 600):
            corrupted = bits.copy()
            corrupted[position] ^= 1
            with pytest.raises(PayloadError):
                decode_payload(corrupted)

    def test_wrong_version(self, keypair):
        payload = _payload(keypair[0])
        bits = encode_payload(
            RpwsPayload(payload.signature, payload.embedding, version=RPWS_VERSION + 1),
            DEFAULT_CAPACITY,
        )
        with pytest.raises(PayloadError):
            decode_payload(bits)

    def test_short_input(self):
        with pytest.raises(PayloadError):
            decode_payload(np.zeros(FRAME_BITS - 1, dtype=np.uint8))

    def test_capacity_too_small(self, keypair):
        with pytest.raises(ValueError):
            encode_payload(_payload(keypair[0]), FRAME_BITS - 8)


class TestWatermarkDetect:
    """Honest marking and detection"""

    def test_correctness(self, marked, keypair):
        _, pk = keypair
        for n, img in enumerate(marked):
            report = rpws_detect(pk, img)
            assert report.overall, f"Image {n} not detected: {report.reason}"
            assert (report.sig_ok, report.embed_ok) == (True, True), f"Image {n}: {report}"
            assert report.reason == REASON_OK, f"Unexpected reason {report.reason!r}"

    def test_psnr_floor(self, marked, corpus):
        for n, (img, out) in enumerate(zip(corpus, marked)):
            assert psnr(img, out) >= 38.0, f"Image {n}: PSNR {psnr(img, out):.2f}"

    def test_deterministic(self, corpus, keypair):
        sk, _ = keypair
        assert rpws_watermark(sk, corpus[0]) == rpws_watermark(sk, corpus[0]), "Not deterministic"

    def test_carries_signed_embedding(self, scheme, marked, corpus, keypair):
        sk, _ = keypair
        payload = scheme.extract_payload(marked[0])
        assert payload is not None, "Watermarked image must carry a payload"
        assert payload.embedding == ref_embed(corpus[0]), "Payload must hold the original embedding"
        assert payload.signature == sign(sk, payload.embedding.to_bytes()), "Wrong signature"

    def test_cross_key_matrix(self, corpus, keypair, other_keypair):
        keys = (keypair, other_keypair)
        for i, (sk, _) in enumerate(keys):
            img = rpws_watermark(sk, corpus[1])
            for j, (_, pk) in enumerate(keys):
                report = rpws_detect(pk, img)
                assert report.overall == (i == j), f"Key {i} detected under key {j}: {report}"
                if i != j:
                    assert not report.sig_ok and report.embed_ok, f"Wrong bits: {report}"
                    assert report.reason == REASON_SIGNATURE, f"Reason {report.reason!r}"

    def test_unwatermarked(self, corpus, keypair):
        _, pk = keypair
        for img in corpus:
            report = rpws_detect(pk, img)
            assert report == NO_PAYLOAD_REPORT, f"Plain image gave {report}"
            assert report.reason == REASON_NO_PAYLOAD and report.hamming is None, f"{report}"

    def test_too_small(self, keypair):
        sk, pk = keypair
        img = Image(np.zeros((128, 128, 3), dtype=np.uint8))
        with pytest.raises(ImageTooSmallError):
            rpws_watermark(sk, img)
        assert not rpws_detect(pk, img).overall, "Undersized image must not detect"

    def test_report_json(self, marked, keypair):
        line = rpws_detect(keypair[1], marked[0]).to_json_line()
        data = json.loads(line)
        assert set(data) == {"overall", "sig_ok", "embed_ok", "hamming", "reason"}, f"{data}"
        assert "\n" not in line, "Report must be a single line"

    def test_generate(self):
        (sk1, pk1), (sk2, pk2) = rpws_generate(), rpws_generate()
        assert pk1 != pk2, "Independent keypairs expected"
        assert sk1.public_key() == pk1, "Public key must match the secret key"


class TestAttacks:
    """Copy attacks and destructive transformations"""

    def test_copy_attack_onto_inverted_image(self, scheme, marked, corpus, keypair):
        _, pk = keypair
        for source, original in zip(marked, corpus):
            payload = scheme.extract_payload(source)
            victim = Image(255 - original.pixels)
            report = scheme.detect(pk, scheme.embed_payload(victim, payload))
            assert not report.overall, f"Copy attack detected: {report}"
            assert report.sig_ok and not report.embed_ok, f"Expected the embedding branch: {report}"
            assert report.reason == REASON_EMBEDDING, f"Reason {report.reason!r}"

    def test_copy_attack_onto_other_images(self, scheme, marked, corpus, keypair):
        _, pk = keypair
        payload = scheme.extract_payload(marked[0])
        for victim in corpus[1:]:
            report = scheme.detect(pk, scheme.embed_payload(victim, payload))
            assert not report.overall, f"Copy attack detected: {report}"
            assert report.sig_ok and not report.embed_ok, f"Expected the embedding branch: {report}"

    def test_heavy_crop_not_detected(self, marked, keypair):
        _, pk = keypair
        crop = TransformSpec(TransformKind.CENTER_CROP, keep_fraction=0.6)
        for img in marked:
            assert not rpws_detect(pk, apply(crop, img)).overall, "Heavy crop still detected"

    def test_jpeg_q90(self, marked, keypair):
        _, pk = keypair
        jpeg = TransformSpec(TransformKind.JPEG, quality=90)
        detected = [rpws_detect(pk, apply(jpeg, img)).overall for img in marked]
        assert sum(detected) >= len(detected) - 1, f"q90 detections: {detected}"


@pytest.mark.slow
class TestCorpusScale:
    """Detection rates and false positives over larger corpora"""

    def test_jpeg_q90_rate(self, keypair):
        sk, pk = keypair
        images = generate_corpus(CorpusSpec(seed=0, count=100))
        jpeg = TransformSpec(TransformKind.JPEG, quality=90)
        detected = [rpws_detect(pk, apply(jpeg, rpws_watermark(sk, img))).overall for img in images]
        rate = sum(detected) / len(detected)
        assert rate >= 0.90, f"q90 detection rate {rate:.2f}"

    def test_no_false_positives(self, scheme):
        keys = [derive_secret_key(bytes([k])).public_key() for k in range(10)]
        images = generate_corpus(CorpusSpec(seed=31, count=1000))
        for n, img in enumerate(images):
            for pk in keys:
                assert not scheme.detect(pk, img).overall, f"Image {n} detected as watermarked"

    def test_copy_attack_at_scale(self, scheme, keypair):
        sk, pk = keypair
        source = rpws_watermark(sk, generate_corpus(CorpusSpec(seed=40, count=1))[0])
        payload = scheme.extract_payload(source)
        victims = generate_corpus(CorpusSpec(seed=41, count=100))
        for n, victim in enumerate(victims):
            report = scheme.detect(pk, scheme.embed_payload(victim, payload))
            assert not report.overall and not report.embed_ok, f"Victim {n}: {report}"
