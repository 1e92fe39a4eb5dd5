"""Binary descriptor and Hamming matching tests."""

import numpy as np
import pytest

from weavetrack.descriptor import (
    BinaryDescriptor,
    Keypoint,
    describe,
    describe_keypoints,
    hamming,
    match_features,
)
from weavetrack.imagecore import GrayImage

from oracles import exhaustive_mutual_matches, naive_hamming


def textured_image(n=64, seed=0, coarse=6):
    """Smooth random texture: upsampled noise grid, enough local structure."""
    rng = np.random.default_rng(seed)
    small = rng.uniform(0, 255, (n // coarse + 2, n // coarse + 2))
    ys, xs = np.mgrid[0:n, 0:n].astype(np.float64) / coarse
    x0 = xs.astype(int)
    y0 = ys.astype(int)
    fx = xs - x0
    fy = ys - y0
    out = (
        small[y0, x0] * (1 - fx) * (1 - fy)
        + small[y0, x0 + 1] * fx * (1 - fy)
        + small[y0 + 1, x0] * (1 - fx) * fy
        + small[y0 + 1, x0 + 1] * fx * fy
    )
    return GrayImage.from_float(out)


def random_descriptor(rng) -> BinaryDescriptor:
    return BinaryDescriptor(
        rng.integers(0, 256, 64).astype(np.uint8), Keypoint(0.0, 0.0)
    )


def flip_bits(desc: BinaryDescriptor, rng, count=8) -> BinaryDescriptor:
    bits = desc.bits.copy()
    for pos in rng.choice(512, count, replace=False):
        bits[pos // 8] ^= np.uint8(1 << (7 - pos % 8))
    return BinaryDescriptor(bits, desc.keypoint)


class TestDescribe:
    def test_determinism(self):
        img = textured_image()
        kp = Keypoint(32.0, 32.0, 12.0)
        a = describe(img, kp)
        b = describe(img, kp)
        assert np.array_equal(a.bits, b.bits)

    def test_integer_translation_covariance(self):
        img = textured_image(seed=3)
        dx, dy = 5, 3
        shifted = np.zeros_like(img.data)
        shifted[dy:, dx:] = img.data[:-dy, :-dx]
        a = describe(img, Keypoint(25.3, 27.8, 12.0))
        b = describe(GrayImage(shifted), Keypoint(25.3 + dx, 27.8 + dy, 12.0))
        assert np.array_equal(a.bits, b.bits)

    def test_constant_image_all_zero(self):
        img = GrayImage(np.full((64, 64), 120, dtype=np.uint8))
        d = describe(img, Keypoint(32.0, 32.0, 12.0))
        assert not np.any(d.bits)

    def test_border_keypoint_rejected(self):
        img = textured_image()
        with pytest.raises(ValueError):
            describe(img, Keypoint(2.0, 32.0, 12.0))

    def test_batch_drops_border_keypoints(self):
        img = textured_image()
        kps = [Keypoint(2.0, 2.0, 12.0), Keypoint(32.0, 32.0, 12.0)]
        descs, kept = describe_keypoints(img, kps)
        assert kept == [1] and len(descs) == 1

    def test_intensity_scaling_invariance(self):
        rng = np.random.default_rng(4)
        base = rng.integers(0, 127, (64, 64)).astype(np.uint8)
        img_a = GrayImage(base)
        img_b = GrayImage((base * 2).astype(np.uint8))
        kp = Keypoint(30.0, 33.0, 12.0)
        assert np.array_equal(describe(img_a, kp).bits, describe(img_b, kp).bits)

    def test_oriented_quarter_turn(self):
        # co-rotating image and keypoint by 90 degrees flips at most a small
        # fraction of bits when orientation normalization is on
        img = textured_image(seed=9)
        n = img.width
        rot = GrayImage(np.rot90(img.data).copy())
        x, y = 30.0, 26.0
        kp = Keypoint(x, y, 12.0)
        kp_rot = Keypoint(y, n - 1 - x, 12.0)
        a = describe(img, kp, oriented=True)
        b = describe(rot, kp_rot, oriented=True)
        assert hamming(a, b) <= 80


class TestHexSerialization:
    def test_hex_roundtrip(self):
        rng = np.random.default_rng(99)
        d = random_descriptor(rng)
        h = d.hex()
        assert len(h) == 128
        assert bytes.fromhex(h) == d.bits.tobytes()


class TestHamming:
    def test_identity(self):
        rng = np.random.default_rng(0)
        d = random_descriptor(rng)
        assert hamming(d, d) == 0

    def test_complement(self):
        rng = np.random.default_rng(1)
        d = random_descriptor(rng)
        comp = BinaryDescriptor(np.bitwise_not(d.bits), d.keypoint)
        assert hamming(d, comp) == 512

    def test_matches_naive_loop(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            a = random_descriptor(rng)
            b = random_descriptor(rng)
            assert hamming(a, b) == naive_hamming(a.bits, b.bits)

    def test_metric_axioms(self):
        rng = np.random.default_rng(3)
        descs = [random_descriptor(rng) for _ in range(30)]
        for _ in range(1000):
            i, j, k = rng.integers(0, 30, 3)
            dij = hamming(descs[i], descs[j])
            dji = hamming(descs[j], descs[i])
            dik = hamming(descs[i], descs[k])
            dkj = hamming(descs[k], descs[j])
            assert dij == dji
            assert (dij == 0) == np.array_equal(descs[i].bits, descs[j].bits)
            assert dij <= dik + dkj


class TestMatchFeatures:
    def test_self_match(self):
        rng = np.random.default_rng(5)
        descs = [random_descriptor(rng) for _ in range(12)]
        matches = match_features(descs, list(descs), threshold=120)
        assert len(matches) == 12
        assert all(m.index_a == m.index_b and m.distance == 0 for m in matches)

    def test_threshold_zero_disjoint(self):
        rng = np.random.default_rng(6)
        a = [random_descriptor(rng) for _ in range(10)]
        b = [random_descriptor(rng) for _ in range(10)]
        assert match_features(a, b, threshold=0) == []

    def test_noised_copy_recovery(self):
        rng = np.random.default_rng(7)
        a = [random_descriptor(rng) for _ in range(20)]
        b = [flip_bits(d, rng, 8) for d in a]
        matches = match_features(a, b, threshold=120)
        assert len(matches) == 20
        assert all(m.index_a == m.index_b and m.distance == 8 for m in matches)

    def test_equals_exhaustive_oracle(self):
        rng = np.random.default_rng(8)
        for trial in range(25):
            na, nb = rng.integers(3, 15, 2)
            a = [random_descriptor(rng) for _ in range(na)]
            b = [random_descriptor(rng) for _ in range(nb)]
            thr = int(rng.integers(100, 400))
            got = [(m.index_a, m.index_b, m.distance) for m in match_features(a, b, thr)]
            want = exhaustive_mutual_matches([d.bits for d in a], [d.bits for d in b], thr)
            assert got == want

    def test_one_to_one(self):
        rng = np.random.default_rng(9)
        a = [random_descriptor(rng) for _ in range(30)]
        b = [random_descriptor(rng) for _ in range(30)]
        matches = match_features(a, b, threshold=512)
        assert len({m.index_a for m in matches}) == len(matches)
        assert len({m.index_b for m in matches}) == len(matches)

    def test_permutation_of_set_b(self):
        rng = np.random.default_rng(10)
        a = [random_descriptor(rng) for _ in range(15)]
        b = [flip_bits(d, rng, 30) for d in a]
        ref = {(m.index_a, m.distance) for m in match_features(a, b, 200)}
        perm = rng.permutation(15)
        b2 = [b[i] for i in perm]
        got = {(m.index_a, m.distance) for m in match_features(a, b2, 200)}
        assert got == ref

    def test_empty_inputs(self):
        rng = np.random.default_rng(11)
        d = [random_descriptor(rng)]
        assert match_features([], d, 100) == []
        assert match_features(d, [], 100) == []

    def test_sorted_by_distance_then_index(self):
        rng = np.random.default_rng(12)
        a = [random_descriptor(rng) for _ in range(20)]
        b = [flip_bits(d, rng, int(rng.integers(0, 60))) for d in a]
        matches = match_features(a, b, 512)
        keys = [(m.distance, m.index_b) for m in matches]
        assert keys == sorted(keys)

    def test_threshold_out_of_range(self):
        with pytest.raises(ValueError):
            match_features([], [], threshold=513)
