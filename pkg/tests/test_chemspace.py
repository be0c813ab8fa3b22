"""Fingerprints, Tanimoto similarity, and embeddability of the space."""

import numpy as np
import pytest

import chemgp as cg
from chemgp.errors import (
    DataError,
    DuplicateCompoundError,
    InvalidFingerprintError,
)
from conftest import random_space

FP = cg.Fingerprint.from_string


class TestFingerprint:
    def test_from_string_round_trip(self):
        fp = FP("01101")
        assert fp.bits == (0, 1, 1, 0, 1)
        assert fp.to_string() == "01101"
        assert fp.length == 5
        assert fp.popcount() == 3

    def test_packed_bit_order(self):
        # feature i is bit i of the packed integer
        assert FP("100").packed == 1
        assert FP("001").packed == 4

    def test_rejects_bad_bits(self):
        with pytest.raises(InvalidFingerprintError):
            cg.Fingerprint.from_bits([0, 2, 1])
        with pytest.raises(InvalidFingerprintError):
            FP("01a")
        with pytest.raises(InvalidFingerprintError):
            FP("")

    def test_to_array(self):
        np.testing.assert_array_equal(FP("011").to_array(), [0, 1, 1])


class TestTanimoto:
    def test_known_pairs(self):
        # one shared feature out of three in either compound
        assert cg.tanimoto_similarity(FP("011"), FP("101")) == pytest.approx(1 / 3)
        assert cg.tanimoto_distance(FP("011"), FP("101")) == pytest.approx(2 / 3)
        # two shared out of three
        assert cg.tanimoto_similarity(FP("111"), FP("011")) == pytest.approx(2 / 3)
        assert cg.tanimoto_distance(FP("111"), FP("011")) == pytest.approx(1 / 3)

    def test_identity(self):
        fp = FP("10110")
        assert cg.tanimoto_similarity(fp, fp) == 1.0
        assert cg.tanimoto_distance(fp, fp) == 0.0

    def test_symmetry(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            a = cg.Fingerprint(int(rng.integers(1, 256)), 8)
            b = cg.Fingerprint(int(rng.integers(1, 256)), 8)
            assert cg.tanimoto_similarity(a, b) == cg.tanimoto_similarity(b, a)

    def test_errors(self):
        with pytest.raises(InvalidFingerprintError):
            cg.tanimoto_similarity(FP("01"), FP("011"))
        with pytest.raises(InvalidFingerprintError):
            cg.tanimoto_similarity(FP("00"), FP("01"))


class TestBuildSpace:
    def test_four_compound_distances(self):
        # the fixed demonstration space and its distance matrix
        space = cg.counterexample_space()
        expected_T = np.array(
            [
                [0, 2 / 3, 2 / 3, 1 / 3],
                [2 / 3, 0, 2 / 3, 1 / 3],
                [2 / 3, 2 / 3, 0, 1 / 3],
                [1 / 3, 1 / 3, 1 / 3, 0],
            ]
        )
        np.testing.assert_allclose(space.distance, expected_T, atol=1e-15)
        np.testing.assert_allclose(space.similarity, 1 - expected_T, atol=1e-15)

    def test_single_compound(self):
        space = cg.build_space([FP("101")])
        np.testing.assert_array_equal(space.similarity, [[1.0]])
        np.testing.assert_array_equal(space.distance, [[0.0]])

    def test_random_space_positive_definite(self):
        space = random_space(20, 16, seed=1)
        eigs = np.linalg.eigvalsh(space.similarity)
        assert eigs[0] > 0

    def test_duplicates_rejected(self):
        with pytest.raises(DuplicateCompoundError):
            cg.build_space([FP("011"), FP("011")])

    def test_all_zero_rejected(self):
        with pytest.raises(InvalidFingerprintError):
            cg.build_space([FP("011"), FP("000")])

    def test_mixed_lengths_rejected(self):
        with pytest.raises(InvalidFingerprintError):
            cg.build_space([FP("011"), FP("0111")])

    def test_off_diagonal_similarity_below_one(self):
        space = random_space(15, 10, seed=2)
        off = space.similarity[~np.eye(space.m, dtype=bool)]
        assert np.all(off < 1.0)

    def test_index_of(self):
        space = cg.counterexample_space()
        assert space.index_of(FP("101")) == 1
        assert space.index_of(FP("100")) is None


class TestSqrtDistanceMetric:
    def test_triangle_inequality_on_random_spaces(self):
        # sqrt of the Tanimoto distance embeds in Euclidean space, so it
        # must satisfy the triangle inequality on every triple
        for seed in range(3):
            space = random_space(12, 8, seed=seed)
            d = np.sqrt(space.distance)
            m = space.m
            for i in range(m):
                for j in range(m):
                    for k in range(m):
                        assert d[i, k] <= d[i, j] + d[j, k] + 1e-12


class TestEmbeddability:
    def test_four_compound_gram(self):
        space = cg.counterexample_space()
        B = cg.embeddability_gram(space)
        eigs = np.linalg.eigvalsh(B)
        assert eigs[0] >= -1e-10
        assert cg.sqrt_distance_gram_rank(space) == 3

    def test_single_point_grams_to_zero(self):
        space = cg.build_space([FP("1")])
        np.testing.assert_allclose(cg.embeddability_gram(space), [[0.0]], atol=1e-15)

    def test_random_space_rank_m_minus_1(self):
        space = random_space(10, 12, seed=7)
        B = cg.embeddability_gram(space)
        eigs = np.linalg.eigvalsh(B)
        assert eigs[0] >= -1e-10
        assert cg.sqrt_distance_gram_rank(space) == space.m - 1

    def test_gram_psd_for_any_valid_space(self):
        for seed in range(4):
            space = random_space(8, 9, seed=seed + 20)
            eigs = np.linalg.eigvalsh(cg.embeddability_gram(space))
            assert eigs[0] >= -1e-10 * max(eigs[-1], 1.0)


class TestNaiveGaussianCounterexample:
    def test_known_entries(self):
        R, min_eig = cg.naive_gaussian_counterexample()
        assert R[0, 1] == pytest.approx(0.6412, abs=5e-5)
        assert R[0, 3] == pytest.approx(0.8948, abs=5e-5)
        np.testing.assert_allclose(np.diag(R), 1.0)

    def test_indefiniteness(self):
        _, min_eig = cg.naive_gaussian_counterexample()
        assert -0.040 <= min_eig <= -0.032


class TestFingerprintCsv:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "fp.csv"
        ids = ["a", "b", "c"]
        fps = [FP("011"), FP("101"), FP("110")]
        cg.write_fingerprint_csv(path, ids, fps, comment="config: {}")
        got_ids, got_fps = cg.read_fingerprint_csv(path)
        assert got_ids == ids
        assert got_fps == fps

    def test_parse_error_names_line(self, tmp_path):
        path = tmp_path / "fp.csv"
        path.write_text("id,bits\nok,011\nbad,01x\n")
        with pytest.raises(DataError, match=r":3"):
            cg.read_fingerprint_csv(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "fp.csv"
        path.write_text("name,bits\nok,011\n")
        with pytest.raises(DataError, match="header"):
            cg.read_fingerprint_csv(path)
