import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy import stats

from uhlm.core import (
    THETA_MIN,
    RandomStream,
    Vocabulary,
    sample_categorical,
    softmax,
    temperature_softmax,
    validate_distribution,
)
from uhlm.errors import (
    InvalidDistributionError,
    InvalidLogitsError,
    InvalidTemperatureError,
    ValidationError,
)

finite_logits = st.lists(
    st.floats(min_value=-50, max_value=50, allow_nan=False), min_size=2, max_size=16
)


class TestVocabulary:
    def test_valid(self):
        v = Vocabulary(size=256, eos_id=0)
        assert v.contains(255) and not v.contains(256)

    @pytest.mark.parametrize("size,eos", [(1, 0), (4, 4), (4, -1)])
    def test_invalid(self, size, eos):
        with pytest.raises(ValidationError):
            Vocabulary(size=size, eos_id=eos)


class TestSoftmax:
    def test_symmetric_pair(self):
        assert_allclose(softmax(np.array([0.0, 0.0])), [0.5, 0.5], atol=1e-15)

    def test_constant_vector(self):
        for c in (-1e4, 0.0, 3.7, 1e4):
            assert_allclose(softmax(np.full(4, c)), np.full(4, 0.25), atol=1e-12)

    def test_log_two_hand_case(self):
        assert_allclose(softmax(np.array([math.log(2), 0.0])), [2 / 3, 1 / 3], atol=1e-12)

    def test_rejects_non_finite(self):
        for bad in (np.array([np.nan, 0.0]), np.array([np.inf, 0.0])):
            with pytest.raises(InvalidLogitsError):
                softmax(bad)

    @given(finite_logits, st.floats(min_value=-100, max_value=100))
    @settings(max_examples=200, deadline=None)
    def test_shift_invariance(self, values, shift):
        z = np.asarray(values)
        assert_allclose(softmax(z + shift), softmax(z), atol=1e-12)

    @given(finite_logits)
    @settings(max_examples=200, deadline=None)
    def test_sums_to_one(self, values):
        p = softmax(np.asarray(values))
        assert abs(p.sum() - 1.0) < 1e-9
        assert np.all(p >= 0)


class TestTemperatureSoftmax:
    def test_unit_temperature_matches_softmax(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            z = rng.normal(size=8) * 10
            assert_allclose(temperature_softmax(z, 1.0), softmax(z), atol=1e-12)

    def test_large_temperature_flattens(self):
        p = temperature_softmax(np.array([1.0, 0.0]), 1e6)
        assert_allclose(p, [0.5, 0.5], atol=1e-5)

    def test_hand_case(self):
        p = temperature_softmax(np.array([math.log(4), 0.0]), 2.0)
        assert_allclose(p, [2 / 3, 1 / 3], atol=1e-12)

    def test_temperature_floor(self):
        with pytest.raises(InvalidTemperatureError):
            temperature_softmax(np.array([1.0, 0.0]), THETA_MIN / 2)

    def test_entropy_monotone_in_temperature(self):
        gen = np.random.default_rng(21)
        thetas = [0.25, 0.5, 1.0, 2.0, 4.0]
        for _ in range(50):
            z = gen.normal(size=6) * 3  # distinct entries a.s.
            entropies = [stats.entropy(temperature_softmax(z, t)) for t in thetas]
            assert all(a <= b + 1e-12 for a, b in zip(entropies, entropies[1:]))


class TestSampleCategorical:
    def test_degenerate(self):
        rng = RandomStream(1, "t")
        assert sample_categorical(np.array([1.0, 0.0, 0.0]), rng) == 0

    def test_fair_coin_frequency(self):
        rng = RandomStream(42, "coin")
        draws = rng.uniforms(1_000_000)
        # Inverse CDF on a fair coin is a threshold test; binomial 3-sigma.
        freq = np.mean(draws < 0.5)
        assert 0.497 <= freq <= 0.503
        rng2 = RandomStream(7, "coin")
        p = np.array([0.5, 0.5])
        hits = sum(sample_categorical(p, rng2) == 0 for _ in range(100_000))
        assert abs(hits / 100_000 - 0.5) < 3 * 0.5 / math.sqrt(100_000)

    def test_determinism(self):
        p = np.array([0.2, 0.3, 0.5])
        a = [sample_categorical(p, RandomStream(9, "s")) for _ in range(1)]
        first = [
            sample_categorical(p, rng) for rng in [RandomStream(9, "s")] for _ in range(10)
        ]
        rng_b = RandomStream(9, "s")
        second = [sample_categorical(p, rng_b) for _ in range(10)]
        assert first == second and a[0] == first[0]

    def test_invalid_distribution(self):
        rng = RandomStream(0, "x")
        with pytest.raises(InvalidDistributionError):
            sample_categorical(np.array([0.6, 0.6]), rng)
        with pytest.raises(InvalidDistributionError):
            sample_categorical(np.array([-0.1, 1.1]), rng)

    def test_chi_square_goodness_of_fit(self):
        gen = np.random.default_rng(5)
        p = validate_distribution(gen.dirichlet(np.ones(8)))
        rng = RandomStream(17, "gof")
        n = 100_000
        counts = np.zeros(8)
        for _ in range(n):
            counts[sample_categorical(p, rng)] += 1
        _, pvalue = stats.chisquare(counts, f_exp=p * n)
        assert pvalue > 0.001


class TestRandomStream:
    def test_replay(self):
        a = RandomStream(123, "draft").uniforms(100)
        b = RandomStream(123, "draft").uniforms(100)
        assert_allclose(a, b, rtol=0, atol=0)

    def test_labels_differ(self):
        a = RandomStream(123, "draft").uniforms(100)
        b = RandomStream(123, "verify").uniforms(100)
        assert not np.allclose(a, b)

    def test_bulk_matches_scalar(self):
        bulk = RandomStream(5, "s").uniforms(20)
        one_at_a_time = RandomStream(5, "s")
        scalar = [one_at_a_time.uniform() for _ in range(20)]
        assert_allclose(bulk, scalar, rtol=0, atol=0)

    def test_derive_extends_label(self):
        child = RandomStream(5, "parent").derive("k0")
        assert child.label == "parent/k0"
        same = RandomStream(5, "parent/k0")
        assert_allclose(child.uniforms(10), same.uniforms(10), rtol=0, atol=0)
