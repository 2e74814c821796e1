import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from icsbm.branching import (OffspringLaw, StepLaw, Tree, EmbeddedTree, embedded_probability,
                             enumerate_embedded_trees, enumeration_size, factorial_moment, sample_embedded_tree,
                             sample_generation_sizes, step_fourier, survival_probability, tree_probability)
from icsbm.errors import EnumerationBoundError, ResourceLimitError, ValidationError
from icsbm.rng import stream

from oracles import generation_distribution, raw_moment

BINARY = OffspringLaw.binary()
SIMPLE = StepLaw.simple(1)


def critical_laws():
    # mass a at 0, b at 3, rest at 1 and 2 chosen so the mean is 1
    @st.composite
    def build(draw):
        b = draw(st.floats(0.0, 0.2))
        a = draw(st.floats(0.05, 0.45))
        # p0 = a, p3 = b, p2 = a - 2b, p1 = 1 - 2a + b
        if a - 2 * b < 0 or 1 - 2 * a + b < 0:
            b = 0.0
        p = [a, 1 - 2 * a + b, a - 2 * b, b]
        p[1] = 1 - (p[0] + p[2] + p[3])
        return OffspringLaw(tuple(p))

    return build()


class TestOffspringLaw:
    def test_rejects_non_normalized(self):
        with pytest.raises(ValidationError) as e:
            OffspringLaw((0.5, 0.0, 0.6))
        assert e.value.field == "offspring.normalization"

    def test_rejects_non_critical(self):
        with pytest.raises(ValidationError) as e:
            OffspringLaw((0.6, 0.0, 0.4))
        assert e.value.field == "offspring.criticality"

    def test_rejects_degenerate(self):
        with pytest.raises(ValidationError):
            OffspringLaw((0.0, 1.0))

    def test_factorial_moments(self):
        assert factorial_moment(BINARY, 0) == 1
        assert factorial_moment(BINARY, 1) == 1
        assert factorial_moment(BINARY, 2) == 1
        assert factorial_moment(BINARY, 3) == 0

    def test_poisson_truncation_exactly_critical(self):
        law = OffspringLaw.poisson1(30)
        assert abs(law.mean - 1) <= 1e-12
        assert abs(sum(law.probs) - 1) <= 1e-12
        assert law.sigma_p_sq == pytest.approx(1.0, abs=1e-12)

    def test_from_pairs_merges(self):
        law = OffspringLaw.from_pairs([[0, 0.25], [2, 0.5], [0, 0.25]])
        assert law.probs == (0.5, 0.0, 0.5)

    @given(critical_laws())
    @settings(max_examples=40, deadline=None)
    def test_f1_is_one(self, law):
        assert abs(law.factorial_moment(0) - 1) < 1e-12
        assert abs(law.factorial_moment(1) - 1) < 1e-12


class TestStepLaw:
    def test_simple_fourier_at_zero(self):
        for d in (1, 3):
            assert step_fourier(StepLaw.simple(d), np.zeros(d)) == pytest.approx(1.0)

    def test_small_k_expansion(self):
        step = StepLaw.spread_out(2, 2)
        k = np.array([1e-3, -2e-3])
        expect = 1 - step.sigma_sq * (k @ k) / (2 * step.d)
        assert abs(step_fourier(step, k) - expect) < 1e-10

    def test_spread_out_support(self):
        step = StepLaw.spread_out(2, 1)
        assert len(step.support) == 8
        assert step_fourier(step, np.array([math.pi, math.pi])) == pytest.approx(0.0, abs=1e-14)

    def test_asymmetric_rejected(self):
        with pytest.raises(ValidationError):
            StepLaw.from_pairs([[[1], 1.0]])


class TestTree:
    def test_validation(self):
        with pytest.raises(ValidationError):
            Tree.from_words([(0,), (0, 1, 1)])
        with pytest.raises(ValidationError):
            Tree.from_words([(0,), (0, 2)])
        with pytest.raises(ValidationError):
            Tree.from_words([(0, 1)])

    def test_probability_of_small_tree(self):
        t = Tree.from_offspring([2, 0, 0])
        assert tree_probability(BINARY, t) == pytest.approx(0.125)

    def test_truncated_nodes_not_counted(self):
        t = Tree.from_offspring([2], depth_cap=1)
        assert tree_probability(BINARY, t) == 0.5

    def test_offspring_beyond_support(self):
        t = Tree.from_offspring([3, 0, 0, 0])
        with pytest.raises(ValidationError):
            tree_probability(BINARY, t)

    def test_embedded_json_round_trip(self):
        et = sample_embedded_tree(BINARY, StepLaw.simple(2), 6, 11)
        back = EmbeddedTree.from_json(et.to_json())
        assert back.key() == et.key()
        assert embedded_probability(BINARY, StepLaw.simple(2), back) > 0


class TestEnumeration:
    def test_counts(self):
        assert [enumeration_size(BINARY, SIMPLE, m) for m in range(4)] == [1, 5, 101, 40805]
        assert len(enumerate_embedded_trees(BINARY, SIMPLE, 2)) == 101

    def test_total_probability(self):
        for m in range(3):
            total = math.fsum(p for _, p in enumerate_embedded_trees(BINARY, SIMPLE, m))
            assert abs(total - 1) <= 1e-10

    def test_bound(self):
        with pytest.raises(EnumerationBoundError):
            enumerate_embedded_trees(BINARY, SIMPLE, 3, bound=1000)


class TestSurvival:
    def test_first_values(self):
        c = survival_probability(BINARY, 3)
        assert c[0] == 1.0
        assert c[1] == 0.5
        assert c[2] == 0.375
        assert c[3] == pytest.approx(1 - (1 + (1 - 0.375) ** 2) / 2)

    def test_against_generation_distribution(self):
        law = OffspringLaw.poisson1(12)
        c = survival_probability(law, 8)
        for n in range(1, 9):
            assert c[n] == pytest.approx(1 - generation_distribution(law.probs, n)[0], rel=1e-12)

    def test_kolmogorov_limit(self):
        for law in (BINARY, OffspringLaw.poisson1()):
            n = 10**5
            assert abs(n * survival_probability(law, n)[n] - 2 / law.sigma_p_sq) <= 0.05

    @given(critical_laws())
    @settings(max_examples=25, deadline=None)
    def test_monotone_and_positive(self, law):
        th = survival_probability(law, 200).thetas
        assert np.all(np.diff(th) <= 0)
        assert th[-1] > 0


class TestSampling:
    def test_determinism(self):
        a = sample_embedded_tree(BINARY, StepLaw.simple(2), 12, 5)
        b = sample_embedded_tree(BINARY, StepLaw.simple(2), 12, 5)
        assert a.key() == b.key()

    def test_steps_are_in_support(self):
        et = sample_embedded_tree(BINARY, StepLaw.spread_out(2, 2), 10, 3)
        et.validate_steps(StepLaw.spread_out(2, 2))

    def test_population_cap(self):
        law = OffspringLaw.from_pairs([[0, 0.5], [2, 0.5]])
        with pytest.raises(ResourceLimitError):
            for seed in range(50):
                sample_embedded_tree(law, SIMPLE, 60, seed, population_cap=8)

    def test_mass_martingale(self):
        sizes = sample_generation_sizes(BINARY, 40000, 30, stream(1, "t"))
        mean = sizes.mean(axis=0)
        se = sizes.std(axis=0, ddof=1) / math.sqrt(sizes.shape[0])
        se[0] = 1
        assert np.all(np.abs(mean - 1) <= 3 * se)

    def test_second_moment_matches_exact_law(self):
        sizes = sample_generation_sizes(BINARY, 40000, 6, stream(2, "t"))[:, 6].astype(float)
        exact = raw_moment(generation_distribution(BINARY.probs, 6), 2)
        assert exact == pytest.approx(1 + 6 * BINARY.sigma_p_sq)
        se = (sizes**2).std(ddof=1) / math.sqrt(sizes.size)
        assert abs((sizes**2).mean() - exact) <= 3 * se
