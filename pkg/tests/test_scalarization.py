import numpy as np
import pytest

from coptraj.scalarization import (DegenerateAnchors, ParetoAnchors,
                                   compute_anchors, linear_scalarization,
                                   tchebycheff)


class TestAnchors:
    def test_single_objective_nadir_equals_utopia(self):
        anchors = compute_anchors([[5.0]])
        assert anchors.utopia[0] == 5.0
        assert anchors.nadir[0] == 5.0

    def test_two_by_two_by_hand(self):
        # rows are minimizers, columns objectives: diagonal = utopia,
        # column max = nadir
        anchors = compute_anchors([[1.0, 9.0], [3.0, 2.0]])
        np.testing.assert_array_equal(anchors.utopia, [1.0, 2.0])
        np.testing.assert_array_equal(anchors.nadir, [3.0, 9.0])

    def test_identical_rows_degenerate(self):
        with pytest.raises(DegenerateAnchors):
            compute_anchors([[1.0, 2.0], [1.0, 2.0]])

    def test_non_square_rejected(self):
        with pytest.raises(ValueError):
            compute_anchors([[1.0, 2.0, 3.0], [1.0, 2.0, 4.0]])

    def test_nadir_dominates_utopia(self):
        with pytest.raises(ValueError):
            ParetoAnchors([1.0, 2.0], [0.5, 3.0])

    def test_subset(self):
        anchors = compute_anchors([[1.0, 9.0, 4.0],
                                   [3.0, 2.0, 5.0],
                                   [2.0, 7.0, -1.0]])
        sub = anchors.subset([0, 1])
        np.testing.assert_array_equal(sub.utopia, [1.0, 2.0])
        np.testing.assert_array_equal(sub.nadir, [3.0, 9.0])


class TestTchebycheff:
    def anchors(self):
        return ParetoAnchors([0.0, 0.0], [2.0, 4.0])

    def test_utopia_attains_zero(self):
        assert tchebycheff([0.0, 0.0], self.anchors(), [0.5, 0.5],
                           1e-4) == 0.0

    def test_worked_example(self):
        # lambda = (0.25, 0.125); max term 0.25; augmentation 3e-4
        U = tchebycheff([1.0, 2.0], self.anchors(), [0.5, 0.5], 1e-4)
        assert U == pytest.approx(0.2503, abs=1e-12)

    def test_single_objective_reduction(self):
        anchors = ParetoAnchors([1.0, 0.0], [3.0, 4.0])
        U = tchebycheff([2.5, 2.0], anchors, [1.0, 0.0], 0.0)
        assert U == pytest.approx(abs(2.5 - 1.0) / abs(3.0 - 1.0), rel=1e-12)

    def test_nadir_max_term_equals_max_weight(self, rng):
        for _ in range(20):
            k = rng.integers(2, 5)
            utopia = rng.normal(size=k)
            nadir = utopia + rng.uniform(0.5, 3.0, k)
            w = rng.uniform(0.1, 1.0, k)
            w /= w.sum()
            U = tchebycheff(nadir, ParetoAnchors(utopia, nadir), w, 0.0)
            assert U == pytest.approx(np.max(w), rel=1e-12)

    def test_monotonicity_random_triples(self, rng):
        # moving any objective further from utopia never decreases U and,
        # with rho > 0, strictly increases it
        anchors = ParetoAnchors([0.0, 1.0, -2.0], [4.0, 3.0, 0.5])
        w = np.array([0.2, 0.5, 0.3])
        rho = 1e-3
        for _ in range(10_000):
            F = anchors.utopia + rng.uniform(0.0, 3.0, 3)
            U0 = tchebycheff(F, anchors, w, rho)
            i = rng.integers(0, 3)
            F2 = F.copy()
            F2[i] += rng.uniform(0.01, 1.0)
            U1 = tchebycheff(F2, anchors, w, rho)
            assert U1 > U0

    def test_permutation_symmetry(self, rng):
        anchors = ParetoAnchors([0.0, 1.0, -2.0], [4.0, 3.0, 0.5])
        w = np.array([0.2, 0.5, 0.3])
        F = np.array([1.7, 2.1, -0.3])
        U = tchebycheff(F, anchors, w, 1e-4)
        for _ in range(10):
            p = rng.permutation(3)
            Up = tchebycheff(F[p], ParetoAnchors(anchors.utopia[p],
                                                 anchors.nadir[p]), w[p],
                             1e-4)
            assert Up == pytest.approx(U, rel=1e-14)

    def test_nonnegative_and_zero_iff_utopia(self, rng):
        anchors = ParetoAnchors([1.0, -1.0], [2.0, 1.0])
        w = [0.5, 0.5]
        for _ in range(200):
            F = anchors.utopia + rng.uniform(0, 2, 2)
            U = tchebycheff(F, anchors, w, 1e-4)
            assert U >= 0.0
            if not np.allclose(F, anchors.utopia):
                assert U > 0.0

    def test_rho_range_enforced(self):
        with pytest.raises(ValueError):
            tchebycheff([1.0, 1.0], self.anchors(), [0.5, 0.5], 0.5)
        with pytest.raises(ValueError):
            tchebycheff([1.0, 1.0], self.anchors(), [0.5, 0.5], 1e-6)
        # rho = 0 is the explicit augmentation-off switch
        tchebycheff([1.0, 1.0], self.anchors(), [0.5, 0.5], 0.0)

    def test_weights_validated(self):
        with pytest.raises(ValueError):
            tchebycheff([1.0, 2.0], self.anchors(), [0.7, 0.7], 1e-4)
        with pytest.raises(ValueError):
            tchebycheff([1.0, 2.0], self.anchors(), [-0.2, 1.2], 1e-4)

    def test_degenerate_span_with_positive_weight(self):
        anchors = ParetoAnchors([1.0, 2.0], [1.0, 4.0])
        with pytest.raises(DegenerateAnchors):
            tchebycheff([1.5, 3.0], anchors, [0.5, 0.5], 1e-4)
        # zero weight on the degenerate objective is fine
        U = tchebycheff([1.5, 3.0], anchors, [0.0, 1.0], 0.0)
        assert U == pytest.approx(0.5)

    def test_infinite_cost_maps_to_infinite_utility(self):
        U = tchebycheff([np.inf, 1.0], self.anchors(), [0.5, 0.5], 1e-4)
        assert U == np.inf

    def test_linear_reference(self):
        assert linear_scalarization([2.0, 3.0], [0.25, 0.75]) == \
            pytest.approx(2.75)
