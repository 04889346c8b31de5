from math import comb

import numpy as np
from django.test import SimpleTestCase

from dfk.basis_services import (
    evaluate_basis, gaussian_basis, lipschitz_bound_on_box, parse_basis, polynomial_basis, serialize_basis,
    user_basis,
)


class PolynomialBasisTests(SimpleTestCase):
    """Monomial families in graded lexicographic order"""

    def test_size_for_two_parameters_degree_six(self):
        self.assertEqual(polynomial_basis(2, 6).m, 28)

    def test_size_matches_binomial_count(self):
        for n_p, degree in [(1, 3), (2, 2), (3, 4), (4, 2)]:
            self.assertEqual(polynomial_basis(n_p, degree).m, comb(n_p + degree, degree))

    def test_degree_zero_is_the_constant(self):
        basis = polynomial_basis(3, 0)
        self.assertEqual(basis.m, 1)
        np.testing.assert_array_equal(basis.evaluate([4.0, -1.0, 7.0]), [1.0])

    def test_ordering_of_low_terms(self):
        basis = polynomial_basis(2, 6)
        names = [basis.describe(i) for i in range(6)]
        self.assertEqual(names, ['1', 'p1', 'p2', 'p1^2', 'p1*p2', 'p2^2'])

    def test_evaluation(self):
        np.testing.assert_array_equal(polynomial_basis(2, 2).evaluate([2.0, 3.0]), [1, 2, 3, 4, 6, 9])

    def test_evaluate_many_matches_single_points(self):
        basis = polynomial_basis(2, 3)
        points = np.random.default_rng(0).uniform(-1, 1, size=(5, 2))
        many = basis.evaluate_many(points)
        for row, point in zip(many, points):
            np.testing.assert_allclose(row, basis.evaluate(point))

    def test_rejects_wrong_dimension_and_nonfinite_points(self):
        basis = polynomial_basis(2, 2)
        with self.assertRaises(ValueError):
            basis.evaluate_many(np.zeros((3, 3)))
        with self.assertRaises(ValueError):
            evaluate_basis(basis, [np.nan, 0.0])

    def test_invalid_arguments(self):
        with self.assertRaises(ValueError):
            polynomial_basis(0, 2)
        with self.assertRaises(ValueError):
            polynomial_basis(2, -1)


class LipschitzBoundTests(SimpleTestCase):

    def test_constant_and_linear_terms(self):
        bounds = lipschitz_bound_on_box(polynomial_basis(2, 1), [(-2, 2), (-2, 2)])
        np.testing.assert_array_equal(bounds, [0.0, 1.0, 1.0])

    def test_square_on_symmetric_box(self):
        bounds = lipschitz_bound_on_box(polynomial_basis(2, 2), [(-2, 2), (-2, 2)])
        self.assertEqual(bounds[3], 4.0)
        # p1*p2: |p2| + |p1| <= 4
        self.assertEqual(bounds[4], 4.0)

    def test_bound_dominates_sampled_slopes(self):
        basis = polynomial_basis(2, 3)
        box = [(-1.5, 1.0), (-0.5, 2.0)]
        bounds = lipschitz_bound_on_box(basis, box)
        rng = np.random.default_rng(1)
        a = rng.uniform([-1.5, -0.5], [1.0, 2.0], size=(200, 2))
        b = rng.uniform([-1.5, -0.5], [1.0, 2.0], size=(200, 2))
        slopes = np.abs(basis.evaluate_many(a) - basis.evaluate_many(b)) / np.max(np.abs(a - b), axis=1)[:, None]
        self.assertTrue(np.all(slopes <= bounds + 1e-9))

    def test_unbounded_box_rejected(self):
        with self.assertRaises(ValueError):
            lipschitz_bound_on_box(polynomial_basis(1, 2), [(-np.inf, 1.0)])

    def test_user_basis_has_no_bound(self):
        basis = user_basis([lambda p: 1.0, lambda p: p[0]], n_p=1)
        with self.assertRaises(ValueError):
            lipschitz_bound_on_box(basis, [(-1, 1)])


class GaussianBasisTests(SimpleTestCase):

    def test_peak_at_center(self):
        basis = gaussian_basis([[0.0, 0.0], [1.0, 1.0]], 0.5)
        np.testing.assert_allclose(basis.evaluate([1.0, 1.0])[1], 1.0)
        self.assertEqual(basis.m, 2)

    def test_constant_stand_in(self):
        basis = gaussian_basis([[1.0]], 0.3, include_constant=True)
        self.assertEqual(basis.m, 2)
        self.assertAlmostEqual(basis.evaluate([5.0])[0], 1.0, places=9)

    def test_invalid_widths(self):
        with self.assertRaises(ValueError):
            gaussian_basis([[0.0]], 0.0)
        with self.assertRaises(ValueError):
            gaussian_basis([[0.0], [1.0]], [0.1])


class SerializationTests(SimpleTestCase):

    @staticmethod
    def reparse(basis):
        entries, gaussians = {}, []
        for line in serialize_basis(basis):
            key, value = (part.strip() for part in line.split('=', 1))
            if key == 'basis.gaussian':
                gaussians.append(value)
            else:
                entries[key] = value
        return parse_basis(entries, gaussians)

    def test_polynomial_survives(self):
        basis = polynomial_basis(2, 4)
        self.assertEqual(self.reparse(basis), basis)

    def test_gaussian_survives(self):
        basis = gaussian_basis([[0.1, -0.3], [0.7, 0.2]], [0.25, 0.4])
        restored = self.reparse(basis)
        point = [0.3, 0.1]
        np.testing.assert_array_equal(restored.evaluate(point), basis.evaluate(point))

    def test_user_basis_cannot_be_serialized(self):
        with self.assertRaises(ValueError):
            serialize_basis(user_basis([lambda p: 1.0], n_p=1))
