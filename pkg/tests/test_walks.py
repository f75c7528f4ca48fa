import math
import unittest
from fractions import Fraction
from pathlib import Path

import numpy as np

from perco.errors import UsageError
from perco.lattice import Window
from perco.samplers import Config, load_config
from perco.walks import (
	diffusive_fit,
	estimate_covariance,
	interpolate,
	isotropy_ratio,
	msd_curve,
	neighbour_table,
	return_probability,
	simulate_ensemble,
	simulate_walk,
	step_distribution,
	transition_matrix,
)

COMB = load_config(Path(__file__).parent.joinpath(Path("mockdata/rasters/comb.txt")))
TORUS = Config.full(Window(32, 2))
ISOLATED = Config.from_points([(0, 0)], 8, 2)


class TestKernel(unittest.TestCase):
	def test_step_distribution(self):
		test_datas = [
			(TORUS, (0, 0), {(0, 0): 0, (1, 0): Fraction(1, 4), (-1, 0): Fraction(1, 4),
							  (0, 1): Fraction(1, 4), (0, -1): Fraction(1, 4)}),
			(COMB, (-4, -4), {(-4, -4): Fraction(3, 4), (-3, -4): Fraction(1, 4)}),
			(ISOLATED, (0, 0), {(0, 0): 1}),
		]
		for config, y, expected in test_datas:
			law = step_distribution(config, y, exact=True)
			self.assertEqual(law, expected)
			self.assertEqual(sum(law.values()), 1)

	def test_step_wraps(self):
		law = step_distribution(TORUS, (-16, 0))
		self.assertIn((15, 0), law)
		self.assertAlmostEqual(sum(law.values()), 1.0)

	def test_vacant(self):
		with self.assertRaises(UsageError):
			step_distribution(COMB, (-4, -3))

	def test_neighbour_table(self):
		hard = neighbour_table(Config.full(Window(4, 2, wrap=False)))
		self.assertEqual(hard.shape, (4, 16))
		self.assertEqual(hard[0, 0], 4)
		self.assertEqual(hard[1, 0], -1)
		self.assertEqual(hard[2, 0], 1)
		torus = neighbour_table(Config.full(Window(4, 2)))
		self.assertEqual(torus[1, 0], 12)
		self.assertEqual(torus[3, 0], 3)

	def test_transition_matrix(self):
		kernel = transition_matrix(COMB)
		sums = np.asarray(kernel.sum(axis=1)).ravel()
		self.assertTrue(np.allclose(sums[COMB.flat], 1.0))
		self.assertTrue(np.all(sums[~COMB.flat] == 0))


class TestWalks(unittest.TestCase):
	def test_stays_in_cluster(self):
		path = simulate_walk(COMB, (0, 0), 500, seed=2)
		self.assertEqual(path.steps, 500)
		self.assertEqual(path[0], (0, 0))
		for k in range(len(path)):
			self.assertTrue(COMB.occupied(path[k]))
		jumps = np.abs(np.diff(path.sites, axis=0)).sum(axis=1)
		self.assertTrue(np.all(jumps <= 1))

	def test_deterministic(self):
		first = simulate_walk(TORUS, (0, 0), 100, seed=4)
		second = simulate_walk(TORUS, (0, 0), 100, seed=4)
		other = simulate_walk(TORUS, (0, 0), 100, seed=4, replica=1)
		self.assertTrue(np.array_equal(first.sites, second.sites))
		self.assertFalse(np.array_equal(first.sites, other.sites))
		self.assertTrue(np.all(np.abs(np.diff(first.sites, axis=0)).sum(axis=1) == 1))

	def test_isolated(self):
		path = simulate_walk(ISOLATED, (0, 0), 50)
		self.assertTrue(np.all(path.sites == 0))

	def test_invalid(self):
		with self.assertRaises(UsageError):
			simulate_walk(COMB, (0, 0), -1)
		with self.assertRaises(UsageError):
			simulate_walk(COMB, (-4, -3), 10)
		with self.assertRaises(UsageError):
			simulate_walk(COMB, (0, 0, 0), 10)

	def test_ensemble(self):
		out = simulate_ensemble(TORUS, (0, 0), [0, 4, 4, 9], 7, seed=1)
		self.assertEqual(out.shape, (7, 4, 2))
		self.assertTrue(np.all(out[:, 0] == 0))
		self.assertTrue(np.array_equal(out[:, 1], out[:, 2]))
		self.assertTrue(np.all(np.abs(out[:, 3]).sum(axis=1) <= 9))
		with self.assertRaises(UsageError):
			simulate_ensemble(TORUS, (0, 0), [4, 2], 3)
		with self.assertRaises(UsageError):
			simulate_ensemble(TORUS, (0, 0), [4], 0)

	def test_interpolate(self):
		path = simulate_walk(TORUS, (0, 0), 4, seed=3)
		self.assertTrue(np.allclose(interpolate(path, 4, 0.25), path.sites[1] / 2))
		middle = (path.sites[1] + 0.5 * (path.sites[2] - path.sites[1])) / 2
		self.assertTrue(np.allclose(interpolate(path, 4, 0.375), middle))
		self.assertTrue(np.allclose(interpolate(path, 4, 1.0), path.sites[4] / 2))
		with self.assertRaises(UsageError):
			interpolate(path, 4, 1.1)
		with self.assertRaises(UsageError):
			interpolate(path, 0, 0.5)


class TestDiagnostics(unittest.TestCase):
	def test_covariance(self):
		result = estimate_covariance(TORUS, (0, 0), 16, 1.0, 400, seed=9)
		self.assertEqual(result.covariance.shape, (2, 2))
		self.assertLess(abs(result.covariance[0, 0] - 0.5), 0.2)
		self.assertLess(abs(result.covariance[0, 1]), 0.2)
		self.assertGreater(result.min_eigenvalue, 0)
		self.assertEqual(len(result.rows()), 4)
		self.assertTrue(np.all(result.halfwidths >= 0))
		self.assertLess(isotropy_ratio(result), 3.0)

	def test_degenerate(self):
		result = estimate_covariance(ISOLATED, (0, 0), 8, 1.0, 10)
		self.assertEqual(result.min_eigenvalue, 0.0)
		self.assertTrue(math.isinf(isotropy_ratio(result)))
		self.assertFalse(result.non_degenerate)
		with self.assertRaises(UsageError):
			estimate_covariance(ISOLATED, (0, 0), 8, 1.0, 1)

	def test_msd(self):
		curve = msd_curve(TORUS, (0, 0), [16, 0, 4], 300, seed=5)
		self.assertEqual(list(curve.times), [0, 4, 16])
		self.assertEqual(curve.msd[0], 0.0)
		self.assertLess(abs(curve.msd[2] - 16.0), 5 * curve.stderr[2] + 1.0)
		self.assertEqual([row[0] for row in curve.rows()], [0, 4, 16])

	def test_fit(self):
		fit = diffusive_fit([1, 2, 3], [2, 4, 6])
		self.assertAlmostEqual(fit.slope, 2.0)
		self.assertAlmostEqual(fit.intercept, 0.0)
		self.assertTrue(fit.diffusive)
		self.assertFalse(diffusive_fit([1, 2, 3], [5, 5, 5]).diffusive)
		with self.assertRaises(UsageError):
			diffusive_fit([1], [1])


class TestReturnProbability(unittest.TestCase):
	def test_full_torus(self):
		result = return_probability(Config.full(Window(8, 2)), (0, 0), 10)
		self.assertTrue(result.truncated)
		self.assertEqual(len(result), 5)
		self.assertAlmostEqual(result[1], 0.0)
		self.assertAlmostEqual(result[2], 0.25)
		self.assertAlmostEqual(result[4], 36 / 256)
		rows = result.rows()
		self.assertEqual(len(rows), 2)
		self.assertAlmostEqual(rows[1][2], 2 * 36 / 256)
		low, high = result.bounds()
		self.assertAlmostEqual(low, 0.25)
		self.assertAlmostEqual(high, 2 * 36 / 256)

	def test_isolated(self):
		result = return_probability(ISOLATED, (0, 0), 3)
		self.assertFalse(result.truncated)
		self.assertTrue(np.allclose(result.p, 1.0))
		self.assertTrue(all(math.isnan(v) for v in result.bounds((5, 6))))

	def test_invalid(self):
		with self.assertRaises(UsageError):
			return_probability(ISOLATED, (0, 0), -1)
