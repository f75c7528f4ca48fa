import math
import unittest

from perco.clusters import infinite_cluster_surrogate
from perco.enums import CandidateMethod
from perco.errors import OracleRefused, UsageError
from perco.fatset import build_fat_set, special_components
from perco.isoperimetry import (
	SiteSet,
	ceil_power,
	check_A5,
	check_reduction_inequalities,
	coarse_box_profile,
	coarse_density_boxes,
	coarse_isoperimetry,
	edge_boundary,
	exact_min_ratio,
	heuristic_profile,
	map_MA_DA,
)
from perco.lattice import LatticeBox, Window
from perco.renormalization import Levels, build_scale_ladder, classify_good
from perco.samplers import Config

FULL = Config.full(Window(8, 2, wrap=False))
SQUARE = SiteSet.from_points(FULL, [(0, 0), (0, 1), (1, 0), (1, 1)])


class TestEdgeBoundary(unittest.TestCase):
	def test_square(self):
		self.assertEqual(edge_boundary(FULL, SQUARE), 8)
		count, edges = edge_boundary(FULL, SQUARE, edges=True)
		self.assertEqual(count, 8)
		self.assertEqual(len(edges), 8)
		self.assertIn(((1, 1), (2, 1)), edges)

	def test_isolated(self):
		config = Config.from_points(SQUARE.points(), 8, 2)
		self.assertEqual(edge_boundary(config, SiteSet.from_points(config, SQUARE.points())), 0)

	def test_site_set(self):
		self.assertIn((1, 1), SQUARE)
		self.assertNotIn((2, 2), SQUARE)
		self.assertEqual(len(SiteSet.from_points(FULL, [(0, 0), (0, 0)])), 1)
		self.assertEqual(SiteSet.from_mask(FULL, SQUARE.mask()), SQUARE)
		with self.assertRaises(UsageError):
			SiteSet.from_points(Config.empty(Window(8, 2)), [(0, 0)])


class TestExactOracle(unittest.TestCase):
	def test_corner(self):
		result = exact_min_ratio(FULL, LatticeBox((-4, -4), 2))
		self.assertEqual(result.ratio, 2.0)
		self.assertTrue(result.exact)
		self.assertIs(result.method, CandidateMethod.exhaustive)
		self.assertEqual(result.candidates, 15)
		self.assertEqual(len(result.witness), 1)

	def test_size_floor(self):
		result = exact_min_ratio(FULL, LatticeBox((-4, -4), 2), 4)
		self.assertEqual(result.candidates, 1)
		self.assertEqual(result.ratio, 2.0)
		with self.assertRaises(UsageError):
			exact_min_ratio(FULL, LatticeBox((-4, -4), 2), 5)

	def test_connected_subsets(self):
		config = Config.full(Window(32, 2, wrap=False))
		result = exact_min_ratio(config, LatticeBox((-16, -16), shape=(1, 30)))
		self.assertIs(result.method, CandidateMethod.connected)
		self.assertEqual(result.candidates, 30 * 31 // 2)
		self.assertTrue(result.exact)
		self.assertEqual(result.ratio, 2.0)

	def test_cap(self):
		config = Config.full(Window(32, 2, wrap=False))
		result = exact_min_ratio(config, LatticeBox((0, 0), 5), cap=1000)
		self.assertFalse(result.exact)
		self.assertEqual(result.candidates, 1000)

	def test_refused(self):
		with self.assertRaises(OracleRefused):
			exact_min_ratio(Config.full(Window(16, 2, wrap=False)), LatticeBox((-8, -8), 9))

	def test_ceil_power(self):
		test_datas = [(16, 0.5, 4), (17, 0.5, 5), (8, 1 / 3, 2), (9, 1 / 3, 3), (1, 0.5, 1)]
		for R, theta, expected in test_datas:
			self.assertEqual(ceil_power(R, theta), expected)


class TestHeuristicProfile(unittest.TestCase):
	def test_full_window(self):
		config = Config.full(Window(16, 2, wrap=False))
		component = infinite_cluster_surrogate(config)
		report = heuristic_profile(config, component, 0.5, 30, 16, seed=3)
		self.assertGreater(report.candidates, 0)
		self.assertGreaterEqual(report.size, 4)
		self.assertGreater(report.boundary, 0)
		self.assertAlmostEqual(report.ratio, report.boundary / math.sqrt(report.size))
		self.assertEqual(len(report.witness), report.size)
		for method, size, boundary, ratio in report.rows():
			self.assertIn(method, ("ball", "sweep", "greedy"))
			self.assertGreaterEqual(ratio, report.ratio)

	def test_deterministic(self):
		config = Config.full(Window(16, 2, wrap=False))
		first = heuristic_profile(config, config.occupancy, 0.5, 30, 16, seed=5)
		second = heuristic_profile(config, config.occupancy, 0.5, 30, 16, seed=5)
		self.assertEqual(first.ratio, second.ratio)
		self.assertEqual(first.witness, second.witness)
		self.assertEqual(first.to_dict(), second.to_dict())

	def test_bounded_by_oracle(self):
		region = LatticeBox((-2, -2), 4)
		exact = exact_min_ratio(FULL, region, 2)
		sites = FULL.window.box_mask(region)
		report = heuristic_profile(FULL, sites, 0.5, 40, size_floor=2, seed=1)
		self.assertGreaterEqual(report.ratio, exact.ratio - 1e-12)

	def test_empty_budget(self):
		report = heuristic_profile(FULL, FULL.occupancy, 0.5, 0, 4)
		self.assertEqual(report.candidates, 0)
		self.assertTrue(math.isinf(report.ratio))
		self.assertIsNone(report.to_dict()["best_method"])
		with self.assertRaises(UsageError):
			heuristic_profile(FULL, FULL.occupancy, 0.5, 10)

	def test_a5(self):
		config = Config.full(Window(16, 2, wrap=False))
		report = check_A5(config, 2, 20, seed=1)
		self.assertEqual(report.size_floor, 2)
		self.assertGreater(report.candidates, 0)
		vacant = Config(config.window, config.occupancy & ~config.window.box_mask(LatticeBox((0, 0), 1)))
		self.assertEqual(check_A5(vacant, 2, 20).candidates, 0)
		with self.assertRaises(UsageError):
			check_A5(config, 0, 20)


class TestCoarseGraining(unittest.TestCase):
	@classmethod
	def setUpClass(cls):
		cls.ladder = build_scale_ladder(5, 1, 2, k_max=1)
		cls.config = Config.full(Window(64, 2, wrap=False))
		goodness = classify_good(cls.config, cls.ladder, 1.0)
		cls.fat = build_fat_set(goodness, cls.ladder, 15, levels=Levels(1, 1))
		cls.special = special_components(cls.config, cls.fat, 2, 1.0)
		cls.sites = SiteSet.from_points(cls.config, [(0, 0), (0, 1), (1, 0), (1, 1)])

	def test_coarse_isoperimetry(self):
		self.assertEqual(coarse_isoperimetry(self.fat, [(0, 0)]), 4.0)
		self.assertTrue(math.isinf(coarse_isoperimetry(self.fat, [])))
		with self.assertRaises(UsageError):
			coarse_isoperimetry(self.fat, [(20, 20)])

	def test_map(self):
		coarse, defects = map_MA_DA(self.config, self.fat, self.sites, 10, special=self.special)
		self.assertEqual(coarse, [(0, 0)])
		self.assertEqual(defects, self.sites)
		with self.assertRaises(UsageError):
			map_MA_DA(self.config, self.fat, self.sites, 10)

	def test_reduction(self):
		report = check_reduction_inequalities(self.config, self.fat, self.sites, 10, 2, special=self.special)
		self.assertEqual(report.boundary, 8)
		self.assertEqual(report.coarse_boundary, 4)
		self.assertEqual(report.coarse_size, 1)
		self.assertEqual(report.defects, 4)
		self.assertEqual(report.boundary_bound, 0.5)
		self.assertEqual(report.volume_bound, 36 * 4 + 4)
		self.assertTrue(report.holds)
		self.assertEqual(report.label, "unconditioned")
		conditioned = check_reduction_inequalities(self.config, self.fat, self.sites, 10, 2,
												   special=self.special, h_verified=True)
		self.assertEqual(conditioned.to_dict()["label"], "conditioned")
		self.assertFalse(conditioned.severe)

	def test_density_boxes(self):
		self.assertEqual(coarse_density_boxes(self.fat, self.fat.members, 10, 2), self.fat.top)
		self.assertEqual(coarse_density_boxes(self.fat, [(0, 0)], 10, 2), [])

	def test_box_profile(self):
		profile = coarse_box_profile(self.fat, (0, 0))
		self.assertEqual(profile.j, 2)
		self.assertAlmostEqual(profile.gamma, 1.6)
		self.assertGreater(profile.candidates, 0)
		with self.assertRaises(UsageError):
			coarse_box_profile(self.fat, (0, 0), j=3)
