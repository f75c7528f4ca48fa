import math
import unittest
from pathlib import Path

import numpy as np

from perco.clusters import (
	chemical_ball,
	chemical_distance,
	check_A1,
	check_A2,
	check_A3,
	check_A4,
	check_C2R_contains_CR,
	check_local_uniqueness,
	infinite_cluster_surrogate,
	label_components,
	largest_component,
	restrict_s_r,
)
from perco.errors import EmptyRegion, UsageError
from perco.lattice import LatticeBox, Window
from perco.samplers import Config, load_config

MOCKDATA = Path(__file__).parent.joinpath(Path("mockdata/rasters"))
CORRIDOR = load_config(MOCKDATA.joinpath("corridor.txt"))
PARALLEL_LINES = load_config(MOCKDATA.joinpath("parallel_lines.txt"))
COMB = load_config(MOCKDATA.joinpath("comb.txt"))


def checkerboard(side):
	index = np.indices((side, side)).sum(axis=0)
	return Config.from_array(index % 2 == 0)


class TestLabeling(unittest.TestCase):
	def test_corridor(self):
		labeling = label_components(CORRIDOR)
		self.assertEqual(len(labeling), 1)
		self.assertEqual(int(labeling.volumes[0]), 13)
		self.assertEqual(labeling.diameters[0], 8)
		self.assertEqual(labeling.canonical_point(0), (-3, -3))
		self.assertEqual(labeling.bounding_box(0), LatticeBox((-3, -3), shape=(5, 5)))
		self.assertIsNone(labeling.component_of((0, 0)))

	def test_checkerboard(self):
		labeling = label_components(checkerboard(4))
		self.assertEqual(len(labeling), 8)
		self.assertTrue(np.all(labeling.volumes == 1))
		self.assertTrue(np.all(labeling.diameters == 0))
		self.assertEqual(list(labeling.canonical), sorted(labeling.canonical))

	def test_empty(self):
		labeling = label_components(Config.empty(Window(4, 2)))
		self.assertEqual(len(labeling), 0)
		with self.assertRaises(EmptyRegion):
			infinite_cluster_surrogate(labeling.config, labeling=labeling)

	def test_torus_winding(self):
		line = Config.from_points([(0, y) for y in range(-2, 2)], 4, 2, wrap=True)
		labeling = label_components(line)
		self.assertEqual(len(labeling), 1)
		self.assertTrue(labeling.winding[0])
		self.assertTrue(math.isinf(labeling.diameters[0]))

	def test_torus_merges_faces(self):
		segment = Config.from_points([(0, -2), (0, 1)], 4, 2, wrap=True)
		labeling = label_components(segment)
		self.assertEqual(len(labeling), 1)
		self.assertEqual(labeling.diameters[0], 1)
		self.assertFalse(labeling.winding[0])
		hard = Config.from_points([(0, -2), (0, 1)], 4, 2)
		self.assertEqual(len(label_components(hard)), 2)


class TestRestriction(unittest.TestCase):
	def test_threshold(self):
		self.assertEqual(restrict_s_r(CORRIDOR, 8).sites, 13)
		self.assertEqual(restrict_s_r(CORRIDOR, 9).sites, 0)
		self.assertIs(restrict_s_r(CORRIDOR, 0), CORRIDOR)

	def test_segments(self):
		points = [(-4, y) for y in range(-4, 0)] + [(2, 2)]
		config = Config.from_points(points, 8, 2)
		test_datas = [(0, 5), (1, 4), (3, 4), (4, 0)]
		for r, expected in test_datas:
			self.assertEqual(restrict_s_r(config, r).sites, expected)

	def test_negative(self):
		with self.assertRaises(UsageError):
			restrict_s_r(CORRIDOR, -1)


class TestSelection(unittest.TestCase):
	def test_ties(self):
		selection = largest_component(checkerboard(4))
		self.assertFalse(selection.unique)
		self.assertEqual(selection.volume, 1)
		self.assertEqual(selection.canonical, (-2, -2))

	def test_region(self):
		selection = largest_component(COMB, LatticeBox((-4, -4), shape=(6, 1)))
		self.assertEqual(selection.volume, 6)
		self.assertTrue(selection.unique)
		self.assertIn((-4, -4), selection)
		self.assertNotIn((-4, -3), selection)

	def test_region_outside_window(self):
		with self.assertRaises(UsageError):
			largest_component(COMB, LatticeBox((-5, -4), shape=(2, 2)))
		with self.assertRaises(EmptyRegion):
			largest_component(COMB, LatticeBox((3, -4), shape=(1, 8)))

	def test_surrogate(self):
		surrogate = infinite_cluster_surrogate(COMB)
		self.assertEqual(surrogate.volume, 32)
		self.assertTrue(surrogate.unique)
		self.assertEqual(len(surrogate.points()), 32)


class TestChemicalDistance(unittest.TestCase):
	def test_corridor(self):
		self.assertEqual(chemical_distance(CORRIDOR, (-3, -3), (-3, 1)), 12)
		self.assertEqual(chemical_distance(CORRIDOR, (-3, -3), (-3, -3)).value, 0)

	def test_disconnected(self):
		result = chemical_distance(PARALLEL_LINES, (-1, 0), (1, 0))
		self.assertFalse(result.finite)
		self.assertTrue(math.isinf(result.value))

	def test_vacant_endpoint(self):
		with self.assertRaises(UsageError):
			chemical_distance(CORRIDOR, (0, 0), (-3, -3))

	def test_ball(self):
		ball = chemical_ball(CORRIDOR, (-3, -3), 4)
		self.assertEqual(int(ball.sum()), 5)
		limited = chemical_ball(CORRIDOR, (-3, -3), 4, within=CORRIDOR.window.box_mask(LatticeBox((-3, -3), shape=(2, 1))))
		self.assertEqual(int(limited.sum()), 2)


class TestStructuralChecks(unittest.TestCase):
	def test_full_window(self):
		config = Config.full(Window(16, 2, wrap=False))
		self.assertEqual(check_A1(config).min_p, 1.0)
		self.assertTrue(check_A2(config).passed)
		self.assertEqual(check_A3(config, 2), (True, True, True, True))
		a4 = check_A4(config, 3, 4.0)
		self.assertTrue(a4.holds)
		self.assertEqual(a4.max_distance, 12)
		self.assertEqual(a4.constant, 4.0)
		self.assertTrue(a4.exact)
		self.assertEqual(check_local_uniqueness(config, 3), (True, True))
		self.assertTrue(check_C2R_contains_CR(config, 3).passed)

	def test_a4_sources(self):
		config = Config.full(Window(16, 2, wrap=False))
		a4 = check_A4(config, 3, 4.0, max_sources=5)
		self.assertFalse(a4.exact)
		self.assertEqual(a4.sites, 49)
		with self.assertRaises(UsageError):
			check_A4(config, 3, 0.5)

	def test_parallel_lines(self):
		self.assertEqual(check_local_uniqueness(PARALLEL_LINES, 3), (True, False))
		nesting = check_C2R_contains_CR(PARALLEL_LINES, 3)
		self.assertFalse(nesting.unique_R)
		self.assertFalse(nesting.passed)
		self.assertEqual(check_A3(PARALLEL_LINES, 1), (False, True, False, False))

	def test_empty(self):
		config = Config.empty(Window(16, 2, wrap=False))
		self.assertFalse(check_A2(config).exists)
		self.assertEqual(check_A3(config, 2), (False, False, False, False))
		self.assertEqual(check_C2R_contains_CR(config, 3).passed, False)

	def test_window_too_small(self):
		with self.assertRaises(UsageError):
			check_local_uniqueness(CORRIDOR, 3)
