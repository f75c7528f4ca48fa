import unittest

import numpy as np

from perco.errors import InvalidArgument, UsageError
from perco.lattice import (
	LatticeBox,
	Window,
	edge_pairs,
	grid_points,
	l1_dist,
	linf_ball,
	linf_dist,
	neighbour_count,
	neighbours,
	slices,
	subboxes,
	unit_vectors,
)


class TestDistances(unittest.TestCase):
	def test_l1_dist(self):
		test_datas = [((0, 0), (3, -4), 7), ((1, 2, 3), (1, 2, 3), 0), ((-5, 5), (5, -5), 20)]
		for a, b, expected in test_datas:
			self.assertEqual(l1_dist(a, b), expected)

	def test_torus_distance(self):
		window = Window(10, 2, wrap=True)
		self.assertEqual(l1_dist((0, 0), (9, 0), window), 1)
		self.assertEqual(linf_dist((0, 0), (5, 8), window), 5)
		self.assertEqual(window.distance((-4, 0), (5, 1)), 2)

	def test_dimension_mismatch(self):
		with self.assertRaises(UsageError):
			l1_dist((0, 0), (0, 0, 0))

	def test_unit_vectors_order(self):
		self.assertEqual(list(unit_vectors(2)), [(1, 0), (-1, 0), (0, 1), (0, -1)])
		self.assertEqual(list(neighbours((2, 3))), [(3, 3), (1, 3), (2, 4), (2, 2)])


class TestLatticeBox(unittest.TestCase):
	def test_ball(self):
		box = linf_ball((0, 0), 2.7)
		self.assertEqual(box.corner, (-2, -2))
		self.assertEqual(box.side, 5)
		self.assertEqual(box.volume, 25)
		self.assertIn((2, -2), box)
		self.assertNotIn((3, 0), box)

	def test_negative_radius(self):
		with self.assertRaises(UsageError):
			linf_ball((0, 0), -1)

	def test_subboxes_partition(self):
		box = LatticeBox((0, 0), 6)
		tiles = list(subboxes(box, 2))
		self.assertEqual(len(tiles), 9)
		self.assertEqual(tiles[0].corner, (0, 0))
		self.assertEqual(tiles[1].corner, (0, 2))
		self.assertEqual(sum(t.volume for t in tiles), box.volume)

	def test_subboxes_clip(self):
		box = LatticeBox((0, 0), 5)
		with self.assertRaises(UsageError):
			list(subboxes(box, 2))
		tiles = list(subboxes(box, 2, clip=True))
		self.assertEqual(len(tiles), 9)
		self.assertEqual(tiles[-1].shape, (1, 1))
		self.assertEqual(sum(t.volume for t in tiles), 25)

	def test_grid_points(self):
		points = list(grid_points(linf_ball((0, 0), 5), 4))
		self.assertEqual(points, [(-4, -4), (-4, 0), (-4, 4), (0, -4), (0, 0), (0, 4), (4, -4), (4, 0), (4, 4)])

	def test_intersection(self):
		a = LatticeBox((0, 0), 4)
		b = LatticeBox((2, 3), 4)
		self.assertEqual(a.intersection(b), LatticeBox((2, 3), shape=(2, 1)))
		self.assertIsNone(a.intersection(LatticeBox((4, 0), 2)))

	def test_slices(self):
		box = LatticeBox((0, 0, 0), 3)
		lines = list(slices(box, [2]))
		self.assertEqual(len(lines), 9)
		self.assertTrue(all(s.box.volume == 3 for s in lines))
		planes = list(slices(box, [0, 1]))
		self.assertEqual(len(planes), 3)
		self.assertEqual(planes[1].anchor, (0, 0, 1))


class TestWindow(unittest.TestCase):
	def test_origin(self):
		window = Window(8, 2, wrap=False)
		self.assertEqual(window.index((0, 0)), (4, 4))
		self.assertEqual(window.point((0, 0)), (-4, -4))
		self.assertEqual(window.box, LatticeBox((-4, -4), 8))

	def test_hard_window(self):
		window = Window(8, 2, wrap=False)
		self.assertFalse(window.contains((4, 0)))
		with self.assertRaises(UsageError):
			window.index((4, 0))
		with self.assertRaises(UsageError):
			window.take(np.zeros(window.shape), (2, 2), (4, 4))

	def test_torus_take(self):
		window = Window(4, 2, wrap=True)
		array = np.arange(16).reshape(4, 4)
		sub = window.take(array, (1, 1), (2, 2))
		# lattice (1, 1) is array (3, 3), which wraps to (0, 0)
		self.assertEqual(sub.tolist(), [[15, 12], [3, 0]])
		self.assertTrue(window.contains_box(LatticeBox((100, 100), 4)))
		self.assertFalse(window.contains_box(LatticeBox((0, 0), 5)))

	def test_box_flat_indices(self):
		window = Window(4, 2, wrap=False)
		flat = window.box_flat_indices(LatticeBox((0, 0), 2))
		self.assertEqual(flat.tolist(), [10, 11, 14, 15])
		self.assertEqual(window.box_mask(LatticeBox((0, 0), 2)).sum(), 4)

	def test_invalid(self):
		for side, dimension in [(0, 2), (8, 1), (1 << 15, 2)]:
			with self.assertRaises(InvalidArgument):
				Window(side, dimension)


class TestMasks(unittest.TestCase):
	def test_neighbour_count(self):
		mask = np.ones((3, 3), dtype=bool)
		self.assertEqual(neighbour_count(mask, False).tolist(), [[2, 3, 2], [3, 4, 3], [2, 3, 2]])
		self.assertTrue((neighbour_count(mask, True) == 4).all())

	def test_edge_pairs(self):
		mask = np.ones((3, 3), dtype=bool)
		src, dst = edge_pairs(mask, False)
		self.assertEqual(len(src), 12)
		src, dst = edge_pairs(mask, True)
		self.assertEqual(len(src), 18)

	def test_edge_pairs_side_two_torus(self):
		mask = np.ones((2, 2), dtype=bool)
		src, _ = edge_pairs(mask, True)
		self.assertEqual(len(src), 4)
