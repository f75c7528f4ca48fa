import unittest
from collections import namedtuple

import numpy as np

from perco.enums import Stream
from perco.utils import (
	FIFO,
	TimingStats,
	as_point,
	binomial_stderr,
	canonical_json,
	derive_seed,
	digest,
	find,
	format_float,
	get,
	stream_generator,
)

Item = namedtuple("Item", ("name", "passed"))
ITEMS = [Item("clusters", True), Item("walk", False), Item("corrector", False)]


class TestHelpers(unittest.TestCase):
	def test_find(self):
		self.assertEqual(find(lambda i: not i.passed, ITEMS).name, "walk")
		self.assertIsNone(find(lambda i: i.name == "fat-set", ITEMS))

	def test_get(self):
		self.assertEqual(get(ITEMS, name="corrector").passed, False)
		self.assertEqual(get(ITEMS, passed=False, name="corrector"), ITEMS[2])
		self.assertIsNone(get(ITEMS, name="walk", passed=True))

	def test_format_float(self):
		test_datas = [
			(None, ""),
			(True, "1"),
			(np.bool_(False), "0"),
			(3, "3"),
			(np.int64(-7), "-7"),
			(0.5, "0.5"),
			(2.0, "2"),
			(1 / 3, "0.333333333333"),
			(1e-20, "1e-20"),
			(float("inf"), "inf"),
			(-np.inf, "-inf"),
			(float("nan"), "nan"),
		]
		for value, expected in test_datas:
			self.assertEqual(format_float(value), expected, value)

	def test_binomial_stderr(self):
		self.assertEqual(binomial_stderr(0, 0), 0.0)
		self.assertEqual(binomial_stderr(10, 10), 0.0)
		self.assertAlmostEqual(binomial_stderr(50, 100), 0.05)

	def test_canonical_json(self):
		self.assertEqual(canonical_json({"b": 1, "a": [1, "x/y"]}), '{"a":[1,"x/y"],"b":1}')
		self.assertEqual(digest({"a": 1, "b": 2}), digest({"b": 2, "a": 1}))
		self.assertNotEqual(digest({"a": 1}), digest({"a": 2}))
		self.assertEqual(len(digest([])), 64)

	def test_as_point(self):
		point = as_point(np.array([3, -1]))
		self.assertEqual(point, (3, -1))
		self.assertIs(type(point[0]), int)


class TestStreams(unittest.TestCase):
	def test_derive_seed(self):
		self.assertEqual(derive_seed(1, Stream.REPLICA, 0), derive_seed(1, Stream.REPLICA, 0))
		seeds = {derive_seed(1, Stream.REPLICA, i) for i in range(50)}
		self.assertEqual(len(seeds), 50)
		self.assertNotEqual(derive_seed(1, Stream.REPLICA, 0), derive_seed(1, Stream.WALK, 0))
		self.assertNotEqual(derive_seed(1, Stream.REPLICA, 0), derive_seed(2, Stream.REPLICA, 0))
		self.assertLess(derive_seed(-1, Stream.SITES), 2 ** 64)

	def test_generator(self):
		first = stream_generator(4, Stream.SITES).random(8)
		again = stream_generator(4, Stream.SITES).random(8)
		np.testing.assert_array_equal(first, again)
		other = stream_generator(4, Stream.FIELD).random(8)
		self.assertFalse(np.array_equal(first, other))


class TestFIFO(unittest.TestCase):
	def test_eviction(self):
		cache = FIFO(2)
		cache["a"] = 1
		cache["b"] = 2
		cache["c"] = 3
		self.assertNotIn("a", cache)
		self.assertEqual(cache["b"], 2)
		self.assertEqual(len(cache), 2)

	def test_reset_key(self):
		cache = FIFO(2)
		cache["a"] = 1
		cache["a"] = 2
		cache["b"] = 3
		cache["c"] = 4
		self.assertEqual(sorted(cache), ["b", "c"])
		cache["d"] = 5
		self.assertEqual(sorted(cache), ["c", "d"])


class TestTimingStats(unittest.TestCase):
	def test_stats(self):
		stats = TimingStats(max_size=2)
		stats["sample"] = 1.0
		stats["sample"] = 2.0
		stats["sample"] = 4.0
		stats["walk"] = 0.5
		self.assertEqual(list(stats["sample"]), [2.0, 4.0])
		self.assertEqual(stats.get_average("sample"), 3.0)
		self.assertEqual(stats.get_total("sample"), 6.0)
		self.assertIsNone(stats.get_average("corrector"))
		self.assertEqual(stats.get_total("corrector"), 0.0)
		self.assertEqual(stats.get_all_average(), {"sample": 3.0, "walk": 0.5})
