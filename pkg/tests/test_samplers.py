import tempfile
import unittest
from pathlib import Path

import numpy as np

from scipy import stats

from perco.enums import ModelKind
from perco.errors import InvalidArgument, UsageError
from perco.lattice import Window
from perco.samplers import (
	Config,
	ModelSpec,
	coupled_pair,
	estimate_eta,
	gff_field,
	green_function,
	load_config,
	replica_spec,
	sample,
	save_config,
)

MOCKDATA = Path(__file__).parent.joinpath(Path("mockdata/rasters"))


class TestModelSpec(unittest.TestCase):
	def test_kind(self):
		spec = ModelSpec("bernoulli", 0.5, Window(8, 2))
		self.assertIs(spec.kind, ModelKind.bernoulli)
		self.assertEqual(ModelSpec.from_dict(spec.to_dict()), spec)

	def test_invalid_parameters(self):
		test_datas = [
			("bernoulli", 1.5, Window(8, 2)),
			("bernoulli", -0.1, Window(8, 2)),
			("interlacement", 0.5, Window(8, 2)),
			("interlacement", 0.5, Window(8, 3, wrap=False)),
			("gff-level", 0.0, Window(8, 2)),
			("percolation", 0.5, Window(8, 2)),
		]
		for kind, u, window in test_datas:
			with self.assertRaises(InvalidArgument):
				ModelSpec(kind, u, window)

	def test_gff_override(self):
		spec = ModelSpec("gff-level", 0.0, Window(8, 2), zero_mode_override=True)
		self.assertEqual(sample(spec).window, spec.window)


class TestBernoulli(unittest.TestCase):
	def test_trivial_parameters(self):
		window = Window(16, 2)
		self.assertEqual(sample(ModelSpec("bernoulli", 1.0, window)).sites, 256)
		self.assertEqual(sample(ModelSpec("bernoulli", 0.0, window)).sites, 0)

	def test_determinism(self):
		spec = ModelSpec("bernoulli", 0.6, Window(32, 2), seed=7)
		self.assertEqual(sample(spec), sample(spec))
		self.assertEqual(sample(spec).digest, sample(spec).digest)
		self.assertNotEqual(sample(spec), sample(spec.with_seed(8)))

	def test_density(self):
		spec = ModelSpec("bernoulli", 0.7, Window(64, 2), seed=1)
		config = sample(spec)
		stderr = (0.7 * 0.3 / config.window.size) ** 0.5
		self.assertLess(abs(config.density - 0.7), 4 * stderr)

	def test_site_counts(self):
		spec = ModelSpec("bernoulli", 0.3, Window(8, 2), seed=17)
		replicas = 400
		counts = sum(sample(replica_spec(spec, i)).occupancy.astype(np.int64) for i in range(replicas)).ravel()
		observed = np.concatenate([counts, replicas - counts])
		expected = np.concatenate([np.full(counts.size, replicas * 0.3), np.full(counts.size, replicas * 0.7)])
		result = stats.chisquare(observed, expected, ddof=counts.size - 1)
		self.assertGreater(result.pvalue, 1e-3)

	def test_coupling(self):
		spec = ModelSpec("bernoulli", 0.5, Window(32, 2), seed=3)
		low, high = coupled_pair(spec, 0.3, 0.6)
		self.assertFalse((low.occupancy & ~high.occupancy).any())
		same_low, same_high = coupled_pair(spec, 0.3, 0.3)
		self.assertEqual(same_low, same_high)
		with self.assertRaises(UsageError):
			coupled_pair(spec, 0.6, 0.3)

	def test_coupling_over_seeds(self):
		rng = np.random.default_rng(2024)
		for seed in range(20):
			low_u, high_u = np.sort(rng.random(2))
			spec = ModelSpec("bernoulli", 0.5, Window(16, 2), seed=seed)
			low, high = coupled_pair(spec, float(low_u), float(high_u))
			self.assertFalse((low.occupancy & ~high.occupancy).any(), (seed, low_u, high_u))

	def test_replica_seeds(self):
		spec = ModelSpec("bernoulli", 0.5, Window(16, 2), seed=3)
		self.assertEqual(replica_spec(spec, 2), replica_spec(spec, 2))
		self.assertNotEqual(replica_spec(spec, 1).seed, replica_spec(spec, 2).seed)

	def test_estimate_eta(self):
		full = estimate_eta(ModelSpec("bernoulli", 1.0, Window(16, 2)), 5)
		self.assertEqual(full.value, 1.0)
		self.assertEqual(full.stderr, 0.0)
		empty = estimate_eta(ModelSpec("bernoulli", 0.0, Window(16, 2)), 5)
		self.assertEqual(empty.value, 0.0)
		with self.assertRaises(UsageError):
			estimate_eta(ModelSpec("bernoulli", 1.0, Window(16, 2)), 0)


class TestGaussianFreeField(unittest.TestCase):
	def test_nested_level_sets(self):
		spec = ModelSpec("gff-level", 0.0, Window(8, 3), seed=5)
		low, high = coupled_pair(spec, 0.0, 1.0)
		self.assertFalse((high.occupancy & ~low.occupancy).any())

	def test_nested_over_seeds(self):
		rng = np.random.default_rng(7)
		for seed in range(10):
			low_u, high_u = np.sort(rng.normal(0.0, 1.0, size=2))
			spec = ModelSpec("gff-level", 0.0, Window(8, 3), seed=seed)
			low, high = coupled_pair(spec, float(low_u), float(high_u))
			self.assertFalse((high.occupancy & ~low.occupancy).any(), (seed, low_u, high_u))

	def test_covariance_matches_green_function(self):
		window = Window(16, 3)
		green = green_function(window)
		displacements = [(0, 0, 0), (1, 0, 0), (2, 1, 0), (8, 8, 8)]
		samples = {x: [] for x in displacements}
		for seed in range(200):
			field = gff_field(ModelSpec("gff-level", 0.0, window, seed=seed))
			for x in displacements:
				shifted = np.roll(field, shift=tuple(-v for v in x), axis=(0, 1, 2))
				samples[x].append(float((field * shifted).mean()))
		for x in displacements:
			values = np.asarray(samples[x])
			stderr = values.std(ddof=1) / np.sqrt(len(values))
			self.assertLess(abs(values.mean() - float(green[x])), 3 * stderr, x)

	def test_site_means(self):
		window = Window(4, 3)
		fields = np.stack([gff_field(ModelSpec("gff-level", 0.0, window, seed=seed)) for seed in range(300)])
		means = fields.mean(axis=0)
		stderr = fields.std(axis=0, ddof=1) / np.sqrt(len(fields))
		self.assertTrue(np.all(np.abs(means) < 4 * stderr))

	def test_low_level_fills(self):
		spec = ModelSpec("gff-level", -1e6, Window(8, 3), seed=5)
		self.assertEqual(sample(spec).sites, 8 ** 3)

	def test_zero_mode_removed(self):
		field = gff_field(ModelSpec("gff-level", 0.0, Window(8, 3), seed=2))
		self.assertAlmostEqual(float(field.mean()), 0.0, places=10)

	def test_green_function(self):
		green = green_function(Window(8, 3))
		self.assertAlmostEqual(float(green.sum()), 0.0, places=8)
		self.assertGreater(float(green.flat[0]), float(green[1, 0, 0]))
		self.assertAlmostEqual(float(green[1, 0, 0]), float(green[0, 0, 1]), places=12)


class TestInterlacement(unittest.TestCase):
	def test_zero_intensity(self):
		spec = ModelSpec("interlacement", 0.0, Window(8, 3), seed=1)
		self.assertEqual(sample(spec).sites, 1)

	def test_prefix_coupling(self):
		spec = ModelSpec("interlacement", 0.2, Window(8, 3), seed=4)
		low, high = coupled_pair(spec, 0.2, 0.8)
		self.assertFalse((low.occupancy & ~high.occupancy).any())

	def test_coupling_over_seeds(self):
		rng = np.random.default_rng(11)
		for seed in range(10):
			low_u, high_u = np.sort(rng.random(2))
			for kind in ("interlacement", "vacant-interlacement"):
				low, high = coupled_pair(ModelSpec(kind, 0.5, Window(8, 3), seed=seed), float(low_u), float(high_u))
				smaller, larger = (low, high) if kind == "interlacement" else (high, low)
				self.assertFalse((smaller.occupancy & ~larger.occupancy).any(), (kind, seed, low_u, high_u))

	def test_vacant_complement(self):
		window = Window(8, 3)
		trace = sample(ModelSpec("interlacement", 0.5, window, seed=9))
		vacant = sample(ModelSpec("vacant-interlacement", 0.5, window, seed=9))
		self.assertTrue(np.array_equal(trace.occupancy, ~vacant.occupancy))


class TestConfig(unittest.TestCase):
	def test_from_points(self):
		config = Config.from_points([(0, 0), (1, 0)], 4, 2)
		self.assertTrue(config.occupied((0, 0)))
		self.assertFalse(config.occupied((0, 1)))
		self.assertEqual(config.sites, 2)
		self.assertEqual(config.graph.nnz, 2)
		self.assertEqual(int(config.degrees.sum()), 2)

	def test_immutable(self):
		config = Config.full(Window(4, 2))
		with self.assertRaises(ValueError):
			config.occupancy[0, 0] = False

	def test_shape_mismatch(self):
		with self.assertRaises(UsageError):
			Config(Window(4, 2), np.ones((4, 5), dtype=bool))

	def test_raster_files(self):
		config = load_config(MOCKDATA.joinpath("corridor.txt"))
		self.assertEqual(config.sites, 13)
		self.assertFalse(config.wrap)
		self.assertIsNone(config.spec)
		self.assertTrue(config.occupied((-3, -3)))

	def test_save_and_load(self):
		spec = ModelSpec("bernoulli", 0.5, Window(12, 2, wrap=True), seed=11)
		config = sample(spec)
		with tempfile.TemporaryDirectory() as tmp:
			for name in ("config.txt", "config.zst"):
				loaded = load_config(save_config(config, Path(tmp) / name))
				self.assertEqual(loaded, config)
				self.assertEqual(loaded.spec, spec)

	def test_bad_raster(self):
		with tempfile.TemporaryDirectory() as tmp:
			path = Path(tmp) / "bad.txt"
			path.write_text('{"format": "other"}\n0101\n')
			with self.assertRaises(UsageError):
				load_config(path)
