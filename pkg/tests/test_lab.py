import asyncio
import shutil
import tempfile
import unittest
from pathlib import Path

import ujson

from perco.enums import Check
from perco.errors import InvalidArgument, StageError, UndefinedLevel, UsageError
from perco.experiment import ExperimentSpec
from perco.lab import Laboratory, grid_points_of
from perco.lattice import Window
from perco.samplers import Config, ModelSpec, load_config

EXPERIMENTS = Path(__file__).parent.joinpath(Path("mockdata/experiments"))
ALL_ONES = ExperimentSpec.from_file(EXPERIMENTS / "all_ones.json")
DISABLED = ExperimentSpec.from_file(EXPERIMENTS / "disabled.json")
UNDEFINED_LEVEL = ExperimentSpec.from_file(EXPERIMENTS / "undefined_level.json")

ALL_ONES_FILES = {
	"config.zst",
	"clusters.csv",
	"goodness.csv",
	"goodness.jsonl",
	"event_h.csv",
	"fat_set.csv",
	"fat_set.jsonl",
	"iso.csv",
	"reduction.csv",
	"msd.csv",
	"covariance.csv",
	"return.csv",
	"sublinearity.csv",
	"report.txt",
	"report.json",
}


class TestFullRun(unittest.TestCase):
	"""One all-occupied experiment, run directly and again as a one-point sweep on two workers."""

	@classmethod
	def setUpClass(cls):
		cls.tmp = Path(tempfile.mkdtemp())
		with Laboratory() as lab:
			cls.report = lab.run_experiment(ALL_ONES, out=cls.tmp / "first")
			cls.timing_stats = lab.timing_stats
		with Laboratory(workers=2) as lab:
			cls.points = lab.sweep(ALL_ONES.with_overrides(out=str(cls.tmp / "sweep")), {"seed": [ALL_ONES.seed]})

	@classmethod
	def tearDownClass(cls):
		shutil.rmtree(cls.tmp, ignore_errors=True)

	def test_all_pass(self):
		self.assertTrue(self.report.passed, self.report.to_text())
		self.assertEqual(self.report.exit_code, 0)
		self.assertEqual([c.name for c in self.report], Check.values())
		self.assertEqual(self.report.eta, 1.0)
		self.assertIsNone(self.report.failure)

	def test_measured(self):
		self.assertTrue(self.report.get(Check.clusters).measured["a2_unique"])
		self.assertEqual(self.report.get(Check.goodness).measured["bad_fractions"], [0.0, 0.0])
		self.assertEqual(self.report.get(Check.event_h).measured["failures"], 0)
		self.assertEqual(self.report.get(Check.fat_set).measured["members"], 225)
		self.assertEqual(self.report.get(Check.isoperimetry).measured["reduction"]["label"], "conditioned")
		self.assertGreater(self.report.get(Check.walk).measured["min_eigenvalue"], 0)
		self.assertEqual(self.report.get(Check.walk).measured["start"], [0, 0])

		corrector = self.report.get(Check.corrector).measured
		self.assertEqual(corrector["shift_neighbour"], [1, 0])
		self.assertGreater(corrector["shift_sites"], 0)
		self.assertLess(corrector["shift_discrepancy"], 1e-8)
		self.assertEqual(corrector["radii"], [2, 4, 8])

	def test_outputs(self):
		first = self.tmp / "first"
		self.assertEqual({p.name for p in first.iterdir()}, ALL_ONES_FILES)
		self.assertEqual(load_config(first / "config.zst").sites, 160 ** 2)
		self.assertEqual((first / "event_h.csv").read_text(), "clause,corner,detail\n")
		self.assertTrue((first / "fat_set.csv").read_text().startswith("scope,j,min_density,bound\nbox,2,"))
		self.assertEqual((first / "sublinearity.csv").read_text().splitlines()[0], "k,m_k")

		data = ujson.loads((first / "report.json").read_text())
		self.assertTrue(data["passed"])
		self.assertEqual(data["spec_hash"], ALL_ONES.spec_hash)
		self.assertEqual([c["check"] for c in data["checks"]], Check.values())

	def test_reproducible(self):
		first, again = self.tmp / "first", self.tmp / "sweep" / "point-000"
		self.assertEqual({p.name for p in again.iterdir()}, ALL_ONES_FILES)
		for path in sorted(first.iterdir()):
			if path.name == "report.txt":
				continue
			if path.name == "report.json":
				a, b = ujson.loads(path.read_text()), ujson.loads((again / path.name).read_text())
				a.pop("timings")
				b.pop("timings")
				self.assertEqual(a, b)
				continue
			self.assertEqual(path.read_bytes(), (again / path.name).read_bytes(), path.name)

	def test_sweep(self):
		self.assertEqual(len(self.points), 1)
		point = self.points[0]
		self.assertFalse(point.failed)
		self.assertEqual(point.parameters, {"seed": ALL_ONES.seed})
		self.assertEqual(point.report.spec_hash, self.report.spec_hash)
		lines = (self.tmp / "sweep" / "sweep.csv").read_text().splitlines()
		self.assertEqual(lines[0], "point,seed,eta," + ",".join(Check.values()) + ",status")
		self.assertEqual(lines[1], "0,{},1,".format(ALL_ONES.seed) + "1," * len(Check) + "pass")

	def test_timings(self):
		self.assertEqual(list(self.report.timings)[:2], ["sample", "eta"])
		self.assertEqual(len(self.report.timings), 2 + len(Check))
		self.assertGreaterEqual(self.timing_stats.get_total("sample"), 0.0)
		self.assertIsNotNone(self.timing_stats.get_average("corrector"))


class TestLaboratory(unittest.TestCase):
	def test_disabled(self):
		with tempfile.TemporaryDirectory() as tmp:
			report = Laboratory().run_experiment(DISABLED, out=tmp)
			self.assertTrue(report.passed)
			self.assertEqual(report.exit_code, 0)
			self.assertEqual(list(report), [])
			self.assertIsNone(report.eta)
			self.assertEqual(sorted(p.name for p in Path(tmp).iterdir()), ["config.zst", "report.json", "report.txt"])
			self.assertIn("no checks enabled", (Path(tmp) / "report.txt").read_text())

	def test_no_output(self):
		report = Laboratory().run_experiment(DISABLED)
		self.assertTrue(report.passed)
		self.assertEqual(list(report.timings), ["sample"])

	def test_stage_error(self):
		with tempfile.TemporaryDirectory() as tmp:
			with self.assertRaises(StageError) as ctx:
				Laboratory().run_experiment(UNDEFINED_LEVEL, out=tmp)
			self.assertEqual(ctx.exception.stage, "event-h")
			self.assertIsInstance(ctx.exception.original, UndefinedLevel)
			self.assertEqual(ctx.exception.exit_code, 3)

			data = ujson.loads((Path(tmp) / "report.json").read_text())
			self.assertFalse(data["passed"])
			self.assertEqual(data["failure"]["stage"], "event-h")
			self.assertEqual(data["failure"]["reason"], "Undefined Level")
			self.assertTrue((Path(tmp) / "config.zst").exists())

	def test_workers(self):
		with self.assertRaises(UsageError):
			Laboratory(workers=0)
		lab = Laboratory(workers=2)
		self.assertIs(lab.executor, lab.executor)
		lab.close()
		lab.close()

	def test_labeling_cache(self):
		lab = Laboratory(cache_max_size=1)
		first = Config.full(Window(8, 2, wrap=False))
		second = Config.full(Window(6, 2, wrap=False))
		labeling = lab.labeling(first)
		self.assertIs(lab.labeling(first), labeling)
		lab.labeling(second)
		self.assertIsNot(lab.labeling(first), labeling)


class TestReplicas(unittest.TestCase):
	def setUp(self):
		self.spec = ModelSpec("bernoulli", 0.5, Window(16, 2, wrap=False), seed=5)

	def test_replicas(self):
		with Laboratory() as lab:
			results = lab.replicas(ModelSpec("bernoulli", 1.0, Window(16, 2, wrap=False)), lambda c, i: (i, c.sites), 4)
		self.assertEqual(results, [(0, 256), (1, 256), (2, 256), (3, 256)])

	def test_independent_of_workers(self):
		with Laboratory() as lab:
			one = lab.replicas(self.spec, lambda c, i: c.digest, 6)
		with Laboratory(workers=3) as lab:
			three = lab.replicas(self.spec, lambda c, i: c.digest, 6)
		self.assertEqual(one, three)
		self.assertEqual(len(set(one)), 6)

	def test_async_iterator(self):
		async def collect(lab):
			return [volume async for volume in lab.get_replicas(self.spec, lambda c, i: c.sites, 3)]

		with Laboratory(workers=2) as lab:
			volumes = asyncio.run(collect(lab))
		self.assertEqual(len(volumes), 3)

	def test_no_replicas(self):
		with self.assertRaises(UsageError):
			Laboratory().get_replicas(self.spec, lambda c, i: None, 0)


class TestSweep(unittest.TestCase):
	def test_grid(self):
		self.assertEqual(grid_points_of({"u": [0.5, 0.6], "seed": [1, 2]}),
						 [{"u": 0.5, "seed": 1}, {"u": 0.5, "seed": 2}, {"u": 0.6, "seed": 1}, {"u": 0.6, "seed": 2}])
		test_datas = [{}, {"u": []}]
		for grid in test_datas:
			with self.assertRaises(UsageError):
				grid_points_of(grid)
		with self.assertRaises(UsageError):
			Laboratory().sweep(DISABLED, {})
		with self.assertRaises(InvalidArgument):
			Laboratory().sweep(DISABLED, {"radius": [1]})

	def test_failing_point(self):
		with tempfile.TemporaryDirectory() as tmp:
			with Laboratory(workers=2) as lab:
				points = lab.sweep(DISABLED.with_overrides(out=tmp), {"u": [0.6, 1.5]})
			self.assertEqual([p.index for p in points], [0, 1])
			self.assertFalse(points[0].failed)
			self.assertTrue(points[0].report.passed)
			self.assertTrue(points[1].failed)
			self.assertIsInstance(points[1].error, InvalidArgument)
			self.assertEqual((Path(tmp) / "sweep.csv").read_text(), "point,u,eta,status\n0,0.6,,pass\n1,1.5,,error\n")
			self.assertTrue((Path(tmp) / "point-000" / "report.json").exists())

	def test_parallel_timings(self):
		seeds = list(range(16))
		with Laboratory(workers=4) as lab:
			points = lab.sweep(DISABLED.with_overrides(side=8), {"seed": seeds})
			self.assertEqual(len(points), len(seeds))
			self.assertEqual(len(lab.timing_stats["sample"]), len(seeds))
