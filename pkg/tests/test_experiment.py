import tempfile
import unittest
from pathlib import Path

import numpy as np
import ujson

from perco.enums import Check, ModelKind
from perco.errors import CheckFailure, ContractViolation, InvalidArgument, UndefinedLevel, UsageError
from perco.experiment import (
	COLUMNS,
	FIELDS,
	CheckResult,
	ExperimentSpec,
	RunReport,
	jsonable,
	sweep_rows,
	write_csv,
)
from perco.iterators import SweepPoint
from perco.renormalization import Levels

EXPERIMENTS = Path(__file__).parent.joinpath(Path("mockdata/experiments"))
ALL_ONES = EXPERIMENTS / "all_ones.json"
DISABLED = EXPERIMENTS / "disabled.json"
BAD_KEY = EXPERIMENTS / "bad_key.json"


class TestExperimentSpec(unittest.TestCase):
	def test_from_file(self):
		spec = ExperimentSpec.from_file(ALL_ONES)
		self.assertEqual(spec.side, 160)
		self.assertEqual(spec.u, 1.0)
		self.assertFalse(spec.wrap)
		self.assertEqual(spec.checks, tuple(Check))
		self.assertEqual(spec.corrector_radii, (2, 4, 8))
		self.assertEqual(spec.model_spec.kind, ModelKind.bernoulli)
		self.assertEqual(spec.window.side, 160)
		self.assertIsNone(spec.out)

	def test_defaults(self):
		spec = ExperimentSpec()
		for name, (default, _) in FIELDS.items():
			if name in ("checks", "corrector_radii"):
				continue
			self.assertEqual(getattr(spec, name), default, name)
		self.assertEqual(spec.checks, ())
		self.assertEqual(ExperimentSpec.from_file(DISABLED).checks, ())

	def test_unknown_key(self):
		with self.assertRaises(InvalidArgument) as ctx:
			ExperimentSpec.from_file(BAD_KEY)
		self.assertIn("radius", ctx.exception.message)

	def test_not_an_object(self):
		with self.assertRaises(InvalidArgument):
			ExperimentSpec.from_dict([1, 2, 3])
		with tempfile.TemporaryDirectory() as tmp:
			path = Path(tmp) / "broken.json"
			path.write_text("{not json")
			with self.assertRaises(InvalidArgument):
				ExperimentSpec.from_file(path)

	def test_bad_values(self):
		test_datas = [
			{"side": 2.5},
			{"model": "ising"},
			{"wrap": "yes"},
			{"eta": 1.5},
			{"R": 0},
			{"replicas": 1},
			{"n_max": -1},
			{"ladder_l": [5, 10]},
			{"level_r": 0},
			{"checks": ["nope"]},
			{"checks": ["corrector"], "corrector_radii": [2, 4]},
			{"checks": ["corrector"], "corrector_radii": [2, 8, 4]},
			{"u": 1.5},
			{"model": "gff-level", "dimension": 2},
		]
		for data in test_datas:
			with self.assertRaises(InvalidArgument, msg=str(data)):
				ExperimentSpec.from_dict(data)

	def test_invalid_argument_is_usage(self):
		with self.assertRaises(UsageError):
			ExperimentSpec.from_dict({"side": "big"})

	def test_checks_order(self):
		spec = ExperimentSpec.from_dict({"checks": ["walk", "clusters", "walk"]})
		self.assertEqual(spec.checks, (Check.clusters, Check.walk))
		self.assertTrue(spec.enabled(Check.walk))
		self.assertFalse(spec.enabled(Check.goodness))
		self.assertEqual(ExperimentSpec.from_dict({"checks": "fat-set"}).checks, (Check.fat_set,))
		self.assertEqual(spec.to_dict()["checks"], ["clusters", "walk"])

	def test_round_trip(self):
		spec = ExperimentSpec.from_file(ALL_ONES)
		data = spec.to_dict()
		self.assertEqual(set(data), set(FIELDS))
		self.assertEqual(data["corrector_radii"], [2, 4, 8])
		self.assertEqual(ExperimentSpec.from_dict(data), spec)
		self.assertEqual(ExperimentSpec.from_dict(ujson.loads(ujson.dumps(data))), spec)

	def test_spec_hash(self):
		spec = ExperimentSpec.from_file(ALL_ONES)
		self.assertEqual(len(spec.spec_hash), 64)
		self.assertEqual(spec.spec_hash, ExperimentSpec.from_file(ALL_ONES).spec_hash)
		self.assertEqual(spec.spec_hash, spec.with_overrides(out="elsewhere").spec_hash)
		self.assertNotEqual(spec.spec_hash, spec.with_overrides(seed=8).spec_hash)

	def test_overrides(self):
		spec = ExperimentSpec.from_file(DISABLED)
		changed = spec.with_overrides(u=0.7, side=None, checks=["walk"])
		self.assertEqual(changed.u, 0.7)
		self.assertEqual(changed.side, 32)
		self.assertEqual(changed.checks, (Check.walk,))
		self.assertEqual(spec.u, 0.6)

		point = spec.with_overrides(out="runs").for_point(3, {"seed": 9})
		self.assertEqual(Path(point.out), Path("runs") / "point-003")
		self.assertEqual(point.seed, 9)
		self.assertIsNone(spec.for_point(0, {}).out)

	def test_walk_times(self):
		self.assertEqual(ExperimentSpec.from_dict({"n": 100}).walk_times, (1, 2, 4, 8, 16, 32, 64, 100))
		self.assertEqual(ExperimentSpec.from_dict({"n": 8}).walk_times, (1, 2, 4, 8))
		self.assertEqual(ExperimentSpec.from_dict({"msd_times": [8, 4, 4]}).walk_times, (4, 8))

	def test_ladder_and_levels(self):
		spec = ExperimentSpec.from_file(ALL_ONES)
		ladder = spec.ladder
		self.assertEqual(ladder.L, (2, 10))
		self.assertEqual(spec.levels(ladder), Levels(1, 1))

		explicit = ExperimentSpec.from_dict({"ladder_l": [5, 10], "ladder_r": [1, 2], "L0": 2})
		self.assertEqual(explicit.ladder.l, (5, 10))

		computed = spec.with_overrides(R=10).to_dict()
		computed.update(level_s=None, level_r=None)
		with self.assertRaises(UndefinedLevel):
			ExperimentSpec.from_dict(computed).levels(ladder)


class TestReport(unittest.TestCase):
	def setUp(self):
		self.spec = ExperimentSpec.from_file(DISABLED)

	def test_empty(self):
		report = RunReport(self.spec)
		self.assertTrue(report.passed)
		self.assertEqual(report.exit_code, 0)
		self.assertEqual(report.spec_hash, self.spec.spec_hash)
		self.assertIn("no checks enabled", report.to_text())
		data = report.to_dict()
		self.assertEqual(data["checks"], [])
		self.assertIsNone(data["failure"])

	def test_checks(self):
		report = RunReport(self.spec)
		report.add(CheckResult(Check.clusters, True, {"a2_volume": np.int64(5)}))
		self.assertEqual(report.exit_code, 0)
		report.raise_for_failure()
		report.add(CheckResult(Check.walk, False, {"min_eigenvalue": float("nan")}, note="degenerate"))
		self.assertFalse(report.passed)
		self.assertEqual(report.exit_code, 2)
		with self.assertRaises(CheckFailure) as ctx:
			report.raise_for_failure()
		self.assertEqual(ctx.exception.exit_code, 2)
		self.assertIn("walk", ctx.exception.message)
		self.assertEqual([c.name for c in report], ["clusters", "walk"])
		self.assertEqual(report.get(Check.walk).note, "degenerate")
		self.assertIsNone(report.get(Check.goodness))

		text = report.to_text()
		self.assertIn("[PASS] clusters", text)
		self.assertIn("[FAIL] walk", text)
		self.assertIn("min_eigenvalue = nan", text)

		data = report.to_dict()
		self.assertEqual(data["checks"][0]["measured"], {"a2_volume": 5})
		self.assertEqual(data["checks"][1]["measured"], {"min_eigenvalue": "nan"})
		self.assertEqual(data["checks"][1]["note"], "degenerate")

		with self.assertRaises(ContractViolation):
			report.add(CheckResult(Check.walk, True))

	def test_failure(self):
		report = RunReport(self.spec)
		report.mark_failed("fat-set", ContractViolation("broken"))
		self.assertFalse(report.passed)
		self.assertEqual(report.exit_code, 4)
		self.assertEqual(report.failure["stage"], "fat-set")
		self.assertIn("FAILED in stage fat-set", report.to_text())

	def test_save(self):
		report = RunReport(self.spec)
		report.timings["sample"] = 0.25
		with tempfile.TemporaryDirectory() as tmp:
			report.save(Path(tmp) / "run")
			data = ujson.loads((Path(tmp) / "run" / "report.json").read_text())
			self.assertEqual(data["spec_hash"], self.spec.spec_hash)
			self.assertEqual(data["schema"], 1)
			self.assertTrue(data["passed"])
			self.assertIn("spec hash", (Path(tmp) / "run" / "report.txt").read_text())


class TestCSV(unittest.TestCase):
	def test_cells(self):
		with tempfile.TemporaryDirectory() as tmp:
			path = write_csv(Path(tmp) / "nested" / "cells.csv", ("a", "b", "c", "d", "e", "f", "g"),
							 [(1, 0.5, True, None, float("inf"), (1, -2), "x"), (np.int64(3), 1 / 3, False, 0.0, -1.0, (), "")])
			self.assertEqual(path.read_text(), "a,b,c,d,e,f,g\n1,0.5,1,,inf,1 -2,x\n3,0.333333333333,0,0,-1,,\n")

	def test_mismatch(self):
		with tempfile.TemporaryDirectory() as tmp:
			with self.assertRaises(ContractViolation):
				write_csv(Path(tmp) / "bad.csv", COLUMNS["msd.csv"], [(1, 2.0)])

	def test_columns(self):
		self.assertEqual(COLUMNS["iso.csv"], ("seed", "model", "u", "R", "theta_iso", "method", "size", "boundary", "ratio"))
		self.assertEqual(COLUMNS["covariance.csv"], ("i", "j", "cov", "halfwidth"))

	def test_jsonable(self):
		data = jsonable({1: (np.float64(np.inf), np.array([1, 2])), "flag": np.bool_(True), "x": -np.inf})
		self.assertEqual(data, {"1": ["inf", [1, 2]], "flag": True, "x": "-inf"})

	def test_sweep_rows(self):
		spec = ExperimentSpec.from_file(DISABLED)
		report = RunReport(spec)
		report.eta = 0.5
		report.add(CheckResult(Check.walk, True))
		points = [SweepPoint(0, {"u": 0.6}, report), SweepPoint(1, {"u": 0.7}, error=UsageError("bad"))]
		columns, rows = sweep_rows(points, ["u"], (Check.walk, Check.corrector))
		self.assertEqual(columns, ("point", "u", "eta", "walk", "corrector", "status"))
		self.assertEqual(rows[0], [0, 0.6, 0.5, True, None, "pass"])
		self.assertEqual(rows[1], [1, 0.7, None, None, None, "error"])
		self.assertTrue(points[1].failed)
