import contextlib
import io
import tempfile
import unittest
from pathlib import Path

from perco.__main__ import build_parser, load_spec, main, parse_grid
from perco.enums import Check
from perco.errors import UsageError

EXPERIMENTS = Path(__file__).parent.joinpath(Path("mockdata/experiments"))
DISABLED = str(EXPERIMENTS / "disabled.json")
BAD_KEY = str(EXPERIMENTS / "bad_key.json")
UNDEFINED_LEVEL = str(EXPERIMENTS / "undefined_level.json")


def run(*argv):
	stdout, stderr = io.StringIO(), io.StringIO()
	with contextlib.redirect_stdout(stdout), contextlib.redirect_stderr(stderr):
		code = main(list(argv))
	return code, stdout.getvalue(), stderr.getvalue()


class TestExitCodes(unittest.TestCase):
	def test_run(self):
		with tempfile.TemporaryDirectory() as tmp:
			code, out, _ = run("run", "--config", DISABLED, "--out", tmp)
			self.assertEqual(code, 0)
			self.assertIn("no checks enabled", out)
			self.assertTrue((Path(tmp) / "report.json").exists())

	def test_sample(self):
		with tempfile.TemporaryDirectory() as tmp:
			code, _, _ = run("sample", "--config", DISABLED, "--side", "16", "--out", tmp)
			self.assertEqual(code, 0)
			self.assertTrue((Path(tmp) / "config.zst").exists())

	def test_usage_errors(self):
		test_datas = [
			(),
			("bogus",),
			("run", "--config", BAD_KEY),
			("run", "--config", DISABLED, "--checks", "nope"),
			("run", "--config", DISABLED, "--side", "wide"),
			("run", "--config", DISABLED, "--u", "1.5"),
			("sweep", "--config", DISABLED),
		]
		for argv in test_datas:
			code, _, err = run(*argv)
			self.assertEqual(code, 3, argv)
			self.assertIn("exit code: 3", err)

	def test_stage_failure(self):
		code, _, err = run("run", "--config", UNDEFINED_LEVEL)
		self.assertEqual(code, 3)
		self.assertIn("event-h", err)

	def test_sweep(self):
		code, out, _ = run("sweep", "--config", DISABLED, "--grid", "u=0.6,1.5")
		self.assertEqual(code, 3)
		self.assertIn("point 0 {'u': 0.6}: pass", out)
		self.assertIn("point 1 {'u': 1.5}:", out)

		code, out, _ = run("sweep", "--config", DISABLED, "--grid", "seed=1,2")
		self.assertEqual(code, 0)
		self.assertEqual(len(out.splitlines()), 2)


class TestArguments(unittest.TestCase):
	def test_parse_grid(self):
		self.assertEqual(parse_grid(["u=0.5, 0.6", "model=bernoulli", "checks=[\"walk\"]"]),
						 {"u": [0.5, 0.6], "model": ["bernoulli"], "checks": [["walk"]]})
		self.assertEqual(parse_grid(None), {})
		test_datas = [["u"], ["=1,2"]]
		for entries in test_datas:
			with self.assertRaises(UsageError):
				parse_grid(entries)

	def test_overrides(self):
		args = build_parser().parse_args(["iso", "--config", DISABLED, "--R", "5", "--theta-iso", "0.25", "--wrap"])
		spec = load_spec(args)
		self.assertEqual(spec.R, 5)
		self.assertEqual(spec.theta_iso, 0.25)
		self.assertTrue(spec.wrap)
		self.assertEqual(spec.side, 32)
		self.assertEqual(spec.checks, (Check.isoperimetry,))

	def test_subcommand_checks(self):
		test_datas = [
			("sample", ()),
			("classify", (Check.goodness,)),
			("renorm", (Check.event_h, Check.fat_set)),
			("walk", (Check.walk, Check.corrector)),
		]
		for command, checks in test_datas:
			spec = load_spec(build_parser().parse_args([command, "--config", DISABLED]))
			self.assertEqual(spec.checks, checks)

	def test_run_checks(self):
		spec = load_spec(build_parser().parse_args(["run", "--config", DISABLED, "--checks", "walk", "clusters"]))
		self.assertEqual(spec.checks, (Check.clusters, Check.walk))
		spec = load_spec(build_parser().parse_args(["run", "--config", DISABLED]))
		self.assertEqual(spec.checks, ())
