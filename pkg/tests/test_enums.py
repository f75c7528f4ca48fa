import unittest

from perco.enums import CandidateMethod, Check, ModelKind, Stream


class TestEnums(unittest.TestCase):
	def test_check_order(self):
		self.assertEqual(Check.values(), ["clusters", "goodness", "event-h", "fat-set", "isoperimetry", "walk", "corrector"])
		self.assertEqual(Check.names()[2], "event_h")

	def test_string_equality(self):
		test_datas = [(Check.event_h, "event-h"), (Check.event_h, "event_h"), (ModelKind.gff_level, "gff-level")]
		for member, text in test_datas:
			self.assertEqual(member, text)
		self.assertNotEqual(Check.walk, "corrector")
		self.assertNotEqual(Check.walk, 5)
		self.assertEqual(len({Check.walk, Check("walk")}), 1)

	def test_display_names(self):
		for enum in (ModelKind, Check, CandidateMethod):
			for member in enum:
				self.assertTrue(str(member))
				self.assertNotEqual(str(member), member.value)

	def test_model_kind(self):
		self.assertTrue(ModelKind.bernoulli.increasing)
		self.assertTrue(ModelKind.interlacement.increasing)
		self.assertFalse(ModelKind("vacant-interlacement").increasing)
		self.assertEqual(ModelKind.bernoulli.min_dimension, 2)
		self.assertEqual(ModelKind.gff_level.min_dimension, 3)

	def test_streams(self):
		self.assertEqual([int(s) for s in Stream], list(range(8)))
		self.assertEqual(Stream.SLICES, 7)
