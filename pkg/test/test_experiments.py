import unittest

from src import encoder, experiments


class WidthNoteTest(unittest.TestCase):
    def test_rejected_width(self) -> None:
        note = experiments.width_note(128, encoder.architecture("deep"))
        self.assertIn("L=128 rejected", note)
        self.assertIn("L=144 chosen (V=6)", note)
        self.assertIn("valid", experiments.width_note(96, encoder.architecture("deep")))


class TrendTableTest(unittest.TestCase):
    def test_caption_names_both_comparisons(self) -> None:
        rows = [
            ["base", "base", 96, 4, 10, 30, "30.00", "28.00", "27.00", ""],
            ["unlabeled", "base", 96, 4, 10, 45, "30.50", "28.20", "27.40", ""],
            ["deep", "deep", 144, 6, 2, 30, "29.00", "27.50", "27.10", "L=128 rejected"],
        ]
        text = experiments.trend_markdown(rows)
        caption, table = text.split("\n\n", 1)
        self.assertIn("`base` and `unlabeled`", caption)
        self.assertIn("`base` and `deep`", caption)

        lines = table.strip().split("\n")
        self.assertEqual(len(lines), 2 + len(rows))
        self.assertTrue(lines[0].startswith("| run | arch |"))
        self.assertTrue(lines[4].startswith("| deep | deep | 144 |"))


if __name__ == "__main__":
    unittest.main()
