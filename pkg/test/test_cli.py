import os, unittest

from src import checkpoint, cli, settings, utils

from . import common

MANIFEST = """\
# tiny corpus for command tests
image_size = 8
labeled_per_domain = 4
unlabeled_per_domain = 2
eval_per_domain = 4
"""


class CliTest(common.TemporaryDirectoryTest):
    PRECISION = "f32"

    def setUp(self) -> None:
        super().setUp()
        self.data = self.path("data")
        with open(self.path("manifest.txt"), "w") as f:
            f.write(MANIFEST)

    def generate(self, seed: int = 0) -> int:
        return cli.main(
            [
                "gen-data",
                "--manifest",
                self.path("manifest.txt"),
                "--out-dir",
                self.data,
                "--seed",
                str(seed),
            ]
        )

    def train(self, out_dir: str, *extra: str) -> int:
        return cli.main(
            [
                "train-encoder",
                "--data-dir",
                self.data,
                "--out-dir",
                out_dir,
                "--arch",
                "tiny",
                "--epochs",
                "1",
                "--batch",
                "4",
                "--mixes",
                "1",
                *extra,
            ]
        )

    def test_gen_data(self) -> None:
        self.assertEqual(self.generate(seed=5), 0)
        rows = utils.read_csv(os.path.join(self.data, settings.INDEX_FILE))
        self.assertEqual(len(rows), 3 * 4 + 3 * 2 + 4 + 4)
        run_config = utils.read_key_values(os.path.join(self.data, settings.RUN_CONFIG_FILE))
        self.assertEqual(run_config["command"], "gen-data")
        self.assertEqual(run_config["seed"], "5")
        self.assertEqual(run_config["image_size"], "8")

    def test_gen_data_repeats_from_run_config(self) -> None:
        self.assertEqual(self.generate(seed=2), 0)
        again = self.path("again")
        run_config = os.path.join(self.data, settings.RUN_CONFIG_FILE)
        self.assertEqual(cli.main(["gen-data", "--manifest", run_config, "--out-dir", again]), 0)

        first = utils.read_csv(os.path.join(self.data, settings.INDEX_FILE))
        second = utils.read_csv(os.path.join(again, settings.INDEX_FILE))
        self.assertEqual(first, second)
        for row in first[:3]:
            with open(os.path.join(self.data, row["path"]), "rb") as f, open(
                os.path.join(again, row["path"]), "rb"
            ) as g:
                self.assertEqual(f.read(), g.read())

    def test_missing_manifest(self) -> None:
        code = cli.main(["gen-data", "--manifest", self.path("absent.txt"), "--out-dir", self.data])
        self.assertEqual(code, 2)

    def test_invalid_manifest(self) -> None:
        with open(self.path("manifest.txt"), "a") as f:
            f.write("val_domains = 0\n")
        self.assertEqual(self.generate(), 2)

    def test_usage_error(self) -> None:
        with self.assertRaises(SystemExit) as context:
            cli.main(["gen-data"])
        self.assertEqual(context.exception.code, 2)

    def test_missing_data_dir(self) -> None:
        self.assertEqual(self.train(self.path("run")), 2)

    def test_pipeline(self) -> None:
        self.assertEqual(self.generate(), 0)
        run = self.path("run")
        self.assertEqual(self.train(run, "--schedule-epochs", "2"), 0)
        final = os.path.join(run, settings.FINAL_CHECKPOINT)
        self.assertEqual(len(utils.read_csv(os.path.join(run, settings.LOSS_FILE))), 1)

        run_config = utils.read_key_values(os.path.join(run, settings.RUN_CONFIG_FILE))
        self.assertEqual(run_config["arch"], "tiny")
        self.assertEqual(run_config["deviation.image_size"], "224 -> 8")

        self.assertEqual(self.train(run, "--resume", final, "--epochs", "2"), 0)
        self.assertEqual(checkpoint.load_checkpoint(final).epoch, 2)
        self.assertEqual(len(utils.read_csv(os.path.join(run, settings.LOSS_FILE))), 2)

        evaluated = self.path("eval")
        code = cli.main(
            ["eval", "--checkpoint", final, "--data-dir", self.data, "--out-dir", evaluated]
        )
        self.assertEqual(code, 0)
        metrics = utils.read_csv(os.path.join(evaluated, cli.METRICS_FILE))
        self.assertEqual({r["split"] for r in metrics}, {"train", "val", "test"})

        grid = self.path("grid")
        code = cli.main(
            [
                "mixgrid",
                "--checkpoint",
                final,
                "--data-dir",
                self.data,
                "--out-dir",
                grid,
                "--sources",
                "2",
                "--donors",
                "2",
                "--mixes",
                "10",
            ]
        )
        self.assertEqual(code, 0)
        self.assertTrue(os.path.isfile(os.path.join(grid, cli.MIXGRID_FILE)))

        classify = self.path("classify")
        arguments = ["train-classifier", "--data-dir", self.data, "--out-dir", classify]
        arguments += ["--epochs", "1", "--batch", "4"]
        self.assertEqual(cli.main(arguments + ["--augment", "mix"]), 2)
        self.assertEqual(cli.main(arguments + ["--checkpoint", final, "--augment", "mix"]), 0)
        self.assertTrue(os.path.isfile(os.path.join(classify, "classifier_mix_seed0.ckpt")))
        rows = utils.read_csv(os.path.join(classify, cli.COMPARISON_FILE))
        self.assertEqual([r["mode"] for r in rows], ["mix"])

    def test_checkpoint_for_other_image_size(self) -> None:
        self.assertEqual(self.generate(), 0)
        run = self.path("run")
        self.assertEqual(self.train(run), 0)
        final = os.path.join(run, settings.FINAL_CHECKPOINT)

        large = self.path("large")
        with open(self.path("large.txt"), "w") as f:
            f.write(MANIFEST.replace("image_size = 8", "image_size = 16"))
        arguments = ["gen-data", "--manifest", self.path("large.txt"), "--out-dir", large]
        self.assertEqual(cli.main(arguments), 0)

        code = cli.main(
            ["eval", "--checkpoint", final, "--data-dir", large, "--out-dir", self.path("eval")]
        )
        self.assertEqual(code, 2)
        arguments = ["train-classifier", "--data-dir", large, "--out-dir", self.path("classify")]
        self.assertEqual(cli.main(arguments + ["--checkpoint", final, "--augment", "mix"]), 2)

    def test_missing_checkpoint(self) -> None:
        self.assertEqual(self.generate(), 0)
        code = cli.main(
            [
                "eval",
                "--checkpoint",
                self.path("absent.ckpt"),
                "--data-dir",
                self.data,
                "--out-dir",
                self.path("eval"),
            ]
        )
        self.assertEqual(code, 2)


if __name__ == "__main__":
    unittest.main()
