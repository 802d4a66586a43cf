import os, unittest

import numpy as np

from src import corpus, errors, imaging, schemas, settings, utils
from src.essentials import CorpusManifest, images_of

from . import common


def tiny_manifest(seed: int = 3) -> CorpusManifest:
    return CorpusManifest(
        seed=seed,
        image_size=8,
        labeled_per_domain=2,
        unlabeled_per_domain=1,
        eval_per_domain=2,
    )


class CorpusTest(common.TemporaryDirectoryTest):
    def read_tree(self, root: str) -> dict:
        contents = dict()
        for directory, _, files in os.walk(root):
            for name in files:
                path = os.path.join(directory, name)
                with open(path, "rb") as f:
                    contents[os.path.relpath(path, root)] = f.read()
        return contents

    def test_build_writes_every_sample(self) -> None:
        built = corpus.build_corpus(tiny_manifest(), self.directory)
        self.assertEqual(built.counts(), {"train": 6, "unlabeled": 3, "val": 2, "test": 2})

        rows = corpus.read_index(self.path(settings.INDEX_FILE))
        self.assertEqual(len(rows), 13)
        ppm = [p for p in self.read_tree(self.directory) if p.endswith(".ppm")]
        self.assertEqual(sorted(ppm), sorted(os.path.normpath(r["path"]) for r in rows))
        self.assertIn(os.path.join("train", "d1", "00001.ppm"), ppm)

        unlabeled = [r for r in rows if r["split"] == "unlabeled"]
        self.assertTrue(all(r["anatomy_label"] == settings.UNLABELED_MARK for r in unlabeled))
        self.assertEqual({r["domain_id"] for r in rows if r["split"] == "test"}, {"4"})

    def test_generation_is_reproducible(self) -> None:
        first, second = self.path("first"), self.path("second")
        corpus.build_corpus(tiny_manifest(), first)
        corpus.build_corpus(tiny_manifest(), second)
        self.assertEqual(self.read_tree(first), self.read_tree(second))

        other = self.path("other")
        corpus.build_corpus(tiny_manifest(seed=4), other)
        self.assertNotEqual(self.read_tree(first), self.read_tree(other))

    def test_samples_do_not_depend_on_counts(self) -> None:
        small = corpus.generate_corpus(tiny_manifest())
        large_manifest = tiny_manifest()
        large_manifest.labeled_per_domain = 4
        large = corpus.generate_corpus(large_manifest)
        by_path = {s.path: s.image for s in large}
        for sample in small:
            self.assertTrue(np.array_equal(by_path[sample.path], sample.image), sample.path)

    def test_classes_alternate(self) -> None:
        samples = corpus.generate_corpus(tiny_manifest())
        train = [s for s in samples if s.split == settings.Split.TRAIN]
        self.assertEqual([s.label for s in train], [0, 1] * 3)

    def test_load_round_trip(self) -> None:
        built = corpus.build_corpus(tiny_manifest(), self.directory)
        loaded = corpus.load_corpus(self.directory)
        self.assertEqual(loaded.counts(), built.counts())
        for split in settings.Split:
            original, restored = built.get(split), loaded.get(split)
            self.assert_close(images_of(restored), images_of(original), 0.5 / 255 + 1e-12)
            self.assertEqual(
                [s.visible_label() for s in restored], [s.visible_label() for s in original]
            )
        with self.assertRaises(errors.CorpusError):
            corpus.load_corpus(self.directory, image_size=16)

    def test_manifest_round_trip(self) -> None:
        corpus.build_corpus(tiny_manifest(seed=11), self.directory)
        manifest = corpus.load_manifest(self.path(settings.MANIFEST_FILE))
        self.assertEqual(manifest.seed, 11)
        self.assertEqual(manifest.train_domains, [0, 1, 2])
        self.assertEqual(manifest.image_size, 8)

    def test_manifest_validation(self) -> None:
        with self.assertRaises(errors.ConfigError):
            schemas.load(schemas.CorpusManifestSchema, {"train_domains": "0,1", "val_domains": "1"})
        with self.assertRaises(errors.ConfigError):
            schemas.load(schemas.CorpusManifestSchema, {"generator_version": "7"})
        with self.assertRaises(errors.ConfigError):
            schemas.load(schemas.CorpusManifestSchema, {"image_size": "big"})
        with self.assertRaises(errors.CorpusError):
            corpus.generate_corpus(CorpusManifest(train_domains=(0, 9), labeled_per_domain=1))

    def test_missing_index(self) -> None:
        with self.assertRaises(errors.ConfigError):
            corpus.load_corpus(self.directory, 8)


class IngestTest(common.TemporaryDirectoryTest):
    def write_folder(self, images: dict, rows: list) -> None:
        for name, image in images.items():
            path = self.path(name)
            os.makedirs(os.path.dirname(path), exist_ok=True)
            imaging.write_image(path, image)
        utils.write_csv(self.path(settings.INDEX_FILE), corpus.INDEX_HEADER, rows)

    def test_ingest_resizes(self) -> None:
        images = {
            os.path.join("a", "one.ppm"): np.full((3, 16, 16), 0.2),
            os.path.join("a", "two.ppm"): np.full((3, 16, 16), 0.6),
            "three.ppm": np.full((3, 8, 8), 0.8),
        }
        rows = [
            ["a/one.ppm", "0", "7", "train"],
            ["a/two.ppm", "-", "7", "unlabeled"],
            ["three.ppm", "1", "8", "test"],
        ]
        self.write_folder(images, rows)

        ingested = corpus.ingest_folder(self.directory, 8, domain_map={7: 10})
        self.assertEqual(ingested.counts(), {"train": 1, "unlabeled": 1, "val": 0, "test": 1})
        train = ingested.get(settings.Split.TRAIN)[0]
        self.assertEqual(train.image.shape, (3, 8, 8))
        self.assertEqual((train.label, train.domain_id), (0, 10))
        self.assert_close(train.image, np.full((3, 8, 8), 51 / 255), 1e-5)
        self.assertIsNone(ingested.get(settings.Split.UNLABELED)[0].visible_label())
        self.assertEqual(ingested.get(settings.Split.TEST)[0].domain_id, 8)

    def test_index_must_match_files(self) -> None:
        images = {"one.ppm": np.zeros((3, 8, 8)), "extra.ppm": np.zeros((3, 8, 8))}
        self.write_folder(images, [["one.ppm", "0", "0", "train"]])
        with self.assertRaises(errors.CorpusError):
            corpus.ingest_folder(self.directory, 8)

    def test_malformed_rows(self) -> None:
        self.write_folder({"one.ppm": np.zeros((3, 8, 8))}, [["one.ppm", "x", "0", "train"]])
        with self.assertRaises(errors.CorpusError):
            corpus.ingest_folder(self.directory, 8)

        self.write_folder({"one.ppm": np.zeros((3, 8, 8))}, [["one.ppm", "0", "0", "holdout"]])
        with self.assertRaises(errors.CorpusError):
            corpus.ingest_folder(self.directory, 8)


if __name__ == "__main__":
    unittest.main()
