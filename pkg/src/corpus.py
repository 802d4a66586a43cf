import logging, os

from typing import Dict, List, Optional, Tuple

import numpy as np

from . import errors, generator, imaging, schemas, settings, utils
from .essentials import Corpus, CorpusManifest, DomainSample

INDEX_HEADER = ("path", "anatomy_label", "domain_id", "split")

# Stable codes of the splits inside the data seed stream.
SPLIT_CODES = {
    settings.Split.TRAIN: 0,
    settings.Split.UNLABELED: 1,
    settings.Split.VAL: 2,
    settings.Split.TEST: 3,
}


def sample_rng(
    seed: int, split: settings.Split, domain_id: int, index: int
) -> np.random.Generator:
    return utils.seed_stream(seed, settings.Stream.DATA, SPLIT_CODES[split], domain_id, index)


def generate_corpus(manifest: CorpusManifest) -> List[DomainSample]:
    """Generates every sample of the manifest in memory. Classes alternate, so every domain is
    balanced."""

    manifest.validate()
    samples = list()
    for split in settings.Split:
        for domain_id in manifest.domains_of(split):
            generator.domain(domain_id)
            for index in range(manifest.count_of(split)):
                label = index % generator.NUM_CLASSES
                sample = generator.generate_sample(
                    label,
                    domain_id,
                    sample_rng(manifest.seed, split, domain_id, index),
                    split=split,
                    labeled=split != settings.Split.UNLABELED,
                    size=manifest.image_size,
                )
                sample.path = os.path.join(split.value, f"d{domain_id}", f"{index:05d}.ppm")
                samples.append(sample)
    return samples


def index_row(sample: DomainSample) -> List[object]:
    label = sample.visible_label()
    return [
        sample.path,
        settings.UNLABELED_MARK if label is None else label,
        sample.domain_id,
        sample.split.value,
    ]


def write_index(path: str, samples: List[DomainSample]) -> None:
    utils.write_csv(path, INDEX_HEADER, (index_row(s) for s in samples))


def read_index(path: str) -> List[Dict[str, str]]:
    if not os.path.isfile(path):
        raise errors.ConfigError(f"Index file '{path}' does not exist")
    rows = utils.read_csv(path)
    for number, row in enumerate(rows, start=2):
        if any(row.get(column) in (None, "") for column in INDEX_HEADER):
            raise errors.CorpusError(f"{path}:{number}: row misses one of {INDEX_HEADER}")
    return rows


def build_corpus(manifest: CorpusManifest, out_dir: str) -> Corpus:
    """Writes the images, `index.csv` and `manifest.txt` of a generated corpus."""

    samples = generate_corpus(manifest)
    for sample in samples:
        assert sample.path is not None
        path = os.path.join(out_dir, sample.path)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        imaging.write_image(path, sample.image)

    write_index(os.path.join(out_dir, settings.INDEX_FILE), samples)
    utils.write_key_values(
        os.path.join(out_dir, settings.MANIFEST_FILE),
        schemas.dump(schemas.CorpusManifestSchema, manifest),
    )

    corpus = Corpus(samples)
    logging.info(f"Corpus written to '{out_dir}': {corpus.counts()}")
    return corpus


def load_manifest(path: str) -> CorpusManifest:
    return schemas.load(schemas.CorpusManifestSchema, utils.read_key_values(path))


def _parse_row(
    row: Dict[str, str], source: str, domain_map: Optional[Dict[int, int]] = None
) -> Tuple[settings.Split, int, Optional[int]]:
    try:
        split = settings.Split(row["split"])
        domain_id = int(row["domain_id"])
        raw_label = row["anatomy_label"]
        label = None if raw_label == settings.UNLABELED_MARK else int(raw_label)
    except ValueError as e:
        raise errors.CorpusError(f"{source}: malformed index row {row}: {e}")
    if domain_map is not None:
        domain_id = domain_map.get(domain_id, domain_id)
    return split, domain_id, label


def load_corpus(data_dir: str, image_size: Optional[int] = None) -> Corpus:
    """Reads a corpus written by `build_corpus`. Images must have the declared size."""

    index_path = os.path.join(data_dir, settings.INDEX_FILE)
    rows = read_index(index_path)
    if image_size is None:
        manifest_path = os.path.join(data_dir, settings.MANIFEST_FILE)
        image_size = load_manifest(manifest_path).image_size

    samples = list()
    for row in rows:
        split, domain_id, label = _parse_row(row, index_path)
        image = imaging.read_image(os.path.join(data_dir, row["path"]), (image_size, image_size))
        samples.append(DomainSample(image, label, domain_id, split, label is not None, row["path"]))

    corpus = Corpus(samples)
    logging.info(f"Corpus loaded from '{data_dir}': {corpus.counts()}")
    return corpus


def ingest_folder(
    path: str,
    image_size: int,
    domain_map: Optional[Dict[int, int]] = None,
) -> Corpus:
    """Reads an external folder of PPM images described by an index with the corpus columns.

    Images of another size are resized bicubically to `image_size`. `domain_map` renames domain
    ids, so several folders can be registered side by side.
    """

    index_path = os.path.join(path, settings.INDEX_FILE)
    rows = read_index(index_path)

    listed = {os.path.normpath(row["path"]) for row in rows}
    on_disk = set()
    for root, _, files in os.walk(path):
        for name in files:
            if name.lower().endswith(".ppm"):
                on_disk.add(os.path.normpath(os.path.relpath(os.path.join(root, name), path)))
    if listed != on_disk:
        missing = sorted(listed - on_disk)[:5]
        unlisted = sorted(on_disk - listed)[:5]
        raise errors.CorpusError(
            f"Index of '{path}' does not match its files (missing: {missing}, unlisted: {unlisted})"
        )

    samples = list()
    resized = 0
    for row in rows:
        split, domain_id, label = _parse_row(row, index_path, domain_map)
        image = imaging.read_image(os.path.join(path, row["path"]))
        if image.shape[1:] != (image_size, image_size):
            image = imaging.resize_bicubic(image, image_size, image_size)
            resized += 1
        if image.min() < 0.0 or image.max() > 1.0:
            logging.warning(f"Clamping out-of-range pixels of '{row['path']}' after resizing")
            image = np.clip(image, 0.0, 1.0)
        samples.append(DomainSample(image, label, domain_id, split, label is not None, row["path"]))

    corpus = Corpus(samples)
    logging.info(f"Ingested '{path}': {corpus.counts()}, {resized} images resized")
    return corpus
