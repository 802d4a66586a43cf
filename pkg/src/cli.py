"""Command line entry point.

Every command resolves its configuration as flags over an optional key-value file over the
schema defaults, writes the resolved values to `run_config.txt` in its output directory and
returns 0 on success, 1 on runtime failures and 2 on usage or configuration errors.
"""

import argparse, logging, os

from typing import Any, Dict, Mapping, Optional, Sequence

import numpy as np

from . import checkpoint as checkpoints
from . import classifier, corpus, encoder, errors, evaluation, experiments, schemas, settings
from . import tensor, trainer, utils
from .essentials import Corpus, RunConfig, images_of

# Keys of `run_config.txt` that describe the run rather than configure it.
RUN_KEYS = ("command", "out_dir", "checkpoint", "data_dir", "seeds")
DEVIATION_PREFIX = "deviation."

COMPARISON_FILE = "comparison.csv"
METRICS_FILE = "metrics.csv"
MIXGRID_FILE = "mixgrid.ppm"
MIXING_FILE = "mixing.csv"
RECONSTRUCTIONS_FILE = "reconstructions.ppm"


def load_config_file(path: Optional[str]) -> Dict[str, str]:
    if path is None:
        return dict()
    values = utils.read_key_values(path)
    return {
        key: value
        for key, value in values.items()
        if key not in RUN_KEYS and not key.startswith(DEVIATION_PREFIX)
    }


def merge(file_values: Mapping[str, Any], flags: Mapping[str, Any]) -> Dict[str, Any]:
    """Flags that were given win over file values; schema defaults fill the rest on load."""

    merged: Dict[str, Any] = dict(file_values)
    merged.update({key: value for key, value in flags.items() if value is not None})
    return merged


def write_run_config(
    out_dir: str,
    command: str,
    seed: int,
    values: Mapping[str, Any],
    extra: Optional[Mapping[str, str]] = None,
) -> RunConfig:
    flat = {key: value for key, value in values.items() if value is not None}
    flat.update(extra or dict())
    run = RunConfig(command, seed, out_dir, render_values(flat))
    dumped = schemas.dump(schemas.RunConfigSchema, run)
    lines: Dict[str, Any] = dict(dumped.pop("values"))
    lines.update(dumped)
    utils.write_key_values(os.path.join(out_dir, settings.RUN_CONFIG_FILE), lines)
    return run


def render_values(values: Mapping[str, Any]) -> Dict[str, str]:
    """Renders values the way key-value files spell them."""

    rendered = dict()
    for key, value in values.items():
        if isinstance(value, (list, tuple)):
            rendered[key] = ",".join(str(v) for v in value)
        else:
            rendered[key] = str(value)
    return rendered


def _train_flags(args: argparse.Namespace) -> Dict[str, Any]:
    return {
        "epochs": args.epochs,
        "batch_size": args.batch,
        "mixes": args.mixes,
        "learning_rate": args.lr,
        "weight_decay": args.weight_decay,
        "lambda_anatomy": args.lambda_anatomy,
        "lambda_characteristic": args.lambda_characteristic,
        "lambda_reconstruction": args.lambda_reconstruction,
        "seed": args.seed,
        "schedule_epochs": args.schedule_epochs,
        "include_unlabeled": True if args.include_unlabeled else None,
        "arch": args.arch,
        "precision": args.precision,
    }


def _load_corpus(data_dir: str) -> Corpus:
    if not os.path.isdir(data_dir):
        raise errors.ConfigError(f"Data directory '{data_dir}' does not exist")
    return corpus.load_corpus(data_dir)


def _check_image_size(ckpt: checkpoints.EncoderCheckpoint, data: Corpus) -> None:
    size = data.image_size()
    if size is not None:
        checkpoints.check_image_size(ckpt, size)


def cmd_gen_data(args: argparse.Namespace) -> int:
    values = merge(load_config_file(args.manifest), {"seed": args.seed})
    manifest = schemas.load(schemas.CorpusManifestSchema, values)

    out_dir = utils.resolve_out_dir(args.out_dir)
    corpus.build_corpus(manifest, out_dir)
    write_run_config(
        out_dir, "gen-data", manifest.seed, schemas.dump(schemas.CorpusManifestSchema, manifest)
    )
    return 0


def cmd_train_encoder(args: argparse.Namespace) -> int:
    values = merge(load_config_file(args.config), _train_flags(args))
    config = schemas.load(schemas.TrainConfigSchema, values)
    resume = None
    if args.resume is not None:
        resume = checkpoints.load_encoder_checkpoint(args.resume)
        config = resume.train
        if args.epochs is not None:
            config.schedule_epochs = config.horizon()
            config.epochs = args.epochs
            config.validate()

    data = _load_corpus(args.data_dir)
    out_dir = utils.resolve_out_dir(args.out_dir)
    encoder_config = resume.config if resume is not None else encoder.architecture(config.arch)
    write_run_config(
        out_dir,
        "train-encoder",
        config.seed,
        schemas.dump(schemas.TrainConfigSchema, config),
        trainer.recipe_deviations(config, encoder_config),
    )
    trainer.train_encoder(data, config, out_dir, resume, encoder_config)
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    ckpt = checkpoints.load_encoder_checkpoint(args.checkpoint)
    data = _load_corpus(args.data_dir)
    _check_image_size(ckpt, data)
    out_dir = utils.resolve_out_dir(args.out_dir)
    splits = [settings.Split(name) for name in args.splits.split(",")]

    with tensor.precision(ckpt.precision):
        model = ckpt.build_encoder()
        reports = evaluation.eval_splits(model, data, splits)
        evaluation.write_metrics(os.path.join(out_dir, METRICS_FILE), reports)
        if args.dump:
            samples = [s for split in splits for s in data.get(split)]
            evaluation.dump_reconstructions(
                model, samples, os.path.join(out_dir, RECONSTRUCTIONS_FILE)
            )

    write_run_config(
        out_dir,
        "eval",
        ckpt.train.seed,
        {"checkpoint": args.checkpoint, "data_dir": args.data_dir, "splits": args.splits},
    )
    return 0


def cmd_mixgrid(args: argparse.Namespace) -> int:
    ckpt = checkpoints.load_encoder_checkpoint(args.checkpoint)
    data = _load_corpus(args.data_dir)
    _check_image_size(ckpt, data)
    out_dir = utils.resolve_out_dir(args.out_dir)

    samples = data.get(settings.Split(args.split))
    if len(samples) < max(args.sources + args.donors, 2):
        raise errors.ConfigError(f"Split '{args.split}' has only {len(samples)} samples")
    rng = np.random.default_rng(args.seed)
    chosen = rng.choice(len(samples), size=args.sources + args.donors, replace=False)
    sources = images_of([samples[i] for i in chosen[: args.sources]])
    donors = images_of([samples[i] for i in chosen[args.sources :]])

    with tensor.precision(ckpt.precision):
        model = ckpt.build_encoder()
        grid = evaluation.dump_mix_grid(
            model, sources, donors, os.path.join(out_dir, MIXGRID_FILE), rng
        )
        agreement = evaluation.row_color_agreement(grid)
        preservation = evaluation.anatomy_preservation_rate(
            model, images_of(samples), rng, args.mixes
        )
    utils.write_csv(
        os.path.join(out_dir, MIXING_FILE),
        ("metric", "split", "value"),
        [
            ("row_color_agreement", args.split, repr(agreement)),
            ("anatomy_preservation_rate", args.split, repr(preservation)),
        ],
    )
    logging.info(f"Row color agreement {agreement:.3f}, anatomy preservation {preservation:.3f}")

    write_run_config(
        out_dir,
        "mixgrid",
        args.seed,
        {
            "checkpoint": args.checkpoint,
            "data_dir": args.data_dir,
            "split": args.split,
            "sources": args.sources,
            "donors": args.donors,
            "mixes": args.mixes,
        },
    )
    return 0


def cmd_train_classifier(args: argparse.Namespace) -> int:
    flags = {
        "epochs": args.epochs,
        "batch_size": args.batch,
        "learning_rate": args.lr,
        "mixes": args.mixes,
        "seed": args.seed,
        "augment": None if args.augment == "both" else args.augment,
    }
    values = merge(load_config_file(args.config), flags)
    config = schemas.load(schemas.ClassifierConfigSchema, values)

    ckpt = None
    if args.checkpoint is not None:
        ckpt = checkpoints.load_encoder_checkpoint(args.checkpoint)
    elif args.augment in (settings.AugmentMode.MIX.value, "both"):
        raise errors.ConfigError("Mix augmentation needs --checkpoint with a trained encoder")

    data = _load_corpus(args.data_dir)
    model = None
    if ckpt is not None:
        _check_image_size(ckpt, data)
        model = ckpt.build_encoder()
    out_dir = utils.resolve_out_dir(args.out_dir)
    dumped = schemas.dump(schemas.ClassifierConfigSchema, config)
    if args.augment == "both":
        assert model is not None
        seeds = [int(s) for s in args.seeds.split(",")]
        classifier.compare_augmentation(
            data, config, model, seeds, os.path.join(out_dir, COMPARISON_FILE)
        )
        dumped["seeds"] = args.seeds
    else:
        result = classifier.train_classifier(data, config, model)
        name = f"classifier_{config.augment.value}_seed{config.seed}.ckpt"
        checkpoints.save_checkpoint(os.path.join(out_dir, name), result.checkpoint)
        utils.append_csv(
            os.path.join(out_dir, COMPARISON_FILE),
            classifier.COMPARISON_HEADER,
            [config.augment.value, config.seed, result.val_accuracy, result.test_accuracy],
        )

    if args.checkpoint is not None:
        dumped["checkpoint"] = args.checkpoint
    write_run_config(out_dir, "train-classifier", config.seed, dumped)
    return 0


def cmd_scale_exp(args: argparse.Namespace) -> int:
    values = merge(load_config_file(args.config), _train_flags(args))
    config = schemas.load(schemas.TrainConfigSchema, values)
    base = None
    if args.checkpoint is not None:
        base = checkpoints.load_encoder_checkpoint(args.checkpoint)

    data = _load_corpus(args.data_dir)
    if base is not None:
        _check_image_size(base, data)
    out_dir = utils.resolve_out_dir(args.out_dir)
    write_run_config(
        out_dir, "scale-exp", config.seed, schemas.dump(schemas.TrainConfigSchema, config)
    )
    with tensor.precision(config.precision):
        experiments.scalability_experiments(data, config, out_dir, base)
    return 0


def _add_train_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key-value configuration file")
    parser.add_argument("--data-dir", required=True)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--batch", type=int)
    parser.add_argument("--mixes", type=int)
    parser.add_argument("--lr", type=float)
    parser.add_argument("--weight-decay", type=float)
    parser.add_argument("--lambda-anatomy", type=float)
    parser.add_argument("--lambda-characteristic", type=float)
    parser.add_argument("--lambda-reconstruction", type=float)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--schedule-epochs", type=int)
    parser.add_argument("--include-unlabeled", action="store_true")
    parser.add_argument("--arch", choices=sorted(settings.ARCHITECTURES))
    parser.add_argument("--precision", choices=["f32", "f64"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="patchmix", description=__doc__.split("\n")[0])
    parser.add_argument("--verbose", action="store_true", help="log every training step")
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen-data", help="generate the procedural corpus")
    gen.add_argument("--manifest", help="key-value corpus manifest; defaults when omitted")
    gen.add_argument("--out-dir", required=True)
    gen.add_argument("--seed", type=int)
    gen.set_defaults(handler=cmd_gen_data)

    train = commands.add_parser("train-encoder", help="train the patch encoder")
    _add_train_arguments(train)
    train.add_argument("--out-dir", required=True)
    train.add_argument("--resume", help="checkpoint to continue from")
    train.set_defaults(handler=cmd_train_encoder)

    evaluate = commands.add_parser("eval", help="reconstruction PSNR per split and domain")
    evaluate.add_argument("--checkpoint", required=True)
    evaluate.add_argument("--data-dir", required=True)
    evaluate.add_argument("--out-dir", required=True)
    evaluate.add_argument("--splits", default="train,val,test")
    evaluate.add_argument("--dump", action="store_true", help="also write reconstruction strips")
    evaluate.set_defaults(handler=cmd_eval)

    grid = commands.add_parser("mixgrid", help="write a grid of mixed images")
    grid.add_argument("--checkpoint", required=True)
    grid.add_argument("--data-dir", required=True)
    grid.add_argument("--out-dir", required=True)
    grid.add_argument("--split", default="test", choices=[s.value for s in settings.Split])
    grid.add_argument("--sources", type=int, default=4)
    grid.add_argument("--donors", type=int, default=4)
    grid.add_argument("--mixes", type=int, default=200, help="mixes for the preservation rate")
    grid.add_argument("--seed", type=int, default=0)
    grid.set_defaults(handler=cmd_mixgrid)

    cls = commands.add_parser("train-classifier", help="train the downstream classifier")
    cls.add_argument("--config", help="key-value configuration file")
    cls.add_argument("--data-dir", required=True)
    cls.add_argument("--out-dir", required=True)
    cls.add_argument("--checkpoint", help="encoder checkpoint, required for mix augmentation")
    cls.add_argument("--augment", choices=["none", "mix", "both"])
    cls.add_argument("--seeds", default="0,1,2", help="seeds compared with --augment both")
    cls.add_argument("--epochs", type=int)
    cls.add_argument("--batch", type=int)
    cls.add_argument("--lr", type=float)
    cls.add_argument("--mixes", type=int)
    cls.add_argument("--seed", type=int)
    cls.set_defaults(handler=cmd_train_classifier)

    scale = commands.add_parser("scale-exp", help="unlabeled-pool and deep-encoder trends")
    _add_train_arguments(scale)
    scale.add_argument("--out-dir", required=True)
    scale.add_argument("--checkpoint", help="already trained base encoder")
    scale.set_defaults(handler=cmd_scale_exp)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.getLogger().setLevel(logging.DEBUG if args.verbose else logging.INFO)

    try:
        return args.handler(args)
    except errors.ConfigError as e:
        logging.error(f"Configuration error: {e}")
        return 2
    except errors.TrainingDivergedError as e:
        logging.error(f"Training diverged: {e}")
        return 1
    except (errors.PatchmixError, OSError) as e:
        logging.error(f"{type(e).__name__}: {e}")
        return 1
