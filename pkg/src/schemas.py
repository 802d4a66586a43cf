"""Serialization and validation of configuration records and checkpoint headers."""

from typing import Any, Dict, Mapping, Type

import marshmallow

from marshmallow import fields, post_load, validate
from marshmallow_enum import EnumField
from marshmallow_oneofschema import OneOfSchema

from . import errors, settings
from .encoder import EncoderConfig
from .essentials import ClassifierConfig, CorpusManifest, RunConfig, TrainConfig

POSITIVE = validate.Range(min=0, min_inclusive=False)


class CommaList(fields.List):
    """List field that also accepts the flat `a,b,c` form of key-value files."""

    def _deserialize(self, value, attr, data, **kwargs):
        if isinstance(value, str):
            value = [item.strip() for item in value.split(",") if item.strip()]
        return super()._deserialize(value, attr, data, **kwargs)


class EncoderConfigSchema(marshmallow.Schema):
    channels = fields.Integer(load_default=3, validate=validate.Range(min=1))
    image_size = fields.Integer(load_default=32, validate=validate.Range(min=1))
    patch_size = fields.Integer(load_default=4, validate=validate.Range(min=1))
    embed_dim = fields.Integer(load_default=96, validate=validate.Range(min=2))
    depth = fields.Integer(load_default=4, validate=validate.Range(min=1))
    heads = fields.Integer(load_default=4, validate=validate.Range(min=1))
    mlp_ratio = fields.Integer(load_default=4, validate=validate.Range(min=1))
    name = fields.String(load_default="custom")

    @post_load
    def make(self, data, **kwargs) -> EncoderConfig:
        return EncoderConfig(**data)


class TrainConfigSchema(marshmallow.Schema):
    epochs = fields.Integer(load_default=50, validate=validate.Range(min=1))
    batch_size = fields.Integer(load_default=16, validate=validate.Range(min=2))
    mixes = fields.Integer(load_default=4, validate=validate.Range(min=1))
    learning_rate = fields.Float(load_default=1e-3, validate=POSITIVE)
    weight_decay = fields.Float(load_default=0.01, validate=validate.Range(min=0))
    betas = CommaList(fields.Float(), load_default=[0.9, 0.999], validate=validate.Length(equal=2))
    eps = fields.Float(load_default=1e-8)
    lambda_anatomy = fields.Float(load_default=1.0)
    lambda_characteristic = fields.Float(load_default=1.0)
    lambda_reconstruction = fields.Float(load_default=1.0)
    seed = fields.Integer(load_default=0)
    schedule_epochs = fields.Integer(load_default=None, allow_none=True)
    include_unlabeled = fields.Boolean(load_default=False)
    arch = fields.String(load_default="base")
    precision = fields.String(load_default="f32", validate=validate.OneOf(["f32", "f64"]))
    prefetch = fields.Integer(load_default=2, validate=validate.Range(min=0))

    @post_load
    def make(self, data, **kwargs) -> TrainConfig:
        config = TrainConfig(**data)
        config.validate()
        return config


class ClassifierConfigSchema(marshmallow.Schema):
    channels = CommaList(fields.Integer(), load_default=[24, 48, 64])
    epochs = fields.Integer(load_default=10, validate=validate.Range(min=1))
    batch_size = fields.Integer(load_default=32, validate=validate.Range(min=2))
    learning_rate = fields.Float(load_default=1e-3, validate=POSITIVE)
    weight_decay = fields.Float(load_default=0.01, validate=validate.Range(min=0))
    augment = EnumField(settings.AugmentMode, by_value=True, load_default=settings.AugmentMode.NONE)
    mixes = fields.Integer(load_default=1, validate=validate.Range(min=1))
    seed = fields.Integer(load_default=0)
    num_classes = fields.Integer(load_default=2, validate=validate.Range(min=2))

    @post_load
    def make(self, data, **kwargs) -> ClassifierConfig:
        config = ClassifierConfig(**data)
        config.validate()
        return config


class CorpusManifestSchema(marshmallow.Schema):
    seed = fields.Integer(load_default=0)
    image_size = fields.Integer(load_default=32, validate=validate.Range(min=1))
    train_domains = CommaList(fields.Integer(), load_default=[0, 1, 2])
    val_domains = CommaList(fields.Integer(), load_default=[3])
    test_domains = CommaList(fields.Integer(), load_default=[4])
    labeled_per_domain = fields.Integer(load_default=1000, validate=validate.Range(min=0))
    unlabeled_per_domain = fields.Integer(load_default=1000, validate=validate.Range(min=0))
    eval_per_domain = fields.Integer(load_default=500, validate=validate.Range(min=0))
    generator_version = fields.Integer(load_default=settings.GENERATOR_VERSION)

    @post_load
    def make(self, data, **kwargs) -> CorpusManifest:
        manifest = CorpusManifest(**data)
        manifest.validate()
        return manifest


class BlockSchema(marshmallow.Schema):
    name = fields.String(required=True)
    shape = fields.List(fields.Integer(), required=True)


class EncoderHeaderSchema(marshmallow.Schema):
    precision = fields.String(required=True, validate=validate.OneOf(["f32", "f64"]))
    step = fields.Integer(required=True)
    epoch = fields.Integer(required=True)
    best_loss = fields.Float(allow_none=True, load_default=None)
    encoder = fields.Nested(EncoderConfigSchema, required=True)
    train = fields.Nested(TrainConfigSchema, required=True)
    rng_state = fields.Dict(keys=fields.String(), required=True)
    blocks = fields.List(fields.Nested(BlockSchema), required=True)


class ClassifierHeaderSchema(marshmallow.Schema):
    precision = fields.String(required=True, validate=validate.OneOf(["f32", "f64"]))
    step = fields.Integer(required=True)
    epoch = fields.Integer(required=True)
    classifier = fields.Nested(ClassifierConfigSchema, required=True)
    image_size = fields.Integer(required=True)
    val_accuracy = fields.Float(allow_none=True, load_default=None)
    test_accuracy = fields.Float(allow_none=True, load_default=None)
    blocks = fields.List(fields.Nested(BlockSchema), required=True)


class CheckpointHeaderSchema(OneOfSchema):
    """Dispatches encoder and classifier checkpoint headers on their `kind`."""

    type_field = "kind"
    type_schemas = {"encoder": EncoderHeaderSchema, "classifier": ClassifierHeaderSchema}

    def get_obj_type(self, obj: Mapping[str, Any]) -> str:
        kind = obj.get("kind")
        if kind not in self.type_schemas:
            raise errors.CheckpointError(f"Unknown checkpoint kind '{kind}'")
        return kind


def load(schema_type: Type[marshmallow.Schema], data: Mapping[str, Any]) -> Any:
    """Loads `data` with the schema; validation failures become `ConfigError`s."""

    try:
        return schema_type().load(data)
    except marshmallow.ValidationError as e:
        messages = e.messages if isinstance(e.messages, dict) else {"_": e.messages}
        details = "; ".join(f"{key}: {value}" for key, value in sorted(messages.items()))
        raise errors.ConfigError(f"Invalid configuration ({details})", fields=messages)


def dump(schema_type: Type[marshmallow.Schema], obj: Any) -> Dict[str, Any]:
    return schema_type().dump(obj)


class RunConfigSchema(marshmallow.Schema):
    command = fields.String(required=True)
    seed = fields.Integer(required=True)
    out_dir = fields.String(required=True)
    values = fields.Dict(keys=fields.String(), values=fields.String(), required=True)

    @post_load
    def make(self, data, **kwargs) -> RunConfig:
        return RunConfig(**data)
