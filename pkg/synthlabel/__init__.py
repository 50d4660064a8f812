"""
synthlabel

Synthetic object detection datasets from sprites and backgrounds: chroma
key sprite extraction, seeded scene composition with YOLO labels, dataset
maintenance, and detection-rate evaluation.

Example:
    >>> from synthlabel import PoolConfig, SceneConfig, generate_dataset, load_backgrounds, load_pools
    >>> config = SceneConfig(dataset_size=100, seed=7,
    ...                      class_pools=(PoolConfig(0, "sprites/tower", max_count=2),))
    >>> backgrounds = load_backgrounds("backgrounds/", config.output_size)
    >>> stems = generate_dataset(config, load_pools(config), backgrounds, "dataset/")
"""

from .composer import (
    PoolConfig,
    SceneConfig,
    SpritePool,
    add_object,
    compose_scene,
    generate_dataset,
    load_backgrounds,
    load_pools,
)
from .config import RunConfig, load_config, validate_config
from .datasets import DatasetIndex, dataset_stats, sample_frames, split_train_test
from .evaluator import (
    Box,
    Detection,
    EvalReport,
    evaluate,
    evaluate_dataset,
    iou,
    match_detections,
    tracking_report,
)
from .exceptions import (
    ConfigError,
    DatasetIOError,
    EmptyContentError,
    LabelFormatError,
    SynthLabelError,
)
from .labels import ClassMap, LabelFile, LabelRecord, check_integrity, parse_labels, write_labels
from .sprites import KeyParams, Sprite, chroma_key_mask, extract_sprites

__version__ = "0.1.0"
__license__ = "MIT"

__all__ = [
    "PoolConfig",
    "SceneConfig",
    "SpritePool",
    "add_object",
    "compose_scene",
    "generate_dataset",
    "load_backgrounds",
    "load_pools",
    "RunConfig",
    "load_config",
    "validate_config",
    "DatasetIndex",
    "dataset_stats",
    "sample_frames",
    "split_train_test",
    "Box",
    "Detection",
    "EvalReport",
    "evaluate",
    "evaluate_dataset",
    "iou",
    "match_detections",
    "tracking_report",
    "ConfigError",
    "DatasetIOError",
    "EmptyContentError",
    "LabelFormatError",
    "SynthLabelError",
    "ClassMap",
    "LabelFile",
    "LabelRecord",
    "check_integrity",
    "parse_labels",
    "write_labels",
    "KeyParams",
    "Sprite",
    "chroma_key_mask",
    "extract_sprites",
]
