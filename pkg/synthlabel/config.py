"""
Run configuration

One YAML document configures every pipeline stage:

    paths:
      backgrounds: backgrounds/
      output: dataset/
      ui: ui/
    scene:
      dataset_size: 1000
      seed: 42
      class_pools:
        - {class_id: 0, sprite_dir: sprites/tower, max_count: 1}
        - {class_id: 1, sprite_dir: sprites/minion, min_count: 3, max_count: 12, grouped: true}
        - {class_id: 9, sprite_dir: sprites/cursor, max_count: 1, labeled: false}
      noise: [10, 10, 10]
      blur_strength: 0.8
    keying:
      background_color: [0, 255, 0]
      tolerance: [12, 12, 12]
    evaluation:
      iou_threshold: 0.5
      class_groups: {all minions: [1, 2, 3]}

Unknown keys are errors. Every violation is collected and reported at once
with its dotted field path. Relative paths resolve against the directory of
the document.
"""

import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

import yaml

from .composer import PoolConfig, SceneConfig
from .evaluator import DEFAULT_IOU_THRESHOLD
from .exceptions import ConfigError, DatasetIOError
from .raster import PathLike, Rect
from .sprites import KeyParams

logger = logging.getLogger(__name__)

POOL_FIELDS = tuple(f.name for f in dataclasses.fields(PoolConfig))
SCENE_FIELDS = tuple(f.name for f in dataclasses.fields(SceneConfig))
KEYING_FIELDS = ("background_color", "tolerance", "area", "remove_outline")
PATH_FIELDS = ("backgrounds", "output", "ui", "icons", "classes")
EVALUATION_FIELDS = ("iou_threshold", "target_class", "min_confidence", "class_groups")
SECTIONS = ("paths", "scene", "keying", "evaluation")

# output may not exist yet
MUST_EXIST = ("backgrounds", "ui", "icons", "classes")


@dataclass(frozen=True)
class PathsConfig:
    backgrounds: Optional[Path] = None
    output: Optional[Path] = None
    ui: Optional[Path] = None
    icons: Optional[Path] = None
    classes: Optional[Path] = None


@dataclass(frozen=True)
class EvaluationConfig:
    iou_threshold: float = DEFAULT_IOU_THRESHOLD
    target_class: Optional[int] = None
    min_confidence: float = 0.0
    class_groups: Dict[str, Tuple[int, ...]] = field(default_factory=dict)


@dataclass(frozen=True)
class RunConfig:
    """A validated configuration document"""
    scene: SceneConfig = field(default_factory=SceneConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    keying: KeyParams = field(default_factory=KeyParams)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    source: Optional[Path] = None

    def with_overrides(self, seed: Optional[int] = None, count: Optional[int] = None) -> "RunConfig":
        """Copy with the command line's --seed and --count applied"""
        changes = {}
        if seed is not None:
            changes["seed"] = seed
        if count is not None:
            changes["dataset_size"] = count
        if not changes:
            return self
        try:
            scene = dataclasses.replace(self.scene, **changes)
        except ConfigError as e:
            raise ConfigError([f"scene.{err}" for err in e.errors])
        return dataclasses.replace(self, scene=scene)


class _Checker:
    """Collects violations while reading raw document values"""

    def __init__(self, base_dir: Path):
        self.base_dir = base_dir
        self.errors: List[str] = []

    def error(self, path: str, message: str):
        self.errors.append(f"{path}: {message}" if path else message)

    def section(self, value: Any, path: str, allowed: Tuple[str, ...]) -> Dict[str, Any]:
        if value is None:
            return {}
        if not isinstance(value, Mapping):
            self.error(path, f"must be a mapping, got {type(value).__name__}")
            return {}
        for key in value:
            if key not in allowed:
                self.error(f"{path}.{key}" if path else str(key), "unknown key")
        return {k: v for k, v in value.items() if k in allowed}

    def integer(self, value: Any, path: str) -> Optional[int]:
        if isinstance(value, bool) or not isinstance(value, int):
            self.error(path, f"must be an integer, got {value!r}")
            return None
        return value

    def real(self, value: Any, path: str) -> Optional[float]:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.error(path, f"must be a number, got {value!r}")
            return None
        return float(value)

    def boolean(self, value: Any, path: str) -> Optional[bool]:
        if not isinstance(value, bool):
            self.error(path, f"must be true or false, got {value!r}")
            return None
        return value

    def text(self, value: Any, path: str) -> Optional[str]:
        if not isinstance(value, str):
            self.error(path, f"must be a string, got {value!r}")
            return None
        return value

    def integers(self, value: Any, path: str, length: int) -> Optional[Tuple[int, ...]]:
        if not isinstance(value, (list, tuple)) or len(value) != length:
            self.error(path, f"must be a list of {length} integers, got {value!r}")
            return None
        items = [self.integer(v, f"{path}[{i}]") for i, v in enumerate(value)]
        return None if None in items else tuple(items)

    def rect(self, value: Any, path: str) -> Optional[Rect]:
        values = self.integers(value, path, 4)
        if values is None:
            return None
        if values[2] < 1 or values[3] < 1 or values[0] < 0 or values[1] < 0:
            self.error(path, f"must be [x, y, width, height] with x, y >= 0 and positive size, got {list(values)}")
            return None
        return Rect(*values)

    def path(self, value: Any, path: str, must_exist: bool) -> Optional[Path]:
        text = self.text(value, path)
        if text is None:
            return None
        resolved = Path(text).expanduser()
        if not resolved.is_absolute():
            resolved = self.base_dir / resolved
        if must_exist and not resolved.exists():
            self.error(path, f"does not exist: {resolved}")
            return None
        return resolved


# field name -> reader
def _scene_readers(checker: _Checker):
    return {
        "dataset_size": checker.integer,
        "seed": checker.integer,
        "bias_strength": checker.real,
        "group_chance": checker.real,
        "overlay_chance": checker.real,
        "fog_of_war_chance": checker.real,
        "noise": lambda v, p: checker.integers(v, p, 3),
        "blur_strength": checker.real,
        "sampling_method": checker.text,
        "min_visible_fraction": checker.real,
        "output_size": lambda v, p: checker.integers(v, p, 2),
        "image_format": checker.text,
        "jpeg_quality": checker.integer,
        "prefix": checker.text,
    }


def _pool_readers(checker: _Checker):
    return {
        "class_id": checker.integer,
        "sprite_dir": lambda v, p: checker.path(v, p, must_exist=True),
        "min_count": checker.integer,
        "max_count": checker.integer,
        "labeled": checker.boolean,
        "base_scale": checker.real,
        "base_rotation": checker.real,
        "max_scale": checker.real,
        "max_rotation": checker.real,
        "grouped": checker.boolean,
        "name": checker.text,
    }


def _read_fields(checker: _Checker, raw: Dict[str, Any], path: str, readers) -> Tuple[Dict[str, Any], bool]:
    values, ok = {}, True
    for key, value in raw.items():
        if key not in readers:
            continue
        parsed = readers[key](value, f"{path}.{key}")
        if parsed is None:
            ok = False
        else:
            values[key] = parsed
    return values, ok


def _build(checker: _Checker, cls, values: Dict[str, Any], path: str):
    try:
        return cls(**values)
    except ConfigError as e:
        for err in e.errors:
            checker.errors.append(f"{path}.{err}")
    except (ValueError, TypeError) as e:
        checker.error(path, str(e))
    return None


def _read_pools(checker: _Checker, raw: Any) -> Optional[Tuple[PoolConfig, ...]]:
    if not isinstance(raw, list):
        checker.error("scene.class_pools", f"must be a list, got {type(raw).__name__}")
        return None
    pools, ok = [], True
    readers = _pool_readers(checker)
    for index, entry in enumerate(raw):
        path = f"scene.class_pools[{index}]"
        if not isinstance(entry, Mapping):
            checker.error(path, "must be a mapping")
            ok = False
            continue
        fields = checker.section(entry, path, POOL_FIELDS)
        for required in ("class_id", "sprite_dir"):
            if required not in fields:
                checker.error(f"{path}.{required}", "is required")
                ok = False
        values, fields_ok = _read_fields(checker, fields, path, readers)
        if not (ok and fields_ok):
            ok = False
            continue
        values["sprite_dir"] = str(values["sprite_dir"])
        pool = _build(checker, PoolConfig, values, path)
        if pool is None:
            ok = False
        else:
            pools.append(pool)
    return tuple(pools) if ok else None


def _read_scene(checker: _Checker, raw: Any) -> Optional[SceneConfig]:
    fields = checker.section(raw, "scene", SCENE_FIELDS)
    values, ok = _read_fields(checker, fields, "scene", _scene_readers(checker))
    if "class_pools" in fields:
        pools = _read_pools(checker, fields["class_pools"])
        if pools is None:
            ok = False
        else:
            values["class_pools"] = pools
    if "ui_icon_slots" in fields:
        slots = fields["ui_icon_slots"]
        if not isinstance(slots, list):
            checker.error("scene.ui_icon_slots", "must be a list of [x, y, width, height]")
            ok = False
        else:
            rects = [checker.rect(s, f"scene.ui_icon_slots[{i}]") for i, s in enumerate(slots)]
            if None in rects:
                ok = False
            else:
                values["ui_icon_slots"] = tuple(rects)
    if not ok:
        return None
    return _build(checker, SceneConfig, values, "scene")


def _read_paths(checker: _Checker, raw: Any) -> Optional[PathsConfig]:
    fields = checker.section(raw, "paths", PATH_FIELDS)
    values, ok = {}, True
    for key, value in fields.items():
        parsed = checker.path(value, f"paths.{key}", must_exist=key in MUST_EXIST)
        if parsed is None:
            ok = False
        values[key] = parsed
    return PathsConfig(**values) if ok else None


def _read_keying(checker: _Checker, raw: Any) -> Optional[KeyParams]:
    fields = checker.section(raw, "keying", KEYING_FIELDS)
    readers = {
        "background_color": lambda v, p: checker.integers(v, p, 3),
        "tolerance": lambda v, p: checker.integers(v, p, 3),
        "area": lambda v, p: checker.rect(v, p) if v is not None else None,
        "remove_outline": checker.integer,
    }
    values, ok = _read_fields(checker, {k: v for k, v in fields.items() if v is not None},
                              "keying", readers)
    if not ok:
        return None
    return _build(checker, KeyParams, values, "keying")


def _read_evaluation(checker: _Checker, raw: Any) -> Optional[EvaluationConfig]:
    fields = checker.section(raw, "evaluation", EVALUATION_FIELDS)
    values, ok = {}, True
    if "iou_threshold" in fields:
        threshold = checker.real(fields["iou_threshold"], "evaluation.iou_threshold")
        if threshold is not None and not 0 < threshold <= 1:
            checker.error("evaluation.iou_threshold", f"must be within (0, 1], got {threshold}")
            threshold = None
        ok &= threshold is not None
        values["iou_threshold"] = threshold
    if "min_confidence" in fields:
        floor = checker.real(fields["min_confidence"], "evaluation.min_confidence")
        if floor is not None and not 0 <= floor <= 1:
            checker.error("evaluation.min_confidence", f"must be within [0, 1], got {floor}")
            floor = None
        ok &= floor is not None
        values["min_confidence"] = floor
    if fields.get("target_class") is not None:
        target = checker.integer(fields["target_class"], "evaluation.target_class")
        ok &= target is not None
        values["target_class"] = target
    if "class_groups" in fields:
        groups = {}
        raw_groups = fields["class_groups"]
        if not isinstance(raw_groups, Mapping):
            checker.error("evaluation.class_groups", "must map group names to lists of class ids")
            ok = False
        else:
            for name, ids in raw_groups.items():
                path = f"evaluation.class_groups.{name}"
                if not isinstance(ids, list) or not ids:
                    checker.error(path, "must be a non-empty list of class ids")
                    ok = False
                    continue
                parsed = [checker.integer(i, f"{path}[{n}]") for n, i in enumerate(ids)]
                if None in parsed:
                    ok = False
                else:
                    groups[str(name)] = tuple(parsed)
        values["class_groups"] = groups
    return EvaluationConfig(**values) if ok else None


def validate_config(document: Any, base_dir: Optional[PathLike] = None) -> RunConfig:
    """
    Validate a parsed configuration document

    Args:
        document: The parsed YAML (a mapping, or None for an empty document)
        base_dir: Directory relative paths resolve against (default: cwd)

    Returns:
        The validated RunConfig

    Raises:
        ConfigError: Listing every violation found
    """
    checker = _Checker(Path(base_dir) if base_dir is not None else Path.cwd())
    if document is None:
        document = {}
    sections = checker.section(document, "", SECTIONS)
    scene = _read_scene(checker, sections.get("scene"))
    paths = _read_paths(checker, sections.get("paths"))
    keying = _read_keying(checker, sections.get("keying"))
    evaluation = _read_evaluation(checker, sections.get("evaluation"))
    if checker.errors:
        raise ConfigError(checker.errors)
    return RunConfig(scene=scene, paths=paths, keying=keying, evaluation=evaluation)


def load_config(path: PathLike) -> RunConfig:
    """
    Read and validate a YAML configuration file

    Raises:
        DatasetIOError: If the file cannot be read
        ConfigError: If it is not valid YAML or fails validation
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise DatasetIOError(f"cannot read config: {e}", str(path))
    except UnicodeDecodeError:
        raise ConfigError(["not UTF-8 text"], str(path))
    try:
        document = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError([f"invalid YAML: {e}"], str(path))
    try:
        config = validate_config(document, path.parent)
    except ConfigError as e:
        e.path = str(path)
        raise
    logger.info("loaded config %s", path)
    return dataclasses.replace(config, source=path)
