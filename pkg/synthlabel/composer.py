"""
Scene composition

Builds randomized, automatically labeled scenes by pasting sprites onto
background images, then adding UI overlays, cursors, fog of war, noise and
blur. Every scene draws from its own random stream derived from
(seed, image index), so a dataset is reproducible no matter how many worker
threads render it or in which order.

Example:
    >>> config = SceneConfig(dataset_size=100, seed=7, class_pools=(
    ...     PoolConfig(class_id=0, sprite_dir="sprites/tower", max_count=1),
    ...     PoolConfig(class_id=1, sprite_dir="sprites/minion", min_count=3,
    ...                max_count=12, grouped=True),
    ... ))
    >>> pools = load_pools(config)
    >>> backgrounds = load_backgrounds("backgrounds/", config.output_size)
    >>> generate_dataset(config, pools, backgrounds, "dataset/")
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image, ImageDraw
from scipy import ndimage
from tqdm import tqdm

from .exceptions import ConfigError, EmptyPoolError, NoBackgroundsError
from .labels import LabelFile, LabelRecord, denormalize, write_label_file
from .raster import (PathLike, Rect, binarize_alpha, list_images, load_rgb, resize, save_image,
                     tight_bbox)
from .sprites import Sprite, load_sprite_dir

logger = logging.getLogger(__name__)

SAMPLING_METHODS = {
    "nearest": Image.Resampling.NEAREST,
    "bilinear": Image.Resampling.BILINEAR,
    "bicubic": Image.Resampling.BICUBIC,
}
IMAGE_FORMATS = ("png", "jpg")

FOG_FACTOR = 0.45
MAX_SEED = 2 ** 64


def _is_probability(value) -> bool:
    return 0.0 <= value <= 1.0


@dataclass(frozen=True)
class PoolConfig:
    """
    One pool of sprites and how its objects are placed

    Attributes:
        class_id: Class written to the labels of this pool's objects
        sprite_dir: Directory holding the pool's sprite images
        min_count: Fewest objects placed per scene
        max_count: Most objects placed per scene
        labeled: Whether placed objects get labels; unlabeled pools (cursors)
            are drawn on top of the UI overlay as distractors
        base_scale: Scale every object starts from
        base_rotation: Rotation in degrees every object starts from
        max_scale: Largest random deviation added to or subtracted from base_scale
        max_rotation: Largest random deviation from base_rotation in degrees
        grouped: Place objects around the scene's bias point
        name: Display name used in log messages
    """
    class_id: int
    sprite_dir: str = ""
    min_count: int = 0
    max_count: int = 1
    labeled: bool = True
    base_scale: float = 1.0
    base_rotation: float = 0.0
    max_scale: float = 0.0
    max_rotation: float = 0.0
    grouped: bool = False
    name: str = ""

    def __post_init__(self):
        _raise_problems(self.problems())

    def problems(self) -> List[Tuple[str, str]]:
        """(field, message) pairs for every violated invariant"""
        out = []
        if self.class_id < 0:
            out.append(("class_id", f"must be non-negative, got {self.class_id}"))
        if self.min_count < 0:
            out.append(("min_count", f"must be non-negative, got {self.min_count}"))
        if self.min_count > self.max_count:
            out.append(("min_count", f"min_count {self.min_count} exceeds max_count {self.max_count}"))
        if self.base_scale <= 0:
            out.append(("base_scale", f"must be positive, got {self.base_scale}"))
        if self.max_scale < 0:
            out.append(("max_scale", f"must be non-negative, got {self.max_scale}"))
        elif self.base_scale > 0 and self.base_scale - self.max_scale <= 0:
            out.append(("max_scale", f"base_scale - max_scale must stay positive, "
                                     f"got {self.base_scale} - {self.max_scale}"))
        if self.max_rotation < 0:
            out.append(("max_rotation", f"must be non-negative, got {self.max_rotation}"))
        return out

    @property
    def label(self) -> str:
        return self.name or f"class {self.class_id}"


@dataclass(frozen=True)
class SceneConfig:
    """
    Every randomization parameter of dataset generation

    See the configuration section of the README for what each field does.
    """
    dataset_size: int = 1
    seed: int = 0
    class_pools: Tuple[PoolConfig, ...] = ()
    bias_strength: float = 60.0
    group_chance: float = 0.5
    overlay_chance: float = 0.0
    fog_of_war_chance: float = 0.0
    noise: Tuple[int, int, int] = (0, 0, 0)
    blur_strength: float = 0.0
    sampling_method: str = "bilinear"
    min_visible_fraction: float = 0.25
    output_size: Tuple[int, int] = (1920, 1080)
    image_format: str = "png"
    jpeg_quality: int = 90
    prefix: str = ""
    ui_icon_slots: Tuple[Rect, ...] = ()

    def __post_init__(self):
        _raise_problems(self.problems())

    def problems(self) -> List[Tuple[str, str]]:
        """(field, message) pairs for every violated invariant, pools included"""
        out = []
        if self.dataset_size < 1:
            out.append(("dataset_size", f"must be positive, got {self.dataset_size}"))
        if not 0 <= self.seed < MAX_SEED:
            out.append(("seed", f"must be an unsigned 64-bit integer, got {self.seed}"))
        for index, pool in enumerate(self.class_pools):
            out += [(f"class_pools[{index}].{name}", msg) for name, msg in pool.problems()]
        if self.bias_strength < 0:
            out.append(("bias_strength", f"must be non-negative, got {self.bias_strength}"))
        for name in ("group_chance", "overlay_chance", "fog_of_war_chance"):
            if not _is_probability(getattr(self, name)):
                out.append((name, f"must be within [0, 1], got {getattr(self, name)}"))
        if len(self.noise) != 3 or not all(0 <= n <= 255 for n in self.noise):
            out.append(("noise", f"must be three integers in [0, 255], got {list(self.noise)}"))
        if self.blur_strength < 0:
            out.append(("blur_strength", f"must be non-negative, got {self.blur_strength}"))
        if self.sampling_method not in SAMPLING_METHODS:
            out.append(("sampling_method", f"must be one of {', '.join(SAMPLING_METHODS)}, "
                                            f"got {self.sampling_method!r}"))
        if not 0 < self.min_visible_fraction <= 1:
            out.append(("min_visible_fraction", f"must be within (0, 1], got {self.min_visible_fraction}"))
        if len(self.output_size) != 2 or not all(s >= 1 for s in self.output_size):
            out.append(("output_size", f"must be two positive integers, got {list(self.output_size)}"))
        if self.image_format not in IMAGE_FORMATS:
            out.append(("image_format", f"must be one of {', '.join(IMAGE_FORMATS)}, "
                                         f"got {self.image_format!r}"))
        if not 1 <= self.jpeg_quality <= 100:
            out.append(("jpeg_quality", f"must be within [1, 100], got {self.jpeg_quality}"))
        return out


def _raise_problems(problems: List[Tuple[str, str]]):
    if problems:
        raise ConfigError([f"{name}: {msg}" for name, msg in problems])


@dataclass(frozen=True)
class PlacedObject:
    """
    Where an object ended up on the canvas

    Attributes:
        visible_box: Tight bounds of the drawn pixels, clipped to the canvas
        visible_fraction: Drawn pixels divided by the transformed sprite's
            visible pixels
    """
    class_id: int
    position: Tuple[int, int]
    scale: float
    rotation: float
    visible_box: Rect
    visible_fraction: float


@dataclass
class SpritePool:
    """A pool configuration with its loaded sprites"""
    config: PoolConfig
    sprites: List[Sprite] = field(default_factory=list)


def scene_rng(seed: int, index: int) -> np.random.Generator:
    """Random stream of one scene, a function of (seed, index) only"""
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


# Object placement

def transform_sprite(sprite, scale: float, rotation: float,
                     sampling_method: str = "bilinear") -> np.ndarray:
    """
    Scale, then rotate a sprite

    The scaled size is ceil(scale * size). Rotation is counterclockwise in
    degrees and grows the canvas to fit the rotated content. Alpha is
    resampled with the color and binarized at 128 afterwards.

    Args:
        sprite: A Sprite or an RGBA raster
        scale: Positive scale factor
        rotation: Rotation in degrees
        sampling_method: nearest, bilinear or bicubic

    Returns:
        The transformed RGBA raster
    """
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    raster = sprite.pixels if isinstance(sprite, Sprite) else sprite
    resample = SAMPLING_METHODS[sampling_method]
    h, w = raster.shape[:2]
    # round first so 0.3 * 10 does not ceil to 4
    size = (max(1, math.ceil(round(scale * w, 9))), max(1, math.ceil(round(scale * h, 9))))
    img = Image.fromarray(raster)
    if size != (w, h):
        img = img.resize(size, resample)
    if rotation % 360:
        img = img.rotate(rotation, resample=resample, expand=True)
    return binarize_alpha(np.asarray(img))


def _paste_origin(raster: np.ndarray, position: Tuple[int, int]) -> Tuple[int, int]:
    h, w = raster.shape[:2]
    return position[0] - w // 2, position[1] - h // 2


def add_object(image: np.ndarray, sprite: Sprite, scale: float, rotation: float,
               position: Tuple[int, int], sampling_method: str = "bilinear",
               min_visible_fraction: float = 0.0) -> Tuple[np.ndarray, Optional[PlacedObject]]:
    """
    Paste a transformed sprite centered at a position

    Canvas pixels covered by a visible sprite pixel are replaced by it; all
    others are left alone. The canvas is modified in place and returned.
    When nothing would be drawn, or less than `min_visible_fraction` of the
    sprite would be visible, the canvas is left untouched and the object is
    dropped.

    Returns:
        The canvas and the placement, or None for a dropped object
    """
    raster = transform_sprite(sprite, scale, rotation, sampling_method)
    height, width = image.shape[:2]
    x0, y0 = _paste_origin(raster, position)
    th, tw = raster.shape[:2]
    cx0, cy0 = max(x0, 0), max(y0, 0)
    cx1, cy1 = min(x0 + tw, width), min(y0 + th, height)
    if cx0 >= cx1 or cy0 >= cy1:
        return image, None

    total = np.count_nonzero(raster[..., 3])
    sub = raster[cy0 - y0:cy1 - y0, cx0 - x0:cx1 - x0]
    mask = sub[..., 3] > 0
    drawn = np.count_nonzero(mask)
    if drawn == 0 or drawn / total < min_visible_fraction:
        return image, None

    region = image[cy0:cy1, cx0:cx1]
    region[mask] = sub[..., :3][mask]
    placed = PlacedObject(sprite.class_id, tuple(position), scale, rotation,
                          tight_bbox(mask).translate(cx0, cy0), drawn / total)
    return image, placed


def sample_position(rng: np.random.Generator, canvas_size: Tuple[int, int], grouped: bool = False,
                    bias_point: Optional[Tuple[int, int]] = None,
                    bias_strength: float = 0.0) -> Tuple[int, int]:
    """
    Draw an object center

    Ungrouped positions are uniform over the canvas. Grouped positions are
    normally distributed around the bias point with standard deviation
    bias_strength and clamped to the canvas.
    """
    width, height = canvas_size
    if not grouped:
        return int(rng.integers(0, width)), int(rng.integers(0, height))
    if bias_point is None:
        raise ValueError("grouped placement needs a bias point")
    x = rng.normal(bias_point[0], bias_strength)
    y = rng.normal(bias_point[1], bias_strength)
    return (int(min(max(round(x), 0), width - 1)),
            int(min(max(round(y), 0), height - 1)))


def _draw_transform(pool: PoolConfig, rng: np.random.Generator) -> Tuple[float, float]:
    scale = pool.base_scale + rng.uniform(-pool.max_scale, pool.max_scale)
    rotation = pool.base_rotation + rng.uniform(-pool.max_rotation, pool.max_rotation)
    return scale, rotation


def _draw_count(pool: PoolConfig, rng: np.random.Generator) -> int:
    return int(rng.integers(pool.min_count, pool.max_count + 1))


# Pixel effects

def apply_noise(image: np.ndarray, noise: Sequence[int], rng: np.random.Generator) -> np.ndarray:
    """
    Add independent uniform integer noise in [-noise_c, +noise_c] to every
    channel c of every pixel, clamped to [0, 255]
    """
    magnitude = np.asarray(noise, dtype=np.int16)
    if not magnitude.any():
        return image.copy()
    delta = rng.integers(-magnitude, magnitude + 1, size=image.shape, dtype=np.int16)
    return np.clip(image.astype(np.int16) + delta, 0, 255).astype(np.uint8)


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1D Gaussian with radius ceil(3 * sigma)"""
    radius = math.ceil(3 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-x ** 2 / (2 * sigma ** 2))
    return kernel / kernel.sum()


def apply_blur(image: np.ndarray, blur_strength: float) -> np.ndarray:
    """
    Separable Gaussian blur with standard deviation blur_strength

    Edges repeat the border pixel. A strength of 0 returns a copy.
    """
    if blur_strength < 0:
        raise ValueError(f"blur_strength must be non-negative, got {blur_strength}")
    if blur_strength == 0:
        return image.copy()
    kernel = gaussian_kernel(blur_strength)
    out = image.astype(np.float64)
    out = ndimage.correlate1d(out, kernel, axis=0, mode="nearest")
    out = ndimage.correlate1d(out, kernel, axis=1, mode="nearest")
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def fog_region(canvas_size: Tuple[int, int], rng: np.random.Generator) -> np.ndarray:
    """
    Boolean (height, width) mask of the area left visible by fog of war

    The area is an ellipse centered on a random canvas corner with semi-axes
    drawn uniformly from [1/4, 3/4] of the canvas width and height.
    """
    width, height = canvas_size
    corner = int(rng.integers(0, 4))
    cx = 0.0 if corner in (0, 2) else float(width)
    cy = 0.0 if corner in (0, 1) else float(height)
    a = rng.uniform(width / 4, 3 * width / 4)
    b = rng.uniform(height / 4, 3 * height / 4)
    xs = (np.arange(width) + 0.5 - cx) / a
    ys = (np.arange(height) + 0.5 - cy) / b
    return ys[:, None] ** 2 + xs[None, :] ** 2 <= 1.0


def apply_fog_of_war(image: np.ndarray, rng: np.random.Generator,
                     factor: float = FOG_FACTOR) -> np.ndarray:
    """Darken everything outside a random corner ellipse by `factor`"""
    visible = fog_region((image.shape[1], image.shape[0]), rng)
    out = image.copy()
    out[~visible] = np.clip(np.rint(image[~visible] * factor), 0, 255).astype(np.uint8)
    return out


# Distractors

def _blend(image: np.ndarray, raster: np.ndarray, x: int, y: int) -> None:
    """Alpha-composite an RGBA raster onto the canvas at top-left (x, y), in place"""
    height, width = image.shape[:2]
    h, w = raster.shape[:2]
    cx0, cy0 = max(x, 0), max(y, 0)
    cx1, cy1 = min(x + w, width), min(y + h, height)
    if cx0 >= cx1 or cy0 >= cy1:
        return
    src = raster[cy0 - y:cy1 - y, cx0 - x:cx1 - x].astype(np.float64)
    alpha = src[..., 3:] / 255.0
    dst = image[cy0:cy1, cx0:cx1].astype(np.float64)
    image[cy0:cy1, cx0:cx1] = np.rint(src[..., :3] * alpha + dst * (1 - alpha)).astype(np.uint8)


def _fill_icon_slots(ui: np.ndarray, icons: Sequence[Sprite], slots: Sequence[Rect],
                     rng: np.random.Generator) -> np.ndarray:
    ui = ui.copy()
    height, width = ui.shape[:2]
    for slot in slots:
        if slot.area == 0 or not slot.inside(width, height):
            logger.debug("icon slot %s does not fit a %dx%d UI sprite", slot, width, height)
            continue
        icon = icons[int(rng.integers(len(icons)))].pixels
        icon = resize(icon, (slot.width, slot.height))
        target = ui[slot.y:slot.bottom, slot.x:slot.right]
        visible = icon[..., 3] > 0
        target[visible] = icon[visible]
    return ui


def overlay_ui(image: np.ndarray, ui_sprites: Sequence[Sprite], cursor_pools: Sequence[SpritePool],
               rng: np.random.Generator, overlay_chance: float,
               sampling_method: str = "bilinear", icons: Sequence[Sprite] = (),
               icon_slots: Sequence[Rect] = ()) -> np.ndarray:
    """
    Add the game UI and cursors, neither of which is labeled

    With probability overlay_chance one UI sprite is alpha-blended
    bottom-aligned and horizontally centered; when icons and icon slots are
    given, every slot of the UI sprite first receives a random icon. Each
    cursor pool then places between min_count and max_count sprites at
    uniform positions. The canvas is modified in place and returned.
    """
    height, width = image.shape[:2]
    if ui_sprites and rng.random() < overlay_chance:
        ui = ui_sprites[int(rng.integers(len(ui_sprites)))].pixels
        if icons and icon_slots:
            ui = _fill_icon_slots(ui, icons, icon_slots, rng)
        _blend(image, ui, (width - ui.shape[1]) // 2, height - ui.shape[0])

    for pool in cursor_pools:
        if not pool.sprites:
            continue
        for _ in range(_draw_count(pool.config, rng)):
            sprite = pool.sprites[int(rng.integers(len(pool.sprites)))]
            position = sample_position(rng, (width, height))
            scale, rotation = _draw_transform(pool.config, rng)
            add_object(image, sprite, scale, rotation, position, sampling_method)
    return image


# Scenes

def compose_scene(config: SceneConfig, pools: Sequence[SpritePool], background: np.ndarray,
                  rng: np.random.Generator, ui_sprites: Sequence[Sprite] = (),
                  icons: Sequence[Sprite] = ()) -> Tuple[np.ndarray, List[LabelRecord]]:
    """
    Compose one labeled scene

    Labeled pools are placed first, in pool order, each drawing its object
    count uniformly from [min_count, max_count]. Grouped pools cluster
    around a bias point shared by the whole scene when the scene's grouping
    coin (group_chance) comes up. Then the UI and the cursors (unlabeled
    pools) are overlaid, and fog of war, noise and blur applied in that
    order. Labels are taken at placement time: later objects never shrink
    earlier labels, and pixel effects never move them.

    Returns:
        The scene image and its label records

    Raises:
        EmptyPoolError: If a labeled pool must place an object but has no sprites
    """
    width, height = config.output_size
    image = resize(background, (width, height)).copy()
    records = []

    grouping = rng.random() < config.group_chance
    bias_point = (int(rng.integers(0, width)), int(rng.integers(0, height)))

    for pool in pools:
        if not pool.config.labeled:
            continue
        for _ in range(_draw_count(pool.config, rng)):
            if not pool.sprites:
                raise EmptyPoolError(f"pool {pool.config.label} has no sprites", pool.config.sprite_dir)
            sprite = pool.sprites[int(rng.integers(len(pool.sprites)))]
            position = sample_position(rng, (width, height), pool.config.grouped and grouping,
                                       bias_point, config.bias_strength)
            scale, rotation = _draw_transform(pool.config, rng)
            image, placed = add_object(image, sprite, scale, rotation, position,
                                       config.sampling_method, config.min_visible_fraction)
            if placed is None:
                continue
            box = placed.visible_box
            records.append(LabelRecord.from_pixels(pool.config.class_id, box.x, box.y,
                                                   box.width, box.height, width, height))

    cursor_pools = [pool for pool in pools if not pool.config.labeled]
    image = overlay_ui(image, ui_sprites, cursor_pools, rng, config.overlay_chance,
                       config.sampling_method, icons, config.ui_icon_slots)
    if rng.random() < config.fog_of_war_chance:
        image = apply_fog_of_war(image, rng)
    image = apply_noise(image, config.noise, rng)
    image = apply_blur(image, config.blur_strength)
    return image, records


def scene_stem(config: SceneConfig, index: int) -> str:
    return f"{config.prefix}{index:06d}"


def check_pools(pools: Sequence[SpritePool]) -> None:
    """
    Fail on labeled pools that may place objects but hold no sprites

    Empty unlabeled pools only produce a warning.
    """
    for pool in pools:
        if pool.sprites or pool.config.max_count == 0:
            continue
        if pool.config.labeled:
            raise EmptyPoolError(f"pool {pool.config.label} has no sprites", pool.config.sprite_dir)
        logger.warning("unlabeled pool %s has no sprites and will be skipped", pool.config.label)


def generate_dataset(config: SceneConfig, pools: Sequence[SpritePool], backgrounds: Sequence[np.ndarray],
                     output_dir: PathLike, ui_sprites: Sequence[Sprite] = (),
                     icons: Sequence[Sprite] = (), jobs: int = 1,
                     progress: bool = False) -> List[str]:
    """
    Generate dataset_size image/label pairs

    Each scene draws its background uniformly, then runs compose_scene. Files
    are named `<prefix><index>` with a six-digit zero-padded index.

    Args:
        config: Scene parameters
        pools: Sprite pools, labeled and unlabeled
        backgrounds: RGB background rasters
        output_dir: Directory receiving images and label files
        ui_sprites: UI overlays
        icons: Icons randomized into the UI's icon slots
        jobs: Number of worker threads; the output does not depend on it
        progress: Show a progress bar

    Returns:
        The written stems, in index order

    Raises:
        NoBackgroundsError: If no background is given
        EmptyPoolError: If a labeled pool may place objects but is empty
        DatasetIOError: If output cannot be written
    """
    if not backgrounds:
        raise NoBackgroundsError("no background images")
    check_pools(pools)
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    backgrounds = [resize(b, config.output_size) for b in backgrounds]
    extension = "." + config.image_format

    def render(index: int) -> str:
        rng = scene_rng(config.seed, index)
        background = backgrounds[int(rng.integers(len(backgrounds)))]
        image, records = compose_scene(config, pools, background, rng, ui_sprites, icons)
        stem = scene_stem(config, index)
        save_image(output_dir / (stem + extension), image, config.jpeg_quality)
        write_label_file(output_dir / (stem + ".txt"), LabelFile(records, stem))
        logger.debug("scene %s: %d label(s)", stem, len(records))
        return stem

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        stems = list(tqdm(pool.map(render, range(config.dataset_size)), total=config.dataset_size,
                          desc="compose", unit="img", disable=not progress))
    logger.info("generated %d scene(s) in %s", len(stems), output_dir)
    return stems


# Loading

def load_backgrounds(directory: PathLike, output_size: Tuple[int, int]) -> List[np.ndarray]:
    """
    Load every background of a directory, resized to output_size

    Raises:
        NoBackgroundsError: If the directory holds no image
    """
    paths = list_images(directory)
    if not paths:
        raise NoBackgroundsError("no background images", str(directory))
    backgrounds = []
    for path in paths:
        raster = load_rgb(path)
        if (raster.shape[1], raster.shape[0]) != tuple(output_size):
            logger.debug("resizing background %s to %dx%d", path.name, *output_size)
        backgrounds.append(resize(raster, output_size))
    logger.info("loaded %d background(s) from %s", len(backgrounds), directory)
    return backgrounds


def load_pools(config: SceneConfig) -> List[SpritePool]:
    """Load the sprites of every configured pool"""
    return [SpritePool(pool, load_sprite_dir(pool.sprite_dir, pool.class_id))
            for pool in config.class_pools]


def draw_labels(image: np.ndarray, labels: LabelFile, color: Tuple[int, int, int] = (255, 0, 0),
                width: int = 2) -> np.ndarray:
    """Copy of an image with every label box outlined, for visual checks"""
    img = Image.fromarray(image).convert("RGB")
    draw = ImageDraw.Draw(img)
    for record in labels.records:
        xmin, ymin, xmax, ymax = denormalize(record, img.width, img.height)
        draw.rectangle([xmin, ymin, xmax - 1, ymax - 1], outline=tuple(color), width=width)
    return np.asarray(img)
