"""
Sprite extraction

Turns frames of an object recorded in front of a uni-color background into
cropped sprites with a binary transparency mask, and grows or shrinks sprite
outlines.

Example:
    >>> params = KeyParams(background_color=(0, 255, 0), tolerance=(10, 10, 10))
    >>> extract_sprites("frames/", params, class_id=2, output_dir="sprites/")
    612
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage
from tqdm import tqdm

from .exceptions import AreaOutOfBoundsError, EmptyContentError
from .raster import (PathLike, Rect, list_images, load_rgb, load_rgba,
                     save_image, tight_bbox)

logger = logging.getLogger(__name__)

# 4-neighborhood
CROSS = ndimage.generate_binary_structure(2, 1)

DEFAULT_NAME_PATTERN = "{class_id}_{stem}.png"
DEFAULT_GLOW = (255, 255, 255, 160)


@dataclass(eq=False)
class RawFrame:
    """An exported RGB frame and the name of the file it came from"""
    pixels: np.ndarray
    source_name: str = ""

    def __post_init__(self):
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError(f"expected an RGB raster, got shape {self.pixels.shape}")
        if self.pixels.shape[0] < 1 or self.pixels.shape[1] < 1:
            raise ValueError("frame must be at least 1x1")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(eq=False)
class Sprite:
    """
    A cropped RGBA raster of a single object

    Attributes:
        pixels: RGBA raster, alpha is binary after extraction
        class_id: Object class the sprite depicts
        content_box: Tight bounds of the pixels with alpha > 0
        source_name: Name of the file the sprite was loaded from
    """
    pixels: np.ndarray
    class_id: int
    content_box: Rect
    source_name: str = ""

    def __post_init__(self):
        if self.class_id < 0:
            raise ValueError(f"class_id must be non-negative, got {self.class_id}")
        box = tight_bbox(self.pixels[..., 3] > 0)
        if box is None:
            raise EmptyContentError("sprite has no visible pixel", self.source_name or None)
        if box != self.content_box:
            raise ValueError(f"content_box {self.content_box} is not the tight bound {box}")

    @classmethod
    def from_raster(cls, raster: np.ndarray, class_id: int, source_name: str = "") -> "Sprite":
        """Crop an RGBA raster to its content and wrap it as a Sprite"""
        cropped, _ = crop_to_content(raster)
        return cls(cropped, class_id, Rect(0, 0, cropped.shape[1], cropped.shape[0]), source_name)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class KeyParams:
    """
    Chroma keying parameters

    Attributes:
        background_color: RGB color that becomes transparent
        tolerance: Allowed absolute difference per RGB channel
        area: Region of the frame that may hold content; everything outside
            becomes transparent
        remove_outline: Number of outline layers eroded after keying
    """
    background_color: Tuple[int, int, int] = (0, 255, 0)
    tolerance: Tuple[int, int, int] = (0, 0, 0)
    area: Optional[Rect] = None
    remove_outline: int = 0

    def __post_init__(self):
        if len(self.background_color) != 3 or not all(0 <= c <= 255 for c in self.background_color):
            raise ValueError(f"background_color must be three values in [0, 255], got {self.background_color}")
        if len(self.tolerance) != 3 or not all(0 <= t <= 255 for t in self.tolerance):
            raise ValueError(f"tolerance must be three values in [0, 255], got {self.tolerance}")
        if self.remove_outline < 0:
            raise ValueError(f"remove_outline must be non-negative, got {self.remove_outline}")


def chroma_key_mask(frame: RawFrame, params: KeyParams) -> np.ndarray:
    """
    Make every background-colored pixel of a frame transparent

    A pixel is background when each of its channels is within the channel's
    tolerance of the background color. Background pixels get alpha 0, all
    others keep their color with alpha 255.

    Args:
        frame: The frame to key
        params: Background color, tolerance and optional content area

    Returns:
        RGBA raster of the frame's size

    Raises:
        AreaOutOfBoundsError: If params.area exceeds the frame
    """
    pixels = frame.pixels
    diff = np.abs(pixels.astype(np.int16) - np.asarray(params.background_color, dtype=np.int16))
    background = np.all(diff <= np.asarray(params.tolerance, dtype=np.int16), axis=2)
    alpha = np.where(background, 0, 255).astype(np.uint8)

    if params.area is not None:
        if not params.area.inside(frame.width, frame.height):
            raise AreaOutOfBoundsError(
                f"area {params.area} exceeds frame size {frame.width}x{frame.height}",
                frame.source_name or None)
        keep = np.zeros_like(alpha)
        a = params.area
        keep[a.y:a.bottom, a.x:a.right] = alpha[a.y:a.bottom, a.x:a.right]
        alpha = keep

    return np.dstack([pixels, alpha])


def crop_to_content(raster: np.ndarray) -> Tuple[np.ndarray, Tuple[int, int]]:
    """
    Crop an RGBA raster to the tight bounds of its visible pixels

    Returns:
        The cropped raster and the (x, y) offset of its top-left corner in
        the input

    Raises:
        EmptyContentError: If no pixel has alpha > 0
    """
    box = tight_bbox(raster[..., 3] > 0)
    if box is None:
        raise EmptyContentError("raster has no visible pixel")
    return raster[box.y:box.bottom, box.x:box.right].copy(), (box.x, box.y)


def erode_outline(raster: np.ndarray, layers: int) -> np.ndarray:
    """
    Remove outline layers from the alpha mask

    Each layer keeps a pixel opaque only if all four of its neighbors are
    opaque; pixels outside the raster count as transparent. Color channels
    are left untouched. The result may be fully transparent.
    """
    if layers < 0:
        raise ValueError(f"layers must be non-negative, got {layers}")
    if layers == 0:
        return raster.copy()
    mask = raster[..., 3] > 0
    eroded = ndimage.binary_erosion(mask, structure=CROSS, iterations=layers, border_value=0)
    out = raster.copy()
    out[..., 3] = np.where(eroded, raster[..., 3], 0)
    return out


def dilate_outline(raster: np.ndarray, layers: int, color: Sequence[int]) -> np.ndarray:
    """
    Grow outline layers of the given RGBA color around the visible pixels

    The raster is padded by `layers` pixels on each side first, so the
    outline is never clipped.
    """
    if layers < 0:
        raise ValueError(f"layers must be non-negative, got {layers}")
    if layers == 0:
        return raster.copy()
    out = np.pad(raster, ((layers, layers), (layers, layers), (0, 0)))
    fill = np.asarray(color, dtype=np.uint8)
    for _ in range(layers):
        mask = out[..., 3] > 0
        ring = ndimage.binary_dilation(mask, structure=CROSS) & ~mask
        out[ring] = fill
    return out


def add_glow(raster: np.ndarray, layers: int, color: Sequence[int] = DEFAULT_GLOW) -> np.ndarray:
    """Surround the object with translucent outline layers"""
    return dilate_outline(raster, layers, color)


def load_sprite(path: PathLike, class_id: int) -> Sprite:
    """
    Read a transparency-preserving image as a Sprite

    The raster is cropped to its pixels with alpha > 0. Alpha values are
    kept; compositing binarizes them at 128.

    Raises:
        EmptyContentError: If the image has no visible pixel
        DatasetIOError: If the file cannot be read
    """
    path = Path(path)
    raster = load_rgba(path)
    try:
        return Sprite.from_raster(raster, class_id, path.name)
    except EmptyContentError:
        raise EmptyContentError("sprite has no visible pixel", str(path))


def load_sprite_dir(directory: PathLike, class_id: int) -> List[Sprite]:
    """Load every sprite image of a directory, skipping empty ones with a warning"""
    sprites = []
    for path in list_images(directory):
        try:
            sprites.append(load_sprite(path, class_id))
        except EmptyContentError:
            logger.warning("skipping %s: no visible pixel", path)
    logger.info("loaded %d sprites of class %d from %s", len(sprites), class_id, directory)
    return sprites


def _extract_one(path: Path, params: KeyParams, class_id: int, output_dir: Path,
                 name_pattern: str) -> Optional[Path]:
    frame = RawFrame(load_rgb(path), path.name)
    raster = erode_outline(chroma_key_mask(frame, params), params.remove_outline)
    try:
        cropped, offset = crop_to_content(raster)
    except EmptyContentError:
        return None
    target = output_dir / name_pattern.format(class_id=class_id, stem=path.stem)
    logger.debug("%s -> %s (%dx%d at %s)", path.name, target.name,
                 cropped.shape[1], cropped.shape[0], offset)
    return save_image(target, cropped)


def extract_sprites(input_dir: PathLike, params: KeyParams, class_id: int, output_dir: PathLike,
                    name_pattern: str = DEFAULT_NAME_PATTERN, jobs: int = 1,
                    progress: bool = False) -> int:
    """
    Key, erode and crop every frame of a directory into sprite files

    Frames whose mask ends up empty are skipped and reported in a single
    warning.

    Args:
        input_dir: Flat directory of RGB frames
        params: Keying parameters, including outline layers to remove
        class_id: Class id substituted into the output name pattern
        output_dir: Directory receiving the PNG sprites
        name_pattern: Output file name, formatted with `class_id` and `stem`
        jobs: Number of worker threads
        progress: Show a progress bar

    Returns:
        Number of sprites written

    Raises:
        DatasetIOError: On unreadable input or unwritable output
        AreaOutOfBoundsError: If params.area exceeds a frame
    """
    frames = list_images(input_dir)
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)

    def work(path):
        return path, _extract_one(path, params, class_id, output_dir, name_pattern)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        results = list(tqdm(pool.map(work, frames), total=len(frames),
                            desc="extract", unit="frame", disable=not progress))

    skipped = [path.name for path, written in results if written is None]
    if skipped:
        logger.warning("skipped %d frame(s) with empty mask: %s", len(skipped), ", ".join(skipped))
    count = len(results) - len(skipped)
    logger.info("extracted %d sprite(s) of class %d into %s", count, class_id, output_dir)
    return count


OUTLINE_MODES = ("remove", "add", "glow")


def process_outlines(input_dir: PathLike, output_dir: PathLike, mode: str, layers: int,
                     color: Optional[Sequence[int]] = None) -> int:
    """
    Remove, add or glow the outlines of every sprite in a directory

    Results are re-cropped to their content. Sprites that erode away
    completely are skipped with a warning.

    Returns:
        Number of sprites written
    """
    if mode not in OUTLINE_MODES:
        raise ValueError(f"mode must be one of {OUTLINE_MODES}, got {mode!r}")
    output_dir = Path(output_dir)
    written = 0
    for path in list_images(input_dir):
        raster = load_rgba(path)
        if mode == "remove":
            raster = erode_outline(raster, layers)
        elif mode == "add":
            raster = dilate_outline(raster, layers, color or (0, 0, 0, 255))
        else:
            raster = add_glow(raster, layers, color or DEFAULT_GLOW)
        try:
            cropped, _ = crop_to_content(raster)
        except EmptyContentError:
            logger.warning("skipping %s: nothing left after removing %d layer(s)", path.name, layers)
            continue
        save_image(output_dir / (path.stem + ".png"), cropped)
        written += 1
    logger.info("%s outline on %d sprite(s) into %s", mode, written, output_dir)
    return written
