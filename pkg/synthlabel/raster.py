"""
Raster helpers shared by every synthlabel module

Rasters are numpy arrays of shape (height, width, channels) with dtype uint8.
RGB rasters have 3 channels, RGBA rasters 4. Coordinates are (x, y) with the
origin at the top-left corner.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
from PIL import Image

from .exceptions import DatasetIOError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".webp")

ALPHA_THRESHOLD = 128


@dataclass(frozen=True)
class Rect:
    """Integer rectangle given by its top-left corner and size"""
    x: int
    y: int
    width: int
    height: int

    def __post_init__(self):
        if self.width < 0 or self.height < 0:
            raise ValueError(f"negative rectangle size {self.width}x{self.height}")

    @property
    def right(self) -> int:
        return self.x + self.width

    @property
    def bottom(self) -> int:
        return self.y + self.height

    @property
    def area(self) -> int:
        return self.width * self.height

    def translate(self, dx: int, dy: int) -> "Rect":
        return Rect(self.x + dx, self.y + dy, self.width, self.height)

    def inside(self, width: int, height: int) -> bool:
        """True if the rectangle lies within a width x height canvas"""
        return self.x >= 0 and self.y >= 0 and self.right <= width and self.bottom <= height


def tight_bbox(mask: np.ndarray) -> Optional[Rect]:
    """
    Tight bounding rectangle of the True cells of a 2D mask

    Returns:
        The rectangle, or None when the mask is empty
    """
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        return None
    cols = np.flatnonzero(mask.any(axis=0))
    return Rect(int(cols[0]), int(rows[0]),
                int(cols[-1] - cols[0] + 1), int(rows[-1] - rows[0] + 1))


def binarize_alpha(raster: np.ndarray, threshold: int = ALPHA_THRESHOLD) -> np.ndarray:
    """Copy of an RGBA raster whose alpha is 255 where alpha >= threshold, else 0"""
    out = raster.copy()
    out[..., 3] = np.where(raster[..., 3] >= threshold, 255, 0).astype(np.uint8)
    return out


def list_images(directory: PathLike) -> List[Path]:
    """
    Image files of a flat directory in alphabetical order

    Raises:
        DatasetIOError: If the directory does not exist
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DatasetIOError("not a directory", str(directory))
    return sorted(p for p in directory.iterdir()
                  if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS)


def _open(path: PathLike, mode: str) -> np.ndarray:
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert(mode), dtype=np.uint8).copy()
    except (OSError, ValueError) as e:
        raise DatasetIOError(f"cannot read image: {e}", str(path))


def load_rgb(path: PathLike) -> np.ndarray:
    """Read an image file as an RGB raster"""
    return _open(path, "RGB")


def load_rgba(path: PathLike) -> np.ndarray:
    """Read an image file as an RGBA raster (opaque if the file has no alpha)"""
    return _open(path, "RGBA")


def image_size(path: PathLike) -> Tuple[int, int]:
    """(width, height) of an image file without decoding its pixels"""
    try:
        with Image.open(path) as img:
            return img.size
    except OSError as e:
        raise DatasetIOError(f"cannot read image: {e}", str(path))


def save_image(path: PathLike, raster: np.ndarray, quality: int = 90) -> Path:
    """
    Write a raster, choosing the codec from the file extension

    JPEG output drops the alpha channel and uses the given quality; every
    other format is written losslessly.

    Raises:
        DatasetIOError: If the file cannot be written
    """
    path = Path(path)
    img = Image.fromarray(raster)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if path.suffix.lower() in (".jpg", ".jpeg"):
            img.convert("RGB").save(path, quality=quality)
        else:
            img.save(path)
    except OSError as e:
        raise DatasetIOError(f"cannot write image: {e}", str(path))
    logger.debug("wrote %s (%dx%d)", path, img.width, img.height)
    return path


def resize(raster: np.ndarray, size: Tuple[int, int], resample=Image.Resampling.BILINEAR) -> np.ndarray:
    """Resize a raster to (width, height)"""
    if (raster.shape[1], raster.shape[0]) == tuple(size):
        return raster
    return np.asarray(Image.fromarray(raster).resize(tuple(size), resample), dtype=np.uint8)
