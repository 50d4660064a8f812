"""
Dataset utilities

Frame subsampling, seeded train/test splits written as manifest files, and
per-class statistics of a labeled dataset directory.
"""

import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from .exceptions import DatasetIOError, DuplicateStemError, LabelFormatError
from .labels import LABEL_SUFFIX, read_label_file
from .raster import PathLike, list_images, load_rgb, resize, save_image

logger = logging.getLogger(__name__)

TRAIN_MANIFEST = "train.txt"
TEST_MANIFEST = "test.txt"


@dataclass
class DatasetIndex:
    """
    Image/label pairs of a dataset

    Attributes:
        root: Directory manifest paths are written relative to
        pairs: (image path, label path) with matching stems
    """
    root: Path
    pairs: List[Tuple[Path, Path]] = field(default_factory=list)

    def __post_init__(self):
        self.root = Path(self.root)
        seen = set()
        for image, label in self.pairs:
            if Path(image).stem != Path(label).stem:
                raise ValueError(f"stem mismatch: {image} / {label}")
            if Path(image).stem in seen:
                raise DuplicateStemError(f"duplicate stem '{Path(image).stem}'", str(self.root))
            seen.add(Path(image).stem)

    def __len__(self) -> int:
        return len(self.pairs)

    @classmethod
    def scan(cls, root: PathLike) -> "DatasetIndex":
        """
        Pair every image of a directory with its same-stem label file

        Images without a label file are left out.

        Raises:
            DuplicateStemError: If two images share a stem
            DatasetIOError: If the directory cannot be read
        """
        root = Path(root)
        pairs = []
        seen = {}
        for image in list_images(root):
            if image.stem in seen:
                raise DuplicateStemError(
                    f"images {seen[image.stem].name} and {image.name} share a stem", str(root))
            seen[image.stem] = image
            label = image.with_suffix(LABEL_SUFFIX)
            if label.exists():
                pairs.append((image, label))
            else:
                logger.debug("no label for %s", image.name)
        return cls(root, pairs)


def sample_frames(input_dir: PathLike, stride: int, output_dir: PathLike,
                  resize_to: Optional[Tuple[int, int]] = None, prefix: str = "output_",
                  progress: bool = False) -> int:
    """
    Export every stride-th frame of an image sequence

    Frames are taken in alphabetical order at indices 0, stride, 2*stride, ...
    and written as `<prefix><running index>.png` with a six-digit index,
    optionally resized (bilinear) to resize_to.

    Returns:
        Number of frames written
    """
    if stride < 1:
        raise ValueError(f"stride must be positive, got {stride}")
    frames = list_images(input_dir)[::stride]
    output_dir = Path(output_dir)
    for index, path in enumerate(tqdm(frames, desc="frames", unit="frame", disable=not progress)):
        raster = load_rgb(path)
        if resize_to is not None:
            raster = resize(raster, resize_to)
        save_image(output_dir / f"{prefix}{index:06d}.png", raster)
    logger.info("exported %d of every %d frame(s) into %s", len(frames), stride, output_dir)
    return len(frames)


def split_train_test(index: DatasetIndex, test_fraction: float,
                     seed: int = 0) -> Tuple[DatasetIndex, DatasetIndex]:
    """
    Split a dataset by a seeded uniform shuffle

    The test part holds round(test_fraction * N) pairs. Both parts keep the
    input order of their pairs.
    """
    if not 0.0 <= test_fraction <= 1.0:
        raise ValueError(f"test_fraction must be within [0, 1], got {test_fraction}")
    n = len(index.pairs)
    n_test = round(test_fraction * n)
    order = np.random.default_rng(seed).permutation(n)
    test_members = set(order[:n_test].tolist())
    train = [p for i, p in enumerate(index.pairs) if i not in test_members]
    test = [p for i, p in enumerate(index.pairs) if i in test_members]
    return DatasetIndex(index.root, train), DatasetIndex(index.root, test)


def write_manifest(index: DatasetIndex, path: PathLike) -> Path:
    """Write one image path per line, relative to the index root when possible"""
    path = Path(path)
    lines = []
    for image, _ in index.pairs:
        try:
            lines.append(Path(image).relative_to(index.root).as_posix())
        except ValueError:
            lines.append(Path(image).as_posix())
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write("".join(line + "\n" for line in lines))
    except OSError as e:
        raise DatasetIOError(f"cannot write manifest: {e}", str(path))
    return path


def write_split(train: DatasetIndex, test: DatasetIndex, output_dir: PathLike) -> Tuple[Path, Path]:
    output_dir = Path(output_dir)
    return (write_manifest(train, output_dir / TRAIN_MANIFEST),
            write_manifest(test, output_dir / TEST_MANIFEST))


@dataclass
class DatasetStats:
    """
    Object counts of a dataset

    Attributes:
        images: Number of labeled images
        per_class: Objects per class id
        histogram: Number of images per object count
    """
    images: int = 0
    per_class: Dict[int, int] = field(default_factory=dict)
    histogram: Dict[int, int] = field(default_factory=dict)

    @property
    def total_objects(self) -> int:
        return sum(self.per_class.values())

    def lines(self, names=None) -> List[str]:
        out = [f"images: {self.images}", f"objects: {self.total_objects}", "",
               f"{'Class':<24} {'Objects':>8}"]
        for class_id, count in sorted(self.per_class.items()):
            label = names.name_of(class_id) if names else str(class_id)
            out.append(f"{label[:24]:<24} {count:>8}")
        out += ["", f"{'Objects/image':<24} {'Images':>8}"]
        for objects, images in sorted(self.histogram.items()):
            out.append(f"{objects:<24} {images:>8}")
        return out


def dataset_stats(index: DatasetIndex) -> DatasetStats:
    """
    Count objects per class and images per object count

    Raises:
        LabelFormatError: If a label file fails to parse; the error names the file
    """
    per_class = Counter()
    histogram = Counter()
    for _, label in index.pairs:
        try:
            labels = read_label_file(label)
        except LabelFormatError as e:
            e.path = str(label)
            raise
        per_class.update(labels.class_ids())
        histogram[len(labels.records)] += 1
    return DatasetStats(len(index.pairs), dict(per_class), dict(histogram))
