"""
Label files

Reads, writes, converts, renames and validates annotation files in the
darknet text format. Each line is one object:

    <class_id> <x_center> <y_center> <width> <height>

with the box given relative to the image size.
"""

import logging
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Mapping, Optional, Sequence, Tuple

from .exceptions import (DatasetIOError, LabelFormatError, MalformedAnnotationError,
                         MalformedLineError, OutOfRangeError, UnknownClassError,
                         UnmappedClassError)
from .raster import PathLike, list_images

logger = logging.getLogger(__name__)

LABEL_SUFFIX = ".txt"
CLASS_LIST_NAME = "classes.txt"

# slack for values that went through 6-decimal formatting
EPSILON = 1e-6


def _record_problem(class_id, x_center, y_center, width, height) -> Optional[str]:
    if class_id < 0:
        return f"class id {class_id} is negative"
    if not (0 < width <= 1 + EPSILON and 0 < height <= 1 + EPSILON):
        return f"box size {width} x {height} outside (0, 1]"
    if not (x_center - width / 2 >= -EPSILON and x_center + width / 2 <= 1 + EPSILON):
        return f"x_center {x_center} with width {width} leaves [0, 1]"
    if not (y_center - height / 2 >= -EPSILON and y_center + height / 2 <= 1 + EPSILON):
        return f"y_center {y_center} with height {height} leaves [0, 1]"
    return None


@dataclass(frozen=True)
class LabelRecord:
    """One labeled object: class index and normalized center/size box"""
    class_id: int
    x_center: float
    y_center: float
    width: float
    height: float

    def __post_init__(self):
        problem = _record_problem(self.class_id, self.x_center, self.y_center,
                                  self.width, self.height)
        if problem:
            raise ValueError(problem)

    @classmethod
    def from_pixels(cls, class_id: int, x: float, y: float, width: float, height: float,
                    image_width: int, image_height: int) -> "LabelRecord":
        """Build a record from a pixel box given by top-left corner and size"""
        return cls(class_id,
                   (x + width / 2) / image_width,
                   (y + height / 2) / image_height,
                   width / image_width,
                   height / image_height)


@dataclass
class LabelFile:
    """The records of one image, in file order"""
    records: List[LabelRecord] = field(default_factory=list)
    stem: str = ""

    def class_ids(self) -> List[int]:
        return [r.class_id for r in self.records]


def write_labels(file: LabelFile) -> str:
    """
    Render a LabelFile as text

    Reals are printed with exactly six decimals, one newline-terminated line
    per record. A file without records renders as the empty string.
    """
    return "".join(
        f"{r.class_id} {r.x_center:.6f} {r.y_center:.6f} {r.width:.6f} {r.height:.6f}\n"
        for r in file.records)


def parse_labels(text: str, stem: str = "") -> LabelFile:
    """
    Parse label text

    Blank lines and surrounding whitespace are ignored.

    Raises:
        MalformedLineError: On a wrong field count or a non-numeric field
        OutOfRangeError: When a record violates its invariants
    """
    records = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) != 5:
            raise MalformedLineError(f"expected 5 fields, got {len(fields)}", line_no)
        try:
            class_id = int(fields[0])
            values = [float(v) for v in fields[1:]]
        except ValueError:
            raise MalformedLineError(f"non-numeric field in {line.strip()!r}", line_no)
        if not all(math.isfinite(v) for v in values):
            raise MalformedLineError(f"non-finite field in {line.strip()!r}", line_no)
        problem = _record_problem(class_id, *values)
        if problem:
            raise OutOfRangeError(problem, line_no)
        records.append(LabelRecord(class_id, *values))
    return LabelFile(records, stem)


def read_label_text(path: Path, what: str = "labels") -> str:
    """
    Read a label or prediction file as UTF-8

    Raises:
        DatasetIOError: If the file cannot be read
        MalformedLineError: If the file is not UTF-8, on the line of the bad byte
    """
    try:
        data = path.read_bytes()
    except OSError as e:
        raise DatasetIOError(f"cannot read {what}: {e}", str(path))
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as e:
        raise MalformedLineError(f"not UTF-8 text (byte {data[e.start]:#04x})",
                                 data.count(b"\n", 0, e.start) + 1, str(path))


def read_label_file(path: PathLike) -> LabelFile:
    """Read and parse a label file; errors carry the file path"""
    path = Path(path)
    text = read_label_text(path)
    try:
        return parse_labels(text, path.stem)
    except LabelFormatError as e:
        e.path = str(path)
        raise


def write_label_file(path: PathLike, file: LabelFile) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        # newline="" keeps "\n" on every platform
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(write_labels(file))
    except OSError as e:
        raise DatasetIOError(f"cannot write labels: {e}", str(path))
    return path


def denormalize(record: LabelRecord, width: int, height: int) -> Tuple[float, float, float, float]:
    """Pixel corners (xmin, ymin, xmax, ymax) of a record on a width x height image"""
    half_w = record.width * width / 2
    half_h = record.height * height / 2
    cx = record.x_center * width
    cy = record.y_center * height
    return cx - half_w, cy - half_h, cx + half_w, cy + half_h


def label_files(directory: PathLike) -> List[Path]:
    """Label files of a directory in alphabetical order, without the class list"""
    directory = Path(directory)
    if not directory.is_dir():
        raise DatasetIOError("not a directory", str(directory))
    return sorted(p for p in directory.glob("*" + LABEL_SUFFIX) if p.name != CLASS_LIST_NAME)


# Class lists

@dataclass(frozen=True)
class ClassMap:
    """Ordered (class_id, class_name) pairs with ids 0..n-1 and unique names"""
    entries: Tuple[Tuple[int, str], ...]

    def __post_init__(self):
        ids = [i for i, _ in self.entries]
        names = [n for _, n in self.entries]
        if ids != list(range(len(ids))):
            raise ValueError(f"class ids must be contiguous from 0, got {ids}")
        if len(set(names)) != len(names):
            raise ValueError("class names must be distinct")

    @classmethod
    def from_names(cls, names: Sequence[str]) -> "ClassMap":
        return cls(tuple(enumerate(names)))

    @property
    def names(self) -> List[str]:
        return [n for _, n in self.entries]

    def id_of(self, name: str) -> int:
        for class_id, class_name in self.entries:
            if class_name == name:
                return class_id
        raise UnknownClassError(name)

    def name_of(self, class_id: int) -> str:
        if 0 <= class_id < len(self.entries):
            return self.entries[class_id][1]
        return str(class_id)


def read_class_list(path: PathLike) -> ClassMap:
    """Read a class list: one name per line, the line index is the class id"""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise DatasetIOError(f"cannot read class list: {e}", str(path))
    except UnicodeDecodeError:
        raise MalformedAnnotationError("class list is not UTF-8 text", str(path))
    names = [line.strip() for line in lines if line.strip()]
    try:
        return ClassMap.from_names(names)
    except ValueError as e:
        raise MalformedAnnotationError(str(e), str(path))


def write_class_list(path: PathLike, classes: ClassMap) -> Path:
    path = Path(path)
    try:
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write("".join(name + "\n" for name in classes.names))
    except OSError as e:
        raise DatasetIOError(f"cannot write class list: {e}", str(path))
    return path


# VOC XML

@dataclass(frozen=True)
class VocObject:
    name: str
    xmin: int
    ymin: int
    xmax: int
    ymax: int


@dataclass(frozen=True)
class VocAnnotation:
    """A VOC-style annotation as written by LabelImg"""
    width: int
    height: int
    objects: Tuple[VocObject, ...] = ()
    filename: str = ""

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image size {self.width}x{self.height} must be positive")
        for obj in self.objects:
            if not (0 <= obj.xmin < obj.xmax <= self.width and 0 <= obj.ymin < obj.ymax <= self.height):
                raise ValueError(
                    f"box ({obj.xmin}, {obj.ymin}, {obj.xmax}, {obj.ymax}) of '{obj.name}' "
                    f"does not fit a {self.width}x{self.height} image")


def _find_number(node: ET.Element, tag: str) -> int:
    text = node.findtext(tag)
    if text is None:
        raise MalformedAnnotationError(f"missing <{tag}>")
    try:
        return int(float(text))
    except ValueError:
        raise MalformedAnnotationError(f"<{tag}> is not a number: {text!r}")


def parse_voc_xml(text: str) -> VocAnnotation:
    """
    Parse VOC XML (size/width, size/height, object/name, object/bndbox/*)

    Raises:
        MalformedAnnotationError: On unparseable XML, missing fields or boxes
            that do not fit the image
    """
    try:
        root = ET.fromstring(text)
    except ET.ParseError as e:
        raise MalformedAnnotationError(f"invalid XML: {e}")
    size = root.find("size")
    if size is None:
        raise MalformedAnnotationError("missing <size>")
    objects = []
    for item in root.iter("object"):
        name = (item.findtext("name") or "").strip()
        box = item.find("bndbox")
        if not name or box is None:
            raise MalformedAnnotationError("object without <name> or <bndbox>")
        objects.append(VocObject(name, _find_number(box, "xmin"), _find_number(box, "ymin"),
                                 _find_number(box, "xmax"), _find_number(box, "ymax")))
    try:
        return VocAnnotation(_find_number(size, "width"), _find_number(size, "height"),
                             tuple(objects), root.findtext("filename") or "")
    except ValueError as e:
        raise MalformedAnnotationError(str(e))


def read_voc_file(path: PathLike) -> VocAnnotation:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise DatasetIOError(f"cannot read annotation: {e}", str(path))
    except UnicodeDecodeError:
        raise MalformedAnnotationError("annotation is not UTF-8 text", str(path))
    try:
        return parse_voc_xml(text)
    except MalformedAnnotationError as e:
        e.path = str(path)
        raise


def convert_voc(annotation: VocAnnotation, classes: ClassMap) -> LabelFile:
    """
    Convert a VOC annotation into normalized label records

    Raises:
        UnknownClassError: If an object name is not in the class list
    """
    w, h = annotation.width, annotation.height
    records = [
        LabelRecord(classes.id_of(obj.name),
                    (obj.xmin + obj.xmax) / (2 * w),
                    (obj.ymin + obj.ymax) / (2 * h),
                    (obj.xmax - obj.xmin) / w,
                    (obj.ymax - obj.ymin) / h)
        for obj in annotation.objects
    ]
    return LabelFile(records, Path(annotation.filename).stem)


def convert_voc_dir(xml_dir: PathLike, classes: ClassMap, output_dir: PathLike) -> int:
    """
    Convert every *.xml annotation of a directory into a label file

    Output files are named after the XML file stem.

    Returns:
        Number of label files written
    """
    xml_dir = Path(xml_dir)
    if not xml_dir.is_dir():
        raise DatasetIOError("not a directory", str(xml_dir))
    count = 0
    for path in sorted(xml_dir.glob("*.xml")):
        try:
            converted = convert_voc(read_voc_file(path), classes)
        except UnknownClassError as e:
            e.path = str(path)
            raise
        converted.stem = path.stem
        write_label_file(Path(output_dir) / (path.stem + LABEL_SUFFIX), converted)
        count += 1
    logger.info("converted %d annotation(s) from %s", count, xml_dir)
    return count


# Renaming

def rename_classes(file: LabelFile, mapping: Mapping[int, int]) -> LabelFile:
    """
    Replace every record's class id through a mapping; boxes and order are kept

    Raises:
        UnmappedClassError: If a class id in the file has no mapping
    """
    records = []
    for r in file.records:
        if r.class_id not in mapping:
            raise UnmappedClassError(r.class_id)
        records.append(LabelRecord(mapping[r.class_id], r.x_center, r.y_center, r.width, r.height))
    return LabelFile(records, file.stem)


def rename_dataset(label_dir: PathLike, mapping: Mapping[int, int],
                   output_dir: Optional[PathLike] = None) -> int:
    """
    Rename classes in every label file of a directory

    Without an output directory the files are rewritten in place. Every file
    is checked against the mapping before anything is written.

    Returns:
        Number of label files written
    """
    renamed = []
    for path in label_files(label_dir):
        try:
            renamed.append((path, rename_classes(read_label_file(path), mapping)))
        except UnmappedClassError as e:
            e.path = str(path)
            raise
    target_dir = Path(output_dir) if output_dir is not None else Path(label_dir)
    for path, file in renamed:
        write_label_file(target_dir / path.name, file)
    logger.info("renamed classes in %d label file(s)", len(renamed))
    return len(renamed)


# Integrity

@dataclass
class IntegrityReport:
    """Problems found in a dataset directory"""
    missing_labels: List[str] = field(default_factory=list)
    missing_images: List[str] = field(default_factory=list)
    malformed: List[Tuple[str, int, str]] = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not (self.missing_labels or self.missing_images or self.malformed)

    def lines(self) -> List[str]:
        out = [f"missing label: {stem}" for stem in self.missing_labels]
        out += [f"missing image: {stem}" for stem in self.missing_images]
        out += [f"malformed: {stem} line {line_no}: {msg}" for stem, line_no, msg in self.malformed]
        return out


def check_integrity(dataset_dir: PathLike) -> IntegrityReport:
    """
    Check that every image has a label file and every label file an image

    Label files that fail to parse are listed under `malformed` with the
    offending line number.

    Raises:
        DatasetIOError: If the directory cannot be read
    """
    image_stems = {p.stem for p in list_images(dataset_dir)}
    labels = {p.stem: p for p in label_files(dataset_dir)}
    report = IntegrityReport(
        missing_labels=sorted(image_stems - labels.keys()),
        missing_images=sorted(labels.keys() - image_stems))
    for stem, path in sorted(labels.items()):
        try:
            read_label_file(path)
        except LabelFormatError as e:
            report.malformed.append((stem, e.line_no, e.detail))
    logger.info("checked %d image(s), %d label file(s): %s", len(image_stems), len(labels),
                "clean" if report.clean else "dirty")
    return report

