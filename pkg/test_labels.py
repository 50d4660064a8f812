"""Tests for label files, class lists, VOC conversion and dataset checks"""

import numpy as np
import pytest

from synthlabel.exceptions import (MalformedAnnotationError, MalformedLineError, OutOfRangeError,
                                   UnknownClassError, UnmappedClassError)
from synthlabel.labels import (ClassMap, LabelFile, LabelRecord, VocAnnotation, VocObject,
                               check_integrity, convert_voc, convert_voc_dir, denormalize,
                               label_files, parse_labels, parse_voc_xml, read_class_list,
                               read_label_file, rename_classes, rename_dataset, write_class_list,
                               write_label_file, write_labels)

VOC_XML = """<annotation>
  <filename>frame_7.png</filename>
  <size><width>100</width><height>100</height><depth>3</depth></size>
  <object>
    <name>minion</name>
    <bndbox><xmin>10</xmin><ymin>20</ymin><xmax>30</xmax><ymax>60</ymax></bndbox>
  </object>
  <object>
    <name>tower</name>
    <bndbox><xmin>0</xmin><ymin>0</ymin><xmax>100</xmax><ymax>100</ymax></bndbox>
  </object>
</annotation>
"""

CLASSES = ClassMap.from_names(["champion", "tower", "minion"])


# Text format

def test_write_single_record():
    text = write_labels(LabelFile([LabelRecord(0, 0.5, 0.5, 0.04, 0.04)]))
    assert text == "0 0.500000 0.500000 0.040000 0.040000\n"


def test_write_empty_file():
    assert write_labels(LabelFile()) == ""


def test_write_keeps_record_order():
    records = [LabelRecord(3, 0.2, 0.2, 0.1, 0.1), LabelRecord(1, 0.7, 0.6, 0.2, 0.3)]
    lines = write_labels(LabelFile(records)).splitlines()
    assert [line.split()[0] for line in lines] == ["3", "1"]


def test_parse_round_trip():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        records = []
        for _ in range(int(rng.integers(0, 6))):
            w, h = rng.uniform(0.01, 0.5, size=2)
            x, y = rng.uniform(w / 2, 1 - w / 2), rng.uniform(h / 2, 1 - h / 2)
            records.append(LabelRecord(int(rng.integers(0, 10)), round(x, 6), round(y, 6),
                                       round(w, 6), round(h, 6)))
        original = LabelFile(records)
        assert parse_labels(write_labels(original)).records == original.records


def test_parse_short_line_is_malformed():
    with pytest.raises(MalformedLineError) as excinfo:
        parse_labels("0 0.5 0.5")
    assert excinfo.value.line_no == 1


def test_parse_non_numeric_is_malformed():
    with pytest.raises(MalformedLineError) as excinfo:
        parse_labels("0 0.5 0.5 0.1 0.1\n1 a 0.5 0.1 0.1\n")
    assert excinfo.value.line_no == 2


def test_parse_center_out_of_range():
    with pytest.raises(OutOfRangeError) as excinfo:
        parse_labels("0 1.5 0.5 0.1 0.1")
    assert excinfo.value.line_no == 1


def test_parse_tolerates_rounding_at_the_edge():
    labels = parse_labels("0 0.999999 0.5 0.000003 0.1\n\n")
    assert len(labels.records) == 1


def test_record_rejects_box_leaving_image():
    with pytest.raises(ValueError):
        LabelRecord(0, 0.05, 0.5, 0.2, 0.1)


def test_label_file_io(tmp_path):
    labels = LabelFile([LabelRecord(2, 0.25, 0.75, 0.5, 0.5)], "x")
    write_label_file(tmp_path / "x.txt", labels)
    assert (tmp_path / "x.txt").read_bytes() == b"2 0.250000 0.750000 0.500000 0.500000\n"
    assert read_label_file(tmp_path / "x.txt").records == labels.records

    (tmp_path / "bad.txt").write_text("0 0.5\n")
    with pytest.raises(MalformedLineError) as excinfo:
        read_label_file(tmp_path / "bad.txt")
    assert "bad.txt" in str(excinfo.value)


def test_denormalize():
    record = LabelRecord(0, 0.2, 0.4, 0.2, 0.4)
    assert denormalize(record, 100, 100) == pytest.approx((10, 20, 30, 60))


# Class lists

def test_class_list_io(tmp_path):
    write_class_list(tmp_path / "classes.txt", CLASSES)
    assert (tmp_path / "classes.txt").read_text() == "champion\ntower\nminion\n"
    classes = read_class_list(tmp_path / "classes.txt")
    assert classes == CLASSES
    assert classes.id_of("minion") == 2
    assert classes.name_of(1) == "tower"
    assert classes.name_of(12) == "12"


def test_class_list_rejects_duplicates(tmp_path):
    (tmp_path / "classes.txt").write_text("a\nb\na\n")
    with pytest.raises(MalformedAnnotationError):
        read_class_list(tmp_path / "classes.txt")
    (tmp_path / "classes.txt").write_bytes(b"a\n\xe9\n")
    with pytest.raises(MalformedAnnotationError):
        read_class_list(tmp_path / "classes.txt")


def test_label_files_skip_class_list(tmp_path):
    write_class_list(tmp_path / "classes.txt", CLASSES)
    write_label_file(tmp_path / "b.txt", LabelFile())
    write_label_file(tmp_path / "a.txt", LabelFile())
    assert [p.name for p in label_files(tmp_path)] == ["a.txt", "b.txt"]


# VOC

def test_convert_voc_box():
    annotation = VocAnnotation(100, 100, (VocObject("minion", 10, 20, 30, 60),))
    (record,) = convert_voc(annotation, CLASSES).records
    assert record.class_id == 2
    assert (record.x_center, record.y_center, record.width, record.height) == pytest.approx(
        (0.2, 0.4, 0.2, 0.4))


def test_convert_full_image_box():
    annotation = VocAnnotation(64, 48, (VocObject("tower", 0, 0, 64, 48),))
    (record,) = convert_voc(annotation, CLASSES).records
    assert (record.x_center, record.y_center, record.width, record.height) == (0.5, 0.5, 1.0, 1.0)


def test_convert_unknown_name():
    annotation = VocAnnotation(10, 10, (VocObject("dragon", 0, 0, 5, 5),))
    with pytest.raises(UnknownClassError) as excinfo:
        convert_voc(annotation, CLASSES)
    assert excinfo.value.name == "dragon"


def test_parse_voc_xml():
    annotation = parse_voc_xml(VOC_XML)
    assert (annotation.width, annotation.height, annotation.filename) == (100, 100, "frame_7.png")
    assert annotation.objects == (VocObject("minion", 10, 20, 30, 60), VocObject("tower", 0, 0, 100, 100))


@pytest.mark.parametrize("text", [
    "<annotation>",
    "<annotation><object><name>a</name></object></annotation>",
    "<annotation><size><width>10</width><height>10</height></size><object><name>a</name>"
    "<bndbox><xmin>0</xmin><ymin>0</ymin><xmax>20</xmax><ymax>5</ymax></bndbox></object></annotation>",
])
def test_parse_voc_xml_rejects_bad_documents(text):
    with pytest.raises(MalformedAnnotationError):
        parse_voc_xml(text)


def test_voc_round_trip_recovers_corners():
    rng = np.random.default_rng(4)
    for _ in range(100):
        width, height = (int(v) for v in rng.integers(2, 2000, size=2))
        xmin = int(rng.integers(0, width - 1))
        ymin = int(rng.integers(0, height - 1))
        xmax = int(rng.integers(xmin + 1, width + 1))
        ymax = int(rng.integers(ymin + 1, height + 1))
        annotation = VocAnnotation(width, height, (VocObject("tower", xmin, ymin, xmax, ymax),))
        text = write_labels(convert_voc(annotation, CLASSES))
        (record,) = parse_labels(text).records
        corners = denormalize(record, width, height)
        assert np.allclose(corners, (xmin, ymin, xmax, ymax), atol=0.5)


def test_convert_voc_dir(tmp_path):
    (tmp_path / "xml").mkdir()
    (tmp_path / "xml" / "f1.xml").write_text(VOC_XML)
    assert convert_voc_dir(tmp_path / "xml", CLASSES, tmp_path / "labels") == 1
    labels = read_label_file(tmp_path / "labels" / "f1.txt")
    assert labels.class_ids() == [2, 1]


# Renaming

def test_merge_classes():
    labels = LabelFile([LabelRecord(c, 0.5, 0.5, 0.1, 0.1) for c in (1, 2, 3, 2)])
    merged = rename_classes(labels, {1: 1, 2: 1, 3: 1})
    assert merged.class_ids() == [1, 1, 1, 1]
    assert [(r.x_center, r.width) for r in merged.records] == [(0.5, 0.1)] * 4


def test_identity_rename():
    labels = LabelFile([LabelRecord(0, 0.3, 0.3, 0.2, 0.2), LabelRecord(4, 0.6, 0.6, 0.2, 0.2)])
    assert rename_classes(labels, {0: 0, 4: 4}).records == labels.records


def test_rename_unmapped_class():
    labels = LabelFile([LabelRecord(7, 0.5, 0.5, 0.1, 0.1)])
    with pytest.raises(UnmappedClassError) as excinfo:
        rename_classes(labels, {1: 0})
    assert excinfo.value.class_id == 7


def test_rename_dataset_checks_before_writing(tmp_path):
    write_label_file(tmp_path / "a.txt", LabelFile([LabelRecord(1, 0.5, 0.5, 0.1, 0.1)]))
    write_label_file(tmp_path / "b.txt", LabelFile([LabelRecord(5, 0.5, 0.5, 0.1, 0.1)]))
    before = (tmp_path / "a.txt").read_bytes()
    with pytest.raises(UnmappedClassError):
        rename_dataset(tmp_path, {1: 0})
    assert (tmp_path / "a.txt").read_bytes() == before

    assert rename_dataset(tmp_path, {1: 0, 5: 0}, tmp_path / "out") == 2
    assert read_label_file(tmp_path / "out" / "b.txt").class_ids() == [0]
    assert read_label_file(tmp_path / "b.txt").class_ids() == [5]


# Integrity

def _dataset(tmp_path, write_png, stems):
    for stem in stems:
        write_png(tmp_path / f"{stem}.png", np.zeros((4, 4, 3), dtype=np.uint8))
        write_label_file(tmp_path / f"{stem}.txt", LabelFile([LabelRecord(0, 0.5, 0.5, 0.5, 0.5)]))


def test_clean_dataset(tmp_path, write_png):
    _dataset(tmp_path, write_png, ["a", "b", "c"])
    report = check_integrity(tmp_path)
    assert report.clean
    assert report.lines() == []


def test_missing_label_and_image(tmp_path, write_png):
    _dataset(tmp_path, write_png, ["b"])
    write_png(tmp_path / "a.png", np.zeros((4, 4, 3), dtype=np.uint8))
    write_label_file(tmp_path / "z.txt", LabelFile())
    report = check_integrity(tmp_path)
    assert report.missing_labels == ["a"]
    assert report.missing_images == ["z"]
    assert not report.clean


def test_malformed_label_is_reported_with_line(tmp_path, write_png):
    _dataset(tmp_path, write_png, ["a"])
    (tmp_path / "a.txt").write_text("0 0.5 0.5 0.5 0.5\n0 0.5 0.5 0.5\n")
    report = check_integrity(tmp_path)
    assert report.malformed == [("a", 2, "expected 5 fields, got 4")]
    assert report.lines() == ["malformed: a line 2: expected 5 fields, got 4"]


def test_label_file_that_is_not_utf8(tmp_path, write_png):
    (tmp_path / "a.txt").write_bytes(b"\xff\xfe 0.5 0.5 0.1 0.1\n")
    with pytest.raises(MalformedLineError) as excinfo:
        read_label_file(tmp_path / "a.txt")
    assert excinfo.value.line_no == 1
    assert "a.txt" in str(excinfo.value)

    write_png(tmp_path / "a.png", np.zeros((4, 4, 3), dtype=np.uint8))
    report = check_integrity(tmp_path)
    assert report.malformed == [("a", 1, "not UTF-8 text (byte 0xff)")]


def test_renames_compose():
    labels = LabelFile([LabelRecord(c, 0.5, 0.5, 0.1, 0.1) for c in (0, 1, 2, 3)])
    first = {0: 1, 1: 1, 2: 0, 3: 2}
    second = {0: 5, 1: 6, 2: 7}
    combined = {old: second[new] for old, new in first.items()}
    assert rename_classes(rename_classes(labels, first), second).records == \
        rename_classes(labels, combined).records
    merged = rename_classes(labels, {0: 0, 1: 0, 2: 0, 3: 0})
    assert rename_classes(merged, {0: 0}).records == merged.records
