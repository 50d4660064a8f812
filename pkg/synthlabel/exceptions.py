"""
synthlabel Exception Classes

Custom exceptions for the failure modes of sprite extraction, scene
composition, label handling and evaluation. Every exception carries the
exit status the command line interface reports for it.
"""

from typing import List, Optional


class SynthLabelError(Exception):
    """
    Base exception for all synthlabel errors

    Attributes:
        message (str): Error message
        path (str): File or directory the error relates to (if available)
        exit_code (int): Process exit status used by the CLI
    """
    exit_code = 1

    def __init__(self, message, path=None):
        super().__init__(message)
        self.message = message
        self.path = path

    def __str__(self):
        if self.path is not None:
            return f"{self.path}: {self.message}"
        return self.message


class DatasetIOError(SynthLabelError):
    """
    Raised when a file or directory cannot be read or written

    Wraps the underlying OSError so callers only have to catch
    SynthLabelError.
    """
    pass


class AreaOutOfBoundsError(SynthLabelError):
    """
    Raised when a keying area does not fit inside the frame

    The area rectangle must lie completely within the frame dimensions.
    """
    pass


class EmptyContentError(SynthLabelError):
    """
    Raised when a raster has no pixel with alpha > 0

    Occurs when cropping a fully transparent raster or when building a
    sprite from one.
    """
    pass


class EmptyPoolError(SynthLabelError):
    """
    Raised when a labeled sprite pool that may place objects holds no sprites
    """
    pass


class NoBackgroundsError(SynthLabelError):
    """
    Raised when scene composition is started without any background image
    """
    pass


class DuplicateStemError(SynthLabelError):
    """
    Raised when two images in one dataset share a file stem

    Labels are matched to images by stem, so stems must be unique.
    """
    pass


class LabelFormatError(SynthLabelError):
    """
    Base class for errors in label or prediction text

    Attributes:
        line_no (int): 1-based line number of the offending line
        detail (str): The message without the line prefix
    """
    def __init__(self, message, line_no, path=None):
        super().__init__(f"line {line_no}: {message}", path)
        self.line_no = line_no
        self.detail = message


class MalformedLineError(LabelFormatError):
    """
    Raised when a label line has the wrong number of fields or a
    non-numeric field
    """
    pass


class OutOfRangeError(LabelFormatError):
    """
    Raised when a label line parses but violates the record invariants

    This covers class ids below zero, sizes outside (0, 1], and boxes
    reaching outside the unit square.
    """
    pass


class UnknownClassError(SynthLabelError):
    """
    Raised when an annotation names a class missing from the class list

    Attributes:
        name (str): The unknown class name
    """
    def __init__(self, name, path=None):
        super().__init__(f"unknown class '{name}'", path)
        self.name = name


class UnmappedClassError(SynthLabelError):
    """
    Raised when a rename mapping has no entry for a class id present in a file

    Attributes:
        class_id (int): The class id without a mapping
    """
    def __init__(self, class_id, path=None):
        super().__init__(f"class {class_id} has no mapping", path)
        self.class_id = class_id


class EmptyInputError(SynthLabelError):
    """
    Raised when an evaluation receives no frames or images at all
    """
    pass


class ConfigError(SynthLabelError):
    """
    Raised when a configuration document fails validation

    All violations are collected before raising, so a single run reports
    every problem in the document.

    Attributes:
        errors (list): One message per violation, prefixed with its field path
    """
    exit_code = 3

    def __init__(self, errors: List[str], path: Optional[str] = None):
        self.errors = list(errors)
        summary = f"{len(self.errors)} configuration error(s):\n  " + "\n  ".join(self.errors)
        super().__init__(summary, path)


class MalformedAnnotationError(SynthLabelError):
    """
    Raised when a VOC-style XML annotation is missing fields or holds
    non-numeric or inconsistent coordinates
    """
    pass
