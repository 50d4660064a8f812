"""
Shared fixtures

Every image a test needs is synthesized here into tmp_path; no binary
fixtures are checked in.
"""

from pathlib import Path

import numpy as np
import pytest
import yaml
from PIL import Image

from synthlabel.sprites import Sprite

GREEN = (0, 255, 0)


def _write_png(path, pixels):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(pixels, dtype=np.uint8)).save(path)
    return path


@pytest.fixture
def write_png():
    """Write a uint8 array as a PNG file and return its path"""
    return _write_png


@pytest.fixture
def make_sprite():
    """Build a fully opaque single-color sprite"""
    def make(width, height, color=(255, 0, 0), class_id=0):
        pixels = np.zeros((height, width, 4), dtype=np.uint8)
        pixels[...] = (*color, 255)
        return Sprite.from_raster(pixels, class_id)
    return make


@pytest.fixture
def green_frame():
    """A green-screen frame with a solid block of color at (x, y)"""
    def make(width=12, height=10, block=(3, 2, 4, 4), color=(200, 30, 40)):
        frame = np.zeros((height, width, 3), dtype=np.uint8)
        frame[...] = GREEN
        x, y, w, h = block
        frame[y:y + h, x:x + w] = color
        return frame
    return make


@pytest.fixture
def scene_workspace(tmp_path, write_png):
    """
    Backgrounds, sprite pools and a config file for small compose runs

    Returns:
        (config path, workspace directory)
    """
    for i, shade in enumerate((40, 90)):
        write_png(tmp_path / "backgrounds" / f"bg{i}.png",
                  np.full((48, 64, 3), shade, dtype=np.uint8))
    for name, color in (("tower", (255, 0, 0)), ("minion", (0, 0, 255)), ("cursor", (255, 255, 0))):
        sprite = np.zeros((6, 6, 4), dtype=np.uint8)
        sprite[...] = (*color, 255)
        write_png(tmp_path / "sprites" / name / "a.png", sprite)
    ui = np.zeros((8, 40, 4), dtype=np.uint8)
    ui[...] = (10, 200, 10, 255)
    write_png(tmp_path / "ui" / "bar.png", ui)

    document = {
        "paths": {"backgrounds": "backgrounds", "output": "dataset", "ui": "ui"},
        "scene": {
            "dataset_size": 3,
            "seed": 11,
            "output_size": [64, 48],
            "class_pools": [
                {"class_id": 0, "sprite_dir": "sprites/tower", "min_count": 1, "max_count": 1},
                {"class_id": 1, "sprite_dir": "sprites/minion", "min_count": 1, "max_count": 4,
                 "grouped": True, "max_scale": 0.2, "max_rotation": 30.0},
                {"class_id": 9, "sprite_dir": "sprites/cursor", "max_count": 1, "labeled": False},
            ],
            "bias_strength": 5.0,
            "overlay_chance": 0.5,
            "fog_of_war_chance": 0.3,
            "noise": [4, 4, 4],
            "blur_strength": 0.5,
        },
        "evaluation": {"class_groups": {"everything": [0, 1]}},
    }
    config_path = tmp_path / "scene.yaml"
    config_path.write_text(yaml.safe_dump(document), encoding="utf-8")
    return config_path, tmp_path
