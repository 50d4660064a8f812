"""
synthlabel Command Line Interface

One entry point for every stage of the pipeline: sprite extraction, outline
editing, scene composition, dataset maintenance and evaluation. Stages that
share parameters read them from a YAML document passed with --config.
"""

import functools
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import click

from .composer import check_pools, draw_labels, generate_dataset, load_backgrounds, load_pools
from .config import RunConfig, load_config
from .datasets import DatasetIndex, dataset_stats, sample_frames, split_train_test, write_split
from .evaluator import (evaluate_dataset, format_report, read_prediction_sequence, report_to_dict,
                        track_report_to_dict, tracking_report)
from .exceptions import ConfigError, SynthLabelError
from .labels import (CLASS_LIST_NAME, check_integrity, convert_voc_dir, read_class_list,
                     read_label_file, rename_dataset, write_class_list)
from .raster import Rect, load_rgb, save_image
from .sprites import DEFAULT_NAME_PATTERN, OUTLINE_MODES, KeyParams, extract_sprites, load_sprite_dir, \
    process_outlines

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(levelname)s %(name)s: %(message)s"

EXISTING_DIR = click.Path(exists=True, file_okay=False, path_type=Path)
EXISTING_FILE = click.Path(exists=True, dir_okay=False, path_type=Path)
OUTPUT_PATH = click.Path(path_type=Path)


def _handle_errors(command):
    """Print domain errors the same way everywhere and exit with their status"""
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        ctx = click.get_current_context()
        try:
            return command(*args, **kwargs)
        except SynthLabelError as e:
            click.echo(f"Error: {e}", err=True)
            ctx.exit(e.exit_code)
        except ValueError as e:
            click.echo(f"Error: {e}", err=True)
            ctx.exit(1)
    return wrapper


def _config(path: Optional[Path]) -> RunConfig:
    return load_config(path) if path is not None else RunConfig()


def _jobs(jobs: Optional[int]) -> int:
    return jobs if jobs is not None else (os.cpu_count() or 1)


def _class_map(path: Optional[Path], config: RunConfig):
    path = path or config.paths.classes
    return read_class_list(path) if path is not None else None


def _parse_mapping(ctx, param, values):
    mapping = {}
    for value in values:
        old, sep, new = value.partition(":")
        try:
            if not sep:
                raise ValueError
            old_id, new_id = int(old), int(new)
        except ValueError:
            raise click.BadParameter(f"expected OLD:NEW class ids, got {value!r}")
        if old_id in mapping:
            raise click.BadParameter(f"class {old_id} is mapped twice")
        mapping[old_id] = new_id
    return mapping


@click.group()
@click.option('-v', '--verbose', count=True, help='More log output (-v info, -vv debug)')
@click.option('-q', '--quiet', is_flag=True, help='Hide progress bars')
@click.version_option(package_name='synthlabel')
@click.pass_context
def main(ctx, verbose, quiet):
    """
    synthlabel

    Generate labeled object detection datasets from sprites and
    backgrounds, and evaluate detector output against them.

    Typical run:
        synthlabel extract frames/ sprites/tower --class-id 0 --color 0 255 0
        synthlabel compose --config scene.yaml --count 1000
        synthlabel eval-map dataset/ predictions/ --config scene.yaml
    """
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbose, logging.DEBUG)
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)
    ctx.ensure_object(dict)
    ctx.obj['progress'] = not quiet and sys.stderr.isatty()


@main.command()
@click.argument('input_dir', type=EXISTING_DIR)
@click.argument('output_dir', type=OUTPUT_PATH)
@click.option('--class-id', type=click.IntRange(min=0), required=True, help='Class of the extracted sprites')
@click.option('--config', 'config_path', type=EXISTING_FILE, help='Read keying defaults from a config file')
@click.option('--color', type=click.IntRange(0, 255), nargs=3, help='Background color R G B')
@click.option('--tolerance', type=click.IntRange(0, 255), nargs=3, help='Per-channel tolerance R G B')
@click.option('--area', type=click.IntRange(min=0), nargs=4, help='Content area X Y WIDTH HEIGHT')
@click.option('--remove-outline', type=click.IntRange(min=0), help='Outline layers to erode')
@click.option('--name-pattern', default=DEFAULT_NAME_PATTERN, show_default=True,
              help='Output name, formatted with {class_id} and {stem}')
@click.option('--jobs', type=click.IntRange(min=1), help='Worker threads [default: CPU count]')
@click.pass_context
@_handle_errors
def extract(ctx, input_dir, output_dir, class_id, config_path, color, tolerance, area,
            remove_outline, name_pattern, jobs):
    """Cut sprites out of chroma-key frames"""
    keying = _config(config_path).keying
    params = KeyParams(
        background_color=tuple(color) if color else keying.background_color,
        tolerance=tuple(tolerance) if tolerance else keying.tolerance,
        area=Rect(*area) if area else keying.area,
        remove_outline=remove_outline if remove_outline is not None else keying.remove_outline)
    count = extract_sprites(input_dir, params, class_id, output_dir, name_pattern,
                            _jobs(jobs), ctx.obj['progress'])
    click.echo(f"Extracted {count} sprite(s) into {output_dir}")


@main.command()
@click.argument('input_dir', type=EXISTING_DIR)
@click.argument('output_dir', type=OUTPUT_PATH)
@click.option('--mode', type=click.Choice(OUTLINE_MODES), required=True, help='What to do with the outline')
@click.option('--layers', type=click.IntRange(min=1), default=1, show_default=True, help='Pixel layers')
@click.option('--color', type=click.IntRange(0, 255), nargs=4, help='Outline color R G B A for add/glow')
@_handle_errors
def outline(input_dir, output_dir, mode, layers, color):
    """Remove, add or glow sprite outlines"""
    count = process_outlines(input_dir, output_dir, mode, layers, tuple(color) if color else None)
    click.echo(f"Wrote {count} sprite(s) into {output_dir}")


@main.command()
@click.option('--config', 'config_path', type=EXISTING_FILE, required=True, help='Scene config file')
@click.option('--seed', type=click.IntRange(min=0), help='Override scene.seed')
@click.option('--count', type=click.IntRange(min=1), help='Override scene.dataset_size')
@click.option('--output', type=OUTPUT_PATH, help='Override paths.output')
@click.option('--jobs', type=click.IntRange(min=1), help='Worker threads [default: CPU count]')
@click.option('--dry-run', is_flag=True, help='Validate config and sprite pools without writing')
@click.pass_context
@_handle_errors
def compose(ctx, config_path, seed, count, output, jobs, dry_run):
    """Generate a labeled synthetic dataset"""
    config = _config(config_path).with_overrides(seed=seed, count=count)
    output = output or config.paths.output
    missing = []
    if config.paths.backgrounds is None:
        missing.append("paths.backgrounds: is required for compose")
    if output is None and not dry_run:
        missing.append("paths.output: is required for compose (or pass --output)")
    if missing:
        raise ConfigError(missing, str(config_path))

    scene = config.scene
    pools = load_pools(scene)
    check_pools(pools)
    backgrounds = load_backgrounds(config.paths.backgrounds, scene.output_size)
    ui_sprites = load_sprite_dir(config.paths.ui, 0) if config.paths.ui else []
    icons = load_sprite_dir(config.paths.icons, 0) if config.paths.icons else []

    if dry_run:
        sprites = sum(len(p.sprites) for p in pools)
        click.echo(f"Config OK: {len(pools)} pool(s), {sprites} sprite(s), {len(backgrounds)} "
                   f"background(s); would write {scene.dataset_size} image(s)")
        return

    stems = generate_dataset(scene, pools, backgrounds, output, ui_sprites, icons,
                             _jobs(jobs), ctx.obj['progress'])
    click.echo(f"Wrote {len(stems)} image/label pair(s) into {output} (seed {scene.seed})")


@main.command('sample-frames')
@click.argument('input_dir', type=EXISTING_DIR)
@click.argument('output_dir', type=OUTPUT_PATH)
@click.option('--stride', type=click.IntRange(min=1), required=True, help='Keep every N-th frame')
@click.option('--resize', type=click.IntRange(min=1), nargs=2, help='Output size WIDTH HEIGHT')
@click.option('--prefix', default='output_', show_default=True, help='Output file name prefix')
@click.pass_context
@_handle_errors
def sample_frames_command(ctx, input_dir, output_dir, stride, resize, prefix):
    """Export every N-th frame of an image sequence"""
    count = sample_frames(input_dir, stride, output_dir, tuple(resize) if resize else None,
                          prefix, ctx.obj['progress'])
    click.echo(f"Exported {count} frame(s) into {output_dir}")


@main.command()
@click.argument('dataset_dir', type=EXISTING_DIR)
@click.option('--test-fraction', type=click.FloatRange(0, 1), required=True, help='Share of pairs in test.txt')
@click.option('--seed', type=click.IntRange(min=0), default=0, show_default=True, help='Shuffle seed')
@click.option('--output', type=OUTPUT_PATH, help='Manifest directory [default: DATASET_DIR]')
@_handle_errors
def split(dataset_dir, test_fraction, seed, output):
    """Write train.txt and test.txt manifests"""
    train, test = split_train_test(DatasetIndex.scan(dataset_dir), test_fraction, seed)
    write_split(train, test, output or dataset_dir)
    click.echo(f"Split {len(train) + len(test)} pair(s): {len(train)} train, {len(test)} test")


@main.command()
@click.argument('label_dir', type=EXISTING_DIR)
@click.option('--map', 'mapping', multiple=True, required=True, callback=_parse_mapping,
              help='Class renaming OLD:NEW, repeatable')
@click.option('--output', type=OUTPUT_PATH, help='Write renamed files here instead of in place')
@_handle_errors
def rename(label_dir, mapping, output):
    """Renumber the classes of every label file"""
    count = rename_dataset(label_dir, mapping, output)
    click.echo(f"Renamed classes in {count} label file(s)")


@main.command()
@click.argument('dataset_dir', type=EXISTING_DIR)
@click.pass_context
@_handle_errors
def check(ctx, dataset_dir):
    """Check that images and label files pair up and parse"""
    report = check_integrity(dataset_dir)
    for line in report.lines():
        click.echo(line)
    if report.clean:
        click.echo(f"{dataset_dir}: clean")
        return
    click.echo(f"{dataset_dir}: {len(report.lines())} problem(s)")
    ctx.exit(1)


@main.command()
@click.argument('xml_dir', type=EXISTING_DIR)
@click.argument('output_dir', type=OUTPUT_PATH)
@click.option('--classes', 'classes_path', type=EXISTING_FILE, help='Class list, one name per line')
@click.option('--config', 'config_path', type=EXISTING_FILE, help='Take the class list from paths.classes')
@_handle_errors
def convert(xml_dir, output_dir, classes_path, config_path):
    """Convert Pascal VOC annotations into label files"""
    classes = _class_map(classes_path, _config(config_path))
    if classes is None:
        raise ConfigError(["paths.classes: a class list is required (or pass --classes)"])
    count = convert_voc_dir(xml_dir, classes, output_dir)
    write_class_list(Path(output_dir) / CLASS_LIST_NAME, classes)
    click.echo(f"Converted {count} annotation(s) into {output_dir}")


@main.command('eval-map')
@click.argument('truth_dir', type=EXISTING_DIR)
@click.argument('pred_dir', type=EXISTING_DIR)
@click.option('--config', 'config_path', type=EXISTING_FILE, help='Read evaluation settings from a config file')
@click.option('--iou', type=click.FloatRange(0, 1, min_open=True), help='IoU threshold [default: 0.5]')
@click.option('--classes', 'classes_path', type=EXISTING_FILE, help='Class list used for row names')
@click.option('--image-size', type=click.IntRange(min=1), nargs=2,
              help='Fixed WIDTH HEIGHT instead of reading each image')
@click.option('--json', 'json_path', type=OUTPUT_PATH, help='Also write the report as JSON')
@_handle_errors
def eval_map(truth_dir, pred_dir, config_path, iou, classes_path, image_size, json_path):
    """Per-class detection rate of predictions against labels"""
    config = _config(config_path)
    threshold = iou if iou is not None else config.evaluation.iou_threshold
    report = evaluate_dataset(truth_dir, pred_dir, threshold, tuple(image_size) if image_size else None)
    groups = config.evaluation.class_groups
    click.echo(format_report(report, _class_map(classes_path, config), groups))
    if json_path:
        json_path.write_text(json.dumps(report_to_dict(report, groups), indent=2), encoding="utf-8")
    click.echo(f"Evaluated {report.images} image(s) at IoU {threshold}")


@main.command('eval-track')
@click.argument('pred_dir', type=EXISTING_DIR)
@click.option('--target-class', type=click.IntRange(min=0), help='Class to track [default: evaluation.target_class]')
@click.option('--min-confidence', type=click.FloatRange(0, 1), help='Ignore detections below this confidence')
@click.option('--config', 'config_path', type=EXISTING_FILE, help='Read evaluation settings from a config file')
@click.option('--json', 'json_path', type=OUTPUT_PATH, help='Also write the report as JSON')
@_handle_errors
def eval_track(pred_dir, target_class, min_confidence, config_path, json_path):
    """Share of frames with one, several or no detections of a class"""
    config = _config(config_path)
    target = target_class if target_class is not None else config.evaluation.target_class
    if target is None:
        raise ConfigError(["evaluation.target_class: is required (or pass --target-class)"])
    floor = min_confidence if min_confidence is not None else config.evaluation.min_confidence
    report = tracking_report(read_prediction_sequence(pred_dir), target, floor)
    click.echo(f"frames:   {report.frames_total}")
    click.echo(f"single:   {report.pct_single:.2f}%")
    click.echo(f"multiple: {report.pct_multiple:.2f}%")
    click.echo(f"none:     {report.pct_none:.2f}%")
    if json_path:
        json_path.write_text(json.dumps(track_report_to_dict(report), indent=2), encoding="utf-8")


@main.command()
@click.argument('dataset_dir', type=EXISTING_DIR)
@click.option('--classes', 'classes_path', type=EXISTING_FILE, help='Class list used for row names')
@_handle_errors
def stats(dataset_dir, classes_path):
    """Object counts per class and per image"""
    result = dataset_stats(DatasetIndex.scan(dataset_dir))
    names = read_class_list(classes_path) if classes_path else None
    for line in result.lines(names):
        click.echo(line)


@main.command()
@click.argument('image', type=EXISTING_FILE)
@click.argument('output', type=OUTPUT_PATH)
@click.option('--labels', 'label_path', type=EXISTING_FILE,
              help='Label file [default: IMAGE with a .txt suffix]')
@click.option('--width', type=click.IntRange(min=1), default=2, show_default=True, help='Box line width')
@_handle_errors
def preview(image, output, label_path, width):
    """Draw the label boxes of an image for a visual check"""
    labels = read_label_file(label_path or image.with_suffix('.txt'))
    save_image(output, draw_labels(load_rgb(image), labels, width=width))
    click.echo(f"Drew {len(labels.records)} box(es) into {output}")


def run(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run the CLI and return its exit status instead of exiting

    Args:
        argv: Arguments without the program name (default: sys.argv[1:])

    Returns:
        0 on success, 1 on operational errors, 2 on usage errors, 3 on
        configuration errors
    """
    try:
        main.main(args=list(argv) if argv is not None else None, prog_name='synthlabel',
                  standalone_mode=True)
    except SystemExit as e:
        if e.code is None:
            return 0
        return e.code if isinstance(e.code, int) else 1
    return 0


if __name__ == '__main__':
    main()
