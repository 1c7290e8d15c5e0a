"""Synthetic training/eval data built from images with instance masks.

Each record pairs a composite (one instance region re-styled by a random
augmentation) with its untouched original, the edited region's mask, and a
second instance mask serving as the reference guide region.

Dataset layout on disk:

    <out_dir>/<id>/composite.png
    <out_dir>/<id>/gt.png
    <out_dir>/<id>/fg_mask.png
    <out_dir>/<id>/guide_mask.png
    <out_dir>/manifest.json

Annotations are a JSON list: [{"image": path, "masks": [path, ...]}, ...],
paths relative to the annotation file's directory (or absolute).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import imgio
from .augment import apply_augmentation, sample_augmentation

__all__ = [
    "CompositeSample",
    "UnusableImageError",
    "build_sample",
    "build_dataset",
    "load_annotations",
    "write_sample",
    "read_sample",
    "list_record_dirs",
]

logger = logging.getLogger(__name__)

MIN_INSTANCE_FRACTION = 0.005
MAX_INSTANCE_FRACTION = 0.60
MAX_PAIR_ATTEMPTS = 16


class UnusableImageError(ValueError):
    """No valid (foreground, guide) instance pair exists for the image."""


@dataclass
class CompositeSample:
    composite: np.ndarray
    ground_truth: np.ndarray
    fg_mask: np.ndarray
    guide_mask: np.ndarray
    meta: dict = field(default_factory=dict)


def _usable_indices(instance_masks: list[np.ndarray], n_pixels: int) -> list[int]:
    usable = []
    for i, m in enumerate(instance_masks):
        frac = float((np.asarray(m) > 0.5).sum()) / n_pixels
        if MIN_INSTANCE_FRACTION <= frac <= MAX_INSTANCE_FRACTION:
            usable.append(i)
    return usable


def build_sample(
    src_img: np.ndarray,
    instance_masks: list[np.ndarray],
    rng: np.random.Generator,
    source_id: str = "",
) -> CompositeSample:
    """Pick a foreground and a guide instance, corrupt the foreground.

    The guide mask is clipped disjoint from the foreground mask. The composite
    equals the source exactly outside the foreground mask.
    """
    src_img = np.asarray(src_img, dtype=np.float64)
    h, w = src_img.shape[:2]
    usable = _usable_indices(instance_masks, h * w)
    if len(usable) < 2:
        raise UnusableImageError("unusable image: fewer than two usable instance masks")

    binary = {i: (np.asarray(instance_masks[i]) > 0.5) for i in usable}
    for _ in range(MAX_PAIR_ATTEMPTS):
        fg_i, guide_i = rng.choice(usable, size=2, replace=False)
        fg = binary[int(fg_i)]
        guide = binary[int(guide_i)] & ~fg
        if guide.any():
            break
    else:
        raise UnusableImageError("unusable image: no disjoint mask pair found")

    fg_mask = fg.astype(np.float64)
    guide_mask = guide.astype(np.float64)
    descriptor = sample_augmentation(rng)
    augmented = apply_augmentation(src_img, fg_mask, descriptor)

    # hard selection keeps non-foreground pixels bit-identical to the source
    composite = src_img.copy()
    composite[fg] = augmented[fg]

    meta = {
        "source": source_id,
        "fg_instance": int(fg_i),
        "guide_instance": int(guide_i),
        "augmentation": descriptor,
    }
    return CompositeSample(
        composite=composite,
        ground_truth=src_img.copy(),
        fg_mask=fg_mask,
        guide_mask=guide_mask,
        meta=meta,
    )


def write_sample(sample: CompositeSample, record_dir: str | Path) -> None:
    record_dir = Path(record_dir)
    record_dir.mkdir(parents=True, exist_ok=True)
    imgio.write_image(record_dir / "composite.png", sample.composite)
    imgio.write_image(record_dir / "gt.png", sample.ground_truth)
    imgio.write_mask(record_dir / "fg_mask.png", sample.fg_mask)
    imgio.write_mask(record_dir / "guide_mask.png", sample.guide_mask)


def read_sample(record_dir: str | Path) -> CompositeSample:
    record_dir = Path(record_dir)
    return CompositeSample(
        composite=imgio.read_image(record_dir / "composite.png"),
        ground_truth=imgio.read_image(record_dir / "gt.png"),
        fg_mask=(imgio.read_mask(record_dir / "fg_mask.png") > 0.5).astype(np.float64),
        guide_mask=(imgio.read_mask(record_dir / "guide_mask.png") > 0.5).astype(np.float64),
        meta={"id": record_dir.name},
    )


def list_record_dirs(dataset_dir: str | Path) -> list[Path]:
    """Record directories in a dataset, sorted by id."""
    root = Path(dataset_dir)
    return sorted(
        (d for d in root.iterdir() if d.is_dir() and (d / "composite.png").exists()),
        key=lambda d: d.name,
    )


def load_annotations(ann_path: str | Path) -> list[dict]:
    """Read the annotation JSON and resolve paths against its directory."""
    ann_path = Path(ann_path)
    entries = json.loads(ann_path.read_text())
    base = ann_path.parent
    resolved = []
    for entry in entries:
        resolved.append(
            {
                "image": str((base / entry["image"])),
                "masks": [str(base / m) for m in entry["masks"]],
            }
        )
    return resolved


def build_dataset(
    src_dir: str | Path,
    annotations: str | Path,
    out_dir: str | Path,
    count: int,
    seed: int,
) -> dict:
    """Write `count` records and a manifest; deterministic given `seed`.

    Unreadable sources are skipped with a warning. Emits fewer than `count`
    records only if every source fails.
    """
    del src_dir  # paths come resolved from the annotation file
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = load_annotations(annotations)
    if not entries:
        raise ValueError("annotation file lists no images")

    records = []
    emitted = 0
    attempt = 0
    # one attempt per record slot; failures advance to the next source
    while emitted < count and attempt < count + len(entries) * 4:
        record_seed = _record_seed(seed, attempt)
        rng = np.random.default_rng(record_seed)
        entry = entries[attempt % len(entries)]
        attempt += 1
        try:
            src = imgio.read_image(entry["image"])
            masks = [imgio.read_mask(m) for m in entry["masks"]]
            sample = build_sample(src, masks, rng, source_id=entry["image"])
        except (OSError, UnusableImageError, ValueError) as exc:
            logger.warning("skipping source %s: %s", entry["image"], exc)
            continue
        record_id = f"{emitted:06d}"
        write_sample(sample, out_dir / record_id)
        records.append(
            {
                "id": record_id,
                "source": sample.meta["source"],
                "augmentation": sample.meta["augmentation"],
                "seed": record_seed,
            }
        )
        emitted += 1

    manifest = {"seed": seed, "count": emitted, "records": records}
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


def _record_seed(seed: int, index: int) -> int:
    mix = np.random.SeedSequence([seed, index])
    return int(mix.generate_state(1)[0])
