"""Synthetic images and toy datasets for desk-scale experiments.

Each task has a visually distinct degradation with a scalar severity
in [0, 1]; quality (and therefore MOS) decreases with severity. The
generated manifests carry ground-truth preference labels derived from
the severity ordering, which makes them usable as overfit-sanity and
filtration fixtures without human annotation.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import ndimage

from .datamodel import (
    DatasetManifest,
    ImageRecord,
    PairRecord,
    SceneDescriptor,
    TASK_ORDER,
)
from .filtration import generate_pairs


def base_pattern(rng: np.random.Generator, size: int = 64) -> np.ndarray:
    """Smooth random RGB content in roughly [40, 215] — the clean image."""
    channels = []
    for _ in range(3):
        noise = rng.standard_normal((size, size))
        smooth = ndimage.gaussian_filter(noise, sigma=size / 8.0, mode="reflect")
        lo, hi = smooth.min(), smooth.max()
        span = (hi - lo) or 1.0
        channels.append(40.0 + 175.0 * (smooth - lo) / span)
    return np.stack(channels, axis=-1)


def degrade(
    clean: np.ndarray, task: str, severity: float, rng: np.random.Generator
) -> np.ndarray:
    """Apply `task`'s degradation at `severity` ∈ [0,1]; returns uint8."""
    img = clean.astype(np.float64)
    size = img.shape[0]
    if task == "deblurring":
        img = ndimage.gaussian_filter(img, sigma=(3.0 * severity, 3.0 * severity, 0))
    elif task == "denoising":
        img = img + rng.normal(0.0, 60.0 * severity, img.shape)
    elif task == "deraining":
        streaks = np.zeros((size, size))
        n_streaks = int(4 + 40 * severity)
        for _ in range(n_streaks):
            x0 = int(rng.integers(0, size))
            y0 = int(rng.integers(0, size))
            length = int(rng.integers(size // 8, size // 3))
            for t in range(length):
                y, x = y0 + t, x0 + t // 2
                if 0 <= y < size and 0 <= x < size:
                    streaks[y, x] = 1.0
        img = img + (90.0 * severity) * streaks[:, :, None]
    elif task == "dehazing":
        img = img * (1.0 - 0.8 * severity) + 235.0 * 0.8 * severity
    elif task == "super_resolution":
        factor = max(1, int(1 + 6 * severity))
        small = img[::factor, ::factor]
        img = np.repeat(np.repeat(small, factor, axis=0), factor, axis=1)
        img = img[:size, :size]
        if img.shape[0] < size or img.shape[1] < size:
            img = np.pad(
                img,
                ((0, size - img.shape[0]), (0, size - img.shape[1]), (0, 0)),
                mode="edge",
            )
    elif task == "mixture":
        img = ndimage.gaussian_filter(img, sigma=(1.5 * severity, 1.5 * severity, 0))
        img = img + rng.normal(0.0, 30.0 * severity, img.shape)
    else:
        raise ValueError(f"unknown task {task!r}")
    return np.clip(img, 0, 255).astype(np.uint8)


@dataclass
class ToyDataset:
    manifest: DatasetManifest
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    def loader(self) -> Callable[[str], np.ndarray]:
        return self.arrays.__getitem__

    def write_images(self, root):
        from PIL import Image

        base = Path(root)
        base.mkdir(parents=True, exist_ok=True)
        for im in self.manifest.images:
            path = base / im.path
            path.parent.mkdir(parents=True, exist_ok=True)
            Image.fromarray(self.arrays[im.image_id]).save(path)


def build_toy_dataset(
    tasks: tuple[str, ...] = ("deblurring", "denoising", "dehazing"),
    contents_per_scene: tuple[int, ...] = (7, 7, 6),
    images_per_content: int = 5,
    size: int = 64,
    seed: int = 0,
    label_pairs: bool = True,
) -> ToyDataset:
    """One scene per task; every content holds images at spread severities.

    MOS is 100·(1−severity) in raw units. When label_pairs is set, all
    candidate pairs are marked fine_grained and labeled from the MOS
    order (severities within a content are distinct, so no ties).
    """
    rng = np.random.default_rng(seed)
    images: list[ImageRecord] = []
    arrays: dict[str, np.ndarray] = {}
    scenes = []
    for t_idx, task in enumerate(tasks):
        scene_id = f"scene_{task}"
        n_contents = contents_per_scene[t_idx % len(contents_per_scene)]
        for c in range(n_contents):
            content_id = f"{task}_c{c:03d}"
            clean = base_pattern(rng, size)
            # distinct severities, jittered so contents differ
            levels = np.linspace(0.05, 0.9, images_per_content)
            levels = np.clip(
                levels + rng.uniform(-0.04, 0.04, images_per_content), 0.0, 0.95
            )
            for k, severity in enumerate(levels):
                image_id = f"{content_id}_v{k}"
                arrays[image_id] = degrade(clean, task, float(severity), rng)
                images.append(
                    ImageRecord(
                        image_id=image_id,
                        scene_id=scene_id,
                        content_id=content_id,
                        task=task,
                        mos_raw=100.0 * (1.0 - float(severity)),
                        mos_norm=0.0,  # filled by normalization below
                        path=f"{scene_id}/{image_id}.png",
                    )
                )
        scenes.append(
            SceneDescriptor(
                scene_id=scene_id,
                tau_d=0.1,
                sample_count=n_contents * images_per_content,
            )
        )

    manifest = DatasetManifest(images=images, pairs=[], scenes=scenes)
    from .datamodel import normalize_manifest_mos

    manifest = normalize_manifest_mos(manifest)
    pairs = generate_pairs(manifest)
    if label_pairs:
        idx = manifest._image_index()
        labeled = []
        for p in pairs:
            mos_a = idx[p.image_a].mos_norm
            mos_b = idx[p.image_b].mos_norm
            if mos_a == mos_b:
                preference = "equal"
            else:
                preference = "A" if mos_a > mos_b else "B"
            labeled.append(
                PairRecord(
                    pair_id=p.pair_id,
                    image_a=p.image_a,
                    image_b=p.image_b,
                    status="fine_grained",
                    preference=preference,
                )
            )
        pairs = labeled
    manifest = DatasetManifest(
        images=manifest.images, pairs=pairs, scenes=manifest.scenes
    )
    manifest.validate()
    return ToyDataset(manifest=manifest, arrays=arrays)


def degradation_classification_set(
    per_task: int,
    size: int = 64,
    seed: int = 0,
    tasks: tuple[str, ...] = TASK_ORDER,
) -> tuple[np.ndarray, np.ndarray]:
    """(images, task_indices) with `per_task` samples of each task.

    Task indices follow the canonical task ordering, matching the text
    anchor rows. Severities are drawn from [0.4, 0.9] so the signature
    of each degradation is clearly present.
    """
    rng = np.random.default_rng(seed)
    images, labels = [], []
    for idx, task in enumerate(tasks):
        for _ in range(per_task):
            clean = base_pattern(rng, size)
            severity = float(rng.uniform(0.4, 0.9))
            images.append(degrade(clean, task, severity, rng))
            labels.append(idx)
    order = random.Random(seed).sample(range(len(images)), len(images))
    images = [images[i] for i in order]
    labels = [labels[i] for i in order]
    return np.stack(images), np.asarray(labels)


def calibration_sample(
    n: int, size: int = 64, seed: int = 0
) -> list[np.ndarray]:
    """n mixed-degradation images for threshold calibration."""
    rng = np.random.default_rng(seed)
    out = []
    tasks = list(TASK_ORDER)
    for i in range(n):
        clean = base_pattern(rng, size)
        task = tasks[i % len(tasks)]
        out.append(degrade(clean, task, float(rng.uniform(0.0, 0.9)), rng))
    return out
