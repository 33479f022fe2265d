"""Canonical dataset representation and manifest I/O.

A manifest is a UTF-8 text file with one JSON object per line. Each line
carries a ``kind`` tag (``image``, ``pair`` or ``scene``); the remaining
fields mirror the record dataclasses below, so a manifest round-trips
through :func:`load_manifest` / :func:`save_manifest` unchanged up to
field ordering. The line-delimited layout keeps large pair sets
streamable.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Iterable, Sequence

from .errors import (
    EmptyDatasetError,
    EmptySceneError,
    IntegrityError,
    ManifestError,
)

TASKS = frozenset(
    ["deblurring", "denoising", "deraining", "dehazing", "super_resolution", "mixture"]
)
# canonical ordering for anything indexed by task (anchor rows, reports)
TASK_ORDER = tuple(sorted(TASKS))
PAIR_STATUSES = frozenset(
    ["candidate", "coarse_rejected", "unnoticeable_rejected", "fine_grained"]
)
PREFERENCES = frozenset(["A", "B", "equal", "unlabeled"])


@dataclass
class ImageRecord:
    """One restored image with its source-dataset (scene) metadata."""

    image_id: str
    scene_id: str
    content_id: str
    task: str
    mos_raw: float
    mos_norm: float
    path: str

    def validate(self):
        if self.task not in TASKS:
            raise ManifestError(f"image {self.image_id}: unknown task {self.task!r}")
        if not 0.0 <= self.mos_norm <= 1.0:
            raise ManifestError(
                f"image {self.image_id}: mos_norm {self.mos_norm} outside [0, 1]"
            )


@dataclass
class PairRecord:
    """Ordered image pair with filtration status and preference label."""

    pair_id: str
    image_a: str
    image_b: str
    status: str = "candidate"
    preference: str = "unlabeled"
    ssim_ab: float | None = None

    def validate(self):
        if self.image_a == self.image_b:
            raise ManifestError(f"pair {self.pair_id}: image_a equals image_b")
        if self.status not in PAIR_STATUSES:
            raise ManifestError(f"pair {self.pair_id}: unknown status {self.status!r}")
        if self.preference not in PREFERENCES:
            raise ManifestError(
                f"pair {self.pair_id}: unknown preference {self.preference!r}"
            )
        if self.preference != "unlabeled" and self.status != "fine_grained":
            raise ManifestError(
                f"pair {self.pair_id}: preference on a non-fine-grained pair"
            )
        if self.ssim_ab is not None and not -1.0 <= self.ssim_ab <= 1.0:
            raise ManifestError(f"pair {self.pair_id}: ssim_ab outside [-1, 1]")


@dataclass
class SceneDescriptor:
    """A source dataset: its coarse-filter threshold and sample count."""

    scene_id: str
    tau_d: float = 0.1
    sample_count: int = 0

    def validate(self):
        if self.tau_d <= 0:
            raise ManifestError(f"scene {self.scene_id}: tau_d must be > 0")
        if self.sample_count < 0:
            raise ManifestError(f"scene {self.scene_id}: negative sample_count")


@dataclass
class DatasetManifest:
    images: list[ImageRecord] = field(default_factory=list)
    pairs: list[PairRecord] = field(default_factory=list)
    scenes: list[SceneDescriptor] = field(default_factory=list)

    def image_by_id(self, image_id: str) -> ImageRecord:
        return self._image_index()[image_id]

    def _image_index(self) -> dict[str, ImageRecord]:
        if not hasattr(self, "_img_idx") or len(self._img_idx) != len(self.images):
            self._img_idx = {im.image_id: im for im in self.images}
        return self._img_idx

    def scene_ids(self) -> set[str]:
        return {s.scene_id for s in self.scenes}

    def fine_grained_pairs(self) -> list[PairRecord]:
        return [p for p in self.pairs if p.status == "fine_grained"]

    def validate(self):
        """Check per-record invariants plus referential integrity."""
        for im in self.images:
            im.validate()
        for p in self.pairs:
            p.validate()
        for s in self.scenes:
            s.validate()

        idx = self._image_index()
        if len(idx) != len(self.images):
            seen = set()
            for im in self.images:
                if im.image_id in seen:
                    raise IntegrityError(f"duplicate image_id {im.image_id!r}")
                seen.add(im.image_id)
        scene_ids = self.scene_ids()
        for im in self.images:
            if im.scene_id not in scene_ids:
                raise IntegrityError(
                    f"image {im.image_id} references unknown scene {im.scene_id!r}"
                )
        for p in self.pairs:
            for member in (p.image_a, p.image_b):
                if member not in idx:
                    raise IntegrityError(
                        f"pair {p.pair_id} references unknown image {member!r}"
                    )
            a, b = idx[p.image_a], idx[p.image_b]
            if a.content_id != b.content_id or a.task != b.task:
                raise IntegrityError(
                    f"pair {p.pair_id}: members differ in content_id or task"
                )
        # images sharing content must share scene and task
        by_content: dict[str, ImageRecord] = {}
        for im in self.images:
            first = by_content.setdefault(im.content_id, im)
            if first.scene_id != im.scene_id or first.task != im.task:
                raise IntegrityError(
                    f"content {im.content_id}: images {first.image_id} and "
                    f"{im.image_id} disagree on scene or task"
                )


@dataclass
class SplitSpec:
    """Train/test partition of fine-grained pair ids."""

    train_pair_ids: set[str]
    test_pair_ids: set[str]
    seed: int

    def to_json(self) -> str:
        payload = {
            "train_pair_ids": sorted(self.train_pair_ids),
            "test_pair_ids": sorted(self.test_pair_ids),
            "seed": self.seed,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SplitSpec":
        payload = json.loads(text)
        return cls(
            train_pair_ids=set(payload["train_pair_ids"]),
            test_pair_ids=set(payload["test_pair_ids"]),
            seed=int(payload["seed"]),
        )

    def save(self, path):
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "SplitSpec":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


_RECORD_TYPES = {
    "image": ImageRecord,
    "pair": PairRecord,
    "scene": SceneDescriptor,
}


def load_manifest(path) -> DatasetManifest:
    """Parse a line-delimited manifest and validate all invariants."""
    manifest = DatasetManifest()
    sink = {"image": manifest.images, "pair": manifest.pairs, "scene": manifest.scenes}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"invalid JSON ({exc.msg})", line_no, line) from exc
            if not isinstance(obj, dict) or "kind" not in obj:
                raise ManifestError("record without a 'kind' tag", line_no, line)
            kind = obj.pop("kind")
            cls = _RECORD_TYPES.get(kind)
            if cls is None:
                raise ManifestError(f"unknown record kind {kind!r}", line_no, line)
            try:
                record = cls(**obj)
            except TypeError as exc:
                raise ManifestError(str(exc), line_no, line) from exc
            sink[kind].append(record)
    manifest.validate()
    return manifest


def save_manifest(manifest: DatasetManifest, path):
    """Write a manifest in the line-delimited format read by load_manifest."""
    with open(path, "w", encoding="utf-8") as fh:
        for kind, records in (
            ("image", manifest.images),
            ("pair", manifest.pairs),
            ("scene", manifest.scenes),
        ):
            for record in records:
                obj = {"kind": kind}
                obj.update(asdict(record))
                if kind == "pair" and obj.get("ssim_ab") is None:
                    obj.pop("ssim_ab")
                fh.write(json.dumps(obj, sort_keys=False) + "\n")


def normalize_mos(scores: Sequence[float]) -> list[float]:
    """Min-max normalize one scene's raw MOS values into [0, 1].

    A scene whose scores are all equal carries no ranking information;
    every score maps to 0.5. Normalization is order preserving.
    """
    if len(scores) == 0:
        raise EmptySceneError("cannot normalize an empty scene")
    lo, hi = min(scores), max(scores)
    if math.isclose(lo, hi):
        return [0.5] * len(scores)
    span = hi - lo
    return [(s - lo) / span for s in scores]


def normalize_manifest_mos(manifest: DatasetManifest) -> DatasetManifest:
    """Return a new manifest with mos_norm recomputed per scene from mos_raw."""
    by_scene: dict[str, list[ImageRecord]] = {}
    for im in manifest.images:
        by_scene.setdefault(im.scene_id, []).append(im)
    new_images = {}
    for scene_id, records in by_scene.items():
        normed = normalize_mos([im.mos_raw for im in records])
        for im, norm in zip(records, normed):
            new_images[im.image_id] = ImageRecord(
                image_id=im.image_id,
                scene_id=im.scene_id,
                content_id=im.content_id,
                task=im.task,
                mos_raw=im.mos_raw,
                mos_norm=norm,
                path=im.path,
            )
    images = [new_images[im.image_id] for im in manifest.images]
    scenes = [
        SceneDescriptor(s.scene_id, s.tau_d, len(by_scene.get(s.scene_id, [])))
        for s in manifest.scenes
    ]
    return DatasetManifest(images=images, pairs=list(manifest.pairs), scenes=scenes)


def split_by_pairs(manifest: DatasetManifest, ratio: float, seed: int) -> SplitSpec:
    """Split fine-grained pairs into train/test at `ratio`, stratified by task.

    The train set size is exactly round(ratio * total); per-task train
    counts start from floor(ratio * n_task) and the remainder goes to the
    tasks with the largest fractional part, so each task stays within one
    pair of its exact share. Deterministic under a fixed seed.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    fine = manifest.fine_grained_pairs()
    if not fine:
        raise EmptyDatasetError("manifest has no fine_grained pairs to split")

    idx = manifest._image_index()
    by_task: dict[str, list[str]] = {}
    for p in fine:
        by_task.setdefault(idx[p.image_a].task, []).append(p.pair_id)

    total = len(fine)
    target_train = round(ratio * total)
    tasks = sorted(by_task)
    floors, fracs = {}, []
    for task in tasks:
        exact = ratio * len(by_task[task])
        floors[task] = int(math.floor(exact))
        fracs.append((-(exact - math.floor(exact)), task))
    remainder = target_train - sum(floors.values())
    fracs.sort()
    for _, task in fracs[:remainder]:
        floors[task] += 1

    rng = random.Random(seed)
    train: set[str] = set()
    test: set[str] = set()
    for task in tasks:
        ids = sorted(by_task[task])
        rng.shuffle(ids)
        k = floors[task]
        train.update(ids[:k])
        test.update(ids[k:])
    return SplitSpec(train_pair_ids=train, test_pair_ids=test, seed=seed)


def image_split_leakage(manifest: DatasetManifest, split: SplitSpec) -> dict:
    """Count images that appear in pairs on both sides of the split.

    Pair-level splitting permits this; the overlap is reported as a
    statistic rather than treated as an error.
    """
    pair_by_id = {p.pair_id: p for p in manifest.pairs}

    def members(ids):
        return {
            im
            for pid in ids
            for im in (pair_by_id[pid].image_a, pair_by_id[pid].image_b)
        }

    train_imgs = members(split.train_pair_ids)
    test_imgs = members(split.test_pair_ids)
    shared = train_imgs & test_imgs
    return {
        "train_images": len(train_imgs),
        "test_images": len(test_imgs),
        "shared_images": len(shared),
    }
