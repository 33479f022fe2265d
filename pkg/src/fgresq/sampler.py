"""Scene-homogeneous batch construction.

The ranking objectives compare images within one source dataset, so a
batch must never mix scenes. The sampling unit is the labeled pair:
each batch carries up to batch_size pairs from a single scene, the
deduplicated images those pairs touch, their normalized MOS, and the
pair index/target triples the ranking loss consumes.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .datamodel import DatasetManifest
from .errors import EmptyDatasetError
from .losses import preference_target


@dataclass
class SceneBatch:
    scene_id: str
    image_ids: list[str]
    mos: list[float]
    # (index_a, index_b, ranking target) into image_ids
    pairs: list[tuple[int, int, float]]


def scene_aware_sampler(
    manifest: DatasetManifest,
    batch_size: int,
    seed: int,
    pair_ids: set[str] | None = None,
) -> list[SceneBatch]:
    """One epoch of single-scene batches, deterministic under seed.

    Uses labeled fine-grained pairs (optionally restricted to
    `pair_ids`, e.g. a train split). Within each scene the pair order
    is a seeded shuffle; scenes are interleaved round-robin in sorted
    order, so every pair appears exactly once per epoch and the last
    batch of a scene may run short.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be ≥ 1, got {batch_size}")
    idx = manifest._image_index()
    usable = [
        p
        for p in manifest.fine_grained_pairs()
        if p.preference != "unlabeled"
        and (pair_ids is None or p.pair_id in pair_ids)
    ]
    if not usable:
        raise EmptyDatasetError("no labeled fine_grained pairs to sample")

    by_scene: dict[str, list] = {}
    for p in usable:
        by_scene.setdefault(idx[p.image_a].scene_id, []).append(p)

    rng = random.Random(seed)
    chunks_per_scene: dict[str, list[list]] = {}
    for scene_id in sorted(by_scene):
        pairs = sorted(by_scene[scene_id], key=lambda p: p.pair_id)
        rng.shuffle(pairs)
        chunks_per_scene[scene_id] = [
            pairs[i : i + batch_size] for i in range(0, len(pairs), batch_size)
        ]

    batches: list[SceneBatch] = []
    round_no = 0
    while True:
        emitted = False
        for scene_id in sorted(chunks_per_scene):
            chunks = chunks_per_scene[scene_id]
            if round_no < len(chunks):
                batches.append(_build_batch(scene_id, chunks[round_no], idx))
                emitted = True
        if not emitted:
            break
        round_no += 1
    return batches


def _build_batch(scene_id: str, pairs, image_index) -> SceneBatch:
    image_ids: list[str] = []
    positions: dict[str, int] = {}
    for p in pairs:
        for member in (p.image_a, p.image_b):
            if member not in positions:
                positions[member] = len(image_ids)
                image_ids.append(member)
    triples = [
        (positions[p.image_a], positions[p.image_b], preference_target(p.preference))
        for p in pairs
    ]
    mos = [image_index[i].mos_norm for i in image_ids]
    return SceneBatch(scene_id=scene_id, image_ids=image_ids, mos=mos, pairs=triples)
