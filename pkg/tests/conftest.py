import numpy as np
import pytest

from fgresq.datamodel import (
    DatasetManifest,
    ImageRecord,
    PairRecord,
    SceneDescriptor,
)


def make_image(
    image_id: str,
    scene_id: str = "scene_a",
    content_id: str = "c0",
    task: str = "denoising",
    mos_raw: float = 50.0,
    mos_norm: float = 0.5,
) -> ImageRecord:
    return ImageRecord(
        image_id=image_id,
        scene_id=scene_id,
        content_id=content_id,
        task=task,
        mos_raw=mos_raw,
        mos_norm=mos_norm,
        path=f"{scene_id}/{image_id}.png",
    )


def make_manifest(images, pairs=None, scenes=None) -> DatasetManifest:
    if scenes is None:
        scene_ids = sorted({im.scene_id for im in images})
        scenes = [SceneDescriptor(scene_id=s, tau_d=0.1) for s in scene_ids]
    manifest = DatasetManifest(
        images=list(images), pairs=list(pairs or []), scenes=list(scenes)
    )
    manifest.validate()
    return manifest


def make_pair(a: str, b: str, status="candidate", preference="unlabeled", ssim=None):
    return PairRecord(
        pair_id=f"{a}__{b}",
        image_a=a,
        image_b=b,
        status=status,
        preference=preference,
        ssim_ab=ssim,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
