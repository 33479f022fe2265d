"""Optimization loop: two-stage training with scene-aware batches.

Stage one aligns the degradation encoder to the frozen text anchors
contrastively, then freezes it. Stage two trains everything else with
λ1·L_scene + λ2·L_rank under Adam and a cosine-annealed learning rate.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from .datamodel import DatasetManifest, SplitSpec
from .errors import EmptyDatasetError, TrainingDivergedError
from .losses import fidelity_loss_scene, ranking_loss, scene_loss, total_loss
from .model import FGResQ, ModelConfig, contrastive_alignment_loss, nearest_anchor
from .sampler import SceneBatch, scene_aware_sampler


@dataclass
class TrainConfig:
    lambda_1: float = 5.0
    lambda_2: float = 1.0
    epsilon: float = 1e-8
    max_lr: float = 5e-6
    batch_size: int = 64
    epochs: int = 6
    resize: int = 256
    crop: int = 224
    seed: int = 0
    # "equal" annotations train with target 0.5 when True, else dropped
    soft_equal_targets: bool = True

    def validate(self):
        if self.lambda_1 < 0 or self.lambda_2 < 0:
            raise ValueError("lambda_1 and lambda_2 must be ≥ 0")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if self.crop > self.resize:
            raise ValueError(f"crop {self.crop} exceeds resize {self.resize}")

    @classmethod
    def full(cls, **overrides) -> "TrainConfig":
        """Full-scale defaults: lr 5e-6, batch 64, 6 epochs, 256→224."""
        return cls(**overrides)

    @classmethod
    def toy(cls, **overrides) -> "TrainConfig":
        """Desk-scale defaults: lr 1e-3, batch 16, 64×64 inputs."""
        defaults = dict(max_lr=1e-3, batch_size=16, epochs=10, resize=64, crop=64)
        defaults.update(overrides)
        return cls(**defaults)


def cosine_lr(step: int, total_steps: int, max_lr: float) -> float:
    """max_lr at step 0 annealed to 0 at the final step."""
    if total_steps <= 1:
        return max_lr
    t = min(max(step, 0), total_steps - 1)
    return 0.5 * max_lr * (1.0 + math.cos(math.pi * t / (total_steps - 1)))


def prepare_image(
    arr: np.ndarray, resize: int, crop: int, rng: np.random.Generator | None = None
) -> torch.Tensor:
    """uint8 array → float tensor (3, crop, crop) in [0, 1].

    Bilinear resize of the short side to `resize`, then random crop
    (seeded rng) or center crop (rng=None, eval path).
    """
    from PIL import Image

    if arr.ndim == 2:
        arr = np.stack([arr] * 3, axis=-1)
    img = Image.fromarray(arr.astype(np.uint8))
    w, h = img.size
    scale = resize / min(w, h)
    if scale != 1.0:
        img = img.resize(
            (max(resize, round(w * scale)), max(resize, round(h * scale))),
            Image.BILINEAR,
        )
    data = np.asarray(img, dtype=np.float32) / 255.0
    h, w = data.shape[:2]
    if rng is None:
        top, left = (h - crop) // 2, (w - crop) // 2
    else:
        top = int(rng.integers(0, h - crop + 1))
        left = int(rng.integers(0, w - crop + 1))
    patch = data[top : top + crop, left : left + crop]
    return torch.from_numpy(patch).permute(2, 0, 1)


def batch_tensor(
    batch: SceneBatch,
    image_loader: Callable[[str], np.ndarray],
    config: TrainConfig,
    rng: np.random.Generator | None,
) -> torch.Tensor:
    return torch.stack(
        [
            prepare_image(image_loader(i), config.resize, config.crop, rng)
            for i in batch.image_ids
        ]
    )


def batch_losses(
    model: FGResQ, images: torch.Tensor, batch: SceneBatch, config: TrainConfig
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """(L_scene, L_rank, L_total) for one single-scene batch.

    The batch is scene-homogeneous, so the inverse-count scene mix
    degenerates to weight 1 here; mixing across scenes happens through
    the sampler's round-robin rather than within a step.
    """
    feats = model.quality_features(images)
    scores = model.predict_score(feats.f_q)
    mos = torch.as_tensor(batch.mos, dtype=scores.dtype)
    l_scene = scene_loss(
        {batch.scene_id: fidelity_loss_scene(scores, mos, config.epsilon)},
        {batch.scene_id: len(batch.image_ids)},
    )
    pairs = batch.pairs
    if not config.soft_equal_targets:
        pairs = [t for t in pairs if t[2] != 0.5]
    if pairs:
        ia = torch.tensor([t[0] for t in pairs])
        ib = torch.tensor([t[1] for t in pairs])
        targets = torch.tensor([t[2] for t in pairs], dtype=scores.dtype)
        p = model.predict_preference(feats.f_q[ia], feats.f_q[ib])
        l_rank = ranking_loss(p, targets)
    else:
        l_rank = torch.zeros((), dtype=scores.dtype)
    l_total = total_loss(l_scene, l_rank, config.lambda_1, config.lambda_2)
    return l_scene, l_rank, l_total


@dataclass
class TrainResult:
    checkpoints: list[str]
    curve_path: str
    final_checkpoint: str
    steps: int


def train(
    manifest: DatasetManifest,
    split: SplitSpec,
    model_config: ModelConfig,
    train_config: TrainConfig,
    out_dir,
    image_loader: Callable[[str], np.ndarray],
    model: FGResQ | None = None,
) -> TrainResult:
    """Stage-two optimization over the train split.

    Writes epoch_NNN.pt checkpoints (epoch_000 is the initialization)
    and a loss curve CSV (step, L_scene, L_rank, L_total, lr). A
    non-finite loss aborts with the last good checkpoint recorded on
    the error.
    """
    from .model import save_checkpoint

    train_config.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if model is None:
        model = FGResQ(model_config)
    model.train()

    epoch_batches = [
        scene_aware_sampler(
            manifest, train_config.batch_size, train_config.seed + e,
            pair_ids=split.train_pair_ids,
        )
        for e in range(train_config.epochs)
    ]
    total_steps = sum(len(b) for b in epoch_batches)
    if total_steps == 0:
        raise EmptyDatasetError("train split produced zero batches")

    optimizer = torch.optim.Adam(
        [p for p in model.parameters() if p.requires_grad], lr=train_config.max_lr
    )
    crop_rng = np.random.default_rng(train_config.seed)

    checkpoints = []
    init_path = out / "epoch_000.pt"
    save_checkpoint(model, init_path, extra={"epoch": 0, "step": 0})
    checkpoints.append(str(init_path))
    last_good = str(init_path)

    curve_path = out / "loss_curve.csv"
    step = 0
    with open(curve_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "l_scene", "l_rank", "l_total", "lr"])
        for epoch, batches in enumerate(epoch_batches, start=1):
            for batch in batches:
                lr = cosine_lr(step, total_steps, train_config.max_lr)
                for group in optimizer.param_groups:
                    group["lr"] = lr
                images = batch_tensor(batch, image_loader, train_config, crop_rng)
                l_scene, l_rank, l_total = batch_losses(
                    model, images, batch, train_config
                )
                if not torch.isfinite(l_total):
                    raise TrainingDivergedError(step, last_good)
                optimizer.zero_grad()
                l_total.backward()
                optimizer.step()
                writer.writerow(
                    [
                        step,
                        f"{float(l_scene.detach()):.6f}",
                        f"{float(l_rank.detach()):.6f}",
                        f"{float(l_total.detach()):.6f}",
                        f"{lr:.3e}",
                    ]
                )
                step += 1
            ckpt = out / f"epoch_{epoch:03d}.pt"
            save_checkpoint(model, ckpt, extra={"epoch": epoch, "step": step})
            checkpoints.append(str(ckpt))
            last_good = str(ckpt)

    return TrainResult(
        checkpoints=checkpoints,
        curve_path=str(curve_path),
        final_checkpoint=last_good,
        steps=step,
    )


# ---------------------------------------------------------------------------
# stage one: degradation alignment
# ---------------------------------------------------------------------------


@dataclass
class AlignmentResult:
    losses: list[float] = field(default_factory=list)
    holdout_accuracy: float | None = None


def train_alignment(
    model: FGResQ,
    batches: Sequence[tuple[torch.Tensor, torch.Tensor]],
    lr: float = 1e-3,
    holdout: tuple[torch.Tensor, torch.Tensor] | None = None,
) -> AlignmentResult:
    """Align encode_degradation to the text anchors, then freeze it.

    `batches` yield (images, task_indices); each batch should carry
    distinct tasks so the matched-row contrastive construction labels
    no false negatives. The logit scale is learnable, initialized at
    1/0.07 (log-parameterized).
    """
    log_scale = torch.nn.Parameter(torch.tensor(math.log(1.0 / 0.07)))
    params = list(model.degradation_encoder.parameters()) + [log_scale]
    optimizer = torch.optim.Adam(params, lr=lr)
    anchors = model.text_anchors

    result = AlignmentResult()
    model.train()
    for images, task_idx in batches:
        f_d = model.encode_degradation(images)
        f_t = anchors[task_idx]
        loss = contrastive_alignment_loss(f_d, f_t, scale=log_scale.exp())
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        result.losses.append(float(loss.detach()))

    model.freeze_degradation_encoder()
    model.eval()
    if holdout is not None:
        images, task_idx = holdout
        with torch.no_grad():
            pred = nearest_anchor(model.encode_degradation(images), anchors)
        result.holdout_accuracy = float((pred == task_idx).float().mean())
    return result
