"""Dual-branch quality network.

A general encoder produces content features f_g; a degradation encoder
(aligned to text anchors contrastively, then frozen) produces f_d. A
prompt bank turns f_d into softmax weights over K learnable prompt
vectors; the mixed prompt passes through a small map to give f_p, and
the quality feature is f_q = concat(f_g, f_p, f_g + f_p). Two heads
consume f_q: a scalar regression head, and an antisymmetrized pairwise
comparison head whose swap-consistency (p_AB + p_BA = 1) holds by
construction.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, asdict
from typing import Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .datamodel import TASK_ORDER
from .errors import DegenerateBatchError, DimensionError


@dataclass
class ModelConfig:
    feature_dim: int = 64
    prompt_count: int = 8
    backbone_scale: str = "toy"  # "toy" | "full"
    dfl_enabled: bool = True
    head_hidden: int = 64
    seed: int = 0
    # full scale only: path to a TorchScript image encoder (n,3,H,W) -> (n,d)
    backbone_weights: str | None = None
    anchor_templates: tuple[str, ...] = tuple(
        f"a photo restored from {task} degradation" for task in TASK_ORDER
    )

    def validate(self):
        if self.feature_dim < 8:
            raise ValueError(f"feature_dim must be ≥ 8, got {self.feature_dim}")
        if self.prompt_count < 1:
            raise ValueError(f"prompt_count must be ≥ 1, got {self.prompt_count}")
        if self.backbone_scale not in ("toy", "full"):
            raise ValueError(f"unknown backbone_scale {self.backbone_scale!r}")


@dataclass
class QualityFeatures:
    """Per-image feature bundle; f_q = concat(f_g, f_p, f_g + f_p)."""

    f_g: torch.Tensor
    f_d: torch.Tensor
    f_p: torch.Tensor
    f_q: torch.Tensor


def _seed_from_string(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")


def create_text_anchors(
    dim: int, templates: Sequence[str] | None = None
) -> torch.Tensor:
    """Unit anchor vectors, one per task, deterministic in the template text.

    Stand-in for a frozen text encoder at toy scale: each template
    hashes to an RNG seed, giving a fixed direction per degradation
    description. Anchors are frozen during all training by contract.
    """
    if templates is None:
        templates = tuple(
            f"a photo restored from {task} degradation" for task in TASK_ORDER
        )
    rows = []
    for template in templates:
        rng = np.random.default_rng(_seed_from_string(template))
        vec = rng.standard_normal(dim)
        rows.append(vec / np.linalg.norm(vec))
    return torch.tensor(np.stack(rows), dtype=torch.float32)


class ToyEncoder(nn.Module):
    """Small convolutional encoder for desk-scale runs (any input ≥ 8 px).

    Smooth activations throughout so finite-difference gradient checks
    are well-behaved.
    """

    def __init__(self, dim: int):
        super().__init__()
        c = max(4, dim // 4)
        self.net = nn.Sequential(
            nn.Conv2d(3, c, 3, stride=2, padding=1),
            nn.GELU(),
            nn.GroupNorm(1, c),
            nn.Conv2d(c, 2 * c, 3, stride=2, padding=1),
            nn.GELU(),
            nn.GroupNorm(1, 2 * c),
            nn.Conv2d(2 * c, 2 * c, 3, stride=2, padding=1),
            nn.GELU(),
        )
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.proj = nn.Linear(2 * c, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 4 or x.shape[1] != 3:
            raise DimensionError(f"expected (n, 3, H, W) input, got {tuple(x.shape)}")
        h = self.net(x)
        return self.proj(self.pool(h).flatten(1))


class ScriptedEncoder(nn.Module):
    """Wraps a pretrained TorchScript image encoder behind the same interface."""

    def __init__(self, weights_path: str, dim: int):
        super().__init__()
        self.inner = torch.jit.load(weights_path)
        self.dim = dim

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = self.inner(x)
        if out.shape[-1] != self.dim:
            raise DimensionError(
                f"backbone produced dim {out.shape[-1]}, config wants {self.dim}"
            )
        return out


def _build_encoder(config: ModelConfig) -> nn.Module:
    if config.backbone_scale == "toy":
        return ToyEncoder(config.feature_dim)
    if config.backbone_weights is None:
        raise RuntimeError(
            "backbone_scale='full' needs a pretrained image encoder: set "
            "backbone_weights to a TorchScript module mapping (n,3,H,W) -> "
            "(n, feature_dim), or use backbone_scale='toy'"
        )
    return ScriptedEncoder(config.backbone_weights, config.feature_dim)


class PromptBank(nn.Module):
    """K learnable prompt vectors mixed by degradation-conditioned weights.

    mixer_2 maps f_d to K logits (softmax → simplex weights aligned
    with the prompts); mixer_1 maps the mixed prompt back to feature
    space.
    """

    def __init__(self, dim: int, count: int, hidden: int):
        super().__init__()
        self.prompts = nn.Parameter(torch.randn(count, dim) * 0.02)
        self.mixer_2 = nn.Sequential(
            nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, count)
        )
        self.mixer_1 = nn.Sequential(
            nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim)
        )

    def forward(self, f_d: torch.Tensor) -> torch.Tensor:
        weights = F.softmax(self.mixer_2(f_d), dim=-1)
        mixed = weights @ self.prompts
        return self.mixer_1(mixed)


class FGResQ(nn.Module):
    def __init__(self, config: ModelConfig):
        config.validate()
        super().__init__()
        self.config = config
        torch.manual_seed(config.seed)
        d = config.feature_dim
        self.general_encoder = _build_encoder(config)
        self.degradation_encoder = _build_encoder(config)
        self.prompt_bank = PromptBank(d, config.prompt_count, config.head_hidden)
        self.register_buffer(
            "text_anchors", create_text_anchors(d, config.anchor_templates)
        )
        self.regression_head = nn.Sequential(
            nn.Linear(3 * d, config.head_hidden),
            nn.GELU(),
            nn.Linear(config.head_hidden, 1),
        )
        # h(f_A, f_B) on concat(f_A, f_B, f_A - f_B); antisymmetrized below
        self.comparison_head = nn.Sequential(
            nn.Linear(9 * d, config.head_hidden),
            nn.GELU(),
            nn.Linear(config.head_hidden, 1),
        )

    # -- encoders ---------------------------------------------------------

    def encode_general(self, images: torch.Tensor) -> torch.Tensor:
        return self.general_encoder(images)

    def encode_degradation(self, images: torch.Tensor) -> torch.Tensor:
        return self.degradation_encoder(images)

    def freeze_degradation_encoder(self):
        for p in self.degradation_encoder.parameters():
            p.requires_grad_(False)

    # -- fusion -----------------------------------------------------------

    def fuse(self, f_g: torch.Tensor, f_d: torch.Tensor | None) -> QualityFeatures:
        """Combine content and degradation branches into f_q.

        With the degradation branch disabled, f_p is the zero vector and
        the output is invariant to f_d entirely.
        """
        d = self.config.feature_dim
        if f_g.shape[-1] != d:
            raise DimensionError(f"f_g dim {f_g.shape[-1]} != feature_dim {d}")
        if self.config.dfl_enabled:
            if f_d is None:
                raise DimensionError("degradation features required when enabled")
            if f_d.shape[-1] != d:
                raise DimensionError(f"f_d dim {f_d.shape[-1]} != feature_dim {d}")
            f_p = self.prompt_bank(f_d)
        else:
            f_p = torch.zeros_like(f_g)
            f_d = torch.zeros_like(f_g) if f_d is None else f_d
        f_q = torch.cat([f_g, f_p, f_g + f_p], dim=-1)
        return QualityFeatures(f_g=f_g, f_d=f_d, f_p=f_p, f_q=f_q)

    def quality_features(self, images: torch.Tensor) -> QualityFeatures:
        f_g = self.encode_general(images)
        # the degradation branch never runs when disabled, so outputs
        # cannot depend on it even indirectly
        f_d = self.encode_degradation(images) if self.config.dfl_enabled else None
        return self.fuse(f_g, f_d)

    # -- heads --------------------------------------------------------------

    def predict_score(self, f_q: torch.Tensor) -> torch.Tensor:
        if f_q.shape[-1] != 3 * self.config.feature_dim:
            raise DimensionError(
                f"f_q dim {f_q.shape[-1]} != 3*feature_dim "
                f"{3 * self.config.feature_dim}"
            )
        return self.regression_head(f_q).squeeze(-1)

    def _h(self, f_a: torch.Tensor, f_b: torch.Tensor) -> torch.Tensor:
        return self.comparison_head(
            torch.cat([f_a, f_b, f_a - f_b], dim=-1)
        ).squeeze(-1)

    def preference_logit(self, f_q_a: torch.Tensor, f_q_b: torch.Tensor) -> torch.Tensor:
        """δ(A,B) = ½[h(A,B) − h(B,A)]; odd in its arguments by construction."""
        if f_q_a.shape != f_q_b.shape:
            raise DimensionError(
                f"shape mismatch: {tuple(f_q_a.shape)} vs {tuple(f_q_b.shape)}"
            )
        return 0.5 * (self._h(f_q_a, f_q_b) - self._h(f_q_b, f_q_a))

    def predict_preference(
        self, f_q_a: torch.Tensor, f_q_b: torch.Tensor
    ) -> torch.Tensor:
        return torch.sigmoid(self.preference_logit(f_q_a, f_q_b))

    def forward(self, images: torch.Tensor) -> tuple[QualityFeatures, torch.Tensor]:
        feats = self.quality_features(images)
        return feats, self.predict_score(feats.f_q)


def contrastive_alignment_loss(
    f_img: torch.Tensor, f_txt: torch.Tensor, scale: float | torch.Tensor = 1.0
) -> torch.Tensor:
    """Bidirectional InfoNCE with matched rows as positives.

    ½[CE(F_I F_Tᵀ, y) + CE(F_T F_Iᵀ, y)], y = [0..n−1]. Rows are
    unit-normalized here; `scale` multiplies the cosine logits (the
    caller owns any learnable temperature).
    """
    if f_img.shape != f_txt.shape:
        raise DimensionError(
            f"shape mismatch: {tuple(f_img.shape)} vs {tuple(f_txt.shape)}"
        )
    n = f_img.shape[0]
    if n < 2:
        raise DegenerateBatchError(f"contrastive batch needs ≥ 2 rows, got {n}")
    fi = F.normalize(f_img, dim=-1)
    ft = F.normalize(f_txt, dim=-1)
    logits = scale * (fi @ ft.T)
    y = torch.arange(n, device=logits.device)
    return 0.5 * (F.cross_entropy(logits, y) + F.cross_entropy(logits.T, y))


def nearest_anchor(f_d: torch.Tensor, anchors: torch.Tensor) -> torch.Tensor:
    """Index of the most cosine-similar anchor row for each feature row."""
    f = F.normalize(f_d, dim=-1)
    a = F.normalize(anchors, dim=-1)
    return (f @ a.T).argmax(dim=-1)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

CHECKPOINT_VERSION = 1


def save_checkpoint(model: FGResQ, path, extra: dict | None = None):
    payload = {
        "version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "state_dict": model.state_dict(),
    }
    if extra:
        payload["extra"] = extra
    torch.save(payload, path)


def load_checkpoint(path) -> tuple[FGResQ, dict]:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')!r}")
    cfg_dict = dict(payload["config"])
    cfg_dict["anchor_templates"] = tuple(cfg_dict.get("anchor_templates") or ())
    config = ModelConfig(**cfg_dict)
    model = FGResQ(config)
    model.load_state_dict(payload["state_dict"])
    return model, payload.get("extra", {})
