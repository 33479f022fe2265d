"""Training objectives: scene-level fidelity, pairwise ranking, and their mix."""

from __future__ import annotations

import torch

from .errors import DegenerateSceneError, SceneKeyMismatchError


def fidelity_loss_scene(
    y_pred: torch.Tensor, y_gt: torch.Tensor, eps: float = 1e-8
) -> torch.Tensor:
    """Ranking fidelity over all index pairs i<j of one scene.

    Pair term: 1 − √(p·g + ε) − √((1−p)(1−g) + ε), with
    p = sigmoid(y_pred_i − y_pred_j) and g = ½(sign(y_gt_i − y_gt_j)+1);
    tied ground truth gives g = 0.5. Mean over the N(N−1)/2 pairs.
    Depends only on prediction differences and ground-truth order.
    """
    y_pred = torch.as_tensor(y_pred)
    y_gt = torch.as_tensor(y_gt)
    n = y_pred.shape[-1]
    if y_gt.shape[-1] != n:
        raise DegenerateSceneError(f"length mismatch: {n} vs {y_gt.shape[-1]}")
    if n < 2:
        raise DegenerateSceneError(f"fidelity loss needs ≥ 2 samples, got {n}")
    i, j = torch.triu_indices(n, n, offset=1)
    p = torch.sigmoid(y_pred[..., i] - y_pred[..., j])
    g = 0.5 * (torch.sign(y_gt[..., i] - y_gt[..., j]) + 1.0)
    term = 1.0 - torch.sqrt(p * g + eps) - torch.sqrt((1.0 - p) * (1.0 - g) + eps)
    return term.mean()


def scene_loss(
    per_scene_losses: dict[str, torch.Tensor | float],
    counts: dict[str, int],
) -> torch.Tensor | float:
    """Inverse-sample-count mix of per-scene losses.

    w_s = (1/N_s) / Σ_s' (1/N_s'); weights sum to 1, so smaller scenes
    are not drowned out and the λ1 scale stays meaningful across scene
    mixes. A single scene degenerates to weight 1.
    """
    if set(per_scene_losses) != set(counts):
        raise SceneKeyMismatchError(
            f"loss keys {sorted(per_scene_losses)} != count keys {sorted(counts)}"
        )
    if not per_scene_losses:
        raise DegenerateSceneError("scene_loss over zero scenes")
    for scene, n in counts.items():
        if n < 2:
            raise DegenerateSceneError(f"scene {scene!r} has {n} < 2 samples")
    inv_total = sum(1.0 / n for n in counts.values())
    total = None
    for scene in sorted(per_scene_losses):
        w = (1.0 / counts[scene]) / inv_total
        piece = w * per_scene_losses[scene]
        total = piece if total is None else total + piece
    return total


def ranking_loss(
    p: torch.Tensor, r: torch.Tensor, clip_eps: float = 1e-7
) -> torch.Tensor:
    """Binary cross-entropy over pairwise preference probabilities.

    Targets: 1 when A is preferred, 0 when B is, 0.5 for equal-quality
    annotations (the soft midpoint is minimized by p = 0.5).
    Probabilities are clipped to [clip_eps, 1−clip_eps] so boundary
    values never produce infinities.
    """
    if not torch.is_tensor(p):
        p = torch.tensor(p, dtype=torch.get_default_dtype())
    r = torch.as_tensor(r, dtype=p.dtype)
    if p.shape != r.shape:
        raise ValueError(f"shape mismatch: {tuple(p.shape)} vs {tuple(r.shape)}")
    if p.numel() == 0:
        raise ValueError("ranking_loss of an empty input")
    if ((r < 0) | (r > 1)).any():
        raise ValueError("targets must lie in [0, 1]")
    pc = torch.clamp(p, clip_eps, 1.0 - clip_eps)
    return -(r * torch.log(pc) + (1.0 - r) * torch.log(1.0 - pc)).mean()


def total_loss(scene_component, rank_component, lambda_1: float, lambda_2: float):
    """λ1·L_scene + λ2·L_rank."""
    return lambda_1 * scene_component + lambda_2 * rank_component


def preference_target(preference: str) -> float:
    """Ranking target for a stored preference label (A side = probability 1)."""
    targets = {"A": 1.0, "B": 0.0, "equal": 0.5}
    if preference not in targets:
        raise ValueError(f"no ranking target for preference {preference!r}")
    return targets[preference]
