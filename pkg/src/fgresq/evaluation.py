"""Test-split evaluation: per-task correlation/accuracy tables and ablation deltas."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import torch

from .datamodel import DatasetManifest, SplitSpec
from .errors import (
    EmptyDatasetError,
    IncomparableReportsError,
    UndefinedCorrelationError,
)
from .metrics import BinnedReport, binned_correlation, pairwise_accuracy, plcc, srcc
from .model import FGResQ
from .training import TrainConfig, prepare_image


@dataclass
class TaskResult:
    srcc: float | None
    plcc: float | None
    acc: float | None
    n_images: int
    n_pairs: int

    @property
    def defined(self) -> bool:
        return self.srcc is not None and self.plcc is not None


@dataclass
class EvaluationReport:
    per_task: dict[str, TaskResult]
    average: TaskResult | None
    binned: BinnedReport | None
    dfl_enabled: bool
    checkpoint_id: str
    split_seed: int

    def to_json(self) -> str:
        def row(t: TaskResult):
            return {
                "srcc": t.srcc,
                "plcc": t.plcc,
                "acc": t.acc,
                "n_images": t.n_images,
                "n_pairs": t.n_pairs,
            }

        payload = {
            "per_task": {k: row(v) for k, v in self.per_task.items()},
            "average": row(self.average) if self.average else None,
            "binned": json.loads(self.binned.to_json()) if self.binned else None,
            "dfl_enabled": self.dfl_enabled,
            "checkpoint_id": self.checkpoint_id,
            "split_seed": self.split_seed,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    def render(self) -> str:
        """Fixed-column table, one row per task plus the unweighted average.

        The average row is the unweighted mean over tasks with defined
        metrics; undefined tasks are listed but excluded from it.
        """
        lines = [
            f"{'task':>18}  {'srcc':>8}  {'plcc':>8}  {'acc':>8}  "
            f"{'images':>7}  {'pairs':>6}"
        ]

        def fmt(v):
            return f"{v:8.4f}" if v is not None else "   undef"

        for task in sorted(self.per_task):
            t = self.per_task[task]
            lines.append(
                f"{task:>18}  {fmt(t.srcc)}  {fmt(t.plcc)}  {fmt(t.acc)}  "
                f"{t.n_images:>7}  {t.n_pairs:>6}"
            )
        if self.average:
            a = self.average
            lines.append(
                f"{'average':>18}  {fmt(a.srcc)}  {fmt(a.plcc)}  {fmt(a.acc)}  "
                f"{a.n_images:>7}  {a.n_pairs:>6}"
            )
        return "\n".join(lines)


def _mean_or_none(values: list[float | None]) -> float | None:
    defined = [v for v in values if v is not None]
    return float(np.mean(defined)) if defined else None


def evaluate(
    model: FGResQ,
    manifest: DatasetManifest,
    split: SplitSpec,
    image_loader: Callable[[str], np.ndarray],
    train_config: TrainConfig | None = None,
    checkpoint_id: str = "",
    with_bins: bool = True,
    score_override: Callable[[str], float] | None = None,
    preference_override: Callable[[str, str], float] | None = None,
) -> EvaluationReport:
    """Score the test split: SRCC/PLCC per task over images, ACC over pairs.

    Images are center-cropped (deterministic eval path). Tasks with
    fewer than 3 scored images report undefined correlations and are
    excluded from the average. The override hooks substitute a stub
    scorer/comparator for protocol tests without touching the model
    path.
    """
    cfg = train_config or TrainConfig.toy()
    pair_by_id = {p.pair_id: p for p in manifest.pairs}
    test_pairs = [pair_by_id[pid] for pid in sorted(split.test_pair_ids)]
    if not test_pairs:
        raise EmptyDatasetError("test split is empty")
    idx = manifest._image_index()

    image_ids = sorted({m for p in test_pairs for m in (p.image_a, p.image_b)})
    model.eval()

    scores: dict[str, float] = {}
    feats_by_id: dict[str, torch.Tensor] = {}
    if score_override is not None:
        for image_id in image_ids:
            scores[image_id] = float(score_override(image_id))
    else:
        with torch.no_grad():
            for image_id in image_ids:
                tensor = prepare_image(
                    image_loader(image_id), cfg.resize, cfg.crop, rng=None
                ).unsqueeze(0)
                feats = model.quality_features(tensor)
                feats_by_id[image_id] = feats.f_q[0]
                scores[image_id] = float(model.predict_score(feats.f_q)[0])

    per_task: dict[str, TaskResult] = {}
    tasks = sorted({idx[i].task for i in image_ids})
    for task in tasks:
        t_images = [i for i in image_ids if idx[i].task == task]
        t_pairs = [p for p in test_pairs if idx[p.image_a].task == task]
        xs = [scores[i] for i in t_images]
        ys = [idx[i].mos_norm for i in t_images]
        if len(t_images) >= 3:
            try:
                t_srcc: float | None = srcc(xs, ys)
                t_plcc: float | None = plcc(xs, ys)
            except UndefinedCorrelationError:
                t_srcc = t_plcc = None
        else:
            t_srcc = t_plcc = None

        preds, labels = [], []
        for p in t_pairs:
            if p.preference not in ("A", "B"):
                continue
            if preference_override is not None:
                prob = float(preference_override(p.image_a, p.image_b))
            elif score_override is not None:
                # stub path: derive the pair probability from the stub's
                # score difference, mirroring the model's sigmoid(δ) form
                gap = scores[p.image_a] - scores[p.image_b]
                prob = float(1.0 / (1.0 + np.exp(-gap)))
            else:
                with torch.no_grad():
                    prob = float(
                        model.predict_preference(
                            feats_by_id[p.image_a].unsqueeze(0),
                            feats_by_id[p.image_b].unsqueeze(0),
                        )[0]
                    )
            preds.append(prob)
            labels.append(p.preference)
        t_acc = pairwise_accuracy(preds, labels) if preds else None
        per_task[task] = TaskResult(
            srcc=t_srcc,
            plcc=t_plcc,
            acc=t_acc,
            n_images=len(t_images),
            n_pairs=len(t_pairs),
        )

    defined = [t for t in per_task.values() if t.defined]
    average = None
    if defined:
        average = TaskResult(
            srcc=_mean_or_none([t.srcc for t in defined]),
            plcc=_mean_or_none([t.plcc for t in defined]),
            acc=_mean_or_none([t.acc for t in defined]),
            n_images=sum(t.n_images for t in defined),
            n_pairs=sum(t.n_pairs for t in defined),
        )

    binned = None
    if with_bins and len(image_ids) >= 3:
        binned = binned_correlation(
            [scores[i] for i in image_ids], [idx[i].mos_norm for i in image_ids]
        )

    return EvaluationReport(
        per_task=per_task,
        average=average,
        binned=binned,
        dfl_enabled=model.config.dfl_enabled,
        checkpoint_id=checkpoint_id,
        split_seed=split.seed,
    )


@dataclass
class AblationDelta:
    per_metric: dict[str, float | None] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(self.per_metric, indent=2, sort_keys=True)


def ablation_compare(
    report_with: EvaluationReport, report_without: EvaluationReport
) -> AblationDelta:
    """Average-row metric deltas (with − without) over one identical split."""
    if report_with.split_seed != report_without.split_seed:
        raise IncomparableReportsError(
            f"reports use different splits: seed {report_with.split_seed} "
            f"vs {report_without.split_seed}"
        )
    a, b = report_with.average, report_without.average
    if a is None or b is None:
        raise IncomparableReportsError("a report has no defined average row")

    def delta(x: float | None, y: float | None) -> float | None:
        return (x - y) if x is not None and y is not None else None

    return AblationDelta(
        per_metric={
            "srcc": delta(a.srcc, b.srcc),
            "plcc": delta(a.plcc, b.plcc),
            "acc": delta(a.acc, b.acc),
        }
    )
