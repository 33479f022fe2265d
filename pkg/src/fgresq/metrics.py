"""Scalar image metrics and statistical evaluation measures.

Includes the narrow-range analysis: correlations computed within
MOS bins expose how a predictor that separates coarse quality levels
can still be unable to rank images of nearly equal quality.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import DimensionError, UndefinedCorrelationError

DEFAULT_BIN_EDGES = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]


def psnr(a: np.ndarray, b: np.ndarray, max_value: float = 255.0) -> float:
    """Peak signal-to-noise ratio in dB; inf for identical images.

    Infinite PSNR is a meaningful value (zero error), not a failure, so
    it is returned rather than raised.
    """
    arr_a = np.asarray(a, dtype=np.float64)
    arr_b = np.asarray(b, dtype=np.float64)
    if arr_a.shape != arr_b.shape:
        raise DimensionError(f"shape mismatch: {arr_a.shape} vs {arr_b.shape}")
    mse = float(np.mean((arr_a - arr_b) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * math.log10(max_value**2 / mse)


def _check_correlation_input(x: Sequence[float], y: Sequence[float]):
    if len(x) != len(y):
        raise DimensionError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 3:
        raise UndefinedCorrelationError(
            f"need at least 3 samples for a correlation, got {len(x)}"
        )


def plcc(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson linear correlation coefficient."""
    _check_correlation_input(x, y)
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if np.ptp(xa) == 0.0 or np.ptp(ya) == 0.0:
        raise UndefinedCorrelationError("correlation of a constant vector is undefined")
    xc = xa - xa.mean()
    yc = ya - ya.mean()
    return float((xc @ yc) / math.sqrt((xc @ xc) * (yc @ yc)))


def srcc(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman rank correlation: Pearson over mid-ranks (average-rank ties)."""
    _check_correlation_input(x, y)
    rx = stats.rankdata(x, method="average")
    ry = stats.rankdata(y, method="average")
    return plcc(rx, ry)


def pairwise_accuracy(predictions: Sequence[float], labels: Sequence[str]) -> float:
    """Fraction of pairs where (p_AB > 0.5) agrees with (label == "A").

    p_AB = 0.5 expresses no ranking and counts as incorrect for either
    label. Labels must be "A" or "B"; equal-labeled pairs have no
    correct side and must be excluded by the caller.
    """
    if len(predictions) != len(labels):
        raise DimensionError(f"length mismatch: {len(predictions)} vs {len(labels)}")
    if len(predictions) == 0:
        raise ValueError("pairwise_accuracy of an empty input")
    correct = 0
    for p, label in zip(predictions, labels):
        if label not in ("A", "B"):
            raise ValueError(f"label must be 'A' or 'B', got {label!r}")
        if (label == "A" and p > 0.5) or (label == "B" and p < 0.5):
            correct += 1
    return correct / len(predictions)


# ---------------------------------------------------------------------------
# binned-range analysis
# ---------------------------------------------------------------------------


@dataclass
class BinStat:
    lo: float
    hi: float
    count: int
    srcc: float | None
    plcc: float | None


@dataclass
class BinnedReport:
    bin_edges: list[float]
    per_bin: list[BinStat]
    overall_srcc: float | None
    overall_plcc: float | None
    sample_size: int

    def to_json(self) -> str:
        payload = {
            "bin_edges": self.bin_edges,
            "per_bin": [
                {
                    "range": [b.lo, b.hi],
                    "count": b.count,
                    "srcc": b.srcc,
                    "plcc": b.plcc,
                }
                for b in self.per_bin
            ],
            "overall": {"srcc": self.overall_srcc, "plcc": self.overall_plcc},
            "sample_size": self.sample_size,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    def render(self) -> str:
        """Fixed-width table: one row per bin plus the overall row."""
        lines = [f"{'range':>12}  {'count':>7}  {'srcc':>8}  {'plcc':>8}"]

        def fmt(v):
            return f"{v:8.4f}" if v is not None else "   undef"

        for b in self.per_bin:
            closing = "]" if b.hi == self.bin_edges[-1] else ")"
            rng = f"[{b.lo:.1f},{b.hi:.1f}{closing}"
            lines.append(f"{rng:>12}  {b.count:>7}  {fmt(b.srcc)}  {fmt(b.plcc)}")
        lines.append(
            f"{'overall':>12}  {self.sample_size:>7}  "
            f"{fmt(self.overall_srcc)}  {fmt(self.overall_plcc)}"
        )
        return "\n".join(lines)


def _safe_corr(fn, x, y) -> float | None:
    try:
        return fn(x, y)
    except UndefinedCorrelationError:
        return None


def binned_correlation(
    scores: Sequence[float],
    mos: Sequence[float],
    edges: Sequence[float] | None = None,
) -> BinnedReport:
    """SRCC/PLCC within each MOS bin [lo, hi) — last bin closed — plus overall.

    Bins with fewer than 3 samples, or with a constant vector, are
    marked undefined rather than raising.
    """
    if len(scores) != len(mos):
        raise DimensionError(f"length mismatch: {len(scores)} vs {len(mos)}")
    edges = list(edges) if edges is not None else list(DEFAULT_BIN_EDGES)
    if sorted(edges) != edges or len(set(edges)) != len(edges):
        raise ValueError(f"bin edges must be strictly increasing, got {edges}")
    sa = np.asarray(scores, dtype=np.float64)
    ma = np.asarray(mos, dtype=np.float64)
    if ma.size and (ma.min() < edges[0] or ma.max() > edges[-1]):
        raise ValueError("mos values fall outside the bin edges")

    per_bin = []
    for i in range(len(edges) - 1):
        lo, hi = edges[i], edges[i + 1]
        if i == len(edges) - 2:
            mask = (ma >= lo) & (ma <= hi)
        else:
            mask = (ma >= lo) & (ma < hi)
        xs, ys = sa[mask], ma[mask]
        if xs.size >= 3:
            bin_srcc = _safe_corr(srcc, xs, ys)
            bin_plcc = _safe_corr(plcc, xs, ys)
        else:
            bin_srcc = bin_plcc = None
        per_bin.append(BinStat(lo, hi, int(xs.size), bin_srcc, bin_plcc))

    overall_srcc = _safe_corr(srcc, sa, ma) if sa.size >= 3 else None
    overall_plcc = _safe_corr(plcc, sa, ma) if sa.size >= 3 else None
    return BinnedReport(
        bin_edges=edges,
        per_bin=per_bin,
        overall_srcc=overall_srcc,
        overall_plcc=overall_plcc,
        sample_size=int(sa.size),
    )


# ---------------------------------------------------------------------------
# annotation-consistency analysis
# ---------------------------------------------------------------------------


@dataclass
class ConsistencyPoint:
    """One (rounded MOS difference, preference) cell of the scatter."""

    mos_diff: float
    preference: str
    frequency: int
    inconsistent: bool


@dataclass
class ConsistencyReport:
    points: list[ConsistencyPoint]
    decile_edges: list[float]
    decile_inconsistency: list[float | None]
    inconsistency_rate: float

    def to_json(self) -> str:
        payload = {
            "points": [
                {
                    "mos_diff": p.mos_diff,
                    "preference": p.preference,
                    "frequency": p.frequency,
                    "inconsistent": p.inconsistent,
                }
                for p in self.points
            ],
            "decile_edges": self.decile_edges,
            "decile_inconsistency": self.decile_inconsistency,
            "inconsistency_rate": self.inconsistency_rate,
        }
        return json.dumps(payload, indent=2, sort_keys=True)


def _is_inconsistent(mos_diff: float, preference: str) -> bool:
    # a preference conflicts with the MOS order when it points the other way;
    # "equal" conflicts with any nonzero difference
    if preference == "A":
        return mos_diff < 0
    if preference == "B":
        return mos_diff > 0
    if preference == "equal":
        return mos_diff != 0
    raise ValueError(f"unexpected preference {preference!r}")


def consistency_analysis(
    observations: Sequence[tuple[float, float, str]],
    resolution: float = 0.01,
) -> ConsistencyReport:
    """Cross labeled pairs' preferences against their MOS differences.

    observations: (mos_a, mos_b, preference) triples with preference in
    {A, B, equal}. Points aggregate by (mos_diff rounded to
    `resolution`, preference). The decile summary buckets *raw* |diff|
    into ten equal-width bins over [0, max|diff|] and reports the
    inconsistent fraction per bin (None for empty bins).
    """
    cells: dict[tuple[float, str], int] = {}
    raw: list[tuple[float, bool]] = []
    for mos_a, mos_b, preference in observations:
        diff = mos_a - mos_b
        rounded = round(round(diff / resolution) * resolution, 10)
        if rounded == 0.0:
            rounded = 0.0  # normalize -0.0
        cells[(rounded, preference)] = cells.get((rounded, preference), 0) + 1
        raw.append((abs(diff), _is_inconsistent(diff, preference)))

    points = [
        ConsistencyPoint(
            mos_diff=diff,
            preference=pref,
            frequency=freq,
            inconsistent=_is_inconsistent(diff, pref),
        )
        for (diff, pref), freq in sorted(cells.items())
    ]

    max_diff = max((d for d, _ in raw), default=0.0)
    span = max_diff if max_diff > 0 else 1.0
    edges = [span * i / 10.0 for i in range(11)]
    counts = [0] * 10
    bad = [0] * 10
    for diff, inconsistent in raw:
        idx = min(int(diff / span * 10.0), 9)
        counts[idx] += 1
        bad[idx] += int(inconsistent)
    rates: list[float | None] = [
        (bad[i] / counts[i]) if counts[i] else None for i in range(10)
    ]
    total = len(raw)
    overall = sum(b for b in bad) / total if total else 0.0
    return ConsistencyReport(
        points=points,
        decile_edges=edges,
        decile_inconsistency=rates,
        inconsistency_rate=overall,
    )
