"""Candidate pair generation and two-step pair filtration.

Step one drops pairs whose normalized MOS gap exceeds a per-scene
threshold (coarse differences are easy; they carry no fine-grained
signal). Step two drops pairs that are *too* close: pairs whose mutual
SSIM exceeds a calibrated threshold are treated as visually
indistinguishable. The threshold is the median SSIM between sampled
images and their noise-overlaid copies, where the noise amplitude at
each pixel is a just-noticeable-difference estimate combining
luminance adaptation and contrast masking.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field, asdict
from itertools import combinations
from pathlib import Path
from typing import Callable, Iterator, Mapping, Sequence

import numpy as np
from scipy import ndimage

from .datamodel import DatasetManifest, ImageRecord, PairRecord
from .errors import (
    DimensionError,
    EmptyDatasetError,
    EmptyImageError,
    PairImageError,
    UnscoredPairError,
)

# ---------------------------------------------------------------------------
# candidate pairs
# ---------------------------------------------------------------------------


def iter_candidate_pairs(manifest: DatasetManifest) -> Iterator[PairRecord]:
    """Yield one candidate pair per 2-subset of each (content_id, task) group.

    Groups are visited in sorted order and members sorted by image_id, so
    output order is deterministic. image_a < image_b canonically.
    """
    groups: dict[tuple[str, str], list[str]] = {}
    for im in manifest.images:
        groups.setdefault((im.content_id, im.task), []).append(im.image_id)
    for key in sorted(groups):
        members = sorted(groups[key])
        for a, b in combinations(members, 2):
            yield PairRecord(pair_id=f"{a}__{b}", image_a=a, image_b=b)


def generate_pairs(manifest: DatasetManifest) -> list[PairRecord]:
    """Materialize all candidate pairs (see iter_candidate_pairs)."""
    return list(iter_candidate_pairs(manifest))


def candidate_pair_count(group_sizes: Sequence[int]) -> int:
    """Total pairs implied by content-group sizes: sum of C(n, 2)."""
    return sum(n * (n - 1) // 2 for n in group_sizes)


# ---------------------------------------------------------------------------
# luminance + JND map
# ---------------------------------------------------------------------------

# 5x5 low-pass kernel for local background luminance (weights sum to 32).
_BG_KERNEL = (
    np.array(
        [
            [1, 1, 1, 1, 1],
            [1, 2, 2, 2, 1],
            [1, 2, 0, 2, 1],
            [1, 2, 2, 2, 1],
            [1, 1, 1, 1, 1],
        ],
        dtype=np.float64,
    )
    / 32.0
)

# Four directional gradient kernels (each /16) for contrast masking.
_G1 = np.array(
    [
        [0, 0, 0, 0, 0],
        [1, 3, 8, 3, 1],
        [0, 0, 0, 0, 0],
        [-1, -3, -8, -3, -1],
        [0, 0, 0, 0, 0],
    ],
    dtype=np.float64,
)
_G2 = np.array(
    [
        [0, 0, 1, 0, 0],
        [0, 8, 3, 0, 0],
        [1, 3, 0, -3, -1],
        [0, 0, -3, -8, 0],
        [0, 0, -1, 0, 0],
    ],
    dtype=np.float64,
)
_G3 = np.array(
    [
        [0, 0, 1, 0, 0],
        [0, 0, 3, 8, 0],
        [-1, -3, 0, 3, 1],
        [0, -8, -3, 0, 0],
        [0, 0, -1, 0, 0],
    ],
    dtype=np.float64,
)
_G4 = np.array(
    [
        [0, 1, 0, -1, 0],
        [0, 3, 0, -3, 0],
        [0, 8, 0, -8, 0],
        [0, 3, 0, -3, 0],
        [0, 1, 0, -1, 0],
    ],
    dtype=np.float64,
)
_GRAD_KERNELS = [_G1 / 16.0, _G2 / 16.0, _G3 / 16.0, _G4 / 16.0]

_LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def to_luminance(image: np.ndarray) -> np.ndarray:
    """Collapse an (H,W) or (H,W,3) image to float64 luminance in [0,255]."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 3:
        if arr.shape[2] == 1:
            return arr[:, :, 0]
        if arr.shape[2] != 3:
            raise DimensionError(f"expected 1 or 3 channels, got {arr.shape[2]}")
        return arr @ _LUMA_WEIGHTS
    if arr.ndim != 2:
        raise DimensionError(f"expected 2-d or 3-d image, got {arr.ndim}-d")
    return arr


@dataclass
class JndConfig:
    """Coefficients of the visibility-threshold model.

    luminance adaptation: for background luminance bg ≤ knee the
    threshold is t0 * (1 - sqrt(bg / knee)) + floor (dark regions
    tolerate more distortion); above the knee it grows linearly with
    slope `bright_slope`. Contrast masking is proportional to the
    strongest of four directional local gradients. The per-pixel
    threshold is the max of the two terms.
    """

    t0: float = 17.0
    knee: float = 127.0
    floor: float = 3.0
    bright_slope: float = 3.0 / 128.0
    masking_slope: float = 0.115


@dataclass
class JndMap:
    """Per-pixel nonnegative visibility thresholds in luminance units."""

    width: int
    height: int
    values: np.ndarray

    @classmethod
    def from_values(cls, values: np.ndarray) -> "JndMap":
        h, w = values.shape
        return cls(width=w, height=h, values=values)

    def validate(self):
        if self.values.shape != (self.height, self.width):
            raise DimensionError("JndMap values/shape mismatch")
        if (self.values < 0).any():
            raise ValueError("JndMap contains negative thresholds")


def compute_jnd_map(image: np.ndarray, config: JndConfig | None = None) -> JndMap:
    """Estimate per-pixel visibility thresholds for `image`."""
    cfg = config or JndConfig()
    lum = to_luminance(image)
    if lum.size == 0:
        raise EmptyImageError("cannot compute a threshold map for an empty image")

    bg = ndimage.correlate(lum, _BG_KERNEL, mode="reflect")
    dark = cfg.t0 * (1.0 - np.sqrt(np.clip(bg, 0.0, cfg.knee) / cfg.knee)) + cfg.floor
    bright = cfg.bright_slope * (bg - cfg.knee) + cfg.floor
    la = np.where(bg <= cfg.knee, dark, bright)

    grad = np.zeros_like(lum)
    for kernel in _GRAD_KERNELS:
        np.maximum(grad, np.abs(ndimage.correlate(lum, kernel, mode="reflect")), out=grad)
    cm = cfg.masking_slope * grad

    return JndMap.from_values(np.maximum(la, cm))


def overlay_jnd(
    image: np.ndarray, jnd_map: JndMap, sign_pattern: np.ndarray | None = None
) -> np.ndarray:
    """Add the threshold map to the image, clipped to [0, 255].

    sign_pattern (default +1 everywhere) multiplies the map before the
    addition, allowing alternating-sign noise without touching the map.
    Returns float64 luminance.
    """
    lum = to_luminance(image)
    if jnd_map.values.shape != lum.shape:
        raise DimensionError(
            f"map shape {jnd_map.values.shape} != image shape {lum.shape}"
        )
    noise = jnd_map.values
    if sign_pattern is not None:
        sign = np.asarray(sign_pattern, dtype=np.float64)
        if sign.shape != lum.shape:
            raise DimensionError(
                f"sign pattern shape {sign.shape} != image shape {lum.shape}"
            )
        noise = noise * sign
    return np.clip(lum + noise, 0.0, 255.0)


# ---------------------------------------------------------------------------
# SSIM
# ---------------------------------------------------------------------------

_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03
_SSIM_RANGE = 255.0


def _gaussian_window(size: int = _SSIM_WINDOW, sigma: float = _SSIM_SIGMA) -> np.ndarray:
    half = size // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    return g / g.sum()


def _filter2(img: np.ndarray, window: np.ndarray) -> np.ndarray:
    out = ndimage.correlate1d(img, window, axis=0, mode="reflect")
    return ndimage.correlate1d(out, window, axis=1, mode="reflect")


def _ssim_single(a: np.ndarray, b: np.ndarray) -> float:
    window = _gaussian_window()
    pad = _SSIM_WINDOW // 2

    mu_a = _filter2(a, window)
    mu_b = _filter2(b, window)
    mu_aa = _filter2(a * a, window)
    mu_bb = _filter2(b * b, window)
    mu_ab = _filter2(a * b, window)

    var_a = mu_aa - mu_a * mu_a
    var_b = mu_bb - mu_b * mu_b
    cov_ab = mu_ab - mu_a * mu_b

    c1 = (_SSIM_K1 * _SSIM_RANGE) ** 2
    c2 = (_SSIM_K2 * _SSIM_RANGE) ** 2
    ssim_map = ((2 * mu_a * mu_b + c1) * (2 * cov_ab + c2)) / (
        (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    )
    # only windows fully inside the image contribute to the mean
    return float(ssim_map[pad:-pad, pad:-pad].mean())


def compute_ssim(
    image_a: np.ndarray, image_b: np.ndarray, channel_mode: str = "luminance"
) -> float:
    """Mean structural similarity over an 11-tap Gaussian window (σ=1.5).

    8-bit dynamic range with the conventional stabilizers (K1=0.01,
    K2=0.03). channel_mode "luminance" compares BT.601 luminance;
    "average" computes SSIM per channel and averages.
    """
    arr_a = np.asarray(image_a, dtype=np.float64)
    arr_b = np.asarray(image_b, dtype=np.float64)
    if arr_a.shape != arr_b.shape:
        raise DimensionError(f"shape mismatch: {arr_a.shape} vs {arr_b.shape}")
    if arr_a.ndim == 3 and channel_mode == "average":
        channels = [
            _check_and_score(arr_a[:, :, c], arr_b[:, :, c])
            for c in range(arr_a.shape[2])
        ]
        return float(np.mean(channels))
    return _check_and_score(to_luminance(arr_a), to_luminance(arr_b))


def _check_and_score(a: np.ndarray, b: np.ndarray) -> float:
    if min(a.shape) < _SSIM_WINDOW:
        raise DimensionError(
            f"image {a.shape} smaller than the {_SSIM_WINDOW}-pixel SSIM window"
        )
    return _ssim_single(a, b)


# ---------------------------------------------------------------------------
# calibration
# ---------------------------------------------------------------------------


@dataclass
class JndCalibration:
    """Median self-SSIM under threshold-magnitude noise, over a sample."""

    ssim_med: float
    sample_size: int
    seed: int | None = None
    per_image_ssim: list[float] | None = None

    def to_json(self) -> str:
        payload = {"ssim_med": self.ssim_med, "sample_size": self.sample_size}
        if self.seed is not None:
            payload["seed"] = self.seed
        if self.per_image_ssim is not None:
            payload["per_image_ssim"] = self.per_image_ssim
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "JndCalibration":
        payload = json.loads(text)
        return cls(
            ssim_med=float(payload["ssim_med"]),
            sample_size=int(payload["sample_size"]),
            seed=payload.get("seed"),
            per_image_ssim=payload.get("per_image_ssim"),
        )

    def save(self, path):
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "JndCalibration":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def exact_median(values: Sequence[float]) -> float:
    """Median as an attained value: lower-middle element for even counts.

    Chosen so that exactly ceil(n/2) of n distinct values are ≤ the
    median.
    """
    if not values:
        raise EmptyDatasetError("median of an empty sequence")
    ordered = sorted(values)
    return ordered[(len(ordered) - 1) // 2]


def calibrate_jnd_threshold(
    images: Sequence[np.ndarray],
    config: JndConfig | None = None,
    seed: int | None = None,
    keep_per_image: bool = True,
) -> JndCalibration:
    """Compute the indistinguishability threshold from a calibration sample.

    For each image I: SSIM(I, I + JND(I)), then take the exact median.
    """
    if len(images) == 0:
        raise EmptyDatasetError("calibration sample is empty")
    scores = []
    for img in images:
        lum = to_luminance(img)
        jnd = compute_jnd_map(lum, config)
        scores.append(compute_ssim(lum, overlay_jnd(lum, jnd)))
    return JndCalibration(
        ssim_med=exact_median(scores),
        sample_size=len(images),
        seed=seed,
        per_image_ssim=scores if keep_per_image else None,
    )


# ---------------------------------------------------------------------------
# the two filters
# ---------------------------------------------------------------------------


def coarse_filter(
    pair: PairRecord, tau_d: float, image_index: Mapping[str, ImageRecord]
) -> bool:
    """Retain the pair iff |mos_norm_A − mos_norm_B| ≤ tau_d (inclusive)."""
    scores = []
    for member in (pair.image_a, pair.image_b):
        record = image_index.get(member)
        if record is None or record.mos_norm is None or math.isnan(record.mos_norm):
            raise UnscoredPairError(f"pair {pair.pair_id}: image {member} has no MOS")
        scores.append(record.mos_norm)
    return abs(scores[0] - scores[1]) <= tau_d


def unnoticeable_filter(
    pair: PairRecord,
    calibration: JndCalibration,
    image_loader: Callable[[str], np.ndarray],
    channel_mode: str = "luminance",
) -> tuple[bool, float]:
    """Retain the pair iff SSIM(A, B) ≤ ssim_med (inclusive).

    Returns (retained, ssim_ab) so the caller can record the score.
    """
    try:
        img_a = image_loader(pair.image_a)
        img_b = image_loader(pair.image_b)
    except (OSError, KeyError) as exc:
        raise PairImageError(pair.pair_id, str(exc)) from exc
    ssim_ab = compute_ssim(img_a, img_b, channel_mode=channel_mode)
    return ssim_ab <= calibration.ssim_med, ssim_ab


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------


def load_image(path) -> np.ndarray:
    """Read an image file into a uint8 array (grayscale or RGB as stored)."""
    from PIL import Image

    with Image.open(path) as img:
        if img.mode not in ("L", "RGB"):
            img = img.convert("RGB")
        return np.asarray(img)


@dataclass
class FiltrationConfig:
    calibration: JndCalibration
    image_root: str = "."
    default_tau_d: float = 0.1
    channel_mode: str = "luminance"
    # overrides the disk loader; receives an ImageRecord
    image_loader: Callable[[ImageRecord], np.ndarray] | None = None


@dataclass
class FiltrationReport:
    """Per-scene and total counts for each terminal pair status."""

    per_scene: dict[str, dict[str, int]] = field(default_factory=dict)

    def add(self, scene_id: str, status: str):
        bucket = self.per_scene.setdefault(
            scene_id,
            {"coarse_rejected": 0, "unnoticeable_rejected": 0, "fine_grained": 0},
        )
        bucket[status] += 1

    def totals(self) -> dict[str, int]:
        out = {"coarse_rejected": 0, "unnoticeable_rejected": 0, "fine_grained": 0}
        for bucket in self.per_scene.values():
            for status, count in bucket.items():
                out[status] += count
        return out

    def to_json(self) -> str:
        return json.dumps(
            {"per_scene": self.per_scene, "totals": self.totals()},
            indent=2,
            sort_keys=True,
        )


def run_filtration(
    manifest: DatasetManifest, config: FiltrationConfig
) -> tuple[DatasetManifest, FiltrationReport]:
    """Assign every candidate pair a terminal status; keep others untouched.

    Coarse rejection needs only manifest MOS values, so it runs first
    and spares the image reads for pairs that survive it.
    """
    idx = manifest._image_index()
    tau_by_scene = {s.scene_id: s.tau_d for s in manifest.scenes}

    if config.image_loader is not None:

        def load_by_id(image_id: str) -> np.ndarray:
            return config.image_loader(idx[image_id])

    else:
        root = Path(config.image_root)

        def load_by_id(image_id: str) -> np.ndarray:
            return load_image(root / idx[image_id].path)

    report = FiltrationReport()
    new_pairs = []
    for pair in manifest.pairs:
        if pair.status != "candidate":
            new_pairs.append(pair)
            continue
        scene_id = idx[pair.image_a].scene_id
        tau_d = tau_by_scene.get(scene_id, config.default_tau_d)
        if not coarse_filter(pair, tau_d, idx):
            status, ssim_ab = "coarse_rejected", pair.ssim_ab
        else:
            retained, ssim_ab = unnoticeable_filter(
                pair, config.calibration, load_by_id, config.channel_mode
            )
            status = "fine_grained" if retained else "unnoticeable_rejected"
        new_pairs.append(
            PairRecord(
                pair_id=pair.pair_id,
                image_a=pair.image_a,
                image_b=pair.image_b,
                status=status,
                preference=pair.preference,
                ssim_ab=ssim_ab,
            )
        )
        report.add(scene_id, status)

    filtered = DatasetManifest(
        images=list(manifest.images), pairs=new_pairs, scenes=list(manifest.scenes)
    )
    return filtered, report
