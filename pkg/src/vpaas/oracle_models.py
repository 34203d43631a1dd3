"""Deterministic stand-ins for the cloud detector, fog feature backbone and
backup detector, plus the model profiler.

Confidence follows a linear-in-degradation law with clamping: classification
confidence is far more sensitive to quality loss than location confidence,
which is the premise the streaming protocol exploits.  All randomness is
seeded; every output is a pure function of (inputs, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .datamodel import BBox, Detection, Frame, GroundTruthObject, VideoChunk
from .quality import DeviceClass


@dataclass(frozen=True)
class DetectorProfile:
    base_loc: float = 0.95
    base_cls: float = 0.9
    quality_sensitivity_cls: float = 0.6
    quality_sensitivity_loc: float = 0.15
    resolution_sensitivity: float = 0.1
    fp_rate: float = 0.3
    qp_ref: int = 26
    infer_ms_per_frame: dict = field(
        default_factory=lambda: {DeviceClass.CLOUD: 15.0, DeviceClass.FOG: 150.0}
    )

    def __post_init__(self):
        if self.quality_sensitivity_loc >= self.quality_sensitivity_cls:
            raise ValueError(
                "location confidence must degrade slower than classification"
            )
        if min(self.fp_rate, self.base_loc, self.base_cls) < 0:
            raise ValueError("rates must be >= 0")

    def degradations(self, quality) -> tuple[float, float]:
        """(qp degradation fraction, resolution degradation fraction)."""
        q_deg = max(0, quality.qp - self.qp_ref) / (51 - self.qp_ref)
        r_deg = 1.0 - quality.resolution_scale
        return q_deg, r_deg

    def cls_score(self, quality, difficulty: float) -> float:
        q_deg, r_deg = self.degradations(quality)
        raw = (
            self.base_cls
            - difficulty
            - self.quality_sensitivity_cls * q_deg
            - self.resolution_sensitivity * r_deg
        )
        return float(np.clip(raw, 0.0, 1.0))

    def loc_score(self, quality, difficulty: float) -> float:
        q_deg, r_deg = self.degradations(quality)
        raw = (
            self.base_loc
            - 0.5 * difficulty
            - self.quality_sensitivity_loc * q_deg
            - 0.3 * self.resolution_sensitivity * r_deg
        )
        return float(np.clip(raw, 0.0, 1.0))


def _jittered_bbox(
    bbox: BBox, r: float, rng: np.random.Generator, width: int, height: int
) -> BBox:
    # Localization blurs with downscaling: up to (1-r) * 10% of the box size.
    scale = (1.0 - r) * 0.10
    if scale == 0.0:
        rng.uniform(-1, 1, size=4)  # keep the stream aligned across qualities
        return bbox
    dx, dy, dw, dh = rng.uniform(-1, 1, size=4)
    jittered = BBox(
        bbox.x + dx * scale * bbox.w,
        bbox.y + dy * scale * bbox.h,
        max(bbox.w * (1 + dw * scale), 1.0),
        max(bbox.h * (1 + dh * scale), 1.0),
    )
    return jittered.clamped(width, height)


def cloud_detect(
    chunk: VideoChunk, profile: DetectorProfile, seed: int
) -> list[tuple[int, list[Detection]]]:
    """Detect objects in every keyframe of the chunk at its encoded quality."""
    results = []
    for frame in chunk.keyframes:
        rng = np.random.default_rng([seed, chunk.chunk_id, frame.frame_index])
        detections = []
        for obj in frame.objects:
            cls = profile.cls_score(chunk.quality, obj.difficulty)
            loc = profile.loc_score(chunk.quality, obj.difficulty)
            bbox = _jittered_bbox(
                obj.bbox, chunk.quality.resolution_scale, rng, frame.width, frame.height
            )
            detections.append(
                Detection(
                    bbox=bbox,
                    class_id=obj.class_id if cls > 0 else None,
                    loc_score=loc,
                    cls_score=cls,
                )
            )
        # Background false proposals carry zero class confidence, so they can
        # only survive as uncertain regions and exercise the filters.
        for _ in range(rng.poisson(profile.fp_rate)):
            w = float(rng.uniform(40, 200))
            h = float(rng.uniform(40, 200))
            x = float(rng.uniform(0, frame.width - w))
            y = float(rng.uniform(0, frame.height - h))
            detections.append(
                Detection(
                    bbox=BBox(x, y, w, h),
                    class_id=None,
                    loc_score=float(rng.uniform(0.4, 0.8)),
                    cls_score=0.0,
                )
            )
        results.append((frame.frame_index, detections))
    return results


DEFAULT_BACKUP_PENALTY = 0.25
DEFAULT_BACKUP_FP_MULTIPLIER = 3.0


def backup_profile(
    profile: DetectorProfile,
    penalty: float = DEFAULT_BACKUP_PENALTY,
    fp_multiplier: float = DEFAULT_BACKUP_FP_MULTIPLIER,
    infer_ms_per_frame: Optional[dict] = None,
) -> DetectorProfile:
    """Derive the small backup detector from the cloud detector profile."""
    return replace(
        profile,
        base_cls=max(profile.base_cls - penalty, 0.0),
        fp_rate=profile.fp_rate * fp_multiplier,
        infer_ms_per_frame=infer_ms_per_frame or {DeviceClass.FOG: 40.0},
    )


def backup_detect(
    chunk: VideoChunk,
    profile: DetectorProfile,
    seed: int,
    penalty: float = DEFAULT_BACKUP_PENALTY,
    fp_multiplier: float = DEFAULT_BACKUP_FP_MULTIPLIER,
) -> list[tuple[int, list[Detection]]]:
    """Fog-side fallback detector: weaker classification, noisier proposals."""
    return cloud_detect(chunk, backup_profile(profile, penalty, fp_multiplier), seed)


@dataclass
class FeatureSynthesizer:
    """Generates class-prototype feature vectors for cropped regions.

    Drift rotates the class signature away from its prototype: as the phase
    grows the prototype component fades and the drift direction takes over,
    so a frozen classifier trained on the prototypes decays with the phase.
    A constant 1 is appended as the bias coordinate.
    """

    num_classes: int = 10
    dim: int = 64
    noise_sigma: float = 0.1
    drift_scale: float = 1.0
    seed: int = 7

    def __post_init__(self):
        rng = np.random.default_rng(self.seed)
        protos = rng.normal(size=(self.num_classes, self.dim))
        self.prototypes = protos / np.linalg.norm(protos, axis=1, keepdims=True)
        drifts = rng.normal(size=(self.num_classes, self.dim))
        self.drift_directions = drifts / np.linalg.norm(drifts, axis=1, keepdims=True)

    def feature_dim(self) -> int:
        return self.dim + 1


def dominant_object(region: BBox, frame: Frame) -> Optional[GroundTruthObject]:
    """The ground-truth object with the largest overlap with the region."""
    best, best_area = None, 0.0
    for obj in frame.objects:
        area = region.intersection_area(obj.bbox)
        if area > best_area:
            best, best_area = obj, area
    return best


def extract_features(
    region: BBox, frame: Frame, synth: FeatureSynthesizer, seed: int
) -> np.ndarray:
    """Feature vector (length dim+1, last coordinate 1) for a cropped region.

    Noise is keyed to (seed, frame, object identity) so two crops of the same
    object yield identical vectors.  Regions over pure background get noise.
    """
    obj = dominant_object(region, frame)
    if obj is None:
        key = [seed, frame.frame_index, int(region.x), int(region.y), 0xB6]
        rng = np.random.default_rng(key)
        base = rng.normal(scale=max(synth.noise_sigma, 1e-9), size=synth.dim)
        return np.append(base, 1.0)
    rng = np.random.default_rng([seed, frame.frame_index, obj.object_id])
    noise = (
        rng.normal(scale=synth.noise_sigma, size=synth.dim)
        if synth.noise_sigma > 0
        else np.zeros(synth.dim)
    )
    phase = synth.drift_scale * obj.drift_phase
    x = (
        max(0.0, 1.0 - phase) * synth.prototypes[obj.class_id]
        + phase * synth.drift_directions[obj.class_id]
        + noise
    )
    return np.append(x, 1.0)


@dataclass(frozen=True)
class CostCurve:
    """Per-batch latency model: base_ms + per_item_ms * batch_size."""

    base_ms: float
    per_item_ms: float

    def latency_ms(self, batch_size: int) -> float:
        return self.base_ms + self.per_item_ms * batch_size


@dataclass(frozen=True)
class ModelProfile:
    model_id: str
    device_class: str
    latency_ms_per_batch: dict[int, float]
    accuracy_note: str = ""


class ModelProfiler:
    """Fills latency maps from registered cost curves; results are cached."""

    def __init__(self):
        self._cache: dict[tuple[str, str], ModelProfile] = {}

    def profile_model(
        self,
        model_id: str,
        device_class: str,
        batch_sizes: list[int],
        cost_curve: CostCurve,
    ) -> ModelProfile:
        if not batch_sizes:
            raise ValueError("batch_sizes must be non-empty")
        key = (model_id, device_class)
        if key in self._cache:
            return self._cache[key]
        profile = ModelProfile(
            model_id=model_id,
            device_class=device_class,
            latency_ms_per_batch={b: cost_curve.latency_ms(b) for b in sorted(batch_sizes)},
        )
        self._cache[key] = profile
        return profile
