"""The high-and-low streaming protocol state machine.

Per chunk: the fog re-encodes the high-quality chunk to low quality and ships
it to the cloud; the cloud detector runs exactly once; a three-stage filter
splits detections into confident labels and uncertain regions; only region
coordinates travel back; the fog crops the uncertain regions from the
high-quality frames, batches them, and classifies them locally.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from .datamodel import (
    BBox,
    Detection,
    Frame,
    LabelResult,
    LabelSource,
    QualityLevel,
    VideoChunk,
)
from .hitl_learning import HitlLearner
from .oracle_models import (
    CostCurve,
    DetectorProfile,
    FeatureSynthesizer,
    backup_profile,
    cloud_detect,
    extract_features,
)
from .quality import DeviceClass, EncodeTimeModel, SizeModel, reencode
from .runtime import CloudUnavailable, HeartbeatConfig, LinkDown, NetworkLink

REGION_COORD_BYTES = 16  # fixed wire size per returned box, for accounting


@dataclass(frozen=True)
class FilterThresholds:
    loc: float = 0.5
    iou: float = 0.3
    background: float = 0.4
    cls_accept: float = 0.8

    def __post_init__(self):
        for name in ("loc", "iou", "background", "cls_accept"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"threshold {name} must lie in (0,1): {v}")


@dataclass(frozen=True)
class BatcherConfig:
    max_batch: int = 8
    max_wait_ms: float = 20.0

    def __post_init__(self):
        if self.max_batch < 1:
            raise ValueError("max_batch must be >= 1")
        if self.max_wait_ms < 0:
            raise ValueError("max_wait must be >= 0")


@dataclass(frozen=True)
class ProtocolConfig:
    low_quality: QualityLevel = QualityLevel(0.8, 36)
    high_quality: QualityLevel = QualityLevel(0.8, 26)
    thresholds: FilterThresholds = FilterThresholds()
    batcher: BatcherConfig = BatcherConfig()
    # fog predictions below this confidence become annotation candidates
    fog_confidence_floor: float = 0.5

    def validate(self, size_model: SizeModel, frames) -> None:
        low = size_model.chunk_size_bytes(frames, self.low_quality)
        high = size_model.chunk_size_bytes(frames, self.high_quality)
        if low >= high:
            raise ValueError("low_quality must encode strictly smaller than high_quality")


@dataclass
class ChunkTrace:
    """Everything one chunk's protocol run emitted; the metrics substrate."""

    chunk_id: int
    strategy: str
    n_keyframes: int
    bytes_client_fog: int = 0
    bytes_fog_cloud: int = 0
    bytes_cloud_fog: int = 0
    extra_video_bytes: int = 0  # second-round region re-sends (DDS-like)
    cloud_invocations: int = 0
    cloud_frames: int = 0
    source: str = LabelSource.CLOUD
    uncertain_count: int = 0
    timestamps: dict[str, float] = field(default_factory=dict)
    labels: list[LabelResult] = field(default_factory=list)
    annotation_candidates: list[dict] = field(default_factory=list)  # not serialized

    @property
    def wan_video_bytes(self) -> int:
        return self.bytes_fog_cloud + self.extra_video_bytes

    def to_record(self) -> dict:
        return {
            "chunk_id": self.chunk_id,
            "strategy": self.strategy,
            "n_keyframes": self.n_keyframes,
            "bytes_client_fog": self.bytes_client_fog,
            "bytes_fog_cloud": self.bytes_fog_cloud,
            "bytes_cloud_fog": self.bytes_cloud_fog,
            "extra_video_bytes": self.extra_video_bytes,
            "cloud_invocations": self.cloud_invocations,
            "cloud_frames": self.cloud_frames,
            "source": self.source,
            "uncertain_count": self.uncertain_count,
            "timestamps": self.timestamps,
            "labels": [
                {
                    "frame": l.frame_index,
                    "bbox": [l.bbox.x, l.bbox.y, l.bbox.w, l.bbox.h],
                    "class": l.class_id,
                    "source": l.source,
                    "timestamp": l.timestamp,
                    "score": l.score,
                }
                for l in self.labels
            ],
        }


ProtocolTrace = list[ChunkTrace]


def iou(a: BBox, b: BBox) -> float:
    inter = a.intersection_area(b)
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0


def filter_regions(
    dets: list[Detection], frame_area: float, t: FilterThresholds
) -> tuple[list[Detection], list[BBox]]:
    """Split detections into confident labels and uncertain regions.

    Stage order is fixed: location-confidence threshold, then IoU suppression
    against the confident labels, then background-size rejection.
    """
    if frame_area <= 0:
        raise ValueError("frame_area must be > 0")
    labels = [d for d in dets if d.cls_score >= t.cls_accept]
    rest = [d for d in dets if d.cls_score < t.cls_accept]
    uncertain: list[BBox] = []
    for d in rest:
        if d.loc_score < t.loc:
            continue
        if labels and max(iou(d.bbox, l.bbox) for l in labels) > t.iou:
            continue
        if d.bbox.area / frame_area > t.background:
            continue
        uncertain.append(d.bbox)
    return labels, uncertain


def dynamic_batch(
    arrivals: list[tuple[float, Any]], cfg: BatcherConfig
) -> list[tuple[float, list[Any]]]:
    """Group timestamped items into batches: emit on max_batch or when the
    oldest queued item has waited max_wait.  FIFO within and across batches."""
    max_wait = cfg.max_wait_ms / 1000.0
    batches: list[tuple[float, list[Any]]] = []
    queue: list[tuple[float, Any]] = []
    for t, item in sorted(arrivals, key=lambda a: a[0]):
        while queue and t > queue[0][0] + max_wait:
            deadline = queue[0][0] + max_wait
            batches.append((deadline, [it for _, it in queue]))
            queue = []
        queue.append((t, item))
        if len(queue) == cfg.max_batch:
            batches.append((t, [it for _, it in queue]))
            queue = []
    if queue:
        batches.append((queue[0][0] + max_wait, [it for _, it in queue]))
    return batches


@dataclass
class SimEnv:
    """Everything a protocol run needs: models, links, learner, clock state."""

    size_model: SizeModel
    time_model: EncodeTimeModel
    detector: DetectorProfile
    synth: FeatureSynthesizer
    learner: HitlLearner
    lan: NetworkLink
    wan: NetworkLink
    seed: int
    classifier_curve: CostCurve = CostCurve(base_ms=5.0, per_item_ms=2.0)
    heartbeat: HeartbeatConfig = HeartbeatConfig()
    now: float = 0.0
    # dynamic outage control (live kill/restore); checked in addition to
    # the wan link's scheduled outage windows
    cloud_forced_down: bool = False

    def cloud_reachable(self, t: float) -> bool:
        return self.wan.is_up(t) and not self.cloud_forced_down

    def send_wan(self, nbytes: int, t: float) -> float:
        if not self.cloud_reachable(t):
            raise LinkDown(f"cloud unreachable at t={t:.3f}s")
        return self.wan.transmit(nbytes, t)

    def detect_seconds(self, n_frames: int, device: str = DeviceClass.CLOUD) -> float:
        return n_frames * self.detector.infer_ms_per_frame[device] / 1000.0


def run_chunk(
    chunk: VideoChunk, cfg: ProtocolConfig, env: SimEnv
) -> tuple[list[LabelResult], ChunkTrace]:
    """Run the high-and-low protocol for one chunk.

    Raises CloudUnavailable when the WAN is down at send time; the runtime's
    failover policy decides what happens to the chunk then.
    """
    trace = ChunkTrace(chunk_id=chunk.chunk_id, strategy="vpaas",
                       n_keyframes=chunk.n_frames)
    t = env.now
    trace.timestamps["ready"] = t

    # client -> fog: high quality over the co-located LAN (zero WAN bytes)
    trace.bytes_client_fog = chunk.encoded_bytes
    t = env.lan.transmit(chunk.encoded_bytes, t)

    low_chunk, encode_s = reencode(chunk, cfg.low_quality, DeviceClass.FOG,
                                   env.size_model, env.time_model)
    t += encode_s
    trace.timestamps["encoded"] = t

    try:
        t_cloud = env.send_wan(low_chunk.encoded_bytes, t)
    except LinkDown as exc:
        raise CloudUnavailable(str(exc)) from exc
    trace.bytes_fog_cloud = low_chunk.encoded_bytes
    trace.timestamps["cloud_arrival"] = t_cloud

    detections = cloud_detect(low_chunk, env.detector, env.seed)
    trace.cloud_invocations = 1
    trace.cloud_frames = chunk.n_frames
    t_detected = t_cloud + env.detect_seconds(chunk.n_frames)
    trace.timestamps["detected"] = t_detected

    frames_by_index = {f.frame_index: f for f in chunk.keyframes}
    frame_area = chunk.keyframes[0].width * chunk.keyframes[0].height
    cloud_labels: list[tuple[int, Detection]] = []
    uncertain: list[tuple[int, BBox]] = []
    for frame_index, dets in detections:
        labels, regions = filter_regions(dets, frame_area, cfg.thresholds)
        cloud_labels.extend((frame_index, d) for d in labels)
        uncertain.extend((frame_index, r) for r in regions)
    trace.uncertain_count = len(uncertain)

    # cloud -> fog: labels and region coordinates, a few bytes per box
    trace.bytes_cloud_fog = REGION_COORD_BYTES * (len(cloud_labels) + len(uncertain))
    t_back = env.wan.transmit(trace.bytes_cloud_fog, t_detected)
    trace.timestamps["coords_arrival"] = t_back

    results: list[LabelResult] = []
    for frame_index, det in cloud_labels:
        results.append(
            LabelResult(bbox=det.bbox, class_id=det.class_id,
                        source=LabelSource.CLOUD, timestamp=t_back,
                        score=det.cls_score, frame_index=frame_index)
        )

    # fog side: crop from HIGH quality frames, batch, classify one-vs-all
    arrivals = [(t_back, (frame_index, region)) for frame_index, region in uncertain]
    for emit_time, batch in dynamic_batch(arrivals, cfg.batcher):
        done = emit_time + env.classifier_curve.latency_ms(len(batch)) / 1000.0
        for frame_index, region in batch:
            x = extract_features(region, frames_by_index[frame_index], env.synth, env.seed)
            pred_class, scores = env.learner.predict(x)
            score = float(scores[pred_class])
            results.append(
                LabelResult(bbox=region, class_id=pred_class,
                            source=LabelSource.FOG, timestamp=done,
                            score=score, frame_index=frame_index)
            )
            if score < cfg.fog_confidence_floor:
                trace.annotation_candidates.append(
                    {"frame_index": frame_index, "region": region, "feature": x,
                     "predicted_class": pred_class, "predicted_score": score}
                )
        trace.timestamps["done"] = done
    trace.timestamps.setdefault("done", t_back)
    trace.labels = results
    return results, trace
