"""The four evaluation metrics, computed from protocol traces and ground truth:
normalized bandwidth, F1 accuracy, cloud cost, and freshness latency.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .coordinator import ChunkTrace
from .coordinator import iou as box_iou
from .datamodel import Frame, LabelResult, Scene


@dataclass(frozen=True)
class MatchConfig:
    iou_match_threshold: float = 0.5
    per_class: bool = True

    def __post_init__(self):
        if not 0.0 < self.iou_match_threshold < 1.0:
            raise ValueError("iou_match_threshold must lie in (0,1)")


@dataclass
class MetricsReport:
    strategy: str
    normalized_bandwidth: float
    bytes_per_second: float
    precision: float
    recall: float
    f1: float
    cloud_cost: float
    latency_p50: float
    latency_p90: float
    latency_p99: float
    unlabeled_objects: int
    chunk_series: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "normalized_bandwidth": self.normalized_bandwidth,
            "bytes_per_second": self.bytes_per_second,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "cloud_cost": self.cloud_cost,
            "latency_p50": self.latency_p50,
            "latency_p90": self.latency_p90,
            "latency_p99": self.latency_p99,
            "unlabeled_objects": self.unlabeled_objects,
            "chunk_series": self.chunk_series,
        }


def bandwidth(traces: list[ChunkTrace], duration_s: float,
              reference_bytes: int) -> tuple[float, float]:
    """(absolute WAN bytes/sec, fraction of the original-quality video bytes).

    Only uplink video payloads count, matching the chunk-sum definition; the
    few-byte coordinate returns are recorded in traces but not charged here.
    """
    if duration_s <= 0:
        raise ValueError("duration must be > 0")
    total = sum(t.wan_video_bytes for t in traces)
    normalized = total / reference_bytes if reference_bytes > 0 else 0.0
    return total / duration_s, normalized


def match_frame(labels: list[LabelResult], frame: Frame,
                cfg: MatchConfig) -> tuple[list[tuple[LabelResult, int]], int, int]:
    """Greedy confidence-descending matching of labels to ground-truth objects.

    Returns (matches as (label, object_id), false positives, false negatives).
    """
    unmatched = {o.object_id: o for o in frame.objects}
    matches = []
    fp = 0
    for label in sorted(labels, key=lambda l: -l.score):
        best_id, best_iou = None, 0.0
        for oid, obj in unmatched.items():
            if cfg.per_class and obj.class_id != label.class_id:
                continue
            v = box_iou(label.bbox, obj.bbox)
            if v >= cfg.iou_match_threshold and v > best_iou:
                best_id, best_iou = oid, v
        if best_id is None:
            fp += 1
        else:
            matches.append((label, best_id))
            del unmatched[best_id]
    return matches, fp, len(unmatched)


def f1_score(labels: list[LabelResult], frames: list[Frame],
             cfg: MatchConfig = MatchConfig()) -> tuple[float, float, float]:
    by_frame: dict[int, list[LabelResult]] = {}
    for l in labels:
        by_frame.setdefault(l.frame_index, []).append(l)
    tp = fp = fn = 0
    for frame in frames:
        matches, f_p, f_n = match_frame(by_frame.get(frame.frame_index, []), frame, cfg)
        tp += len(matches)
        fp += f_p
        fn += f_n
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def cloud_cost(traces: list[ChunkTrace], price_per_frame: float) -> float:
    """Serverless billing: price times frames processed by cloud models."""
    if price_per_frame < 0:
        raise ValueError("price must be >= 0")
    return price_per_frame * sum(t.cloud_frames for t in traces)


def _percentile(sorted_values: list[float], q: float) -> float:
    if not sorted_values:
        return 0.0
    idx = min(len(sorted_values) - 1, int(q / 100.0 * len(sorted_values)))
    return sorted_values[idx]


def freshness_latency(traces: list[ChunkTrace], scene: Scene,
                      cfg: MatchConfig = MatchConfig(),
                      frame_skip: int = 15) -> tuple[dict[str, float], int]:
    """Per labeled object: earliest matched label timestamp minus the object's
    first-appearance capture time.  Unlabeled objects are excluded and counted.
    """
    first_seen: dict[int, float] = {}
    frames_by_index = {f.frame_index: f for f in scene.frames}
    for frame in scene.frames:
        t_capture = frame.capture_time(scene.fps, frame_skip)
        for obj in frame.objects:
            first_seen.setdefault(obj.object_id, t_capture)

    first_labeled: dict[int, float] = {}
    for trace in traces:
        by_frame: dict[int, list[LabelResult]] = {}
        for l in trace.labels:
            by_frame.setdefault(l.frame_index, []).append(l)
        for frame_index, labels in by_frame.items():
            frame = frames_by_index.get(frame_index)
            if frame is None:
                continue
            matches, _, _ = match_frame(labels, frame, cfg)
            for label, oid in matches:
                if oid not in first_labeled or label.timestamp < first_labeled[oid]:
                    first_labeled[oid] = label.timestamp

    latencies = sorted(first_labeled[oid] - first_seen[oid] for oid in first_labeled)
    unlabeled = len(first_seen) - len(first_labeled)
    percentiles = {
        "p50": _percentile(latencies, 50),
        "p90": _percentile(latencies, 90),
        "p99": _percentile(latencies, 99),
    }
    return percentiles, unlabeled


def compute_report(strategy: str, traces: list[ChunkTrace], scene: Scene,
                   duration_s: float, reference_bytes: int,
                   price_per_frame: float = 1.0,
                   cfg: MatchConfig = MatchConfig(),
                   frame_skip: int = 15) -> MetricsReport:
    bps, normalized = bandwidth(traces, duration_s, reference_bytes)
    frames_by_index = {f.frame_index: f for f in scene.frames}
    all_labels = [l for t in traces for l in t.labels]
    precision, recall, f1 = f1_score(all_labels, list(scene.frames), cfg)
    percentiles, unlabeled = freshness_latency(traces, scene, cfg, frame_skip)

    series = []
    chunk_len = traces[0].n_keyframes if traces else 0
    for t in traces:
        start = t.chunk_id * chunk_len
        gt_frames = [frames_by_index[i] for i in range(start, start + t.n_keyframes)
                     if i in frames_by_index]
        _, _, chunk_f1 = f1_score(t.labels, gt_frames, cfg) if gt_frames else (0, 0, 0.0)
        series.append({
            "chunk_id": t.chunk_id,
            "f1": chunk_f1,
            "wan_video_bytes": t.wan_video_bytes,
            "cloud_frames": t.cloud_frames,
            "source": t.source,
            "done": t.timestamps.get("done", 0.0),
        })

    return MetricsReport(
        strategy=strategy,
        normalized_bandwidth=normalized,
        bytes_per_second=bps,
        precision=precision,
        recall=recall,
        f1=f1,
        cloud_cost=cloud_cost(traces, price_per_frame),
        latency_p50=percentiles["p50"],
        latency_p90=percentiles["p90"],
        latency_p99=percentiles["p99"],
        unlabeled_objects=unlabeled,
        chunk_series=series,
    )
