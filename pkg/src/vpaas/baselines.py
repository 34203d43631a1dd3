"""Simplified comparison strategies sharing the coordinator's trace schema.

These are intentionally coarse proxies (annotation-motion differencing instead
of pixel differencing, a quality-restoring transform instead of an actual
super-resolution model); the fidelity target is the qualitative ordering of
bandwidth, cost, and latency, not the original systems' code.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .coordinator import (
    REGION_COORD_BYTES,
    ChunkTrace,
    ProtocolConfig,
    SimEnv,
    filter_regions,
    run_chunk,
)
from .datamodel import BBox, LabelResult, LabelSource, QualityLevel, VideoChunk
from .quality import DeviceClass, reencode
from .runtime import CloudUnavailable, LinkDown

STRATEGIES = ("mpeg", "glimpse_like", "dds_like", "cloudseg_like", "vpaas")


@dataclass(frozen=True)
class GlimpseConfig:
    # fraction of objects that must have moved before a frame is re-sent
    diff_threshold: float = 0.3
    motion_eps_px: float = 15.0


@dataclass(frozen=True)
class CloudSegConfig:
    down_quality: QualityLevel = QualityLevel(0.35, 20)
    upscale_ratio: float = 2.0
    recovery_penalty: float = 0.1
    sr_ms_per_frame: float = 10.0


def _send_to_cloud(env: SimEnv, nbytes: int, t: float) -> float:
    try:
        return env.send_wan(nbytes, t)
    except LinkDown as exc:
        raise CloudUnavailable(str(exc)) from exc


def run_mpeg(chunk: VideoChunk, env: SimEnv, cfg: ProtocolConfig) -> tuple[list[LabelResult], ChunkTrace]:
    """Send the original-quality chunk straight to the cloud."""
    trace = ChunkTrace(chunk_id=chunk.chunk_id, strategy="mpeg",
                       n_keyframes=chunk.n_frames)
    t = env.now
    trace.timestamps["ready"] = t
    t_cloud = _send_to_cloud(env, chunk.encoded_bytes, t)
    trace.bytes_fog_cloud = chunk.encoded_bytes
    trace.timestamps["cloud_arrival"] = t_cloud
    t_detected = t_cloud + env.detect_seconds(chunk.n_frames)
    trace.cloud_invocations = 1
    trace.cloud_frames = chunk.n_frames
    trace.timestamps["detected"] = t_detected

    from .oracle_models import cloud_detect

    results = []
    for frame_index, dets in cloud_detect(chunk, env.detector, env.seed):
        for d in dets:
            if d.cls_score >= cfg.thresholds.cls_accept:
                results.append((frame_index, d))
    trace.bytes_cloud_fog = REGION_COORD_BYTES * len(results)
    t_back = env.wan.transmit(trace.bytes_cloud_fog, t_detected)
    trace.timestamps["done"] = t_back
    trace.labels = [
        LabelResult(bbox=d.bbox, class_id=d.class_id, source=LabelSource.CLOUD,
                    timestamp=t_back, score=d.cls_score, frame_index=fi)
        for fi, d in results
    ]
    return trace.labels, trace


def run_glimpse_like(chunk: VideoChunk, env: SimEnv, cfg: ProtocolConfig,
                     params: GlimpseConfig = GlimpseConfig()) -> tuple[list[LabelResult], ChunkTrace]:
    """Client-side differencing: only frames with enough annotation motion go
    to the cloud; skipped frames are answered from the last sent result."""
    trace = ChunkTrace(chunk_id=chunk.chunk_id, strategy="glimpse_like",
                       n_keyframes=chunk.n_frames)
    t = env.now
    trace.timestamps["ready"] = t

    from .oracle_models import cloud_detect

    per_frame = {fi: dets for fi, dets in cloud_detect(chunk, env.detector, env.seed)}
    frame_bytes = env.size_model.chunk_size_bytes(chunk.keyframes[:1], chunk.quality)

    last_sent = None  # (frame, confident detections)
    results: list[LabelResult] = []
    t_cursor = t
    for frame in chunk.keyframes:
        send = last_sent is None or _motion_fraction(last_sent[0], frame, params.motion_eps_px) > params.diff_threshold
        if send:
            t_cloud = _send_to_cloud(env, frame_bytes, t_cursor)
            trace.bytes_fog_cloud += frame_bytes
            trace.cloud_invocations += 1
            trace.cloud_frames += 1
            t_done = env.wan.transmit(
                REGION_COORD_BYTES * len(per_frame[frame.frame_index]),
                t_cloud + env.detect_seconds(1),
            )
            confident = [d for d in per_frame[frame.frame_index]
                         if d.cls_score >= cfg.thresholds.cls_accept]
            last_sent = (frame, confident)
            t_cursor = t_done
            for d in confident:
                results.append(LabelResult(bbox=d.bbox, class_id=d.class_id,
                                           source=LabelSource.CLOUD, timestamp=t_done,
                                           score=d.cls_score, frame_index=frame.frame_index))
        else:
            # tracking proxy: reuse the stale boxes from the last sent frame
            for d in last_sent[1]:
                results.append(LabelResult(bbox=d.bbox, class_id=d.class_id,
                                           source=LabelSource.FOG, timestamp=t_cursor,
                                           score=d.cls_score, frame_index=frame.frame_index))
    trace.timestamps["done"] = t_cursor
    trace.labels = results
    return results, trace


def _motion_fraction(prev, frame, eps: float) -> float:
    prev_boxes = {o.object_id: o.bbox for o in prev.objects}
    moved = 0
    for o in frame.objects:
        old = prev_boxes.get(o.object_id)
        if old is None or abs(o.bbox.x - old.x) + abs(o.bbox.y - old.y) > eps:
            moved += 1
    total = max(len(frame.objects), 1)
    return moved / total


def run_dds_like(chunk: VideoChunk, env: SimEnv, cfg: ProtocolConfig) -> tuple[list[LabelResult], ChunkTrace]:
    """Two-round streaming: low-quality pass, then high-quality re-sends of the
    uncertain regions for a second cloud detection."""
    trace = ChunkTrace(chunk_id=chunk.chunk_id, strategy="dds_like",
                       n_keyframes=chunk.n_frames)
    t = env.now
    trace.timestamps["ready"] = t

    low_chunk, encode_s = reencode(chunk, cfg.low_quality, DeviceClass.CLIENT,
                                   env.size_model, env.time_model)
    t += encode_s
    trace.timestamps["encoded"] = t
    t_cloud = _send_to_cloud(env, low_chunk.encoded_bytes, t)
    trace.bytes_fog_cloud = low_chunk.encoded_bytes
    trace.timestamps["cloud_arrival"] = t_cloud

    from .oracle_models import cloud_detect

    detections = cloud_detect(low_chunk, env.detector, env.seed)
    trace.cloud_invocations = 1
    trace.cloud_frames = chunk.n_frames
    t_detected = t_cloud + env.detect_seconds(chunk.n_frames)

    frame_area = chunk.keyframes[0].width * chunk.keyframes[0].height
    round1: list[tuple[int, object]] = []
    uncertain: list[tuple[int, BBox]] = []
    for frame_index, dets in detections:
        labels, regions = filter_regions(dets, frame_area, cfg.thresholds)
        round1.extend((frame_index, d) for d in labels)
        uncertain.extend((frame_index, r) for r in regions)
    trace.uncertain_count = len(uncertain)

    coord_bytes = REGION_COORD_BYTES * (len(round1) + len(uncertain))
    trace.bytes_cloud_fog = coord_bytes
    t_back = env.wan.transmit(coord_bytes, t_detected)
    results = [
        LabelResult(bbox=d.bbox, class_id=d.class_id, source=LabelSource.CLOUD,
                    timestamp=t_back, score=d.cls_score, frame_index=fi)
        for fi, d in round1
    ]

    if uncertain:
        # round 2: the client re-encodes just the uncertain regions in high
        # quality and the cloud detector runs again, restricted to them
        region_bytes = sum(env.size_model.region_bytes(r.area, cfg.high_quality)
                           for _, r in uncertain)
        trace.extra_video_bytes = region_bytes
        t2_cloud = _send_to_cloud(env, region_bytes, t_back)
        frames_with_regions = {fi for fi, _ in uncertain}
        trace.cloud_invocations = 2
        trace.cloud_frames += len(frames_with_regions)
        t2_detected = t2_cloud + env.detect_seconds(len(frames_with_regions))

        high_chunk, _ = reencode(chunk, cfg.high_quality, DeviceClass.CLOUD,
                                 env.size_model, env.time_model)
        regions_by_frame: dict[int, list[BBox]] = {}
        for fi, r in uncertain:
            regions_by_frame.setdefault(fi, []).append(r)
        round2_dets = cloud_detect(high_chunk, env.detector, env.seed)
        round2 = []
        for frame_index, dets in round2_dets:
            regions = regions_by_frame.get(frame_index, [])
            for d in dets:
                if d.cls_score >= cfg.thresholds.cls_accept and any(
                    d.bbox.intersection_area(r) > 0 for r in regions
                ):
                    round2.append((frame_index, d))
        t_done = env.wan.transmit(REGION_COORD_BYTES * len(round2), t2_detected)
        results.extend(
            LabelResult(bbox=d.bbox, class_id=d.class_id, source=LabelSource.CLOUD,
                        timestamp=t_done, score=d.cls_score, frame_index=fi)
            for fi, d in round2
        )
        trace.timestamps["done"] = t_done
    else:
        trace.timestamps["done"] = t_back

    trace.labels = results
    return results, trace


def run_cloudseg_like(chunk: VideoChunk, env: SimEnv, cfg: ProtocolConfig,
                      params: CloudSegConfig = CloudSegConfig()) -> tuple[list[LabelResult], ChunkTrace]:
    """Aggressive downscale at the client, quality recovery in the cloud; the
    recovery model is charged as a second cloud invocation per chunk."""
    trace = ChunkTrace(chunk_id=chunk.chunk_id, strategy="cloudseg_like",
                       n_keyframes=chunk.n_frames)
    t = env.now
    trace.timestamps["ready"] = t

    low_chunk, encode_s = reencode(chunk, params.down_quality, DeviceClass.CLIENT,
                                   env.size_model, env.time_model)
    t += encode_s
    trace.timestamps["encoded"] = t
    t_cloud = _send_to_cloud(env, low_chunk.encoded_bytes, t)
    trace.bytes_fog_cloud = low_chunk.encoded_bytes
    trace.timestamps["cloud_arrival"] = t_cloud

    # recovery transform restores resolution up to the upscale ratio, with a
    # penalty on the detector's resolution sensitivity
    r_eff = min(1.0, params.down_quality.resolution_scale * params.upscale_ratio)
    recovered = replace(low_chunk,
                        quality=QualityLevel(r_eff, params.down_quality.qp))
    detector = replace(
        env.detector,
        resolution_sensitivity=env.detector.resolution_sensitivity + params.recovery_penalty,
    )
    t_sr = t_cloud + chunk.n_frames * params.sr_ms_per_frame / 1000.0
    t_detected = t_sr + env.detect_seconds(chunk.n_frames)
    trace.cloud_invocations = 2  # recovery model + detector
    trace.cloud_frames = 2 * chunk.n_frames
    trace.timestamps["detected"] = t_detected

    from .oracle_models import cloud_detect

    results = []
    for frame_index, dets in cloud_detect(recovered, detector, env.seed):
        for d in dets:
            if d.cls_score >= cfg.thresholds.cls_accept:
                results.append((frame_index, d))
    trace.bytes_cloud_fog = REGION_COORD_BYTES * len(results)
    t_done = env.wan.transmit(trace.bytes_cloud_fog, t_detected)
    trace.timestamps["done"] = t_done
    trace.labels = [
        LabelResult(bbox=d.bbox, class_id=d.class_id, source=LabelSource.CLOUD,
                    timestamp=t_done, score=d.cls_score, frame_index=fi)
        for fi, d in results
    ]
    return trace.labels, trace


def run_strategy(name: str, chunk: VideoChunk, env: SimEnv, cfg: ProtocolConfig,
                 glimpse: GlimpseConfig = GlimpseConfig(),
                 cloudseg: CloudSegConfig = CloudSegConfig()):
    if name == "vpaas":
        return run_chunk(chunk, cfg, env)
    if name == "mpeg":
        return run_mpeg(chunk, env, cfg)
    if name == "glimpse_like":
        return run_glimpse_like(chunk, env, cfg, glimpse)
    if name == "dds_like":
        return run_dds_like(chunk, env, cfg)
    if name == "cloudseg_like":
        return run_cloudseg_like(chunk, env, cfg, cloudseg)
    raise ValueError(f"unknown strategy {name!r}; choose from {STRATEGIES}")
