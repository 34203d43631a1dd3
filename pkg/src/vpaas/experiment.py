"""Experiment lifecycle: config validation, the chunk-by-chunk engine with
failover and human-in-the-loop wiring, and strategy comparison runs.

The engine walks chunks in virtual time.  Identical (config, seed) pairs
replay to byte-identical traces and metrics.
"""

from __future__ import annotations

import json
import time as wallclock
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .baselines import CloudSegConfig, GlimpseConfig, run_strategy
from .coordinator import ChunkTrace, ProtocolConfig, SimEnv, FilterThresholds, BatcherConfig
from .datamodel import (
    DEFAULT_FRAME_SKIP,
    DEFAULT_N_KEYFRAMES,
    DatasetSpec,
    LabelResult,
    LabelSource,
    QualityLevel,
    Scene,
    VideoChunk,
    chunk_scene,
    generate_dataset,
)
from .hitl_learning import BudgetExhausted, HitlLearner, LearnerState
from .metrics import MatchConfig, MetricsReport, compute_report
from .oracle_models import (
    CostCurve,
    DetectorProfile,
    FeatureSynthesizer,
    backup_detect,
    backup_profile,
    dominant_object,
)
from .quality import DeviceClass, EncodeTimeModel, SizeModel
from .runtime import CloudUnavailable, HeartbeatConfig, LinkDown, NetworkLink


class ConfigError(ValueError):
    def __init__(self, errors: list[dict]):
        self.errors = errors
        super().__init__("; ".join(f"{e['field']}: {e['message']}" for e in errors))


@dataclass(frozen=True)
class HitlConfig:
    enabled: bool = False
    tau: int = 200
    eta: float = 0.05
    ridge: float = 0.1
    sign_mode: str = "descent"
    scripted_annotator: bool = True


@dataclass(frozen=True)
class NetworkConfig:
    wan_bandwidth_mbps: float = 15.0
    wan_delay_ms: float = 20.0
    lan_bandwidth_gbps: float = 10.0
    outages: tuple[tuple[float, float], ...] = ()


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSpec = DatasetSpec()
    strategy: str = "vpaas"
    protocol: ProtocolConfig = ProtocolConfig()
    detector: DetectorProfile = DetectorProfile()
    size_model: SizeModel = SizeModel()
    time_model: EncodeTimeModel = EncodeTimeModel()
    network: NetworkConfig = NetworkConfig()
    hitl: HitlConfig = HitlConfig()
    glimpse: GlimpseConfig = GlimpseConfig()
    cloudseg: CloudSegConfig = CloudSegConfig()
    heartbeat: HeartbeatConfig = HeartbeatConfig()
    match: MatchConfig = MatchConfig()
    feature_dim: int = 64
    noise_sigma: float = 0.1
    drift_scale: float = 1.0
    synth_seed: int = 7
    backup_accept: float = 0.6
    price_per_frame: float = 1.0
    n_keyframes: int = DEFAULT_N_KEYFRAMES
    frame_skip: int = DEFAULT_FRAME_SKIP
    seed: int = 0
    mode: str = "batch"

    ORIGINAL_QUALITY = QualityLevel(1.0, 26)

    @property
    def chunk_period_s(self) -> float:
        return self.n_keyframes * self.frame_skip / self.dataset.fps


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build a config from plain JSON, collecting field-level errors."""
    errors: list[dict] = []

    def build(factory, key, **kwargs):
        try:
            return factory(**kwargs)
        except (TypeError, ValueError) as exc:
            errors.append({"field": key, "message": str(exc)})
            return None

    def sub(key, factory, transform=None):
        section = dict(raw.get(key) or {})
        if transform:
            section = transform(section)
        return build(factory, key, **section)

    def quality(d):
        return QualityLevel(d["resolution_scale"], d["qp"])

    def protocol_transform(d):
        out = {}
        if "low_quality" in d:
            out["low_quality"] = quality(d["low_quality"])
        if "high_quality" in d:
            out["high_quality"] = quality(d["high_quality"])
        if "thresholds" in d:
            out["thresholds"] = FilterThresholds(**d["thresholds"])
        if "batcher" in d:
            out["batcher"] = BatcherConfig(**d["batcher"])
        if "fog_confidence_floor" in d:
            out["fog_confidence_floor"] = d["fog_confidence_floor"]
        return out

    def network_transform(d):
        if "outages" in d:
            d["outages"] = tuple(tuple(o) for o in d["outages"])
        return d

    def dataset_transform(d):
        if "difficulty_range" in d:
            d["difficulty_range"] = tuple(d["difficulty_range"])
        return d

    kwargs = {}
    known = {f for f in ExperimentConfig.__dataclass_fields__}
    sections = {
        "dataset": (DatasetSpec, dataset_transform),
        "protocol": (ProtocolConfig, protocol_transform),
        "detector": (DetectorProfile, None),
        "size_model": (SizeModel, None),
        "time_model": (EncodeTimeModel, None),
        "network": (NetworkConfig, network_transform),
        "hitl": (HitlConfig, None),
        "glimpse": (GlimpseConfig, None),
        "cloudseg": (CloudSegConfig, None),
        "heartbeat": (HeartbeatConfig, None),
        "match": (MatchConfig, None),
    }
    for key, value in raw.items():
        if key not in known:
            errors.append({"field": key, "message": "unknown field"})
            continue
        if key in sections:
            factory, transform = sections[key]
            built = sub(key, factory, transform)
            if built is not None:
                kwargs[key] = built
        else:
            kwargs[key] = value

    if not errors:
        try:
            cfg = ExperimentConfig(**kwargs)
        except (TypeError, ValueError) as exc:
            errors.append({"field": "config", "message": str(exc)})
    if not errors:
        from .baselines import STRATEGIES

        if cfg.strategy not in STRATEGIES:
            errors.append({"field": "strategy",
                           "message": f"must be one of {list(STRATEGIES)}"})
        if cfg.mode not in ("batch", "live"):
            errors.append({"field": "mode", "message": "must be batch or live"})
    if errors:
        raise ConfigError(errors)
    return cfg


def build_env(cfg: ExperimentConfig, learner: Optional[HitlLearner] = None) -> SimEnv:
    synth = FeatureSynthesizer(
        num_classes=cfg.dataset.num_classes,
        dim=cfg.feature_dim,
        noise_sigma=cfg.noise_sigma,
        drift_scale=cfg.drift_scale,
        seed=cfg.synth_seed,
    )
    if learner is None:
        learner = HitlLearner(
            LearnerState.from_prototypes(
                synth.prototypes,
                eta=cfg.hitl.eta,
                tau=cfg.hitl.tau,
                ridge=cfg.hitl.ridge,
                sign_mode=cfg.hitl.sign_mode,
            )
        )
    return SimEnv(
        size_model=cfg.size_model,
        time_model=cfg.time_model,
        detector=cfg.detector,
        synth=synth,
        learner=learner,
        lan=NetworkLink(bandwidth_bps=cfg.network.lan_bandwidth_gbps * 1e9),
        wan=NetworkLink(
            bandwidth_bps=cfg.network.wan_bandwidth_mbps * 1e6,
            propagation_delay_s=cfg.network.wan_delay_ms / 1000.0,
            outages=cfg.network.outages,
        ),
        seed=cfg.seed,
        heartbeat=cfg.heartbeat,
    )


@dataclass
class ExperimentResult:
    report: MetricsReport
    traces: list[ChunkTrace]
    scene: Scene
    learner: HitlLearner
    reference_bytes: int
    duration_s: float

    def traces_jsonl(self) -> str:
        return "\n".join(json.dumps(t.to_record(), sort_keys=True) for t in self.traces)

    def metrics_json(self) -> str:
        return json.dumps(self.report.to_dict(), sort_keys=True, indent=2)


class ExperimentEngine:
    """Runs one strategy over one scene, chunk by chunk in virtual time.

    Live mode paces chunks against the wall clock and exposes control hooks;
    batch mode runs to completion synchronously with identical results.
    """

    def __init__(self, cfg: ExperimentConfig, scenes: Optional[list[Scene]] = None):
        self.cfg = cfg
        if scenes is None:
            scenes = generate_dataset(cfg.dataset, cfg.seed)
        self.scene = scenes[0]
        self.chunks = chunk_scene(
            self.scene, ExperimentConfig.ORIGINAL_QUALITY, cfg.size_model, cfg.n_keyframes
        )
        self.env = build_env(cfg)
        self.traces: list[ChunkTrace] = []
        self.forced_down_at: Optional[float] = None
        self.sim_now = 0.0
        self.paused = False
        self._stop = False

    # -- control surface (live mode) ------------------------------------
    def kill_cloud(self):
        if not self.env.cloud_forced_down:
            self.env.cloud_forced_down = True
            self.forced_down_at = self.sim_now

    def restore_cloud(self):
        self.env.cloud_forced_down = False
        self.forced_down_at = None

    def stop(self):
        self._stop = True

    # -- main loop -------------------------------------------------------
    def chunk_ready_time(self, chunk: VideoChunk) -> float:
        last = chunk.keyframes[-1]
        return last.capture_time(self.scene.fps, self.cfg.frame_skip)

    def run(self, on_chunk: Optional[Callable[[ChunkTrace], None]] = None,
            pacing: Optional[float] = None,
            wait_if_paused: Optional[Callable[[], None]] = None) -> ExperimentResult:
        cfg = self.cfg
        prev_ready = 0.0
        for chunk in self.chunks:
            if self._stop:
                break
            t_ready = self.chunk_ready_time(chunk)
            if pacing:
                wallclock.sleep(max(0.0, (t_ready - prev_ready) / pacing))
            if wait_if_paused:
                wait_if_paused()
            prev_ready = t_ready
            self.sim_now = t_ready
            self.env.now = t_ready
            trace = self._run_one(chunk)
            self.traces.append(trace)
            if cfg.hitl.enabled:
                self._enqueue_candidates(trace)
            if on_chunk:
                on_chunk(trace)
        return self._result()

    def _run_one(self, chunk: VideoChunk) -> ChunkTrace:
        try:
            _, trace = run_strategy(
                self.cfg.strategy, chunk, self.env, self.cfg.protocol,
                glimpse=self.cfg.glimpse, cloudseg=self.cfg.cloudseg,
            )
            return trace
        except (CloudUnavailable, LinkDown):
            return self._run_backup(chunk)

    def _outage_detection_time(self, t: float) -> float:
        delay = self.cfg.heartbeat.detection_delay()
        for start, end in self.env.wan.outages:
            if start <= t < end:
                return start + delay
        if self.forced_down_at is not None:
            return self.forced_down_at + delay
        return t + delay

    def _run_backup(self, chunk: VideoChunk) -> ChunkTrace:
        """Fog fallback: cached chunk goes through the small backup detector
        once the heartbeat monitor has declared the cloud unreachable."""
        cfg = self.cfg
        t_ready = self.env.now
        t_start = max(t_ready, self._outage_detection_time(t_ready))
        trace = ChunkTrace(chunk_id=chunk.chunk_id, strategy=cfg.strategy,
                           n_keyframes=chunk.n_frames, source=LabelSource.BACKUP)
        trace.bytes_client_fog = chunk.encoded_bytes
        trace.timestamps["ready"] = t_ready
        trace.timestamps["backup_start"] = t_start
        backup = backup_profile(cfg.detector)
        infer_s = chunk.n_frames * backup.infer_ms_per_frame[DeviceClass.FOG] / 1000.0
        t_done = t_start + infer_s
        trace.timestamps["done"] = t_done
        labels = []
        for frame_index, dets in backup_detect(chunk, cfg.detector, cfg.seed):
            for d in dets:
                if d.cls_score >= cfg.backup_accept:
                    labels.append(LabelResult(
                        bbox=d.bbox, class_id=d.class_id, source=LabelSource.BACKUP,
                        timestamp=t_done, score=d.cls_score, frame_index=frame_index))
        trace.labels = labels
        return trace

    def _enqueue_candidates(self, trace: ChunkTrace):
        """Queue low-confidence fog predictions for human annotation; in
        scripted mode an automatic annotator labels them from ground truth."""
        frames_by_index = {f.frame_index: f for f in self.scene.frames}
        learner = self.env.learner
        scripted = self.cfg.hitl.scripted_annotator
        for cand in trace.annotation_candidates:
            try:
                task = learner.enqueue_for_annotation(
                    cand["frame_index"], cand["region"], cand["feature"],
                    cand["predicted_class"], cand["predicted_score"])
            except BudgetExhausted:
                return
            if not scripted:
                continue
            obj = dominant_object(cand["region"], frames_by_index[cand["frame_index"]])
            learner.queue.claim(task.task_id)
            if obj is None:
                continue  # background proposal; the annotator rejects it
            learner.submit_label(task.task_id, obj.class_id,
                                 timestamp=trace.timestamps.get("done", 0.0))

    def _result(self) -> ExperimentResult:
        duration = len(self.scene.frames) * self.cfg.frame_skip / self.scene.fps
        reference_bytes = sum(c.encoded_bytes for c in self.chunks
                              if any(t.chunk_id == c.chunk_id for t in self.traces))
        report = compute_report(
            self.cfg.strategy, self.traces, self.scene, duration,
            reference_bytes, self.cfg.price_per_frame, self.cfg.match,
            self.cfg.frame_skip,
        )
        return ExperimentResult(
            report=report, traces=self.traces, scene=self.scene,
            learner=self.env.learner, reference_bytes=reference_bytes,
            duration_s=duration,
        )


def run_experiment(cfg: ExperimentConfig,
                   scenes: Optional[list[Scene]] = None) -> ExperimentResult:
    return ExperimentEngine(cfg, scenes).run()


def run_compare(cfg: ExperimentConfig,
                strategies: Optional[list[str]] = None,
                scenes: Optional[list[Scene]] = None) -> dict[str, ExperimentResult]:
    """Run several strategies over the identical chunk stream."""
    from .baselines import STRATEGIES

    if scenes is None:
        scenes = generate_dataset(cfg.dataset, cfg.seed)
    results = {}
    for name in strategies or STRATEGIES:
        results[name] = run_experiment(replace(cfg, strategy=name), scenes)
    return results
