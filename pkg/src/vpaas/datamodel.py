"""Core domain types and the synthetic annotated-video dataset format.

Frames carry ground-truth metadata instead of pixels: "cropping" a region
means selecting the objects that intersect it.  Everything here is immutable
after load and safe to share across concurrently running experiments.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

DEFAULT_N_KEYFRAMES = 15
DEFAULT_FRAME_SKIP = 15


class DatasetError(ValueError):
    """Raised for malformed dataset files or invariant violations."""


@dataclass(frozen=True)
class QualityLevel:
    """A (resolution scale, quantization parameter) pair."""

    resolution_scale: float
    qp: int

    def __post_init__(self):
        if not 0.0 < self.resolution_scale <= 1.0:
            raise DatasetError(
                f"resolution_scale out of range (0,1]: {self.resolution_scale}"
            )
        if not 0 <= self.qp <= 51:
            raise DatasetError(f"qp out of range [0,51]: {self.qp}")


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box, pixel units, top-left origin."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise DatasetError(f"bbox with non-positive size: w={self.w} h={self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h

    def intersection_area(self, other: "BBox") -> float:
        ix = min(self.x + self.w, other.x + other.w) - max(self.x, other.x)
        iy = min(self.y + self.h, other.y + other.h) - max(self.y, other.y)
        if ix <= 0 or iy <= 0:
            return 0.0
        return ix * iy

    def clamped(self, width: float, height: float) -> "BBox":
        x = min(max(self.x, 0.0), width - 1.0)
        y = min(max(self.y, 0.0), height - 1.0)
        w = min(self.w, width - x)
        h = min(self.h, height - y)
        return BBox(x, y, max(w, 1.0), max(h, 1.0))


@dataclass(frozen=True)
class GroundTruthObject:
    object_id: int
    class_id: int
    bbox: BBox
    difficulty: float
    drift_phase: float

    def __post_init__(self):
        if not 0.0 <= self.difficulty <= 1.0:
            raise DatasetError(f"difficulty out of range [0,1]: {self.difficulty}")


@dataclass(frozen=True)
class Frame:
    frame_index: int
    width: int
    height: int
    objects: tuple[GroundTruthObject, ...]

    def capture_time(self, fps: float, frame_skip: int = DEFAULT_FRAME_SKIP) -> float:
        """Simulated seconds at which this keyframe was captured."""
        return self.frame_index * frame_skip / fps


@dataclass(frozen=True)
class Scene:
    scene_id: int
    width: int
    height: int
    num_classes: int
    fps: float
    frames: tuple[Frame, ...]

    def __post_init__(self):
        indices = [f.frame_index for f in self.frames]
        if indices != sorted(indices) or len(set(indices)) != len(indices):
            raise DatasetError("frame_index must be strictly increasing within a scene")


@dataclass(frozen=True)
class VideoChunk:
    chunk_id: int
    keyframes: tuple[Frame, ...]
    quality: QualityLevel
    encoded_bytes: int

    @property
    def n_frames(self) -> int:
        return len(self.keyframes)


class LabelSource:
    CLOUD = "cloud"
    FOG = "fog"
    BACKUP = "backup"
    HUMAN = "human"


@dataclass(frozen=True)
class Detection:
    """Cloud/backup model output: a box plus location and class confidences."""

    bbox: BBox
    class_id: Optional[int]
    loc_score: float
    cls_score: float

    def __post_init__(self):
        if not (0.0 <= self.loc_score <= 1.0 and 0.0 <= self.cls_score <= 1.0):
            raise DatasetError("detection scores must lie in [0,1]")
        if (self.class_id is not None) != (self.cls_score > 0):
            raise DatasetError("class_id must be present iff cls_score > 0")


@dataclass(frozen=True)
class LabelResult:
    bbox: BBox
    class_id: int
    source: str
    timestamp: float
    score: float = 1.0
    frame_index: int = -1


@dataclass(frozen=True)
class DatasetSpec:
    """Parameters for synthetic dataset generation."""

    num_frames: int = 150
    width: int = 1280
    height: int = 720
    num_classes: int = 10
    fps: float = 30.0
    min_objects: int = 3
    max_objects: int = 7
    drift_rate: float = 0.0
    difficulty_range: tuple[float, float] = (0.0, 0.1)
    motion_amplitude: float = 120.0
    num_scenes: int = 1

    def __post_init__(self):
        if self.num_classes < 2:
            raise DatasetError("one-vs-all needs at least 2 classes")
        if self.min_objects > self.max_objects:
            raise DatasetError("min_objects > max_objects")


def generate_dataset(spec: DatasetSpec, seed: int) -> list[Scene]:
    """Deterministically synthesize scenes with smoothly moving objects.

    drift_phase grows linearly with frame_index at spec.drift_rate.
    """
    rng = np.random.default_rng(seed)
    scenes = []
    next_object_id = 0
    for scene_id in range(spec.num_scenes):
        n_objects = int(rng.integers(spec.min_objects, spec.max_objects + 1))
        objects = []
        for _ in range(n_objects):
            w = float(rng.uniform(60, 180))
            h = float(rng.uniform(60, 180))
            cx = float(rng.uniform(w, spec.width - w))
            cy = float(rng.uniform(h, spec.height - h))
            # ~20% of objects enter mid-scene so freshness has varied anchors.
            appear = (
                int(rng.integers(0, max(1, int(spec.num_frames * 0.3))))
                if rng.random() < 0.2
                else 0
            )
            objects.append(
                dict(
                    object_id=next_object_id,
                    class_id=int(rng.integers(0, spec.num_classes)),
                    w=w,
                    h=h,
                    cx=cx,
                    cy=cy,
                    phase_x=float(rng.uniform(0, 2 * math.pi)),
                    phase_y=float(rng.uniform(0, 2 * math.pi)),
                    period=float(rng.uniform(40, 120)),
                    difficulty=float(rng.uniform(*spec.difficulty_range)),
                    appear=appear,
                )
            )
            next_object_id += 1
        frames = []
        for i in range(spec.num_frames):
            frame_objects = []
            for o in objects:
                if i < o["appear"]:
                    continue
                dx = spec.motion_amplitude * math.sin(
                    2 * math.pi * i / o["period"] + o["phase_x"]
                )
                dy = spec.motion_amplitude * 0.5 * math.sin(
                    2 * math.pi * i / o["period"] + o["phase_y"]
                )
                bbox = BBox(
                    o["cx"] + dx - o["w"] / 2, o["cy"] + dy - o["h"] / 2, o["w"], o["h"]
                ).clamped(spec.width, spec.height)
                frame_objects.append(
                    GroundTruthObject(
                        object_id=o["object_id"],
                        class_id=o["class_id"],
                        bbox=bbox,
                        difficulty=o["difficulty"],
                        drift_phase=spec.drift_rate * i,
                    )
                )
            frames.append(
                Frame(
                    frame_index=i,
                    width=spec.width,
                    height=spec.height,
                    objects=tuple(frame_objects),
                )
            )
        scenes.append(
            Scene(
                scene_id=scene_id,
                width=spec.width,
                height=spec.height,
                num_classes=spec.num_classes,
                fps=spec.fps,
                frames=tuple(frames),
            )
        )
    return scenes


def save_dataset(scenes: list[Scene], path: str | Path) -> None:
    """Write scenes as JSON-lines (header line, then one line per frame)."""
    path = Path(path)
    with path.open("w") as fh:
        for scene in scenes:
            header = {
                "version": 1,
                "width": scene.width,
                "height": scene.height,
                "classes": scene.num_classes,
                "fps": scene.fps,
            }
            fh.write(json.dumps(header) + "\n")
            for frame in scene.frames:
                record = {
                    "frame": frame.frame_index,
                    "objects": [
                        {
                            "id": o.object_id,
                            "class": o.class_id,
                            "bbox": [o.bbox.x, o.bbox.y, o.bbox.w, o.bbox.h],
                            "difficulty": o.difficulty,
                            "drift_phase": o.drift_phase,
                        }
                        for o in frame.objects
                    ],
                }
                fh.write(json.dumps(record) + "\n")


def load_dataset(path: str | Path) -> list[Scene]:
    """Parse a JSON-lines dataset file; errors carry the offending line number."""
    path = Path(path)
    scenes: list[Scene] = []
    header = None
    frames: list[Frame] = []
    scene_id = 0

    def flush():
        nonlocal scene_id, frames, header
        if header is not None:
            scenes.append(
                Scene(
                    scene_id=scene_id,
                    width=header["width"],
                    height=header["height"],
                    num_classes=header["classes"],
                    fps=header["fps"],
                    frames=tuple(frames),
                )
            )
            scene_id += 1
        frames = []

    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"line {lineno}: invalid JSON: {exc}") from exc
            try:
                if "version" in record:
                    flush()
                    header = record
                    continue
                if header is None:
                    raise DatasetError("frame record before header")
                objects = tuple(
                    GroundTruthObject(
                        object_id=o["id"],
                        class_id=_check_class(o["class"], header["classes"]),
                        bbox=BBox(*o["bbox"]),
                        difficulty=o["difficulty"],
                        drift_phase=o["drift_phase"],
                    )
                    for o in record["objects"]
                )
                frames.append(
                    Frame(
                        frame_index=record["frame"],
                        width=header["width"],
                        height=header["height"],
                        objects=objects,
                    )
                )
            except DatasetError as exc:
                raise DatasetError(f"line {lineno}: {exc}") from None
            except (KeyError, TypeError) as exc:
                raise DatasetError(f"line {lineno}: missing field {exc}") from None
    flush()
    return scenes


def _check_class(class_id: int, num_classes: int) -> int:
    if not 0 <= class_id < num_classes:
        raise DatasetError(f"class_id {class_id} outside [0,{num_classes})")
    return class_id


def chunk_scene(
    scene: Scene,
    quality: QualityLevel,
    size_model,
    n_keyframes: int = DEFAULT_N_KEYFRAMES,
) -> list[VideoChunk]:
    """Pack a scene's keyframes into chunks of n_keyframes (last may be short)."""
    chunks = []
    for start in range(0, len(scene.frames), n_keyframes):
        keyframes = scene.frames[start : start + n_keyframes]
        chunks.append(
            VideoChunk(
                chunk_id=len(chunks),
                keyframes=keyframes,
                quality=quality,
                encoded_bytes=size_model.chunk_size_bytes(keyframes, quality),
            )
        )
    return chunks
