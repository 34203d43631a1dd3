"""Parametric re-encoding model: byte size and processing time per quality.

Replaces a real encoder/decoder.  Size decays exponentially in QP (halving
every qp_halving steps) and scales with the squared resolution factor; only
ratios between qualities are meaningful, not absolute byte counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .datamodel import Frame, QualityLevel, VideoChunk


class DeviceClass:
    CLIENT = "client"
    FOG = "fog"
    CLOUD = "cloud"

    ALL = (CLIENT, FOG, CLOUD)


class UpscaleError(ValueError):
    """Raised when a re-encode would increase resolution on the coordinator path."""


@dataclass(frozen=True)
class SizeModel:
    base_bytes_per_pixel: float = 0.1
    qp_ref: int = 26
    qp_halving: int = 6

    def __post_init__(self):
        if self.base_bytes_per_pixel <= 0:
            raise ValueError("base_bytes_per_pixel must be > 0")
        if self.qp_halving <= 0:
            raise ValueError("qp_halving must be > 0")

    def pixel_bytes(self, q: QualityLevel) -> float:
        """Encoded bytes per source pixel at quality q."""
        decay = 2.0 ** (-(q.qp - self.qp_ref) / self.qp_halving)
        return self.base_bytes_per_pixel * q.resolution_scale**2 * decay

    def chunk_size_bytes(self, frames: tuple[Frame, ...] | list[Frame], q: QualityLevel) -> int:
        if not frames:
            raise ValueError("chunk_size_bytes requires a non-empty frame list")
        pixels = frames[0].width * frames[0].height
        return round(len(frames) * pixels * self.pixel_bytes(q))

    def region_bytes(self, area_pixels: float, q: QualityLevel) -> int:
        """Encoded size of a cropped region of the given source-pixel area."""
        return round(area_pixels * self.pixel_bytes(q))


def chunk_size_bytes(frames, q: QualityLevel, m: SizeModel) -> int:
    return m.chunk_size_bytes(frames, q)


@dataclass(frozen=True)
class EncodeTimeModel:
    """Simulated re-encode cost in seconds per megapixel, per device class."""

    seconds_per_megapixel: dict = field(
        default_factory=lambda: {
            DeviceClass.CLIENT: 0.050,
            DeviceClass.FOG: 0.004,
            DeviceClass.CLOUD: 0.002,
        }
    )

    def __post_init__(self):
        costs = self.seconds_per_megapixel
        if not costs[DeviceClass.CLIENT] > costs[DeviceClass.FOG] >= costs[DeviceClass.CLOUD]:
            raise ValueError("encode cost must satisfy client > fog >= cloud")

    def encode_seconds(self, frames, device: str) -> float:
        megapixels = len(frames) * frames[0].width * frames[0].height / 1e6
        return megapixels * self.seconds_per_megapixel[device]


def reencode(
    chunk: VideoChunk,
    target: QualityLevel,
    device: str,
    size_model: SizeModel,
    time_model: EncodeTimeModel,
    allow_upscale: bool = False,
) -> tuple[VideoChunk, float]:
    """Re-encode a chunk to the target quality; returns (chunk', elapsed seconds).

    Frame content and annotations are untouched; only quality metadata and the
    byte size change.  Elapsed time is charged even when target == current.
    """
    if target.resolution_scale > chunk.quality.resolution_scale and not allow_upscale:
        raise UpscaleError(
            f"cannot upscale r={chunk.quality.resolution_scale} to r={target.resolution_scale}"
        )
    out = replace(
        chunk,
        quality=target,
        encoded_bytes=size_model.chunk_size_bytes(chunk.keyframes, target),
    )
    return out, time_model.encode_seconds(chunk.keyframes, device)
