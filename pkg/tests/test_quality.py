import pytest

from vpaas.datamodel import QualityLevel
from vpaas.quality import (
    DeviceClass,
    EncodeTimeModel,
    SizeModel,
    UpscaleError,
    reencode,
)

from .conftest import ORIGINAL


def test_chunk_size_reference_values(small_chunks, size_model):
    # 15 frames of 1280x720 at 0.1 bytes/pixel
    frames = small_chunks[0].keyframes
    assert size_model.chunk_size_bytes(frames, QualityLevel(1.0, 26)) == 1_382_400
    assert size_model.chunk_size_bytes(frames, QualityLevel(0.8, 36)) == 278_674
    assert size_model.chunk_size_bytes(frames, QualityLevel(0.8, 26)) == 884_736
    assert size_model.chunk_size_bytes(frames, QualityLevel(0.35, 20)) == 338_688


def test_six_qp_steps_halve_size(size_model):
    for qp in (26, 30, 38):
        a = size_model.pixel_bytes(QualityLevel(1.0, qp))
        b = size_model.pixel_bytes(QualityLevel(1.0, qp + 6))
        assert b == pytest.approx(a / 2, rel=1e-12)


def test_size_scales_with_squared_resolution(size_model):
    full = size_model.pixel_bytes(QualityLevel(1.0, 26))
    half = size_model.pixel_bytes(QualityLevel(0.5, 26))
    assert half == pytest.approx(full / 4, rel=1e-12)


def test_region_bytes(size_model):
    # 100x100 region at full quality: 10000 px * 0.1 B/px
    assert size_model.region_bytes(10_000, QualityLevel(1.0, 26)) == 1000


def test_size_model_validation():
    with pytest.raises(ValueError):
        SizeModel(base_bytes_per_pixel=0)
    with pytest.raises(ValueError):
        SizeModel(qp_halving=0)
    with pytest.raises(ValueError):
        SizeModel().chunk_size_bytes([], ORIGINAL)


def test_encode_time_per_device(small_chunks):
    frames = small_chunks[0].keyframes
    model = EncodeTimeModel()
    # 15 * 1280*720 px = 13.824 MP
    assert model.encode_seconds(frames, DeviceClass.FOG) == pytest.approx(
        13.824 * 0.004)
    assert model.encode_seconds(frames, DeviceClass.CLIENT) > model.encode_seconds(
        frames, DeviceClass.FOG)


def test_encode_time_ordering_enforced():
    with pytest.raises(ValueError):
        EncodeTimeModel(seconds_per_megapixel={
            DeviceClass.CLIENT: 0.001,
            DeviceClass.FOG: 0.004,
            DeviceClass.CLOUD: 0.002,
        })


def test_reencode_downscale(small_chunks, size_model):
    chunk = small_chunks[0]
    low, elapsed = reencode(chunk, QualityLevel(0.8, 36), DeviceClass.FOG,
                            size_model, EncodeTimeModel())
    assert low.encoded_bytes == 278_674
    assert low.quality == QualityLevel(0.8, 36)
    assert low.keyframes == chunk.keyframes
    assert elapsed > 0


def test_reencode_refuses_upscale(small_chunks, size_model):
    chunk, _ = reencode(small_chunks[0], QualityLevel(0.5, 26), DeviceClass.FOG,
                        size_model, EncodeTimeModel())
    with pytest.raises(UpscaleError):
        reencode(chunk, QualityLevel(0.9, 26), DeviceClass.CLOUD,
                 size_model, EncodeTimeModel())
    up, _ = reencode(chunk, QualityLevel(0.9, 26), DeviceClass.CLOUD,
                     size_model, EncodeTimeModel(), allow_upscale=True)
    assert up.quality.resolution_scale == 0.9
