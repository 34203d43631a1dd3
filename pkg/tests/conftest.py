import pytest

from vpaas.datamodel import (
    BBox,
    DatasetSpec,
    Frame,
    GroundTruthObject,
    QualityLevel,
    Scene,
    chunk_scene,
    generate_dataset,
)
from vpaas.experiment import ExperimentConfig, build_env
from vpaas.quality import SizeModel

ORIGINAL = QualityLevel(1.0, 26)


def make_frame(frame_index=0, objects=(), width=1280, height=720):
    return Frame(frame_index=frame_index, width=width, height=height,
                 objects=tuple(objects))


def make_object(object_id=0, class_id=0, bbox=None, difficulty=0.05, drift_phase=0.0):
    return GroundTruthObject(
        object_id=object_id, class_id=class_id,
        bbox=bbox or BBox(100, 100, 120, 120),
        difficulty=difficulty, drift_phase=drift_phase,
    )


@pytest.fixture
def size_model():
    return SizeModel()


@pytest.fixture
def small_scene():
    return generate_dataset(DatasetSpec(num_frames=30, num_classes=4), seed=11)[0]


@pytest.fixture
def small_chunks(small_scene, size_model):
    return chunk_scene(small_scene, ORIGINAL, size_model)


@pytest.fixture
def sim_env(small_scene):
    cfg = ExperimentConfig(dataset=DatasetSpec(num_frames=30, num_classes=4), seed=11)
    return build_env(cfg)
