import numpy as np
import pytest

from dcc_segmenter.phantom.generator import body_part_scores, generate_phantom
from dcc_segmenter.phantom.specs import CoarseMask, Volume
from dcc_segmenter.preprocess.pipeline import (
    abdomen_slices,
    crop_abdomen,
    intensity_percentiles,
    percentile_normalize,
    preprocess_volume,
    window_hu,
)
from dcc_segmenter.utils.errors import PreprocessError


def column(values, stage="raw", phase="NC"):
    voxels = np.asarray(values, dtype=np.float32).reshape(-1, 1, 1)
    return Volume(voxels=voxels, labels=np.zeros(voxels.shape, np.uint8), spacing_mm=(1.0, 1.0, 1.0), phase=phase, stage=stage)


def slab(depth, stage="normalized"):
    voxels = np.tile(np.linspace(0.0, 1.0, depth, dtype=np.float32), (2, 2, 1))
    labels = np.tile(np.arange(depth, dtype=np.uint8), (2, 2, 1))
    return Volume(voxels=voxels, labels=labels, spacing_mm=(1.0, 1.0, 1.0), phase="CE", stage=stage)


def test_window_bounds():
    windowed = window_hu(column([300.0, -200.0, 100.0, 250.0, -175.0]))
    assert windowed.voxels.reshape(-1).tolist() == [250.0, -175.0, 100.0, 250.0, -175.0]
    assert windowed.stage == "windowed"


def test_window_fixed_point():
    volume = column([250.0] * 8)
    assert np.array_equal(window_hu(volume).voxels, volume.voxels)


def test_window_rejects_normalized_volume():
    with pytest.raises(PreprocessError) as excinfo:
        window_hu(column([0.5], stage="normalized"))
    assert excinfo.value.code == "preprocess.order"


def test_percentiles_use_linear_interpolation():
    assert intensity_percentiles(np.arange(101.0)) == (1.0, 99.0)


def test_normalize_arithmetic_sequence():
    normalized = percentile_normalize(column(np.arange(101.0), stage="windowed"))
    values = normalized.voxels.reshape(-1)
    assert values[50] == 0.5
    assert values[1] == 0.0
    assert values[99] == 1.0
    assert values[0] == 0.0 and values[100] == 1.0
    assert normalized.normalized


def test_normalize_is_monotone():
    rng = np.random.default_rng(0)
    raw = rng.uniform(-175, 250, size=500)
    order = np.argsort(raw)
    values = percentile_normalize(column(raw, stage="windowed")).voxels.reshape(-1)
    assert np.all(np.diff(values[order]) >= 0)


def test_constant_volume_is_degenerate():
    with pytest.raises(PreprocessError) as excinfo:
        percentile_normalize(column([40.0] * 10, stage="windowed"))
    assert excinfo.value.code == "preprocess.degenerate"


def test_normalize_requires_windowing_first():
    with pytest.raises(PreprocessError):
        percentile_normalize(column(np.arange(10.0)))


def test_crop_keeps_inclusive_range():
    scores = [-6.0, -4.0, 0.0, 5.0, 7.0]
    assert abdomen_slices(scores, 5).tolist() == [1, 2, 3]
    cropped = crop_abdomen(slab(5), scores)
    assert cropped.dims == (2, 2, 3)
    assert cropped.labels[0, 0].tolist() == [1, 2, 3]
    assert cropped.stage == "cropped"


def test_crop_all_in_range_is_identity():
    volume = slab(4)
    cropped = crop_abdomen(volume, [0.0] * 4)
    assert np.array_equal(cropped.voxels, volume.voxels)
    assert np.array_equal(cropped.labels, volume.labels)


def test_crop_errors():
    with pytest.raises(PreprocessError) as excinfo:
        crop_abdomen(slab(3), [10.0] * 3)
    assert excinfo.value.code == "preprocess.empty_crop"
    with pytest.raises(PreprocessError) as excinfo:
        crop_abdomen(slab(3), [0.0] * 2)
    assert excinfo.value.code == "preprocess.scores"
    with pytest.raises(PreprocessError):
        crop_abdomen(slab(3, stage="windowed"), [0.0] * 3)


def test_percentiles_are_taken_before_cropping():
    depth = 6
    voxels = np.zeros((4, 4, depth), dtype=np.float32)
    voxels[:, :, :3] = -175.0
    voxels[:, :, 3:] = np.linspace(0.0, 250.0, 48, dtype=np.float32).reshape(4, 4, 3)
    volume = Volume(voxels=voxels, labels=np.zeros(voxels.shape, np.uint8), spacing_mm=(1.0, 1.0, 1.0), phase="NC")
    scores = [-10.0, -10.0, -10.0, 0.0, 0.0, 0.0]

    result, coarse = preprocess_volume(volume, scores, CoarseMask(mask=np.ones(voxels.shape, np.uint8)))
    expected = crop_abdomen(percentile_normalize(window_hu(volume)), scores)
    assert np.array_equal(result.voxels, expected.voxels)
    assert coarse.mask.shape == result.dims == (4, 4, 3)

    x1, x99 = intensity_percentiles(voxels[:, :, 3:])
    crop_first = np.clip((voxels[:, :, 3:].astype(np.float64) - x1) / (x99 - x1), 0, 1).astype(np.float32)
    assert not np.array_equal(result.voxels, crop_first)


def test_phantom_percentiles_sit_at_window_bounds(tiny_spec):
    volume, oracle = generate_phantom(tiny_spec, seed=0)[0]
    windowed = window_hu(volume)
    assert intensity_percentiles(windowed.voxels) == (-175.0, 250.0)
    result, coarse = preprocess_volume(volume, body_part_scores(tiny_spec), oracle)
    assert result.dims == (32, 32, 12)
    kidney = result.voxels[result.labels == 1].mean()
    assert abs(kidney - (20.0 + 175.0) / 425.0) < 0.01
    assert np.array_equal(coarse.mask, result.labels)
