import numpy as np
import pytest

from dcc_segmenter.phantom.generator import body_part_scores, generate_phantom
from dcc_segmenter.phantom.specs import CoarseMask, Volume
from dcc_segmenter.preprocess.pipeline import preprocess_volume
from dcc_segmenter.sampler import augment as augment_module
from dcc_segmenter.sampler.augment import AugParams, apply_augmentation, augment
from dcc_segmenter.sampler.minibatch import build_minibatch, pairing_for, to_model_input
from dcc_segmenter.sampler.patches import Patch, PatchSource, sample_patch, window_start
from dcc_segmenter.utils.errors import SamplingError


def normalized_volume(dims=(24, 24, 4)):
    rng = np.random.default_rng(0)
    voxels = rng.uniform(0.0, 1.0, size=dims).astype(np.float32)
    return Volume(voxels=voxels, labels=np.zeros(dims, np.uint8), spacing_mm=(1.0, 1.0, 1.0), phase="CE", stage="normalized")


def point_patch(size, point, image=None):
    attention = np.zeros((size, size), np.uint8)
    attention[point] = 1
    return Patch(
        image=np.zeros((size, size)) if image is None else image,
        gt=attention.copy(),
        attention=attention,
        organ_class=1,
        phase="NC",
        source=PatchSource(slice_index=0, center=point),
    )


@pytest.fixture
def prepared(tiny_spec):
    volume, oracle = generate_phantom(tiny_spec, seed=0)[0]
    return preprocess_volume(volume, body_part_scores(tiny_spec), oracle)


def test_single_voxel_organ_is_always_the_center():
    volume = normalized_volume()
    mask = np.zeros(volume.dims, np.uint8)
    mask[20, 3, 2] = 5
    coarse = CoarseMask(mask=mask)
    rng = np.random.default_rng(1)
    for _ in range(5):
        patch = sample_patch(volume, coarse, 5, 16, rng)
        assert patch.source.slice_index == 2
        assert patch.source.center == (20, 3)
        assert patch.attention.sum() == 1
        assert patch.attention[20 - window_start(20, 16, 24), 3 - window_start(3, 16, 24)] == 1


def test_attention_is_coarse_mask_within_window(prepared):
    volume, coarse = prepared
    patch = sample_patch(volume, coarse, 2, 16, np.random.default_rng(3))
    x0 = window_start(patch.source.center[0], 16, volume.dims[0])
    y0 = window_start(patch.source.center[1], 16, volume.dims[1])
    z = patch.source.slice_index
    assert np.array_equal(patch.attention, (coarse.mask[x0 : x0 + 16, y0 : y0 + 16, z] == 2).astype(np.uint8))
    assert np.array_equal(patch.gt, (volume.labels[x0 : x0 + 16, y0 : y0 + 16, z] == 2).astype(np.uint8))
    assert np.array_equal(patch.image, volume.voxels[x0 : x0 + 16, y0 : y0 + 16, z].astype(np.float64))


def test_two_voxel_organ_is_sampled_uniformly():
    volume = normalized_volume()
    mask = np.zeros(volume.dims, np.uint8)
    mask[5, 5, 1] = 1
    mask[18, 18, 3] = 1
    coarse = CoarseMask(mask=mask)
    rng = np.random.default_rng(7)
    hits = sum(sample_patch(volume, coarse, 1, 16, rng).source.slice_index == 1 for _ in range(1000))
    assert abs(hits / 1000 - 0.5) <= 0.05


def test_sample_patch_errors():
    volume = normalized_volume()
    coarse = CoarseMask(mask=np.zeros(volume.dims, np.uint8))
    rng = np.random.default_rng(0)
    with pytest.raises(SamplingError) as excinfo:
        sample_patch(volume, coarse, 1, 16, rng)
    assert excinfo.value.code == "sampler.organ_missing"

    raw = volume.evolve(stage="raw")
    with pytest.raises(SamplingError) as excinfo:
        sample_patch(raw, coarse, 1, 16, rng)
    assert excinfo.value.code == "sampler.not_normalized"

    mask = np.zeros(volume.dims, np.uint8)
    mask[1, 1, 1] = 1
    with pytest.raises(SamplingError) as excinfo:
        sample_patch(volume, CoarseMask(mask=mask), 1, 32, rng)
    assert excinfo.value.code == "sampler.patch_size"


def test_identity_augmentation_is_exact():
    rng = np.random.default_rng(0)
    image = rng.uniform(0.0, 1.0, size=(16, 16))
    patch = point_patch(16, (4, 9), image=image)
    view = apply_augmentation(patch, AugParams())
    assert np.array_equal(view.image, image)
    assert np.array_equal(view.attention, patch.attention)
    assert np.array_equal(view.gt, patch.gt)


def test_rotation_moves_point_analytically():
    patch = point_patch(33, (24, 16))
    view = apply_augmentation(patch, AugParams(angle_deg=30.0))
    theta = np.deg2rad(30.0)
    expected = (16 + np.cos(theta) * 8, 16 + np.sin(theta) * 8)
    assert view.attention[int(round(expected[0])), int(round(expected[1]))] == 1
    rows, cols = np.nonzero(view.attention)
    assert abs(rows.mean() - expected[0]) <= 1.0
    assert abs(cols.mean() - expected[1]) <= 1.0


def test_random_views_stay_binary_and_nonempty(prepared):
    volume, coarse = prepared
    rng = np.random.default_rng(11)
    for _ in range(20):
        view = augment(sample_patch(volume, coarse, 1, 16, rng), rng)
        assert set(np.unique(view.attention)) <= {0, 1}
        assert set(np.unique(view.gt)) <= {0, 1}
        assert view.phi >= 1
        assert 0.0 <= view.image.min() and view.image.max() <= 1.0


def test_degenerate_augmentation_fails_after_redraws(monkeypatch):
    patch = point_patch(33, (0, 0))
    draws = []

    def rotate_out(rng):
        draws.append(1)
        return AugParams(angle_deg=30.0)

    monkeypatch.setattr(augment_module, "draw_params", rotate_out)
    with pytest.raises(SamplingError) as excinfo:
        augment(patch, np.random.default_rng(0))
    assert excinfo.value.code == "sampler.degenerate_augmentation"
    assert len(draws) == augment_module.MAX_REDRAWS + 1


def test_minibatch_pairing(prepared):
    volume, coarse = prepared
    rng = np.random.default_rng(2)
    patches = [sample_patch(volume, coarse, organ, 16, rng) for organ in (1, 2)]
    batch = build_minibatch(patches, rng)
    assert len(batch) == 4
    assert batch.pairing == [1, 0, 3, 2]
    for k in range(4):
        assert len(batch.negatives(k)) == 3
        assert batch.pairing[k] in batch.negatives(k)
        assert batch.pairing[batch.pairing[k]] == k
    for k in (0, 2):
        a, b = batch.views[k], batch.views[k + 1]
        assert (a.organ_class, a.phase, a.source) == (b.organ_class, b.phase, b.source)


@pytest.mark.parametrize("size", [4, 6, 8, 16])
def test_pairing_is_fixed_point_free_involution(size):
    p = pairing_for(size)
    assert all(p[k] != k and p[p[k]] == k for k in range(size))


def test_minibatch_is_reproducible(prepared):
    volume, coarse = prepared

    def draw(seed):
        rng = np.random.default_rng(seed)
        patches = [sample_patch(volume, coarse, organ, 16, rng) for organ in (1, 2, 1)]
        return build_minibatch(patches, rng)

    first, second = draw(5), draw(5)
    for a, b in zip(first.views, second.views):
        assert np.array_equal(a.image, b.image)
        assert np.array_equal(a.attention, b.attention)


def test_minibatch_needs_two_patches(prepared):
    volume, coarse = prepared
    rng = np.random.default_rng(0)
    with pytest.raises(SamplingError):
        build_minibatch([sample_patch(volume, coarse, 1, 16, rng)], rng)


def test_model_input_channels(prepared):
    volume, coarse = prepared
    rng = np.random.default_rng(4)
    view = augment(sample_patch(volume, coarse, 1, 16, rng), rng)
    x = to_model_input(view)
    assert x.shape == (2, 16, 16)
    assert np.array_equal(x[0], view.image)
    assert np.array_equal(x[1], view.attention)
    assert set(np.unique(x[1])) <= {0.0, 1.0}
